"""Command-line entry point: ``rrlevy {scale,identity,simulate,verify}``.

Exit status is 0 on success, 1 when a verification check fails and 2 for
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import identities as idn
from . import simulator as sim
from . import verifier
from .errors import ConfigError, DomainError, NumericalError
from .model import ModelSpec, load_model, model_hash
from .scale import ScaleEvaluator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(value) -> str:
    """17 significant digits, round-trip exact."""
    if isinstance(value, idn.Infinite):
        return "inf"
    return f"{float(value):.17g}"


def _read_table(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: file not found")
    text = path.read_text()
    try:
        return json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _model(args) -> ModelSpec:
    if not Path(args.model).is_file():
        raise ConfigError(f"{args.model}: file not found")
    return load_model(args.model)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# -- scale --------------------------------------------------------------------


def cmd_scale(args) -> int:
    model = _model(args)
    if args.q is None or args.q < 0:
        raise UsageError("--q must be given and >= 0")
    if args.x is not None and args.range is not None:
        raise UsageError("use either --x or --range")
    if args.x is not None:
        xs = np.array(_parse_floats(args.x))
    elif args.range is not None:
        lo, hi, step = _parse_floats(args.range)
        if step <= 0 or hi < lo:
            raise UsageError("--range needs lo,hi,step with step > 0 and hi >= lo")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        xs = lo + step * np.arange(n)
    else:
        raise UsageError("one of --x or --range is required")
    ev = ScaleEvaluator(model, args.q, args.target, backend=args.backend)
    buf = io.StringIO()
    buf.write(f"# model_hash={model_hash(model)} backend={ev.backend} q={fmt(args.q)} target={args.target}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "W", "Wprime", "Wbar", "Z", "Zbar"])
    cols = [ev.W(xs), ev.Wprime(xs), ev.Wbar(xs), ev.Z(xs), ev.Zbar(xs)]
    for i, x in enumerate(xs):
        w.writerow([fmt(x)] + [fmt(c[i]) for c in cols])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# -- identity -----------------------------------------------------------------


def _load_requests(path: str) -> list[dict]:
    data = _read_table(path)
    reqs = data.get("request") if isinstance(data, dict) else data
    if not isinstance(reqs, list):
        raise ConfigError(f"{path}: expected a list of requests (TOML [[request]] tables or a JSON array)")
    for i, r in enumerate(reqs):
        if not isinstance(r, dict) or "name" not in r:
            raise ConfigError(f"{path}: request {i} needs a 'name'")
    return reqs


def cmd_identity(args) -> int:
    model = _model(args)
    if args.request:
        reqs = _load_requests(args.request)
    elif args.name:
        reqs = [{"name": args.name, **{k: getattr(args, k) for k in ("q", "p", "x", "a", "z") if getattr(args, k) is not None}}]
    else:
        raise UsageError("give --request FILE or --name QUANTITY with parameters")
    unknown = sorted({r["name"] for r in reqs} - set(idn.QUANTITIES))
    if unknown:
        raise UsageError(f"unknown quantity {', '.join(unknown)}; valid names: {', '.join(sorted(idn.QUANTITIES))}")
    ctx = idn.IdentityContext(model)
    rows = []
    for r in reqs:
        params = {k: v for k, v in r.items() if k != "name"}
        val = idn.evaluate(ctx, r["name"], params)
        rows.append(val)
    header = {"model_hash": model_hash(model), "method": ctx.method}
    if args.format == "json":
        doc = {
            **header,
            "results": [
                {
                    "name": v.name,
                    "params": v.params,
                    "value": fmt(v.value) if v.is_infinite else float(fmt(v.value)),
                    **({"reason": v.value.reason} if v.is_infinite else {}),
                }
                for v in rows
            ],
        }
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        buf = io.StringIO()
        buf.write(f"# model_hash={header['model_hash']} backend={ctx.method['backend']}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "params", "value", "reason"])
        for v in rows:
            params = ";".join(f"{k}={fmt(p)}" for k, p in v.params.items())
            w.writerow([v.name, params, fmt(v.value), v.value.reason if v.is_infinite else ""])
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


# -- simulate -------------------------------------------------------------------


def _sim_config(args) -> sim.SimConfig:
    data = _read_table(args.config) if args.config else {}
    data = dict(data.get("simulation", data)) if isinstance(data, dict) else {}
    overrides = {
        "x0": args.x, "a": args.a, "q": args.q, "p": args.p, "seed": args.seed, "n_paths": args.paths,
        "scheme": args.scheme, "h": args.step,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("x0", "a"):
        if key not in data:
            raise UsageError(f"simulation needs {key} (--x / --a or a config file)")
    return sim.SimConfig.from_dict(data)


def cmd_simulate(args) -> int:
    model = _model(args)
    cfg = _sim_config(args)
    if cfg.scheme == sim.EXACT_BV and not model.is_bounded_variation:
        raise ConfigError("ExactBV requires sigma == 0; use --scheme Euler")
    est = sim.run_ensemble(model, cfg, threads=args.threads)
    text = json.dumps(_fmt_estimates(est.to_dict()), indent=2, sort_keys=True) + "\n"
    _emit(text, args.out)
    if args.trace_paths:
        traces = sim.trace_paths(model, cfg, args.trace_paths)
        target = args.trace_out or (str(Path(args.out).with_suffix("")) + "_trace.csv" if args.out else "trace.csv")
        sim.write_trace_csv(target, traces, header=f"# model_hash={model_hash(model)} scheme={cfg.scheme}\n")
    return EXIT_OK


def _fmt_estimates(doc):
    if isinstance(doc, dict):
        return {k: _fmt_estimates(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_fmt_estimates(v) for v in doc]
    if isinstance(doc, float) and math.isfinite(doc):
        return float(fmt(doc))
    return doc


# -- verify ---------------------------------------------------------------------


def cmd_verify(args) -> int:
    model = _model(args)
    if args.suite not in verifier.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; valid: {', '.join(verifier.SUITES)}")
    if args.delta_zero:
        model = model.with_(delta=0.0)
    opts = {k: getattr(args, k) for k in ("p", "q", "x", "a", "seed") if getattr(args, k) is not None}
    if args.step is not None:
        opts["h"] = args.step
    reports = verifier.run_suite(model, args.suite, **opts)
    out = args.out or f"verify_{args.suite}.json"
    verifier.write_report(out, model, args.suite, reports)
    print(verifier.summary_table(reports))
    print(f"report written to {out}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrlevy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="model file (TOML, or JSON by suffix)")
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("scale", help="tabulate W, W', Wbar, Z, Zbar")
    common(p)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--x", help="comma-separated points")
    p.add_argument("--range", help="lo,hi,step")
    p.add_argument("--target", choices=("X", "Y"), default="X")
    p.add_argument("--backend", choices=("auto", "closed_form", "inversion"), default="auto")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("identity", help="evaluate named fluctuation identities")
    common(p)
    p.add_argument("--request", help="request file (TOML [[request]] tables or JSON array)")
    p.add_argument("--name", help="single quantity name")
    for k in ("q", "p", "x", "a", "z"):
        p.add_argument(f"--{k}", type=float)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_identity)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble")
    common(p)
    p.add_argument("--config", help="simulation config file")
    p.add_argument("--x", type=float, help="start level x0")
    p.add_argument("--a", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--scheme", choices=(sim.EXACT_BV, sim.EULER))
    p.add_argument("--step", type=float, help="Euler step h")
    p.add_argument("--threads", type=int)
    p.add_argument("--trace-paths", type=int, default=0, metavar="K", help="dump event traces of the first K paths")
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a verification suite")
    common(p)
    p.add_argument("--suite", required=True, help=", ".join(verifier.SUITES))
    for k in ("q", "p", "x", "a"):
        p.add_argument(f"--{k}", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float, help="Euler step for MC suites on unbounded-variation models")
    p.add_argument("--delta-zero", action="store_true", help="force delta = 0")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, DomainError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"rrlevy {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"rrlevy {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
