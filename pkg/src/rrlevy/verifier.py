"""Cross-checks between scale functions, identities and simulation.

Each check returns :class:`VerificationReport` records.  Suites group checks:

``analytic``
    Laplace round trip, backend agreement, boundary and asymptotic facts, the
    relations between the scale functions of ``X`` and ``Y``, resolvent
    normalization and infinite-horizon limits.
``lemma_pi``
    Double integrals against the Levy measure versus their scale-function
    closed forms (bounded variation only).
``degeneracy``
    With ``delta = 0`` or ``a = b`` the refracted-reflected formulas must
    collapse to the reflected-process ones.
``mc_small`` / ``mc_full``
    Monte Carlo estimates versus formulas (1e5 / 1e6 paths).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import identities as idn
from . import simulator as sim
from .errors import DomainError
from .identities import IdentityContext
from .model import ModelSpec, model_hash, net_drift, psi
from .scale import ScaleEvaluator, invert_laplace

__all__ = [
    "SUITES",
    "VerificationReport",
    "check_backend_equivalence",
    "check_boundary_facts",
    "check_degeneracy",
    "check_infinite_horizon",
    "check_laplace_roundtrip",
    "check_lemma_pi_identities",
    "check_levy_convolution_identities",
    "check_mc_suite",
    "check_undershoot_expectation",
    "check_resolvent_normalization",
    "run_suite",
    "summary_table",
    "write_report",
]

TOL_ANALYTIC = 1e-6
TOL_BACKEND = 1e-7
TOL_BOUNDARY = 1e-8
TOL_ASYMPTOTIC = 1e-4
TOL_PI = 1e-4
TOL_DEGENERACY = 1e-10
TOL_INFINITE = 1e-5
TOL_FD = 1e-3
Z_MAX = 3.0
MAX_CENSORED_FRACTION = 1e-3
# both sides below this are treated as an exact zero
ABS_FLOOR = 1e-13

PI_GL_POINTS = 64


@dataclass
class VerificationReport:
    """Outcome of one comparison.

    ``passed`` is ``rel_err <= tolerance`` (or both sides numerically zero)
    for deterministic checks and ``|z| <= 3`` for Monte Carlo checks.
    """

    check: str
    inputs: dict
    lhs: float
    rhs: float
    abs_err: float
    rel_err: float
    tolerance: float
    passed: bool
    z: float | None = None
    stderr: float | None = None
    n_paths: int | None = None
    inconclusive: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def compare(check: str, inputs: dict, lhs: float, rhs: float, tol: float, note: str = "") -> VerificationReport:
    lhs, rhs = float(lhs), float(rhs)
    err = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs))
    rel = err / scale if scale > 0 else 0.0
    passed = bool(rel <= tol or err <= ABS_FLOOR) and math.isfinite(err)
    return VerificationReport(check, inputs, lhs, rhs, err, rel, tol, passed, note=note)


def mc_compare(
    check: str, inputs: dict, estimate: float, stderr: float, formula: float, n: int, censored: int,
    max_stderr: float | None = None,
) -> VerificationReport:
    err = abs(estimate - formula)
    z = (estimate - formula) / stderr if stderr > 0 else (0.0 if err <= ABS_FLOOR else math.inf)
    inconclusive = censored > MAX_CENSORED_FRACTION * n
    passed = abs(z) <= Z_MAX and not inconclusive
    note = f"censored={censored}"
    if max_stderr is not None:
        passed = passed and stderr < max_stderr
        note += f", stderr bound {max_stderr:g}"
    if inconclusive:
        note += ", inconclusive: censored fraction above 0.1%"
    rel = err / abs(formula) if formula != 0 else err
    return VerificationReport(
        check, inputs, float(estimate), float(formula), err, rel, Z_MAX, passed, float(z), float(stderr), int(n),
        inconclusive, note,
    )


# -- scale-function analytics ---------------------------------------------


def laplace_transform_W(ev: ScaleEvaluator, theta: float) -> float:
    """int_0^inf e^{-theta x} W(x) dx by composite Gauss-Legendre on the tilted integrand."""
    gap = theta - ev.root
    if gap <= 0:
        raise DomainError(f"theta={theta} must exceed the root {ev.root}")
    hi = 40.0 / gap
    edges = np.linspace(0.0, hi, max(64, math.ceil(hi / 0.05)) + 1)
    nodes, weights = np.polynomial.legendre.leggauss(16)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes).ravel()
    w = (half[:, None] * weights).ravel()
    vals = np.exp(-gap * x) * ev.tilted("W", x, ev.root)
    return float(w @ vals)


def check_laplace_roundtrip(model: ModelSpec, qs=(0.0, 0.5, 2.0), offsets=(0.5, 1.0, 2.0)) -> list[VerificationReport]:
    out = []
    for q in qs:
        ev = ScaleEvaluator(model, q)
        for off in offsets:
            theta = ev.root + off
            lhs = laplace_transform_W(ev, theta)
            rhs = 1.0 / (psi(model, theta) - q)
            out.append(compare("laplace_roundtrip", {"q": q, "theta": theta}, lhs, rhs, TOL_ANALYTIC))
    return out


def check_backend_equivalence(
    model: ModelSpec, qs=(0.5,), x_grid: Iterable[float] | None = None, target: str = "X"
) -> list[VerificationReport]:
    """Closed form against Talbot inversion; one report per q (worst point)."""
    xs = np.linspace(0.01, 10.0, 100) if x_grid is None else np.asarray(list(x_grid), dtype=float)
    out = []
    for q in qs:
        ev = ScaleEvaluator(model, q, target, backend="closed_form")
        cf = ev.W(xs)
        inv = np.array([invert_laplace(model, q, target, float(x)) for x in xs])
        rel = np.abs(cf - inv) / np.abs(cf)
        k = int(np.argmax(rel))
        out.append(
            compare(
                "backend_equivalence", {"q": q, "target": target, "x": float(xs[k]), "points": len(xs)},
                inv[k], cf[k], TOL_BACKEND, note="worst point over the grid",
            )
        )
    return out


def check_boundary_facts(model: ModelSpec, qs=(0.0, 0.5, 2.0), x_far: float = 30.0) -> list[VerificationReport]:
    out = []
    for q in qs:
        ev = ScaleEvaluator(model, q)
        expected = 1.0 / model.drift if model.is_bounded_variation else 0.0
        for x in (0.0, 1e-12):
            r = compare("W_at_0", {"q": q, "x": x}, ev.W(x), expected, TOL_BOUNDARY)
            if expected == 0.0:
                r.passed = r.abs_err <= TOL_BOUNDARY
            out.append(r)
        if q == 0 and net_drift(model)[0] <= 0:
            continue
        grid = np.linspace(0.0, x_far, 3001)
        tilted = ev.tilted("W", grid, ev.root)
        increasing = bool(np.all(np.diff(tilted) >= -1e-13 * np.abs(tilted[1:])))
        limit = ev.asymptotic_limit()
        r = compare("tilted_W_limit", {"q": q, "x": x_far}, tilted[-1], limit, TOL_ASYMPTOTIC)
        r.passed = r.passed and increasing
        r.note = f"monotone={increasing}"
        out.append(r)
    return out


def check_levy_convolution_identities(
    model: ModelSpec, p: float, q: float, x_grid: Iterable[float], ctx: IdentityContext | None = None
) -> list[VerificationReport]:
    """The two relations linking the scale functions of X and Y, by quadrature."""
    ctx = ctx or IdentityContext(model)
    delta = model.delta
    Wq, WYp = ctx.X(q), ctx.Y(p)
    out = []
    for x in x_grid:
        x = float(x)
        if x < 0:
            raise DomainError("x_grid must be >= 0")
        if x > 0:
            y, w = ctx.gauss_points(0.0, x)
            kern = WYp.W(x - y)
            lhs1 = w @ (kern * (delta * Wq.W(y) - (q - p) * Wq.Wbar(y)))
            lhs2 = w @ (kern * (delta * Wq.Z(y) - (q - p) * Wq.Zbar(y)))
        else:
            lhs1 = lhs2 = 0.0
        rhs1 = WYp.Wbar(x) - Wq.Wbar(x)
        rhs2 = WYp.Zbar(x) - Wq.Zbar(x) + delta * WYp.Wbar(x)
        inputs = {"p": p, "q": q, "x": x}
        out.append(compare("relation_W", inputs, lhs1, rhs1, TOL_ANALYTIC))
        out.append(compare("relation_Z", inputs, lhs2, rhs2, TOL_ANALYTIC))
    return out


# -- Levy-measure double integrals ---------------------------------------------


def _gl(lo: float, hi: float, n: int = PI_GL_POINTS):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (nodes + 1.0), half * weights


def _negative_part(kind: str, mu: float) -> float:
    # int_{-inf}^0 f(s) e^{mu s} ds with f = W, Z, Zbar continued below 0
    return {"W": 0.0, "Z": 1.0 / mu, "Zbar": -1.0 / mu**2}[kind]


def pi_double_integral(
    model: ModelSpec, f_kind: str, f: Callable, shift: float, kernel: Callable, y_max: float, breaks=()
) -> float:
    """int_0^{y_max} int_{(-inf,-y)} f(y + u + shift) kernel(y) Pi(du) dy.

    For each component ``rate * mu * e^{mu u} du`` the inner integral is
    ``rate * mu * e^{-mu (y + shift)} * int_{-inf}^{shift} f(s) e^{mu s} ds``.
    ``breaks`` are interior points where the kernel is discontinuous.
    """
    if y_max <= 0:
        return 0.0
    cuts = [0.0, *sorted(t for t in breaks if 0.0 < t < y_max), y_max]
    parts = [_gl(lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:])]
    y = np.concatenate([n for n, _ in parts])
    wy = np.concatenate([w for _, w in parts])
    ky = kernel(y)
    total = 0.0
    for rate, mu in model.jumps:
        inner = _negative_part(f_kind, mu)
        if shift > 0:
            s, ws = _gl(0.0, shift)
            inner += ws @ (f(s) * np.exp(mu * s))
        total += rate * mu * inner * (wy @ (np.exp(-mu * (y + shift)) * ky))
    return float(total)


def _require_bv(model: ModelSpec) -> None:
    if not model.is_bounded_variation:
        raise DomainError("this check needs a bounded-variation model (sigma == 0)")


def lemma_pi_sides(ctx: IdentityContext, p: float, q: float, v: float, x: float) -> dict[str, tuple[float, float]]:
    """(left, right) for the three Levy-measure identities at (p, q, v, x)."""
    model = ctx.model
    _require_bv(model)
    b, delta, c = model.b, model.delta, model.drift
    if not v <= b <= x:
        raise DomainError(f"need v <= b <= x, got v={v}, b={b}, x={x}")
    Wq, WYp = ctx.X(q), ctx.Y(p)
    kernel = lambda y: WYp.W(x - b - y)  # noqa: E731
    funcs = {"W": Wq.W, "Z": Wq.Z, "Zbar": Wq.Zbar}
    lhs = {k: pi_double_integral(model, k, f, b - v, kernel, x - b) for k, f in funcs.items()}
    conv = lambda g: idn.convolve(ctx, p, g, x)  # noqa: E731
    WY_xb = WYp.W(x - b)
    rhs = {
        "W": (c - delta) * Wq.W(b - v) * WY_xb - Wq.W(x - v)
        - delta * conv(lambda y: Wq.Wprime(y - v))
        + (q - p) * conv(lambda y: Wq.W(y - v)),
        "Z": (c - delta) * Wq.Z(b - v) * WY_xb - Wq.Z(x - v) - (p - q) * WYp.Wbar(x - b)
        + q * conv(lambda y: (q - p) * Wq.Wbar(y - v) - delta * Wq.W(y - v)),
        "Zbar": (c - delta) * Wq.Zbar(b - v) * WY_xb - Wq.Zbar(x - v)
        - delta * conv(lambda y: Wq.Z(y - v))
        + (q - p) * conv(lambda y: Wq.Zbar(y - v))
        + net_drift(model)[0] * WYp.Wbar(x - b),
    }
    return {k: (lhs[k], float(rhs[k])) for k in funcs}


def check_lemma_pi_identities(
    model: ModelSpec, p: float, q: float, v: float, x: float, ctx: IdentityContext | None = None,
    drift_eps: float | None = 1e-4,
) -> list[VerificationReport]:
    """Levy-measure identities for f in {W, Z, Zbar}, plus the drift sensitivity of the Zbar one."""
    _require_bv(model)
    ctx = ctx or IdentityContext(model)
    inputs = {"p": p, "q": q, "v": v, "x": x}
    sides = lemma_pi_sides(ctx, p, q, v, x)
    labels = {"W": "lemma_pi_i", "Z": "lemma_pi_ii", "Zbar": "lemma_pi_iii"}
    out = [compare(labels[k], inputs, lhs, rhs, TOL_PI) for k, (lhs, rhs) in sides.items()]
    if drift_eps:
        # central differences in the drift of both sides of the Zbar identity
        up = lemma_pi_sides(IdentityContext(model.with_(drift=model.drift + drift_eps)), p, q, v, x)["Zbar"]
        dn = lemma_pi_sides(IdentityContext(model.with_(drift=model.drift - drift_eps)), p, q, v, x)["Zbar"]
        d_lhs = (up[0] - dn[0]) / (2 * drift_eps)
        d_rhs = (up[1] - dn[1]) / (2 * drift_eps)
        explicit = ctx.Y(p).Wbar(x - model.b)
        out.append(
            compare(
                "lemma_pi_iii_drift_sensitivity", {**inputs, "eps": drift_eps}, d_lhs, d_rhs, TOL_FD,
                note=f"explicit drift term WYbar(x-b)={explicit:.17g}",
            )
        )
    return out


def check_undershoot_expectation(
    model: ModelSpec, p: float, q: float, x: float, a: float, ctx: IdentityContext | None = None
) -> list[VerificationReport]:
    """Discounted Z^(p+q) of the undershoot below b before passing a, two ways."""
    _require_bv(model)
    ctx = ctx or IdentityContext(model)
    b = model.b
    if not b <= x <= a:
        raise DomainError(f"need b <= x <= a, got x={x}, a={a}")
    WYp = ctx.Y(p)
    Wpq = ctx.X(p + q)
    if a == b:
        lhs = 0.0
    else:
        denom = WYp.W(a - b)
        kernel = lambda y: WYp.W(x - b) * WYp.W(a - b - y) / denom - WYp.W(x - b - y)  # noqa: E731
        lhs = pi_double_integral(model, "Z", Wpq.Z, b, kernel, a - b, breaks=(x - b,))
    rhs = idn.mathcal_R(ctx, p, q, x) - idn.mathcal_R(ctx, p, q, a) * WYp.W(x - b) / WYp.W(a - b)
    inputs = {"p": p, "q": q, "x": x, "a": a}
    out = [compare("undershoot_expectation", inputs, lhs, rhs, TOL_PI)]
    out.append(
        compare(
            "R_at_q0_equals_r", {"p": p, "x": x}, idn.mathcal_R(ctx, p, 0.0, x), idn.r_q(ctx, p, x), TOL_ANALYTIC
        )
    )
    return out


# -- identity-level checks ---------------------------------------------------------


def check_resolvent_normalization(ctx: IdentityContext, combos: Iterable[tuple[float, float, float]]) -> list[VerificationReport]:
    """q * (resolvent mass of [0, a]) + E_x e^{-q T_a^+} = 1."""
    out = []
    for x, a, q in combos:
        mass = idn.resolvent_mass(ctx, q, x, a)
        lhs = q * mass + idn.one_sided_exit(ctx, q, x, a)
        out.append(compare("resolvent_normalization", {"x": x, "a": a, "q": q}, lhs, 1.0, TOL_ANALYTIC))
    return out


def check_infinite_horizon(
    ctx: IdentityContext, q: float, xs=(0.5, 1.0, 1.5), zs=(0.3, 0.7, 1.5, 3.0), a: float = 20.0
) -> list[VerificationReport]:
    """Infinite-horizon quantities against their finite-a values at a large a."""
    out = []
    for x in xs:
        for z in zs:
            out.append(
                compare(
                    "resolvent_density_inf", {"q": q, "x": x, "z": z, "a": a},
                    idn.resolvent_density_inf(ctx, q, x, z), idn.resolvent_density(ctx, q, x, a, z), TOL_INFINITE,
                )
            )
        out.append(
            compare(
                "dividends_npv_inf", {"q": q, "x": x, "a": a},
                idn.dividends_npv_inf(ctx, q, x), idn.dividends_npv(ctx, q, x, a), TOL_INFINITE,
            )
        )
        out.append(
            compare(
                "capital_injection_npv_inf", {"q": q, "x": x, "a": a},
                idn.capital_injection_npv_inf(ctx, q, x), idn.capital_injection_npv(ctx, q, x, a), TOL_INFINITE,
            )
        )
    return out


def _reflected_checks(ctx: IdentityContext, label: str, q: float, p: float, x: float, a: float, zs) -> list[VerificationReport]:
    W = ctx.X(q)
    drift0 = net_drift(ctx.model)[0]
    inputs = {"q": q, "p": p, "x": x, "a": a, "case": label}
    out = []
    zs = np.asarray(zs, dtype=float)
    dens = idn.resolvent_density(ctx, q, x, a, zs)
    ref = W.Z(x) / W.Z(a) * W.W(a - zs) - W.W(x - zs)
    for z, lhs, rhs in zip(zs, dens, ref):
        out.append(compare("reflected_resolvent_density", {**inputs, "z": float(z)}, lhs, rhs, TOL_DEGENERACY))
    out.append(compare("reflected_exit", inputs, idn.one_sided_exit(ctx, q, x, a), W.Z(x) / W.Z(a), TOL_DEGENERACY))
    if q > 0:
        inj = -(W.Zbar(x) + drift0 / q) + (W.Zbar(a) + drift0 / q) * W.Z(x) / W.Z(a)
        out.append(
            compare("reflected_capital_injection", inputs, idn.capital_injection_npv(ctx, q, x, a), inj, TOL_DEGENERACY)
        )
    return out


def check_degeneracy(
    model: ModelSpec, q: float = 0.5, p: float = 0.3, xs=(0.0, 0.5, 1.5), a: float | None = None
) -> list[VerificationReport]:
    """Reductions to the reflected process for delta = 0 and for a = b."""
    b = model.b
    a = 2.0 * b if a is None else a
    zs = [0.1 * b, 0.5 * b, 0.9 * b, b + 0.3 * (a - b), b + 0.8 * (a - b)]
    out = []

    flat = IdentityContext(model.with_(delta=0.0))
    Wp = flat.X(p)
    for x in xs:
        if x > a:
            continue
        out += _reflected_checks(flat, "delta=0", q, p, x, a, zs)
        ref = Wp.Z(x) / Wp.Z(a)
        inputs = {"p": p, "q": 0.0, "x": x, "a": a, "case": "delta=0"}
        out.append(compare("reflected_occupation_below", inputs, idn.occupation_below_lt(flat, p, 0.0, x, a), ref, TOL_DEGENERACY))
        out.append(compare("reflected_occupation_above", inputs, idn.occupation_above_lt(flat, p, 0.0, x, a), ref, TOL_DEGENERACY))

    ctx = IdentityContext(model)
    Wpq = ctx.X(p + q)
    zb = [0.1 * b, 0.5 * b, 0.9 * b]
    for x in xs:
        if x > b:
            continue
        out += _reflected_checks(ctx, "a=b", q, p, x, b, zb)
        inputs = {"p": p, "q": q, "x": x, "a": b, "case": "a=b"}
        # below b the whole time: occupation equals T
        out.append(
            compare("reflected_occupation_below", inputs, idn.occupation_below_lt(ctx, p, q, x, b),
                    Wpq.Z(x) / Wpq.Z(b), TOL_DEGENERACY)
        )
        out.append(
            compare("reflected_occupation_above", inputs, idn.occupation_above_lt(ctx, p, q, x, b),
                    ctx.X(p).Z(x) / ctx.X(p).Z(b), TOL_DEGENERACY)
        )
    return out


# -- Monte Carlo -------------------------------------------------------------------


MC_QUANTITIES = (
    "one_sided_exit",
    "dividends_npv",
    "capital_injection_npv",
    "occupation_below_lt",
    "occupation_above_lt",
    "resolvent_band",
)


def formula_for(ctx: IdentityContext, name: str, x: float, a: float, p: float, q: float, band=None) -> float:
    if name == "one_sided_exit":
        return idn.one_sided_exit(ctx, q, x, a)
    if name == "dividends_npv":
        return idn.dividends_npv(ctx, q, x, a)
    if name == "capital_injection_npv":
        return idn.capital_injection_npv(ctx, q, x, a)
    if name == "occupation_below_lt":
        return idn.occupation_below_lt(ctx, p, q, x, a)
    if name == "occupation_above_lt":
        return idn.occupation_above_lt(ctx, p, q, x, a)
    if name == "resolvent_band":
        z1, z2 = band
        return idn.resolvent_mass(ctx, q, x, a, z1, z2)
    raise KeyError(name)


@dataclass
class MCParams:
    x: float
    a: float
    p: float = 0.3
    q: float = 0.5
    n_paths: int = 1_000_000
    seed: int = 20240101
    scheme: str = sim.EXACT_BV
    h: float = 1e-3
    band: tuple[float, float] | None = None
    quantities: tuple[str, ...] = MC_QUANTITIES
    max_stderr: float | None = None
    extra: dict = field(default_factory=dict)


def check_mc_suite(model: ModelSpec, params: Iterable[MCParams], ctx: IdentityContext | None = None) -> list[VerificationReport]:
    """Run one ensemble per parameter set and compare every listed functional."""
    ctx = ctx or IdentityContext(model)
    out = []
    for prm in params:
        band = prm.band if prm.band is not None else (prm.x + 0.2 * (prm.a - prm.x), prm.a - 0.2 * (prm.a - prm.x))
        cfg = sim.SimConfig(
            x0=prm.x, a=prm.a, q=prm.q, p=prm.p, n_paths=prm.n_paths, seed=prm.seed, scheme=prm.scheme, h=prm.h,
            band=band, **prm.extra,
        )
        t0 = time.perf_counter()
        est = sim.run_ensemble(model, cfg)
        elapsed = time.perf_counter() - t0
        for name in prm.quantities:
            if name == "capital_injection_npv" and prm.q == 0:
                continue
            formula = formula_for(ctx, name, prm.x, prm.a, prm.p, prm.q, band)
            e = est[name]
            inputs = {"x": prm.x, "a": prm.a, "p": prm.p, "q": prm.q, "seed": prm.seed, "scheme": prm.scheme}
            if name == "resolvent_band":
                inputs["band"] = list(band)
            if prm.scheme == sim.EULER:
                inputs["h"] = prm.h
            r = mc_compare("mc_" + name, inputs, e["mean"], e["stderr"], formula, est.n, est.censored, prm.max_stderr)
            r.note += f", ensemble {elapsed:.1f}s"
            out.append(r)
    return out


# -- suites -------------------------------------------------------------------


def _default_points(model: ModelSpec):
    b = model.b
    return b, 2.0 * b


def suite_analytic(model: ModelSpec, p: float = 0.3, q: float = 0.5, **_) -> list[VerificationReport]:
    ctx = IdentityContext(model)
    b, a = _default_points(model)
    out = check_laplace_roundtrip(model)
    out += check_backend_equivalence(model, qs=(q,))
    out += check_boundary_facts(model)
    for pp, qq in ((p, q), (q, p), (0.0, 1.0)):
        out += check_levy_convolution_identities(model, pp, qq, (0.0, 0.5 * b, b, 2 * b, 5 * b), ctx)
    combos = [(0.5 * b, a, q), (b, a, q), (1.5 * b, a, q), (b, a, 2 * q), (0.2 * b, 3 * b, 0.5 * q)]
    out += check_resolvent_normalization(ctx, combos)
    if q > 0:
        # the finite-a values approach the limit like exp(-(varphi - Phi) a)
        gap = ctx.Y(q).root - ctx.X(q).root
        a_far = max(20.0, b + 20.0 / gap) if model.delta > 0 else 20.0
        out += check_infinite_horizon(ctx, q, a=a_far)
    return out


def suite_lemma_pi(model: ModelSpec, p: float = 0.3, q: float = 0.5, **_) -> list[VerificationReport]:
    _require_bv(model)
    ctx = IdentityContext(model)
    b = model.b
    out = []
    for v in (0.0, 0.5 * b):
        for x in (1.5 * b, 2.0 * b, 3.0 * b):
            out += check_lemma_pi_identities(model, p, q, v, x, ctx, drift_eps=1e-4 if v == 0 and x == 2 * b else None)
    out += check_lemma_pi_identities(model, p, q, b, b, ctx, drift_eps=None)
    out += check_undershoot_expectation(model, 0.4, 0.2, 1.5 * b, 2.0 * b, ctx)
    out += check_undershoot_expectation(model, p, q, 2.0 * b, 2.0 * b, ctx)
    return out


def suite_degeneracy(model: ModelSpec, p: float = 0.3, q: float = 0.5, **_) -> list[VerificationReport]:
    return check_degeneracy(model, q=q, p=p)


def _mc_suite(n_paths: int):
    def run(model: ModelSpec, p: float = 0.3, q: float = 0.5, seed: int = 20240101, x=None, a=None, h=1e-3, **_):
        b, a_default = _default_points(model)
        x = b if x is None else x
        a = a_default if a is None else a
        scheme = sim.EXACT_BV if model.is_bounded_variation else sim.EULER
        prm = MCParams(x=x, a=a, p=p, q=q, n_paths=n_paths, seed=seed, scheme=scheme, h=h)
        return check_mc_suite(model, [prm])

    return run


SUITES: dict[str, Callable[..., list[VerificationReport]]] = {
    "analytic": suite_analytic,
    "lemma_pi": suite_lemma_pi,
    "degeneracy": suite_degeneracy,
    "mc_small": _mc_suite(100_000),
    "mc_full": _mc_suite(1_000_000),
}


def run_suite(model: ModelSpec, suite: str, **options) -> list[VerificationReport]:
    if suite not in SUITES:
        raise KeyError(suite)
    return SUITES[suite](model, **options)


def summary_table(reports: list[VerificationReport]) -> str:
    head = f"{'check':34s} {'lhs':>20s} {'rhs':>20s} {'rel_err':>10s} {'tol':>8s} {'z':>7s}  status"
    lines = [head, "-" * len(head)]
    for r in reports:
        z = f"{r.z:7.2f}" if r.z is not None else " " * 7
        status = "PASS" if r.passed else ("INCONCLUSIVE" if r.inconclusive else "FAIL")
        lines.append(f"{r.check:34s} {r.lhs:20.12g} {r.rhs:20.12g} {r.rel_err:10.2e} {r.tolerance:8.1e} {z}  {status}")
    n_fail = sum(not r.passed for r in reports)
    lines.append(f"{len(reports)} checks, {len(reports) - n_fail} passed, {n_fail} failed")
    return "\n".join(lines)


def write_report(path: str | Path, model: ModelSpec, suite: str, reports: list[VerificationReport]) -> None:
    doc = {
        "model_hash": model_hash(model),
        "suite": suite,
        "reports": [r.to_dict() for r in reports],
    }
    Path(path).write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(type(value))
