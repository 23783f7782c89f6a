"""Monte Carlo simulation of the refracted-reflected process.

``V`` follows ``X`` below ``b``, loses drift at rate ``delta`` above ``b`` and
is pushed up at 0, so that ``V = x0 + X - L + R`` with ``dL = delta 1{V > b} dt``.
Every path is run until ``T_a^+`` (first passage above ``a``) or a horizon cap.

Two schemes are provided.

``ExactBV``
    Event driven and free of discretization error for ``sigma == 0``.  Between
    jumps ``V`` is linear with slope ``drift`` (below ``b``) or
    ``drift - delta`` (at or above ``b``); crossing times of ``b`` and ``a``
    and all discounted segment integrals are closed form.
``Euler``
    Fixed step ``h`` with left-endpoint refraction, reflection at step end and
    midpoint discounting.  Jumps are exact (shared with ``ExactBV``), and the
    Gaussian increment of a step is the scaled sum of ``gaussian_substep``
    unit normals, so levels ``h`` and ``h / k`` with a common fine grid see the
    same Brownian path.

Paths draw from counter-based Philox streams addressed by path index, hence
results are bitwise reproducible whatever the number of worker threads.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from .errors import ConfigError, DomainError
from .model import ModelSpec, model_hash
from .rng import JUMPS, normals, seed_key, uniforms

__all__ = [
    "EXACT_BV",
    "EULER",
    "EstimateSet",
    "PathFunctionals",
    "SimConfig",
    "run_ensemble",
    "simulate_path_euler",
    "simulate_path_exact_bv",
    "simulate_paths",
    "trace_paths",
]

# numba warns once about an outdated TBB and falls back to another threading layer
warnings.filterwarnings("ignore", message="The TBB threading layer")

EXACT_BV = "ExactBV"
EULER = "Euler"
DEFAULT_HORIZON = 1e4

# per-path output columns
F_T, F_CENS, F_DL, F_DR, F_OB, F_OA, F_BAND, F_L, F_R, F_X, F_V = range(11)
N_FIELDS = 11

# trace event codes
EV_START, EV_JUMP, EV_CROSS_B, EV_EXIT, EV_REFLECT, EV_CENSOR, EV_STEP = range(7)
EVENT_NAMES = ("start", "jump", "cross_b", "exit", "reflect", "censor", "step")
TRACE_COLUMNS = ("t", "V", "L", "R", "event", "X")

_BRIDGE = 2  # stream id for Brownian-bridge uniforms
_BRIDGE_CUTOFF = 50.0  # exp(-50) ~ 2e-22


@dataclass(frozen=True)
class SimConfig:
    """Ensemble settings.

    Parameters
    ----------
    x0, a : float
        Start level and upper target.  ``a = inf`` runs to the horizon cap.
    q, p : float
        Discount rate (also the occupation rate) and the rate on ``T_a^+``
        in the occupation weights ``exp(-p T - q occ)``.
    n_paths : int
    seed : int
        Nonnegative, reduced to 64 bits.
    scheme : {"ExactBV", "Euler"}
    h : float
        Euler step.
    gaussian_substep : int
        Unit normals summed per Euler step.
    bridge : bool
        Euler only: detect passage above ``a`` and reflection at 0 inside a
        step through the Brownian bridge of the continuous part.
    horizon_cap : float
    band : (float, float) or None
        ``[z1, z2]`` for the discounted band occupation.
    """

    x0: float
    a: float
    q: float = 0.0
    p: float = 0.0
    n_paths: int = 1000
    seed: int = 0
    scheme: str = EXACT_BV
    h: float = 1e-3
    gaussian_substep: int = 1
    bridge: bool = True
    horizon_cap: float = DEFAULT_HORIZON
    band: tuple[float, float] | None = None

    def __post_init__(self):
        if self.scheme not in (EXACT_BV, EULER):
            raise ConfigError(f"scheme must be {EXACT_BV!r} or {EULER!r}, got {self.scheme!r}")
        for name in ("x0", "q", "p", "h", "horizon_cap"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not self.a > 0 or math.isnan(self.a):
            raise ConfigError(f"a must be > 0, got {self.a}")
        if self.q < 0 or self.p < 0:
            raise ConfigError("q and p must be >= 0")
        if self.h <= 0:
            raise DomainError(f"step h must be > 0, got {self.h}")
        if int(self.gaussian_substep) != self.gaussian_substep or self.gaussian_substep < 1:
            raise ConfigError("gaussian_substep must be a positive integer")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.horizon_cap <= 0:
            raise ConfigError("horizon_cap must be > 0")
        if self.band is not None:
            z1, z2 = (float(v) for v in self.band)
            if not z1 <= z2:
                raise ConfigError(f"band must satisfy z1 <= z2, got {self.band}")
            object.__setattr__(self, "band", (z1, z2))

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown simulation keys: {', '.join(unknown)}")
        data = dict(data)
        if "a" in data and isinstance(data["a"], str):
            data["a"] = float(data["a"])
        if data.get("band") is not None:
            data["band"] = tuple(data["band"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_(self, **changes) -> "SimConfig":
        return SimConfig(**{**asdict(self), **changes})


@dataclass(frozen=True)
class PathFunctionals:
    """Functionals of one path up to ``T_a^+`` (or the horizon when censored)."""

    t_up: float
    censored: bool
    disc_L: float
    disc_R: float
    occ_below: float
    occ_above: float
    band: float
    L: float
    R: float
    X: float
    V: float

    def weight(self, p: float, q: float, region: str = "below") -> float:
        occ = self.occ_below if region == "below" else self.occ_above
        return math.exp(-p * self.t_up - q * occ)


@dataclass
class EstimateSet:
    """Sample mean, standard deviation and standard error per functional."""

    estimates: dict[str, dict[str, float]]
    n: int
    censored: int
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> dict[str, float]:
        return self.estimates[name]

    def to_dict(self) -> dict:
        out = {
            name: {**vals, "n": self.n, "censored": self.censored} for name, vals in self.estimates.items()
        }
        return {"estimates": out, "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_float)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _json_float(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(type(value))


# --------------------------------------------------------------------------
# kernels


@nb.njit(cache=True, inline="always")
def _disc(q, t0, dt):
    # int_{t0}^{t0+dt} exp(-q s) ds
    if q == 0.0:
        return dt
    return math.exp(-q * t0) * (-math.expm1(-q * dt)) / q


@nb.njit(cache=True, inline="always")
def _draw_jump(j, path, key, lam, cum, mus):
    u0, u1, u2, _ = uniforms(j, path, JUMPS, key)
    wait = -math.log(u0) / lam
    k = 0
    while k < cum.shape[0] - 1 and u1 > cum[k]:
        k += 1
    return wait, -math.log(u2) / mus[k]


@nb.njit(cache=True, inline="always")
def _record(trace, n, t, V, L, R, ev, X):
    if n < trace.shape[0]:
        trace[n, 0] = t
        trace[n, 1] = V
        trace[n, 2] = L
        trace[n, 3] = R
        trace[n, 4] = ev
        trace[n, 5] = X
    return n + 1


@nb.njit(cache=True)
def _exact_path(path, key, x0, a, b, c, delta, q, lam, cum, mus, z1, z2, horizon, out, trace):
    t = 0.0
    V = x0
    X = 0.0
    L = 0.0
    R = 0.0
    dL = 0.0
    dR = 0.0
    ob = 0.0
    oa = 0.0
    band = 0.0
    cens = 0.0
    if V < 0.0:
        R = -V
        dR = -V
        V = 0.0
    nt = _record(trace, 0, t, V, L, R, EV_START, X)
    j = 0
    next_jump = math.inf
    if lam > 0.0:
        wait, size = _draw_jump(j, path, key, lam, cum, mus)
        next_jump = wait
    if V < a:
        while True:
            if V < b:
                slope = c
                target = b
            else:
                slope = c - delta
                target = a
            t_hit = t + (target - V) / slope
            jump_first = next_jump < t_hit
            t_end = next_jump if jump_first else t_hit
            censor = t_end > horizon
            if censor:
                t_end = horizon
            dt = t_end - t
            if dt > 0.0:
                if V < b:
                    ob += dt
                else:
                    oa += dt
                    L += delta * dt
                    dL += delta * _disc(q, t, dt)
                if z2 > z1:
                    lo = (z1 - V) / slope
                    hi = (z2 - V) / slope
                    if lo < 0.0:
                        lo = 0.0
                    if hi > dt:
                        hi = dt
                    if hi > lo:
                        band += _disc(q, t + lo, hi - lo)
                X += c * dt
            if censor:
                V = V + slope * dt
                t = t_end
                cens = 1.0
                nt = _record(trace, nt, t, V, L, R, EV_CENSOR, X)
                break
            t = t_end
            if jump_first:
                V = V + slope * dt - size
                X -= size
                if V < 0.0:
                    R -= V
                    dR -= V * math.exp(-q * t)
                    V = 0.0
                    nt = _record(trace, nt, t, V, L, R, EV_REFLECT, X)
                else:
                    nt = _record(trace, nt, t, V, L, R, EV_JUMP, X)
                j += 1
                wait, size = _draw_jump(j, path, key, lam, cum, mus)
                next_jump = t + wait
            else:
                V = target
                if target == a:
                    nt = _record(trace, nt, t, V, L, R, EV_EXIT, X)
                    break
                nt = _record(trace, nt, t, V, L, R, EV_CROSS_B, X)
    else:
        nt = _record(trace, nt, t, V, L, R, EV_EXIT, X)
    out[F_T] = t
    out[F_CENS] = cens
    out[F_DL] = dL
    out[F_DR] = dR
    out[F_OB] = ob
    out[F_OA] = oa
    out[F_BAND] = band
    out[F_L] = L
    out[F_R] = R
    out[F_X] = X
    out[F_V] = V
    return nt


@nb.njit(cache=True)
def _euler_path(
    path, key, x0, a, b, c, sigma, delta, q, lam, cum, mus, z1, z2, horizon, h, sub, bridge, out, trace, trace_steps
):
    t = 0.0
    V = x0
    X = 0.0
    L = 0.0
    R = 0.0
    dL = 0.0
    dR = 0.0
    ob = 0.0
    oa = 0.0
    band = 0.0
    cens = 0.0
    if V < 0.0:
        R = -V
        dR = -V
        V = 0.0
    nt = _record(trace, 0, t, V, L, R, EV_START, X)
    j = 0
    next_jump = math.inf
    size = 0.0
    if lam > 0.0:
        wait, size = _draw_jump(j, path, key, lam, cum, mus)
        next_jump = wait
    scale = sigma * math.sqrt(h / sub)
    var = sigma * sigma * h
    k = 0
    g0 = g1 = g2 = g3 = 0.0
    e_mid = math.exp(-q * 0.5 * h)
    e_step = math.exp(-q * h)
    n = 0
    if V < a:
        while True:
            if t >= horizon:
                cens = 1.0
                nt = _record(trace, nt, t, V, L, R, EV_CENSOR, X)
                break
            above = V > b
            mu = c - delta if above else c
            dw = 0.0
            if sigma > 0.0:
                for _ in range(sub):
                    r = k & 3
                    if r == 0:
                        g0, g1, g2, g3 = normals(k >> 2, path, key)
                    if r == 0:
                        dw += g0
                    elif r == 1:
                        dw += g1
                    elif r == 2:
                        dw += g2
                    else:
                        dw += g3
                    k += 1
                dw *= scale
            t_next = t + h
            jumps = 0.0
            while next_jump <= t_next:
                jumps += size
                j += 1
                wait, size = _draw_jump(j, path, key, lam, cum, mus)
                next_jump = next_jump + wait
            if above:
                oa += h
                L += delta * h
                dL += delta * h * e_mid
            else:
                ob += h
            if z2 > z1 and V >= z1 and V <= z2:
                band += h * e_mid
            Vc = V + mu * h + dw
            X += c * h + dw
            use_bridge = bridge and sigma > 0.0
            crossed = Vc > a
            if not crossed and use_bridge:
                # P(bridge max > a) = exp(-2 (a - V)(a - Vc) / var); skip when negligible
                e = 2.0 * (a - V) * (a - Vc) / var
                if e < _BRIDGE_CUTOFF:
                    u_exit, _, _, _ = uniforms(n, path, _BRIDGE, key)
                    crossed = u_exit < math.exp(-e)
            if crossed:
                t = t_next
                V = Vc
                nt = _record(trace, nt, t, V, L, R, EV_EXIT, X)
                break
            if use_bridge and (Vc <= 0.0 or 2.0 * V * Vc / var < _BRIDGE_CUTOFF):
                # minimum of the Brownian bridge from V to Vc over the step
                _, u_refl, _, _ = uniforms(n, path, _BRIDGE, key)
                d = Vc - V
                m = 0.5 * (V + Vc - math.sqrt(d * d - 2.0 * var * math.log(u_refl)))
                if m < 0.0:
                    Vc -= m
                    R -= m
                    dR -= m * e_mid
            V = Vc - jumps
            X -= jumps
            if V < 0.0:
                R -= V
                dR -= V * e_mid
                V = 0.0
                if trace_steps == 0:
                    nt = _record(trace, nt, t_next, V, L, R, EV_REFLECT, X)
            t = t_next
            n += 1
            e_mid *= e_step
            if trace_steps > 0 and n % trace_steps == 0:
                nt = _record(trace, nt, t, V, L, R, EV_STEP, X)
    else:
        nt = _record(trace, nt, t, V, L, R, EV_EXIT, X)
    out[F_T] = t
    out[F_CENS] = cens
    out[F_DL] = dL
    out[F_DR] = dR
    out[F_OB] = ob
    out[F_OA] = oa
    out[F_BAND] = band
    out[F_L] = L
    out[F_R] = R
    out[F_X] = X
    out[F_V] = V
    return nt


_NO_TRACE = np.zeros((0, len(TRACE_COLUMNS)))


@nb.njit(cache=True, parallel=True)
def _exact_batch(start, n, key, x0, a, b, c, delta, q, lam, cum, mus, z1, z2, horizon):
    out = np.empty((n, N_FIELDS))
    empty = np.zeros((0, 6))
    for i in nb.prange(n):
        _exact_path(start + i, key, x0, a, b, c, delta, q, lam, cum, mus, z1, z2, horizon, out[i], empty)
    return out


@nb.njit(cache=True, parallel=True)
def _euler_batch(start, n, key, x0, a, b, c, sigma, delta, q, lam, cum, mus, z1, z2, horizon, h, sub, bridge):
    out = np.empty((n, N_FIELDS))
    empty = np.zeros((0, 6))
    for i in nb.prange(n):
        _euler_path(
            start + i, key, x0, a, b, c, sigma, delta, q, lam, cum, mus, z1, z2, horizon, h, sub, bridge,
            out[i], empty, 0,
        )
    return out


# --------------------------------------------------------------------------
# Python-facing API


def _check_scheme(model: ModelSpec, config: SimConfig) -> None:
    if config.scheme == EXACT_BV and not model.is_bounded_variation:
        raise ConfigError("ExactBV requires a bounded-variation model (sigma == 0)")


def _jump_arrays(model: ModelSpec):
    lam = model.jump_intensity
    if lam > 0:
        cum = np.cumsum(model.rates) / lam
        cum[-1] = 1.0
    else:
        cum = np.ones(1)
    mus = model.exp_rates if model.jumps else np.ones(1)
    return lam, cum, mus.astype(float)


def _kernel_args(model: ModelSpec, config: SimConfig):
    lam, cum, mus = _jump_arrays(model)
    z1, z2 = config.band if config.band is not None else (0.0, 0.0)
    return lam, cum, mus, float(z1), float(z2)


def simulate_paths(model: ModelSpec, config: SimConfig, start: int = 0, count: int | None = None) -> np.ndarray:
    """Per-path functionals for paths ``start .. start + count - 1``.

    Returns an array with one row per path; columns follow ``F_*``.
    """
    _check_scheme(model, config)
    n = config.n_paths - start if count is None else int(count)
    lam, cum, mus, z1, z2 = _kernel_args(model, config)
    key = np.uint64(seed_key(config.seed))
    a = float(config.a)
    if config.scheme == EXACT_BV:
        return _exact_batch(
            start, n, key, config.x0, a, model.b, model.drift, model.delta, config.q, lam, cum, mus, z1, z2,
            config.horizon_cap,
        )
    return _euler_batch(
        start, n, key, config.x0, a, model.b, model.drift, model.sigma, model.delta, config.q, lam, cum, mus,
        z1, z2, config.horizon_cap, config.h, int(config.gaussian_substep), bool(config.bridge),
    )


def _as_functionals(row: np.ndarray) -> PathFunctionals:
    return PathFunctionals(
        t_up=float(row[F_T]),
        censored=bool(row[F_CENS]),
        disc_L=float(row[F_DL]),
        disc_R=float(row[F_DR]),
        occ_below=float(row[F_OB]),
        occ_above=float(row[F_OA]),
        band=float(row[F_BAND]),
        L=float(row[F_L]),
        R=float(row[F_R]),
        X=float(row[F_X]),
        V=float(row[F_V]),
    )


def simulate_path_exact_bv(model: ModelSpec, config: SimConfig, path: int = 0) -> PathFunctionals:
    """Exact event-driven simulation of one path (bounded variation only)."""
    if not model.is_bounded_variation:
        raise DomainError("exact simulation requires sigma == 0")
    return _as_functionals(simulate_paths(model, config.with_(scheme=EXACT_BV), path, 1)[0])


def simulate_path_euler(model: ModelSpec, config: SimConfig, path: int = 0) -> PathFunctionals:
    """Fixed-step simulation of one path."""
    return _as_functionals(simulate_paths(model, config.with_(scheme=EULER), path, 1)[0])


def trace_paths(model: ModelSpec, config: SimConfig, k: int, max_rows: int = 1_000_000, every: int = 0) -> list[np.ndarray]:
    """Event traces ``(t, V, L, R, event, X)`` of the first ``k`` paths.

    For the Euler scheme ``every > 0`` also records every ``every``-th step.
    """
    _check_scheme(model, config)
    lam, cum, mus, z1, z2 = _kernel_args(model, config)
    key = np.uint64(seed_key(config.seed))
    traces = []
    out = np.empty(N_FIELDS)
    for i in range(min(k, config.n_paths)):
        buf = np.empty((max_rows, len(TRACE_COLUMNS)))
        if config.scheme == EXACT_BV:
            rows = _exact_path(
                i, key, config.x0, float(config.a), model.b, model.drift, model.delta, config.q, lam, cum, mus,
                z1, z2, config.horizon_cap, out, buf,
            )
        else:
            rows = _euler_path(
                i, key, config.x0, float(config.a), model.b, model.drift, model.sigma, model.delta, config.q, lam,
                cum, mus, z1, z2, config.horizon_cap, config.h, int(config.gaussian_substep), bool(config.bridge),
                out, buf, int(every),
            )
        traces.append(buf[: min(rows, max_rows)].copy())
    return traces


def write_trace_csv(path: str | Path, traces: list[np.ndarray], header: str = "") -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        fh.write("path," + ",".join(TRACE_COLUMNS) + "\n")
        for i, tr in enumerate(traces):
            for row in tr:
                fh.write(
                    f"{i},{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},"
                    f"{EVENT_NAMES[int(row[4])]},{row[5]:.17g}\n"
                )


def functional_samples(rows: np.ndarray, config: SimConfig) -> dict[str, np.ndarray]:
    """Per-path samples of every reported functional."""
    q, p = config.q, config.p
    T = rows[:, F_T]
    return {
        "one_sided_exit": np.exp(-q * T),
        "dividends_npv": rows[:, F_DL],
        "capital_injection_npv": rows[:, F_DR],
        "occupation_below_lt": np.exp(-p * T - q * rows[:, F_OB]),
        "occupation_above_lt": np.exp(-p * T - q * rows[:, F_OA]),
        "resolvent_band": rows[:, F_BAND],
        "t_up": T,
    }


def summarize(samples: dict[str, np.ndarray], censored: int, metadata: dict | None = None) -> EstimateSet:
    # Exactly rounded sums about the first sample: order independent, and a
    # constant sample gives zero spread.
    est = {}
    n = None
    for name, x in samples.items():
        n = x.shape[0]
        dev = x - x[0]
        mean = float(x[0] + math.fsum(dev) / n)
        std = math.sqrt(max(math.fsum((x - mean) ** 2), 0.0) / (n - 1)) if n > 1 else 0.0
        est[name] = {"mean": mean, "std": std, "stderr": std / math.sqrt(n)}
    return EstimateSet(est, int(n or 0), int(censored), metadata or {})


def run_ensemble(model: ModelSpec, config: SimConfig, threads: int | None = None) -> EstimateSet:
    """Simulate ``config.n_paths`` paths and summarize every functional.

    Path ``i`` always uses the Philox stream ``(seed, i)`` and the reduction
    runs over a fixed index order, so the result is independent of
    ``threads``.
    """
    if config.n_paths < 2:
        raise ConfigError("n_paths must be >= 2 for an ensemble")
    previous = nb.get_num_threads()
    if threads is not None:
        nb.set_num_threads(max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS)))
    try:
        rows = simulate_paths(model, config)
    finally:
        nb.set_num_threads(previous)
    censored = int(np.sum(rows[:, F_CENS]))
    meta = {
        "model_hash": model_hash(model),
        "scheme": config.scheme,
        "seed": config.seed,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
    }
    if math.isinf(config.a):
        meta["config"]["a"] = "inf"
    return summarize(functional_samples(rows, config), censored, meta)
