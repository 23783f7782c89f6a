"""Spectrally negative Levy processes with hyperexponential downward jumps.

The supported family is

    X_t = drift * t + sigma * B_t - sum_{k <= N_t} J_k,

where the jumps come from independent compound Poisson components, component
``i`` firing at intensity ``rate_i`` with Exp(``exp_rate_i``) sizes.  Its
Laplace exponent is rational in ``theta``,

    psi(theta) = sigma^2 theta^2 / 2 + drift * theta
                 - sum_i rate_i * theta / (exp_rate_i + theta),

so every scale function of the family has an exact exponential-polynomial
form.  Refraction parameters (``delta`` above level ``b``) ride along with the
process so that one object describes the whole refracted-reflected model.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import ConfigError, DomainError, RootFindingError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ModelSpec",
    "RootFindingError",
    "Variation",
    "classify",
    "laplace_exponent",
    "load_model",
    "model_hash",
    "net_drift",
    "phi",
    "psi",
    "psi_Y",
    "varphi",
]

ROOT_XTOL = 1e-13
_MAX_BRACKET_STEPS = 200


class Variation(enum.Enum):
    BOUNDED = "BoundedVariation"
    UNBOUNDED = "UnboundedVariation"


@dataclass(frozen=True)
class ModelSpec:
    """Levy triplet of the supported family plus refraction parameters.

    Parameters
    ----------
    sigma : float
        Gaussian coefficient, ``sigma >= 0``.
    drift : float
        Linear coefficient of the exponent.  For ``sigma == 0`` this is the
        bounded-variation drift ``c``; otherwise the natural drift (the jumps
        are integrable, so no compensator is involved).
    jumps : sequence of (rate, exp_rate)
        Downward compound Poisson components.
    delta : float
        Refraction rate, subtracted from the drift above ``b``.
    b : float
        Refraction level, ``b > 0``.
    """

    sigma: float
    drift: float
    jumps: tuple[tuple[float, float], ...] = ()
    delta: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        jumps = tuple((float(r), float(m)) for r, m in self.jumps)
        object.__setattr__(self, "jumps", jumps)
        for name in ("sigma", "drift", "delta", "b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.b <= 0:
            raise ConfigError(f"b must be > 0, got {self.b}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        for i, (rate, exp_rate) in enumerate(jumps):
            if not (rate > 0 and exp_rate > 0 and math.isfinite(rate) and math.isfinite(exp_rate)):
                raise ConfigError(
                    f"jumps[{i}]: rate and exp_rate must be finite and > 0, got ({rate}, {exp_rate})"
                )
        if self.sigma == 0:
            if self.drift <= 0:
                raise ConfigError(
                    f"bounded variation requires drift > 0 (X would have monotone paths), got {self.drift}"
                )
            if self.delta >= self.drift:
                raise ConfigError(
                    f"condition (H) violated: delta={self.delta} must be < drift={self.drift}"
                )

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.jumps], dtype=float)

    @property
    def exp_rates(self) -> np.ndarray:
        return np.array([m for _, m in self.jumps], dtype=float)

    @property
    def jump_intensity(self) -> float:
        return float(sum(r for r, _ in self.jumps))

    @property
    def is_bounded_variation(self) -> bool:
        return self.sigma == 0

    def with_(self, **changes) -> "ModelSpec":
        """Copy with some fields replaced (validation reruns)."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "drift": self.drift,
            "jumps": [{"rate": r, "exp_rate": m} for r, m in self.jumps],
            "delta": self.delta,
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        allowed = {"sigma", "drift", "jumps", "delta", "b"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown model keys: {', '.join(unknown)}")
        missing = sorted({"sigma", "drift", "delta", "b"} - set(data))
        if missing:
            raise ConfigError(f"missing model keys: {', '.join(missing)}")
        jumps = []
        for i, comp in enumerate(data.get("jumps", [])):
            if not isinstance(comp, dict):
                raise ConfigError(f"jumps[{i}] must be a table with rate and exp_rate")
            extra = sorted(set(comp) - {"rate", "exp_rate"})
            if extra:
                raise ConfigError(f"jumps[{i}]: unknown keys: {', '.join(extra)}")
            try:
                jumps.append((float(comp["rate"]), float(comp["exp_rate"])))
            except KeyError as exc:
                raise ConfigError(f"jumps[{i}]: missing key {exc.args[0]}") from None
        try:
            return cls(
                sigma=float(data["sigma"]),
                drift=float(data["drift"]),
                jumps=tuple(jumps),
                delta=float(data["delta"]),
                b=float(data["b"]),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def load_model(path: str | Path) -> ModelSpec:
    """Read a model file (TOML, or JSON when the suffix is ``.json``)."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return ModelSpec.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def model_hash(model: ModelSpec) -> str:
    blob = json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def classify(model: ModelSpec) -> Variation:
    # Finite-activity jumps: bounded variation iff there is no Gaussian part.
    return Variation.BOUNDED if model.sigma == 0 else Variation.UNBOUNDED


def laplace_exponent(model: ModelSpec, s, drift_shift: float = 0.0):
    """psi(s) - drift_shift * s without domain checks; ``s`` may be complex."""
    s = np.asarray(s)
    out = 0.5 * model.sigma**2 * s * s + (model.drift - drift_shift) * s
    for rate, exp_rate in model.jumps:
        out = out - rate * s / (exp_rate + s)
    return out


def _check_theta(theta):
    arr = np.asarray(theta, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"theta must be >= 0, got {theta!r}")
    return arr


def psi(model: ModelSpec, theta):
    """Laplace exponent of X on [0, inf)."""
    arr = _check_theta(theta)
    out = laplace_exponent(model, arr)
    return float(out) if out.ndim == 0 else out


def psi_Y(model: ModelSpec, theta):
    """Laplace exponent of the drift-changed process Y_t = X_t - delta t."""
    arr = _check_theta(theta)
    out = laplace_exponent(model, arr, drift_shift=model.delta)
    return float(out) if out.ndim == 0 else out


def net_drift(model: ModelSpec) -> tuple[float, float]:
    """(psi'(0+), psi_Y'(0+)), exact for the supported family."""
    d = model.drift - sum(r / m for r, m in model.jumps)
    return d, d - model.delta


def _largest_root(model: ModelSpec, q: float, shift: float) -> float:
    if q < 0 or not math.isfinite(q):
        raise DomainError(f"q must be a finite value >= 0, got {q!r}")
    slope = net_drift(model)[0] - shift

    def f(t):
        return float(laplace_exponent(model, t, shift)) - q

    if q == 0:
        if slope >= 0:
            return 0.0
        lo = 1.0
        for _ in range(_MAX_BRACKET_STEPS):
            if f(lo) < 0:
                break
            lo *= 0.5
        else:
            raise RootFindingError("no point with psi < 0 found near 0+", (0.0, lo))
    else:
        lo = 0.0
    hi = max(q / max(slope, 1e-3), 1.0, lo * 2)
    for _ in range(_MAX_BRACKET_STEPS):
        if f(hi) > 0:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise RootFindingError("could not bracket the root", (lo, hi))
    try:
        root = optimize.brentq(f, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (RuntimeError, ValueError) as exc:
        raise RootFindingError(f"brentq failed: {exc}", (lo, hi)) from None
    if abs(f(root)) > 1e-10 * max(1.0, q):
        raise RootFindingError(f"residual {f(root):.3e} too large at {root!r}", (lo, hi))
    return root


def phi(model: ModelSpec, q: float) -> float:
    """Largest nonnegative root of psi(lambda) = q."""
    return _largest_root(model, float(q), 0.0)


def varphi(model: ModelSpec, q: float) -> float:
    """Largest nonnegative root of psi_Y(lambda) = q."""
    return _largest_root(model, float(q), model.delta)


def describe(model: ModelSpec) -> str:
    parts = [f"sigma={model.sigma:g}", f"drift={model.drift:g}"]
    parts += [f"jump(rate={r:g}, exp_rate={m:g})" for r, m in model.jumps]
    parts += [f"delta={model.delta:g}", f"b={model.b:g}"]
    return ", ".join(parts)
