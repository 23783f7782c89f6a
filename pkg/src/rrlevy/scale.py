"""Scale functions of X and of the drift-changed process Y = X - delta t.

Two backends are available behind :class:`ScaleEvaluator`:

* closed form -- ``1/(psi(theta) - q)`` is rational for hyperexponential
  jumps, so ``W(x) = sum_k A_k exp(r_k x)`` with ``r_k`` the (real, simple)
  roots of ``psi(theta) = q`` and ``A_k = 1/psi'(r_k)``;
* numeric inversion -- fixed-Talbot inversion of the Laplace transform on a
  uniform cache grid, used when the partial fractions are unavailable
  (repeated or complex roots, poor conditioning) or when requested.
"""

from __future__ import annotations

import csv
import math
import threading
from typing import Callable

import mpmath
import numpy as np
from numpy.polynomial import Polynomial

from .errors import DomainError, NumericalError
from .model import ModelSpec, net_drift, phi, varphi

__all__ = [
    "CLOSED_FORM",
    "NUMERIC_INVERSION",
    "ScaleEvaluator",
    "build",
    "invert_laplace",
]

CLOSED_FORM = "ClosedForm"
NUMERIC_INVERSION = "NumericInversion"

REPEATED_ROOT_TOL = 1e-9
MAX_CONDITION = 1e8

# mpmath precision is global state; serialise inversions.
_MP_LOCK = threading.Lock()


class _NoClosedForm(Exception):
    pass


def _target_shift(model: ModelSpec, target: str) -> float:
    if target == "X":
        return 0.0
    if target == "Y":
        return model.delta
    raise DomainError(f"target must be 'X' or 'Y', got {target!r}")


def _exponent_polynomial(model: ModelSpec, q: float, shift: float) -> Polynomial:
    """(psi_target(theta) - q) * prod_i (exp_rate_i + theta)."""
    base = Polynomial([-q, model.drift - shift, 0.5 * model.sigma**2])
    factors = [Polynomial([mu, 1.0]) for _, mu in model.jumps]
    poly = base
    for f in factors:
        poly = poly * f
    for i, (lam, _) in enumerate(model.jumps):
        others = Polynomial([1.0])
        for j, f in enumerate(factors):
            if j != i:
                others = others * f
        poly = poly - lam * Polynomial([0.0, 1.0]) * others
    return poly.trim()


def _exponent_derivative(model: ModelSpec, shift: float, theta):
    out = model.sigma**2 * theta + (model.drift - shift)
    for lam, mu in model.jumps:
        out = out - lam * mu / (mu + theta) ** 2
    return out


def _exponent(model: ModelSpec, shift: float, theta):
    out = 0.5 * model.sigma**2 * theta * theta + (model.drift - shift) * theta
    for lam, mu in model.jumps:
        out = out - lam * theta / (mu + theta)
    return out


def _partial_fractions(model: ModelSpec, q: float, shift: float, largest: float):
    poly = _exponent_polynomial(model, q, shift)
    raw = poly.roots()
    if np.any(np.abs(raw.imag) > 1e-7 * np.maximum(1.0, np.abs(raw.real))):
        raise _NoClosedForm("complex roots")
    roots = np.sort(raw.real)
    # Newton polish on psi - q itself; the companion eigenvalues are only
    # accurate to a few ulps of the largest coefficient.
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, r in enumerate(roots):
            for _ in range(60):
                step = (_exponent(model, shift, r) - q) / _exponent_derivative(model, shift, r)
                if not np.isfinite(step):
                    break
                r = r - step
                if abs(step) <= 4e-16 * max(1.0, abs(r)):
                    break
            roots[k] = r
    if q == 0:
        roots[np.abs(roots) < 1e-12] = 0.0
    roots = np.sort(roots)
    if abs(roots[-1] - largest) > 1e-8 * max(1.0, largest):
        raise _NoClosedForm(f"largest polynomial root {roots[-1]!r} != right inverse {largest!r}")
    roots[-1] = largest
    gaps = np.diff(roots)
    if gaps.size and np.any(gaps <= REPEATED_ROOT_TOL * np.maximum(1.0, np.abs(roots[1:]))):
        raise _NoClosedForm("repeated root")
    with np.errstate(divide="ignore"):
        coefs = 1.0 / _exponent_derivative(model, shift, roots)
    if not np.all(np.isfinite(coefs)):
        raise _NoClosedForm("non-finite residues")
    dominant = abs(coefs[-1])
    if dominant == 0 or np.sum(np.abs(coefs)) / dominant > MAX_CONDITION:
        raise _NoClosedForm("partial fractions ill-conditioned")
    return roots, coefs


def _expm1_ratio(r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(exp(r x) - 1)/r, equal to x where r == 0."""
    rx = r * x
    safe = np.where(r == 0, 1.0, r)
    return np.where(r == 0, x, np.expm1(rx) / safe)


def _expm1_ratio2(r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(exp(r x) - 1 - r x)/r^2, with the series near r x = 0."""
    rx = r * x
    small = np.abs(rx) < 1e-3
    safe = np.where(small, 1.0, r)
    direct = (np.expm1(rx) - rx) / (safe * safe)
    x2 = x * x
    series = x2 * (0.5 + rx / 6.0 + rx * rx / 24.0 + rx**3 / 120.0)
    return np.where(small, series, direct)


def _talbot(transform: Callable, t: float, nodes: int, shift: float) -> float:
    """Fixed-Talbot inversion of ``transform`` at ``t``, contour shifted right by ``shift``.

    ``transform`` takes and returns mpmath numbers.  The precision is tied to
    the node count, which is what keeps the method stable for large ``nodes``.
    """
    with _MP_LOCK, mpmath.workdps(max(30, nodes)):
        tt = mpmath.mpf(t)
        r = mpmath.mpf(2 * nodes) / (5 * tt)
        g = mpmath.mpf(shift)
        total = 0.5 * transform(r + g) * mpmath.exp(r * tt)
        for k in range(1, nodes):
            th = k * mpmath.pi / nodes
            cot = mpmath.cot(th)
            s = r * th * (cot + 1j)
            sig = th + (th * cot - 1) * cot
            total += mpmath.re(mpmath.exp(tt * s) * transform(s + g) * (1 + 1j * sig))
        value = r / nodes * total * mpmath.exp(g * tt)
        value = mpmath.re(value)
        if not mpmath.isfinite(value):
            raise NumericalError(f"non-finite Talbot sum at x={t!r}")
        return float(value)


def _mp_transform(model: ModelSpec, q: float, shift: float) -> Callable:
    sig2 = mpmath.mpf(model.sigma) ** 2 / 2
    d = mpmath.mpf(model.drift) - mpmath.mpf(shift)
    comps = [(mpmath.mpf(lam), mpmath.mpf(mu)) for lam, mu in model.jumps]
    qq = mpmath.mpf(q)

    def transform(s):
        val = sig2 * s * s + d * s - qq
        for lam, mu in comps:
            val -= lam * s / (mu + s)
        return 1 / val

    return transform


def invert_laplace(model: ModelSpec, q: float, target: str, x: float, nodes: int = 64) -> float:
    """W^(q)(x) (target "X") or the Y-scale function (target "Y") by fixed Talbot.

    Parameters
    ----------
    x : float
        Evaluation point, must be > 0.
    nodes : int
        Number of Talbot nodes ``M``; the working precision grows with it.
    """
    if not x > 0:
        raise DomainError(f"invert_laplace needs x > 0, got {x!r}")
    shift = _target_shift(model, target)
    root = phi(model, q) if target == "X" else varphi(model, q)
    return _talbot(_mp_transform(model, q, shift), float(x), nodes, root + 1.0)


class ScaleEvaluator:
    """W, W', Wbar, Z, Zbar for one (model, q, target) triple.

    Parameters
    ----------
    model : ModelSpec
    q : float
        Killing rate, ``q >= 0``.
    target : {"X", "Y"}
        Scale functions of X, or of Y = X - delta t.
    backend : {"auto", "closed_form", "inversion"}
        ``auto`` uses the closed form whenever the partial fractions are
        available and falls back to Talbot inversion otherwise.
    talbot_nodes, h_cache, x_max
        Inversion-backend settings: node count, cache grid step and the
        initial extent of the cache.

    Notes
    -----
    All evaluation methods accept scalars or arrays and return the same
    shape.  ``W(0)`` is the right limit ``W(0+)``.
    """

    def __init__(
        self,
        model: ModelSpec,
        q: float,
        target: str = "X",
        backend: str = "auto",
        talbot_nodes: int = 64,
        h_cache: float = 1e-3,
        x_max: float = 10.0,
    ):
        q = float(q)
        if not (q >= 0 and math.isfinite(q)):
            raise DomainError(f"q must be a finite value >= 0, got {q!r}")
        if backend not in ("auto", "closed_form", "inversion"):
            raise DomainError(f"unknown backend {backend!r}")
        self.model = model
        self.q = q
        self.target = target
        self.shift = _target_shift(model, target)
        self.drift = model.drift - self.shift
        self.root = phi(model, q) if target == "X" else varphi(model, q)
        self.W0 = 1.0 / self.drift if model.sigma == 0 else 0.0
        self.talbot_nodes = int(talbot_nodes)
        self.h_cache = float(h_cache)
        self.fallback_reason: str | None = None
        self.roots: np.ndarray | None = None
        self.coefs: np.ndarray | None = None

        if backend in ("auto", "closed_form"):
            try:
                self.roots, self.coefs = _partial_fractions(model, q, self.shift, self.root)
                self.backend = CLOSED_FORM
            except _NoClosedForm as exc:
                if backend == "closed_form":
                    raise NumericalError(f"closed form unavailable: {exc}") from None
                self.fallback_reason = str(exc)
                self.backend = NUMERIC_INVERSION
        else:
            self.backend = NUMERIC_INVERSION

        self._lock = threading.Lock()
        self._grid = np.zeros(0)
        self._cache_W = np.zeros(0)
        self._cache_Wbar = np.zeros(0)
        self._cache_Zbar = np.zeros(0)
        self._x_max_initial = float(x_max)
        if self.backend == NUMERIC_INVERSION:
            self._transform = _mp_transform(model, q, self.shift)

    def __repr__(self):
        return (
            f"ScaleEvaluator(q={self.q:g}, target={self.target!r}, backend={self.backend!r}, "
            f"root={self.root:.6g})"
        )

    @property
    def metadata(self) -> dict:
        meta = {"backend": self.backend, "q": self.q, "target": self.target, "root": self.root}
        if self.fallback_reason:
            meta["fallback_reason"] = self.fallback_reason
        if self.backend == NUMERIC_INVERSION:
            meta.update(talbot_nodes=self.talbot_nodes, h_cache=self.h_cache)
        return meta

    # -- closed form --------------------------------------------------------

    def _outer(self, x: np.ndarray):
        return np.multiply.outer(x, np.ones_like(self.roots)), self.roots

    def _cf(self, kind: str, x: np.ndarray, theta: float = 0.0) -> np.ndarray:
        xp = np.maximum(x, 0.0)
        X, r = self._outer(xp)
        A = self.coefs
        with np.errstate(over="ignore", invalid="ignore"):
            if kind == "W":
                out = np.exp((r - theta) * X) @ A
            elif kind == "Wprime":
                out = np.exp((r - theta) * X) @ (A * r)
            elif kind == "Wbar":
                out = (_expm1_ratio(r, X) * np.exp(-theta * X)) @ A
            elif kind == "Zbar":
                out = xp + self.q * (_expm1_ratio2(r, X) @ A)
            else:  # pragma: no cover
                raise ValueError(kind)
        return out

    # -- numeric inversion cache --------------------------------------------

    def _ensure_cache(self, upto: float) -> None:
        if self._grid.size and self._grid[-1] >= upto:
            return
        with self._lock:
            if self._grid.size and self._grid[-1] >= upto:
                return
            h = self.h_cache
            target = max(upto, self._x_max_initial, 2 * self._grid[-1] if self._grid.size else 0.0)
            n = int(math.ceil(target / h))
            start = self._grid.size
            new_x = h * np.arange(start, n + 1)
            new_W = np.array(
                [self.W0 if xv == 0 else _talbot(self._transform, xv, self.talbot_nodes, self.root + 1.0)
                 for xv in new_x]
            )
            W = np.concatenate([self._cache_W, new_W])
            if not np.all(np.isfinite(W)):
                raise NumericalError("non-finite value in scale-function cache")
            if np.any(np.diff(W) <= 0):
                j = int(np.argmax(np.diff(W) <= 0))
                raise NumericalError(
                    f"scale function not increasing on the cache near x={h * j:.6g}; "
                    "refine the grid (smaller h_cache) or raise talbot_nodes"
                )
            x = h * np.arange(n + 1)
            Wbar = np.concatenate([[0.0], np.cumsum(0.5 * h * (W[1:] + W[:-1]))])
            Z = 1.0 + self.q * Wbar
            Zbar = np.concatenate([[0.0], np.cumsum(0.5 * h * (Z[1:] + Z[:-1]))])
            # publish fully built arrays only
            self._cache_W, self._cache_Wbar, self._cache_Zbar = W, Wbar, Zbar
            self._grid = x

    def _inv(self, kind: str, x: np.ndarray) -> np.ndarray:
        xp = np.maximum(x, 0.0)
        if xp.size:
            self._ensure_cache(float(np.max(xp)))
        grid = self._grid
        if kind == "W":
            return np.interp(xp, grid, self._cache_W)
        if kind == "Wbar":
            return np.interp(xp, grid, self._cache_Wbar)
        if kind == "Zbar":
            return np.interp(xp, grid, self._cache_Zbar)
        if kind == "Wprime":
            W, h = self._cache_W, self.h_cache
            d = np.empty_like(W)
            d[1:-1] = (W[2:] - W[:-2]) / (2 * h)
            d[0] = (W[1] - W[0]) / h
            d[-1] = (W[-1] - W[-2]) / h
            return np.interp(xp, grid, d)
        raise ValueError(kind)  # pragma: no cover

    # -- public evaluation ----------------------------------------------------

    def _eval(self, kind: str, x):
        arr = np.asarray(x, dtype=float)
        flat = arr.reshape(-1)
        vals = self._cf(kind, flat) if self.backend == CLOSED_FORM else self._inv(kind, flat)
        if kind == "Zbar":
            out = np.where(flat <= 0, flat, vals)
        else:
            out = np.where(flat < 0, 0.0, vals)
            if kind == "Wbar":
                out = np.where(flat <= 0, 0.0, out)
        out = out.reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def W(self, x):
        """Scale function; zero on the negative half-line, W(0) = W(0+)."""
        return self._eval("W", x)

    def Wprime(self, x):
        """Right derivative of W (zero for x < 0)."""
        return self._eval("Wprime", x)

    def Wbar(self, x):
        return self._eval("Wbar", x)

    def Z(self, x):
        wbar = self._eval("Wbar", x)
        return 1.0 + self.q * wbar

    def Zbar(self, x):
        return self._eval("Zbar", x)

    def tilted(self, kind: str, x, theta: float):
        """exp(-theta x) * F(x) for F in {W, Wprime, Wbar, Z}, overflow-free in closed form.

        Used for the infinite-horizon integrals, where F grows like
        exp(root * x) and is integrated against exp(-theta x), theta > root.
        """
        arr = np.asarray(x, dtype=float)
        flat = arr.reshape(-1)
        if self.backend == CLOSED_FORM:
            if kind == "Z":
                w = self._cf("Wbar", flat, theta)
                vals = np.exp(-theta * np.maximum(flat, 0.0)) + self.q * w
            else:
                vals = self._cf(kind, flat, theta)
            if kind == "Z":
                vals = np.where(flat <= 0, np.exp(-theta * flat), vals)
            else:
                vals = np.where(flat < 0, 0.0, vals)
        else:
            base = self.Z(flat) if kind == "Z" else self._eval(kind, flat)
            vals = np.exp(-theta * flat) * base
        out = vals.reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def asymptotic_limit(self) -> float:
        """Limit of exp(-root x) W(x) as x -> infinity, i.e. 1/psi_target'(root)."""
        d = float(_exponent_derivative(self.model, self.shift, self.root))
        return math.inf if d == 0 else 1.0 / d

    def dump_csv(self, path, x_max: float | None = None, step: float | None = None) -> None:
        """Write (x, W, Z) rows on a uniform grid for inspection."""
        step = step or self.h_cache
        x_max = x_max or self._x_max_initial
        xs = step * np.arange(int(round(x_max / step)) + 1)
        W, Z = self.W(xs), self.Z(xs)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "W", "Z"])
            for row in zip(xs, W, Z):
                writer.writerow([f"{v:.17g}" for v in row])


def build(model: ModelSpec, q: float, target: str = "X", **kwargs) -> ScaleEvaluator:
    """Construct a :class:`ScaleEvaluator`; see its docstring for options."""
    return ScaleEvaluator(model, q, target, **kwargs)


def net_drift_target(model: ModelSpec, target: str) -> float:
    return net_drift(model)[0 if target == "X" else 1]
