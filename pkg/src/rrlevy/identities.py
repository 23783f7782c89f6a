"""Fluctuation identities of the refracted-reflected process V.

Every quantity is a ratio or difference of scale-function expressions, most of
them involving a convolution ``int_b^x WY^(p)(x - y) f(y) dy`` against the
scale function ``WY`` of the drift-changed process Y.  All of those go through
:func:`convolve`, a composite Gauss-Legendre rule.

Notation used in names: ``W``, ``Z`` are scale functions of X; ``WY``, ``ZY``
those of Y = X - delta t; ``phi``/``varphi`` the right inverses of psi and
psi_Y.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NumericalError
from .model import ModelSpec, net_drift
from .scale import ScaleEvaluator

__all__ = [
    "IdentityContext",
    "IdentityValue",
    "Infinite",
    "QUANTITIES",
    "capital_injection_npv",
    "capital_injection_npv_inf",
    "convolve",
    "dividends_npv",
    "dividends_npv_inf",
    "evaluate",
    "mathcal_L",
    "mathcal_L_expanded",
    "mathcal_R",
    "occupation_above_lt",
    "occupation_below_lt",
    "one_sided_exit",
    "r_q",
    "r_tilde_q",
    "resolvent_density",
    "resolvent_density_inf",
    "resolvent_mass",
    "w_kernel",
]

GL_ORDER = 16
PANEL_WIDTH = 0.05
MIN_PANELS = 8
TAIL_DECADES = 40.0
NEGATIVE_DENSITY_TOL = 1e-9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class Infinite:
    """A quantity that is infinite by theorem, not by overflow."""

    reason: str

    def __float__(self):
        return math.inf

    def __str__(self):
        return "inf"


@dataclass
class IdentityValue:
    name: str
    params: dict
    value: float | Infinite
    method: dict = field(default_factory=dict)

    @property
    def is_infinite(self) -> bool:
        return isinstance(self.value, Infinite)


class IdentityContext:
    """Model plus lazily built scale-function evaluators and quadrature settings.

    Parameters
    ----------
    model : ModelSpec
    gl_order, panel_width, min_panels
        Composite Gauss-Legendre settings for every convolution.
    backend : str
        Passed to :class:`~rrlevy.scale.ScaleEvaluator`.
    self_check : bool
        Re-run each convolution with doubled panels and raise when the two
        disagree by more than ``1e-8`` relative.
    """

    def __init__(
        self,
        model: ModelSpec,
        gl_order: int = GL_ORDER,
        panel_width: float = PANEL_WIDTH,
        min_panels: int = MIN_PANELS,
        backend: str = "auto",
        self_check: bool = False,
        **scale_kwargs,
    ):
        self.model = model
        self.b = model.b
        self.delta = model.delta
        self.gl_order = int(gl_order)
        self.panel_width = float(panel_width)
        self.min_panels = int(min_panels)
        self.backend = backend
        self.self_check = self_check
        self._scale_kwargs = scale_kwargs
        if self.gl_order == GL_ORDER:
            self._nodes, self._weights = _GL_NODES, _GL_WEIGHTS
        else:
            self._nodes, self._weights = np.polynomial.legendre.leggauss(self.gl_order)
        self._evaluators: dict[tuple[float, str], ScaleEvaluator] = {}
        self._lock = threading.Lock()

    def scale(self, q: float, target: str = "X") -> ScaleEvaluator:
        key = (float(q), target)
        ev = self._evaluators.get(key)
        if ev is None:
            with self._lock:
                ev = self._evaluators.get(key)
                if ev is None:
                    ev = ScaleEvaluator(self.model, q, target, backend=self.backend, **self._scale_kwargs)
                    self._evaluators[key] = ev
        return ev

    def X(self, q: float) -> ScaleEvaluator:
        return self.scale(q, "X")

    def Y(self, q: float) -> ScaleEvaluator:
        return self.scale(q, "Y")

    def prepare(self, qs) -> "IdentityContext":
        """Build evaluators for every q in ``qs`` up front (before sharing across threads)."""
        for q in qs:
            self.X(q)
            self.Y(q)
        return self

    @property
    def method(self) -> dict:
        backends = sorted({ev.backend for ev in self._evaluators.values()})
        return {
            "backend": "+".join(backends) or self.backend,
            "gl_order": self.gl_order,
            "panel_width": self.panel_width,
        }

    # -- quadrature -----------------------------------------------------------

    def panels_for(self, lo: float, hi: float) -> int:
        return max(self.min_panels, math.ceil((hi - lo) / self.panel_width))

    def gauss_points(self, lo: float, hi: float, panels: int | None = None):
        """Nodes and weights of the composite rule on [lo, hi]."""
        n = panels or self.panels_for(lo, hi)
        edges = np.linspace(lo, hi, n + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * self._nodes[None, :]).ravel()
        weights = (half[:, None] * self._weights[None, :]).ravel()
        return nodes, weights


def _quad(ctx: IdentityContext, integrand: Callable, lo: float, hi: float, panels: int | None = None):
    if hi <= lo:
        return 0.0
    y, w = ctx.gauss_points(lo, hi, panels)
    vals = np.asarray(integrand(y), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = y[np.argmax(~np.isfinite(vals).reshape(len(y), -1).all(axis=1))]
        raise NumericalError(f"non-finite integrand at y={bad!r}")
    return w @ vals


def convolve(ctx: IdentityContext, kernel_q: float, f: Callable, x: float, panels: int | None = None) -> float:
    """int_b^x WY^(kernel_q)(x - y) f(y) dy; zero when x <= b.

    ``f`` must accept a numpy array of abscissae.  With ``ctx.self_check`` the
    integral is recomputed with twice the panels and compared.
    """
    b = ctx.b
    if x <= b:
        return 0.0
    kern = ctx.Y(kernel_q)

    def integrand(y):
        fy = np.asarray(f(y), dtype=float)
        if not np.all(np.isfinite(fy)):
            bad = y[np.argmax(~np.isfinite(fy))]
            raise NumericalError(f"non-finite f sample at y={bad!r}")
        return kern.W(x - y) * fy

    n = panels or ctx.panels_for(b, x)
    value = float(_quad(ctx, integrand, b, x, n))
    if ctx.self_check:
        fine = float(_quad(ctx, integrand, b, x, 2 * n))
        if abs(fine - value) > 1e-8 * max(abs(fine), 1e-300):
            raise NumericalError(f"convolution not converged at x={x!r}: {value!r} vs {fine!r}")
    return value


# -- composite scale expressions ----------------------------------------------


def _check_q(q: float, name: str = "q", allow_zero: bool = True) -> float:
    q = float(q)
    if not math.isfinite(q) or q < 0 or (q == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise DomainError(f"{name} must be {bound}, got {q!r}")
    return q


def r_q(ctx: IdentityContext, q: float, x: float) -> float:
    """Z^(q)(x) + q delta int_b^x WY^(q)(x-y) W^(q)(y) dy."""
    q = _check_q(q)
    if x <= 0:
        return 1.0
    W = ctx.X(q)
    val = W.Z(x)
    if q > 0 and ctx.delta > 0:
        val += q * ctx.delta * convolve(ctx, q, W.W, x)
    return float(val)


def r_tilde_q(ctx: IdentityContext, q: float, x: float) -> float:
    """Zbar^(q)(x) + psi'(0+)/q + delta int_b^x WY^(q)(x-y) Z^(q)(y) dy, q > 0."""
    q = _check_q(q, allow_zero=False)
    drift0 = net_drift(ctx.model)[0]
    W = ctx.X(q)
    val = W.Zbar(x) + drift0 / q
    if ctx.delta > 0:
        val += ctx.delta * convolve(ctx, q, W.Z, x)
    return float(val)


def _refraction_integral(ctx: IdentityContext, q: float, x: float, z):
    """int_b^x WY^(q)(x-y) W^(q)'(y-z) dy for an array of z < b."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x <= ctx.b:
        return np.zeros_like(z)
    y, w = ctx.gauss_points(ctx.b, x)
    kern = ctx.Y(q).W(x - y)
    deriv = ctx.X(q).Wprime(y[:, None] - z[None, :])
    return (w * kern) @ deriv


def w_kernel(ctx: IdentityContext, q: float, x: float, z):
    """Kernel w^(q)(x, z) of the resolvent; zero on z in {0, b} and outside (0,b) u (b,x).

    Accepts scalar or array ``z``.
    """
    q = _check_q(q)
    zarr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(zarr < 0):
        raise DomainError("z must be >= 0")
    b = ctx.b
    out = np.zeros_like(zarr)
    low = (zarr > 0) & (zarr < b)
    if np.any(low):
        zl = zarr[low]
        val = ctx.X(q).W(x - zl)
        if ctx.delta > 0:
            val = val + ctx.delta * _refraction_integral(ctx, q, x, zl)
        out[low] = val
    high = (zarr > b) & (zarr < x)
    if np.any(high):
        out[high] = ctx.Y(q).W(x - zarr[high])
    return float(out[0]) if np.ndim(z) == 0 else out


def _check_xa(x: float, a: float) -> None:
    if x > a:
        raise DomainError(f"need x <= a, got x={x!r}, a={a!r}")


def resolvent_density(ctx: IdentityContext, q: float, x: float, a: float, z):
    """Density in z of E_x int_0^{T_a^+} e^{-qt} 1{V_t in dz} dt on [0, a]."""
    q = _check_q(q)
    _check_xa(x, a)
    zarr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(zarr > a):
        raise DomainError("z must lie in [0, a]")
    ratio = r_q(ctx, q, x) / r_q(ctx, q, a)
    dens = w_kernel(ctx, q, a, zarr) * ratio - w_kernel(ctx, q, x, zarr)
    dens = np.atleast_1d(dens)
    if np.any(dens < -NEGATIVE_DENSITY_TOL):
        k = int(np.argmin(dens))
        raise NumericalError(
            f"negative resolvent density {dens[k]:.3e} at z={zarr[k]!r}; quadrature failure"
        )
    return float(dens[0]) if np.ndim(z) == 0 else dens


def resolvent_mass(ctx: IdentityContext, q: float, x: float, a: float, z1: float = 0.0, z2: float | None = None) -> float:
    """Integral of :func:`resolvent_density` over the band [z1, z2] (default [0, a]).

    The z-integral is split at b and x, where the density has jumps.
    """
    z2 = a if z2 is None else z2
    if not 0 <= z1 <= z2 <= a:
        raise DomainError(f"band [{z1}, {z2}] must lie within [0, {a}]")
    cuts = sorted({z1, z2, *[c for c in (ctx.b, x) if z1 < c < z2]})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        nodes, weights = ctx.gauss_points(lo, hi, max(4, math.ceil((hi - lo) / 0.25)))
        total += weights @ resolvent_density(ctx, q, x, a, nodes)
    return float(total)


def _tail_integral(ctx: IdentityContext, integrand: Callable, lo: float, rate_gap: float) -> float:
    """int_lo^inf of an integrand decaying at least like exp(-rate_gap (y - lo)).

    Truncated after 40 e-folds of the envelope, where it is below 1e-16 of its
    value at ``lo``.
    """
    hi = lo + TAIL_DECADES / rate_gap
    panels = min(max(ctx.min_panels, math.ceil((hi - lo) / ctx.panel_width)), 40000)
    return float(_quad(ctx, integrand, lo, hi, panels))


def _tilted_scale_integrals(ctx: IdentityContext, q: float):
    """(varphi, int_b^inf e^{-varphi y} W(y) dy) for q > 0 with delta > 0."""
    vphi = ctx.Y(q).root
    gap = vphi - ctx.X(q).root
    W = ctx.X(q)
    I_W = _tail_integral(ctx, lambda y: W.tilted("W", y, vphi), ctx.b, gap)
    return vphi, gap, I_W


def resolvent_density_inf(ctx: IdentityContext, q: float, x: float, z):
    """Density of the infinite-horizon resolvent E_x int_0^inf e^{-qt} 1{V_t in dz} dt.

    Returns :class:`Infinite` for q = 0 when psi_Y'(0+) <= 0.
    """
    q = _check_q(q)
    zarr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(zarr < 0):
        raise DomainError("z must be >= 0")
    b, delta = ctx.b, ctx.delta
    W = ctx.X(q)
    if q == 0:
        slope_Y = net_drift(ctx.model)[1]
        if slope_Y <= 0:
            return Infinite("q=0 and psi_Y'(0+) <= 0")
        lead = np.where(zarr > b, 1.0, 0.0)
        low = (zarr > 0) & (zarr < b)
        lead = np.where(low, 1.0 - delta * W.W(b - zarr), lead) / slope_Y
        dens = lead - w_kernel(ctx, 0.0, x, zarr)
    elif delta == 0:
        # reflected process without refraction: W(a-z)/Z(a) -> Phi e^{-Phi z}/q
        Phi = W.root
        dens = W.Z(x) * Phi * np.exp(-Phi * zarr) / q * (zarr > 0) - w_kernel(ctx, q, x, zarr)
    else:
        vphi, gap, I_W = _tilted_scale_integrals(ctx, q)
        lead = np.where(zarr > b, np.exp(-vphi * zarr), 0.0)
        for k in np.flatnonzero((zarr > 0) & (zarr < b)):
            zk = zarr[k]
            lead[k] = delta * _tail_integral(
                ctx, lambda u: np.exp(-vphi * zk) * W.tilted("Wprime", u - zk, vphi), b, gap
            )
        dens = lead / (delta * q * I_W) * r_q(ctx, q, x) - w_kernel(ctx, q, x, zarr)
    dens = np.atleast_1d(dens)
    return float(dens[0]) if np.ndim(z) == 0 else dens


def one_sided_exit(ctx: IdentityContext, q: float, x: float, a: float) -> float:
    """E_x[exp(-q T_a^+)] = r^(q)(x) / r^(q)(a)."""
    q = _check_q(q)
    _check_xa(x, a)
    if q == 0 or x == a:
        return 1.0
    return r_q(ctx, q, x) / r_q(ctx, q, a)


def dividends_npv(ctx: IdentityContext, q: float, x: float, a: float) -> float:
    """E_x int_0^{T_a^+} e^{-qt} dL_t."""
    q = _check_q(q)
    _check_xa(x, a)
    delta, b = ctx.delta, ctx.b
    if delta == 0:
        return 0.0
    WY = ctx.Y(q)
    ratio = r_q(ctx, q, x) / r_q(ctx, q, a)
    return float(delta * WY.Wbar(a - b) * ratio - delta * WY.Wbar(x - b))


def dividends_npv_inf(ctx: IdentityContext, q: float, x: float):
    """E_x int_0^inf e^{-qt} dL_t; :class:`Infinite` for q = 0 (delta > 0)."""
    q = _check_q(q)
    delta, b = ctx.delta, ctx.b
    if delta == 0:
        return 0.0
    if q == 0:
        return Infinite("q=0")
    vphi, _, I_W = _tilted_scale_integrals(ctx, q)
    lead = math.exp(-vphi * b) * r_q(ctx, q, x) / (vphi * q * I_W)
    return float(lead - delta * ctx.Y(q).Wbar(x - b))


def capital_injection_npv(ctx: IdentityContext, q: float, x: float, a: float) -> float:
    """E_x int_[0, T_a^+] e^{-qt} dR_t, q > 0."""
    q = _check_q(q, allow_zero=False)
    _check_xa(x, a)
    if x == a:
        return 0.0
    return float(r_tilde_q(ctx, q, a) * r_q(ctx, q, x) / r_q(ctx, q, a) - r_tilde_q(ctx, q, x))


def capital_injection_npv_inf(ctx: IdentityContext, q: float, x: float) -> float:
    """E_x int_[0, inf) e^{-qt} dR_t, q > 0."""
    q = _check_q(q, allow_zero=False)
    W = ctx.X(q)
    if ctx.delta == 0:
        # Zbar(a)/Z(a) -> 1/Phi(q)
        drift0 = net_drift(ctx.model)[0]
        return float(-(W.Zbar(x) + drift0 / q) + W.Z(x) / W.root)
    vphi, gap, _ = _tilted_scale_integrals(ctx, q)
    b = ctx.b
    shift = math.exp(vphi * b)
    I_Z = shift * _tail_integral(ctx, lambda y: W.tilted("Z", y, vphi), b, gap)
    I_W = shift * _tail_integral(ctx, lambda y: W.tilted("W", y, vphi), b, gap)
    return float(-r_tilde_q(ctx, q, x) + I_Z * r_q(ctx, q, x) / (q * I_W))


def _check_pq(p: float, q: float) -> tuple[float, float]:
    p, q = float(p), float(q)
    if not (p >= 0 and p + q >= 0 and math.isfinite(p) and math.isfinite(q)):
        raise DomainError(f"need p >= 0 and p + q >= 0, got p={p!r}, q={q!r}")
    return p, q


def mathcal_R(ctx: IdentityContext, p: float, q: float, x: float) -> float:
    """Z^(p+q)(x) - q WYbar^(p)(x-b) - (p+q) int_b^x WY^(p)(x-y)(q Wbar^(p+q)(y) - delta W^(p+q)(y)) dy."""
    p, q = _check_pq(p, q)
    if x <= 0:
        return 1.0
    pq = p + q
    Wpq = ctx.X(pq)
    val = Wpq.Z(x) - q * ctx.Y(p).Wbar(x - ctx.b)
    if pq != 0 and x > ctx.b:
        delta = ctx.delta
        val -= pq * convolve(ctx, p, lambda y: q * Wpq.Wbar(y) - delta * Wpq.W(y), x)
    return float(val)


def mathcal_L(ctx: IdentityContext, p: float, q: float, x: float) -> float:
    """L^(p,q) = R^(p+q, -q)."""
    p, q = _check_pq(p, q)
    return mathcal_R(ctx, p + q, -q, x)


def mathcal_L_expanded(ctx: IdentityContext, p: float, q: float, x: float) -> float:
    """Z^(p)(x) + q WYbar^(p+q)(x-b) + p int_b^x WY^(p+q)(x-y)(q Wbar^(p)(y) + delta W^(p)(y)) dy."""
    p, q = _check_pq(p, q)
    if x <= 0:
        return 1.0
    Wp = ctx.X(p)
    val = Wp.Z(x) + q * ctx.Y(p + q).Wbar(x - ctx.b)
    if p != 0 and x > ctx.b:
        delta = ctx.delta
        val += p * convolve(ctx, p + q, lambda y: q * Wp.Wbar(y) + delta * Wp.W(y), x)
    return float(val)


def _check_occupation(p: float, q: float, x: float, a: float) -> tuple[float, float]:
    p, q = _check_pq(p, q)
    if not a > 0:
        raise DomainError(f"need a > 0, got {a!r}")
    _check_xa(x, a)
    return p, q


def occupation_below_lt(ctx: IdentityContext, p: float, q: float, x: float, a: float) -> float:
    """E_x exp(-p T_a^+ - q int_0^{T_a^+} 1{V_s < b} ds)."""
    p, q = _check_occupation(p, q, x, a)
    return mathcal_R(ctx, p, q, x) / mathcal_R(ctx, p, q, a)


def occupation_above_lt(ctx: IdentityContext, p: float, q: float, x: float, a: float) -> float:
    """E_x exp(-p T_a^+ - q int_0^{T_a^+} 1{V_s > b} ds)."""
    p, q = _check_occupation(p, q, x, a)
    return mathcal_L(ctx, p, q, x) / mathcal_L(ctx, p, q, a)


# -- batch evaluation ---------------------------------------------------------

# name -> (function, parameter names in call order)
QUANTITIES: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "r_q": (r_q, ("q", "x")),
    "r_tilde_q": (r_tilde_q, ("q", "x")),
    "w_kernel": (w_kernel, ("q", "x", "z")),
    "resolvent_density": (resolvent_density, ("q", "x", "a", "z")),
    "resolvent_density_inf": (resolvent_density_inf, ("q", "x", "z")),
    "resolvent_mass": (resolvent_mass, ("q", "x", "a", "z1", "z2")),
    "one_sided_exit": (one_sided_exit, ("q", "x", "a")),
    "dividends_npv": (dividends_npv, ("q", "x", "a")),
    "dividends_npv_inf": (dividends_npv_inf, ("q", "x")),
    "capital_injection_npv": (capital_injection_npv, ("q", "x", "a")),
    "capital_injection_npv_inf": (capital_injection_npv_inf, ("q", "x")),
    "mathcal_R": (mathcal_R, ("p", "q", "x")),
    "mathcal_L": (mathcal_L, ("p", "q", "x")),
    "occupation_below_lt": (occupation_below_lt, ("p", "q", "x", "a")),
    "occupation_above_lt": (occupation_above_lt, ("p", "q", "x", "a")),
}


def evaluate(ctx: IdentityContext, name: str, params: dict) -> IdentityValue:
    """Evaluate one named quantity; raises KeyError for unknown names."""
    if name not in QUANTITIES:
        raise KeyError(name)
    func, argnames = QUANTITIES[name]
    missing = [k for k in argnames if k not in params and k not in ("z1", "z2")]
    if missing:
        raise DomainError(f"{name}: missing parameters {', '.join(missing)}")
    extra = sorted(set(params) - set(argnames))
    if extra:
        raise DomainError(f"{name}: unexpected parameters {', '.join(extra)}")
    args = [float(params[k]) for k in argnames if k in params]
    value = func(ctx, *args)
    if not isinstance(value, Infinite):
        value = float(value)
    return IdentityValue(name, {k: params[k] for k in argnames if k in params}, value, ctx.method)
