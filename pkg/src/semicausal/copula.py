r"""Bivariate Archimedean copulas.

The Frank family is implemented in closed form, including every partial
derivative up to third order that the semi-competing-risks likelihood and the
EM weights need.  Clayton is provided as an optional second family; its
partial derivatives come from a finite-difference fallback.

Frank copula

.. math::

    C(u, v; \alpha) = -\frac{1}{\alpha}
        \log\Bigl(1 + \frac{(e^{-\alpha u} - 1)(e^{-\alpha v} - 1)}
                          {e^{-\alpha} - 1}\Bigr)

with generator :math:`\varphi(t) = -\log\{(e^{-\alpha t}-1)/(e^{-\alpha}-1)\}`.
``alpha == 0`` denotes the independence copula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import BoundaryError, NumericError, ValidationError

__all__ = [
    "CopulaSpec",
    "Partials",
    "alpha_from_tau",
    "tau_from_alpha",
    "tau_quadrature",
    "FAMILIES",
    "CLAMP_EPS",
]

FAMILIES = ("frank", "clayton")

#: Survival values are clamped to ``[CLAMP_EPS, 1 - CLAMP_EPS]`` before
#: derivative evaluation.
CLAMP_EPS = 1e-12

# Below this |alpha| the Frank formulas use the first-order expansion
# C = uv + alpha/2 * uv(1-u)(1-v).
_FRANK_SMALL = 1e-6

_FRANK_ALPHA_MAX = 700.0
_CLAYTON_ALPHA_MAX = 1e3


@dataclass(frozen=True)
class Partials:
    """Copula value and partial derivatives at ``(u, v)``.

    ``c112`` is :math:`\\partial^3 C / \\partial u^2 \\partial v` and ``c122``
    is :math:`\\partial^3 C / \\partial u \\partial v^2`.
    """

    c: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c12: np.ndarray
    c11: np.ndarray
    c22: np.ndarray
    c112: np.ndarray
    c122: np.ndarray


def _check_unit(name, x, open_interval=False):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be finite")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValidationError(f"{name} must lie in [0, 1]")
    if open_interval and (np.any(x == 0.0) or np.any(x == 1.0)):
        raise BoundaryError(
            f"{name} on the boundary of (0, 1); clamp to "
            f"[{CLAMP_EPS}, 1 - {CLAMP_EPS}] first"
        )
    return x


@dataclass(frozen=True)
class CopulaSpec:
    """An Archimedean copula family together with its association parameter.

    Parameters
    ----------
    family : {'frank', 'clayton'}
    alpha : float
        Association parameter.  Frank accepts any real value (``0`` is the
        independence limit); Clayton requires ``alpha > 0``.
    """

    family: str = "frank"
    alpha: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown copula family {self.family!r}")
        a = float(self.alpha)
        if not np.isfinite(a):
            raise ValidationError("alpha must be finite")
        if self.family == "clayton" and a <= 0.0:
            raise ValidationError("Clayton alpha must be positive")
        object.__setattr__(self, "alpha", a)

    @property
    def is_independence(self) -> bool:
        return self.family == "frank" and abs(self.alpha) < _FRANK_SMALL

    # -- generator -------------------------------------------------------
    def generator(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        if self.family == "frank":
            if self.is_independence:
                return -np.log(t)
            return -np.log(np.expm1(-a * t) / np.expm1(-a))
        return (t ** (-a) - 1.0) / a

    def generator_deriv(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        if self.family == "frank":
            if self.is_independence:
                return -1.0 / t
            return -a / np.expm1(a * t)
        return -(t ** (-a - 1.0))

    def generator_inverse(self, s):
        s = np.asarray(s, dtype=float)
        a = self.alpha
        if self.family == "frank":
            if self.is_independence:
                return np.exp(-s)
            return -np.log1p(np.exp(-s) * np.expm1(-a)) / a
        return (1.0 + a * s) ** (-1.0 / a)

    # -- evaluation ------------------------------------------------------
    def cdf(self, u, v):
        """Evaluate :math:`C(u, v)`."""
        u = _check_unit("u", u)
        v = _check_unit("v", v)
        if self.family == "frank":
            return _frank_cdf(u, v, self.alpha)
        with np.errstate(divide="ignore", over="ignore"):
            return self.generator_inverse(self.generator(u) + self.generator(v))

    def partials(self, u, v) -> Partials:
        """All partial derivatives needed by the likelihood, on the open square."""
        u = _check_unit("u", u, open_interval=True)
        v = _check_unit("v", v, open_interval=True)
        if self.family == "frank":
            return _frank_partials(u, v, self.alpha)
        return _fd_partials(self, u, v)

    def partials_interior(self, u, v) -> Partials:
        """:meth:`partials` without argument checks; ``u, v`` must be clamped."""
        if self.family == "frank":
            return _frank_partials(u, v, self.alpha)
        return _fd_partials(self, u, v)

    def first_partials_interior(self, u, v):
        """:meth:`first_partials` without argument checks."""
        if self.family == "frank":
            return _frank_first(u, v, self.alpha)
        p = _fd_partials(self, u, v)
        return p.c1, p.c2

    def first_partials(self, u, v):
        """Return ``(C_1, C_2)``; cheaper than :meth:`partials`."""
        u = _check_unit("u", u, open_interval=True)
        v = _check_unit("v", v, open_interval=True)
        if self.family == "frank":
            return _frank_first(u, v, self.alpha)
        p = _fd_partials(self, u, v)
        return p.c1, p.c2

    def conditional_inverse(self, w, u):
        """Solve ``C_1(u, v) = w`` for ``v``.

        If ``U`` is uniform and ``W`` is an independent uniform, ``(U, V)`` with
        ``V = conditional_inverse(W, U)`` is distributed as the copula.
        """
        w = _check_unit("w", w, open_interval=True)
        u = _check_unit("u", u, open_interval=True)
        a = self.alpha
        if self.family == "frank":
            if self.is_independence:
                return np.broadcast_to(w, np.broadcast(w, u).shape).copy()
            eu = np.exp(-a * u)
            b = w * np.expm1(-a) / (w + (1.0 - w) * eu)
            v = -np.log1p(b) / a
            return np.clip(v, 0.0, 1.0)
        return _bisect_conditional(self, w, u)

    def tau(self) -> float:
        return tau_from_alpha(self)


# ---------------------------------------------------------------------------
# Frank closed forms


def _frank_cdf(u, v, a):
    if abs(a) < _FRANK_SMALL:
        return u * v * (1.0 + 0.5 * a * (1.0 - u) * (1.0 - v))
    g = np.expm1(-a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log1p(np.expm1(-a * u) * np.expm1(-a * v) / g) / a
    # exact margins; log1p loses the last digits near the edges
    out = np.where(u == 0.0, 0.0, np.where(v == 0.0, 0.0, out))
    out = np.where(u == 1.0, v, np.where(v == 1.0, u, out))
    return np.clip(out, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))


def _frank_first(u, v, a):
    if abs(a) < _FRANK_SMALL:
        fu, fv = u * (1.0 - u), v * (1.0 - v)
        h = 0.5 * a
        return v + h * (1.0 - 2.0 * u) * fv, u + h * fu * (1.0 - 2.0 * v)
    ea = np.expm1(-a * u)
    eb = np.expm1(-a * v)
    den = np.expm1(-a) + ea * eb
    return (ea + 1.0) * eb / den, (eb + 1.0) * ea / den


def _frank_partials(u, v, a) -> Partials:
    if abs(a) < _FRANK_SMALL:
        fu, fv = u * (1.0 - u), v * (1.0 - v)
        du, dv = 1.0 - 2.0 * u, 1.0 - 2.0 * v
        h = 0.5 * a
        return Partials(
            c=u * v + h * fu * fv,
            c1=v + h * du * fv,
            c2=u + h * fu * dv,
            c12=1.0 + h * du * dv,
            c11=-a * fv,
            c22=-a * fu,
            c112=-a * dv,
            c122=-a * du,
        )
    g = np.expm1(-a)
    ea = np.expm1(-a * u)
    eb = np.expm1(-a * v)
    eu = ea + 1.0
    ev = eb + 1.0
    den = g + ea * eb
    inv = 1.0 / den
    inv2 = inv * inv
    c = -np.log1p(ea * eb / g) / a
    c1 = eu * eb * inv
    c2 = ev * ea * inv
    euv = eu * ev
    c12 = -a * g * euv * inv2
    c11 = -a * eb * eu * (g - eb) * inv2
    c22 = -a * ea * ev * (g - ea) * inv2
    k = a * a * g * euv * inv2 * inv
    c112 = k * (den - 2.0 * eu * eb)
    c122 = k * (den - 2.0 * ev * ea)
    return Partials(c, c1, c2, c12, c11, c22, c112, c122)


# ---------------------------------------------------------------------------
# generic fallbacks


def _fd_partials(spec: CopulaSpec, u, v) -> Partials:
    """Central-difference partials of :meth:`CopulaSpec.cdf`.

    Steps shrink near the boundary so that every stencil point stays inside
    the unit square.
    """
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    hu = np.minimum(1e-3, 0.3 * np.minimum(u, 1.0 - u))
    hv = np.minimum(1e-3, 0.3 * np.minimum(v, 1.0 - v))

    def C(i, j):
        return spec.cdf(u + i * hu, v + j * hv)

    c00 = C(0, 0)
    cp0, cm0 = C(1, 0), C(-1, 0)
    c0p, c0m = C(0, 1), C(0, -1)
    cpp, cpm, cmp_, cmm = C(1, 1), C(1, -1), C(-1, 1), C(-1, -1)
    c1 = (cp0 - cm0) / (2 * hu)
    c2 = (c0p - c0m) / (2 * hv)
    c11 = (cp0 - 2 * c00 + cm0) / hu**2
    c22 = (c0p - 2 * c00 + c0m) / hv**2
    c12 = (cpp - cpm - cmp_ + cmm) / (4 * hu * hv)
    c112 = (cpp - 2 * c0p + cmp_ - cpm + 2 * c0m - cmm) / (2 * hu**2 * hv)
    c122 = (cpp - 2 * cp0 + cpm - cmp_ + 2 * cm0 - cmm) / (2 * hu * hv**2)
    return Partials(c00, c1, c2, c12, c11, c22, c112, c122)


def _bisect_conditional(spec, w, u, iters=80):
    w, u = np.broadcast_arrays(np.asarray(w, float), np.asarray(u, float))
    lo = np.zeros_like(w)
    hi = np.ones_like(w)
    eps = 1e-7
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        h = np.minimum(eps, 0.5 * np.minimum(u, 1 - u))
        c1 = (spec.cdf(u + h, mid) - spec.cdf(u - h, mid)) / (2 * h)
        below = c1 < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Kendall's tau


def _debye1(x: float) -> float:
    if x == 0.0:
        return 1.0
    val, _ = integrate.quad(
        lambda t: t / np.expm1(t) if t != 0.0 else 1.0,
        0.0, x, epsabs=1e-14, epsrel=1e-13, limit=200,
    )
    return val / x


def _frank_tau_closed(a: float) -> float:
    if abs(a) < 1e-3:
        return a / 9.0 - a**3 / 900.0 if a != 0.0 else 0.0
    return 1.0 - 4.0 / a * (1.0 - _debye1(a))


def tau_quadrature(spec: CopulaSpec, delta: float = 1e-10) -> float:
    r"""Kendall's tau from the generator, :math:`4\int_0^1 \varphi/\varphi'\,du + 1`.

    Integrates on ``[delta, 1 - delta]`` with adaptive Gauss-Kronrod
    quadrature.
    """
    if spec.is_independence:
        return 0.0

    def f(t):
        return float(spec.generator(t) / spec.generator_deriv(t))

    val, err = integrate.quad(f, delta, 1.0 - delta, epsabs=1e-12, epsrel=1e-12, limit=500)
    if not np.isfinite(val) or err > 1e-10:
        raise NumericError(f"Kendall tau quadrature did not converge (err={err:g})")
    return 4.0 * val + 1.0


def tau_from_alpha(spec: CopulaSpec, method: str = "closed") -> float:
    """Kendall's tau of ``spec``.

    ``method='closed'`` uses the Debye-function form for Frank and
    ``alpha / (alpha + 2)`` for Clayton; ``method='quadrature'`` integrates
    the generator ratio.
    """
    if method == "quadrature":
        return tau_quadrature(spec)
    if method != "closed":
        raise ValidationError(f"unknown method {method!r}")
    if spec.family == "frank":
        return _frank_tau_closed(spec.alpha)
    return spec.alpha / (spec.alpha + 2.0)


def alpha_from_tau(family: str, tau: float) -> float:
    """Association parameter whose Kendall's tau equals ``tau``.

    Uses a bracketing root finder; the result satisfies
    ``|tau_from_alpha(alpha) - tau| < 1e-8``.  For Frank ``tau == 0`` returns
    ``0.0`` (independence).
    """
    if family not in FAMILIES:
        raise ValidationError(f"unknown copula family {family!r}")
    tau = float(tau)
    if not -1.0 < tau < 1.0:
        raise ValidationError("tau must lie in (-1, 1)")
    if family == "frank":
        if tau == 0.0:
            return 0.0
        hi = _FRANK_ALPHA_MAX
        if abs(tau) >= _frank_tau_closed(hi):
            raise ValidationError(f"tau={tau} not attainable by the Frank family")
        f = lambda a: _frank_tau_closed(a) - abs(tau)  # noqa: E731
        lo = 0.0
        b = 1.0
        while f(b) < 0.0:
            lo, b = b, min(2.0 * b, hi)
        root = optimize.brentq(f, lo, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        return float(np.copysign(root, tau))
    if tau <= 0.0:
        raise ValidationError("Clayton only attains tau in (0, 1)")
    f = lambda a: a / (a + 2.0) - tau  # noqa: E731
    if f(_CLAYTON_ALPHA_MAX) < 0:
        raise ValidationError(f"tau={tau} not attainable by the Clayton family")
    return float(optimize.brentq(f, 1e-12, _CLAYTON_ALPHA_MAX, xtol=1e-14, maxiter=500))
