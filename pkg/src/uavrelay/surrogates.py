"""Convex surrogates used by the inner-approximation loop.

Each surrogate is a function of a point and an expansion point that

* bounds the original function from the correct side everywhere,
* matches it at the expansion point, and
* matches its gradient at the expansion point.

The ``*_coefficients`` helpers return the same surrogates as affine or
quadratic coefficient sets; the program builder consumes those, and the test
suite checks the two forms against each other.

Log-rate surrogates are evaluated in nats; conversion to bits happens only in
:func:`phi_bar_fd` / :func:`phi_bar_hd` and in the rate-level functions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelParams

__all__ = [
    "FLOOR",
    "DegenerateExpansionError",
    "sqrt_bilinear_upper",
    "log_quotient_lower_h1",
    "log_quotient_lower_h1_presub",
    "log_ratio_lower_h2",
    "ExpansionPoint",
    "phi_fd",
    "phi_hd",
    "xi_terms_fd",
    "phi_bar_fd",
    "phi_bar_hd",
    "bilinear_dc_lower",
    "penalty_value",
    "penalty_linearized",
    "h1_lower_coefficients",
    "h2_lower_coefficients",
    "dc_lower_coefficients",
]

#: Smallest admissible expansion value in a denominator.
FLOOR = 1e-12
LN2 = np.log(2.0)


class DegenerateExpansionError(ValueError):
    """An expansion value fell below :data:`FLOOR`."""


def _expansion(**values):
    out = []
    for name, v in values.items():
        arr = np.asarray(v, dtype=float)
        if np.any(~(arr >= FLOOR)):
            raise DegenerateExpansionError(
                f"expansion value {name} below the {FLOOR:g} floor (min {np.min(arr):g})"
            )
        out.append(arr)
    return out


def _positive(**values):
    out = []
    for name, v in values.items():
        arr = np.asarray(v, dtype=float)
        if np.any(~(arr > 0)):
            raise ValueError(f"{name} must be positive")
        out.append(arr)
    return out


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


# ----------------------------------------------------------------------------
# generic bounds


def sqrt_bilinear_upper(x, y, x0, y0):
    """Convex upper bound of ``sqrt(x*y)`` tight at ``(x0, y0)``."""
    x, y = _positive(x=x, y=y)
    x0, y0 = _expansion(x0=x0, y0=y0)
    return _scalar(np.sqrt(x0) / (2 * np.sqrt(y0)) * y + np.sqrt(y0) / (2 * np.sqrt(x0)) * x)


def log_ratio_lower_h2(x, z, x0, z0):
    """Concave lower bound of ``ln(1 + x/z)`` tight at ``(x0, z0)``, in nats."""
    x, z = _positive(x=x, z=z)
    x0, z0 = _expansion(x0=x0, z0=z0)
    g0 = x0 / z0
    val = np.log1p(g0) - g0 + 2 * np.sqrt(x0) * np.sqrt(x) / z0 - x0 * (x + z) / (z0 * (x0 + z0))
    return _scalar(val)


def log_quotient_lower_h1(x, y, z, x0, y0, z0):
    """Concave lower bound of ``ln(1 + x/(y*z))`` tight at ``(x0, y0, z0)``, in nats.

    The product ``y*z`` is replaced by its convex upper bound
    ``y0/(2 z0) z**2 + z0/(2 y0) y**2``.
    """
    x, y, z = _positive(x=x, y=y, z=z)
    x0, y0, z0 = _expansion(x0=x0, y0=y0, z0=z0)
    d0 = y0 * z0
    g0 = x0 / d0
    yz_ub = y0 / (2 * z0) * z**2 + z0 / (2 * y0) * y**2
    val = np.log1p(g0) - g0 + 2 * np.sqrt(x0) * np.sqrt(x) / d0 - x0 * (x + yz_ub) / (d0 * (x0 + d0))
    return _scalar(val)


def log_quotient_lower_h1_presub(x, y, z, x0, y0, z0):
    """Lower bound of ``ln(1 + x/(y*z))`` before the ``y*z`` upper bound is applied.

    Equal to :func:`log_ratio_lower_h2` evaluated at ``(x, y*z)``; it sits
    between :func:`log_quotient_lower_h1` and the true function.
    """
    x, y, z = _positive(x=x, y=y, z=z)
    x0, y0, z0 = _expansion(x0=x0, y0=y0, z0=z0)
    return log_ratio_lower_h2(x, y * z, x0, y0 * z0)


def h2_lower_coefficients(x0, z0):
    """Coefficients of the h2 bound: ``c + c_sqrt*sqrt(x) - c_lin*(x + z)``.

    Returns
    -------
    c, c_sqrt, c_lin : ndarray
        All in nats.
    """
    x0, z0 = _expansion(x0=x0, z0=z0)
    g0 = x0 / z0
    return np.log1p(g0) - g0, 2 * np.sqrt(x0) / z0, g0 / (x0 + z0)


def h1_lower_coefficients(x0, y0, z0):
    """Coefficients of the h1 bound.

    The bound equals ``c + c_sqrt*sqrt(x) - c_x*x - c_sq*((y/y0)**2 + (z/z0)**2)``.
    """
    x0, y0, z0 = _expansion(x0=x0, y0=y0, z0=z0)
    d0 = y0 * z0
    g0 = x0 / d0
    c_x = g0 / (x0 + d0)
    c_sq = 0.5 * g0 / (1 + g0)
    return np.log1p(g0) - g0, 2 * np.sqrt(x0) / d0, c_x, c_sq


# ----------------------------------------------------------------------------
# rate functions and their surrogates


@dataclass(frozen=True)
class ExpansionPoint:
    """Per-slot values around which the rate surrogates are built.

    Fields may be scalars or arrays of a common shape.  Powers are in watts,
    ``z1``/``z2`` are the distance slacks (``d**alpha``) and ``t1`` is the
    uplink interference-plus-noise slack in watts.
    """

    p1: object
    z1: object
    t1: object
    p2: object
    z2: object


def phi_fd(point: ExpansionPoint, params: ChannelParams):
    """Full-band rate terms (bits/s) as functions of the slack variables."""
    c = np.exp(-params.euler_const) * params.ref_gain
    phi1 = params.bandwidth * np.log2(1 + c * np.asarray(point.p1) / (np.asarray(point.z1) * point.t1))
    phi2 = params.bandwidth * np.log2(1 + c * np.asarray(point.p2) / (np.asarray(point.z2) * params.noise_power))
    return _scalar(phi1), _scalar(phi2)


def phi_hd(p, z, params: ChannelParams):
    """Half-duplex full-band rate (bits/s) of one link given its distance slack."""
    c = np.exp(-params.euler_const) * params.ref_gain
    return _scalar(params.bandwidth * np.log2(1 + c * np.asarray(p) / (np.asarray(z) * params.noise_power)))


def xi_terms_fd(point: ExpansionPoint, exp_pt: ExpansionPoint, params: ChannelParams):
    """The six terms whose combinations lower-bound the full-duplex rate terms.

    Returns ``(xi1, ..., xi6)`` in bits/s/Hz so that
    ``B*(xi1 + xi2 - xi3) <= phi1`` and ``B*(xi4 + xi5 - xi6) <= phi2``.
    """
    # the floor applies to the interference slack in units of the noise power
    p10, z10, t10n, p20, z20 = _expansion(
        p1=exp_pt.p1, z1=exp_pt.z1, t1=np.asarray(exp_pt.t1, float) / params.noise_power,
        p2=exp_pt.p2, z2=exp_pt.z2)
    t10 = t10n * params.noise_power
    p1, z1, t1, p2, z2 = (np.asarray(v, dtype=float) for v in
                          (point.p1, point.z1, point.t1, point.p2, point.z2))
    if np.any(p1 < 0) or np.any(p2 < 0):
        raise ValueError("powers must be nonnegative")
    c = np.exp(-params.euler_const) * params.ref_gain
    s2 = params.noise_power
    d10 = z10 * t10
    xi1 = np.log2(1 + c * p10 / d10) - c * p10 / (d10 * LN2)
    xi2 = c * 2 * np.sqrt(p10) * np.sqrt(p1) / (d10 * LN2)
    xi3 = (c * p10 / ((c * p10 + d10) * d10 * LN2)
           * (c * p1 + z10 * t1**2 / (2 * t10) + t10 * z1**2 / (2 * z10)))
    xi4 = np.log2(1 + c * p20 / (z20 * s2)) - c * p20 / (z20 * s2 * LN2)
    xi5 = c / (z20 * s2 * LN2) * 2 * np.sqrt(p20) * np.sqrt(p2)
    xi6 = c * p20 / (c * p20 + z20 * s2) * (c * p2 + z2 * s2) / (z20 * s2 * LN2)
    return tuple(_scalar(v) for v in (xi1, xi2, xi3, xi4, xi5, xi6))


def phi_bar_fd(point: ExpansionPoint, exp_pt: ExpansionPoint, params: ChannelParams):
    """Lower bounds (bits/s) of both full-duplex rate terms, via h1 and h2."""
    # both bounds are invariant to scaling numerator and noise term together,
    # so powers are expressed relative to the noise power
    c = np.exp(-params.euler_const) * params.ref_gain / params.noise_power
    s2 = params.noise_power
    ul = log_quotient_lower_h1(c * np.asarray(point.p1, float), point.z1, np.asarray(point.t1, float) / s2,
                               c * np.asarray(exp_pt.p1, float), exp_pt.z1, np.asarray(exp_pt.t1, float) / s2)
    dl = log_ratio_lower_h2(c * np.asarray(point.p2, float), point.z2,
                            c * np.asarray(exp_pt.p2, float), exp_pt.z2)
    return _scalar(params.bandwidth * ul / LN2), _scalar(params.bandwidth * dl / LN2)


def phi_bar_hd(p, z, p0, z0, params: ChannelParams):
    """Lower bound (bits/s) of a half-duplex rate term; same form as the FD downlink."""
    c = np.exp(-params.euler_const) * params.ref_gain / params.noise_power
    val = log_ratio_lower_h2(c * np.asarray(p, float), z, c * np.asarray(p0, float), z0)
    return _scalar(params.bandwidth * val / LN2)


# ----------------------------------------------------------------------------
# bilinear term and penalty


def bilinear_dc_lower(a, phi, a0, phi0):
    """Concave lower bound of ``a*phi`` from its difference-of-squares form.

    ``a*phi = ((a+phi)**2 - (a-phi)**2)/4``; the convex square is replaced
    by its tangent at ``(a0, phi0)``.
    """
    m0 = np.asarray(a0, float) + phi0
    val = m0**2 / 4 + m0 / 2 * (np.asarray(a, float) - a0 + phi - phi0) - (np.asarray(a, float) - phi) ** 2 / 4
    return _scalar(val)


def dc_lower_coefficients(a0, phi0):
    """``bilinear_dc_lower = c + c_lin*(a + phi) - (a - phi)**2/4``; returns ``(c, c_lin)``."""
    m0 = np.asarray(a0, float) + phi0
    return -(m0**2) / 4, m0 / 2


def _fractions(lam, name, tol=1e-7):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < -tol) or np.any(lam > 1 + tol):
        raise ValueError(f"{name} must lie in [0, 1]")
    return lam


def penalty_value(lam):
    """``sum(lam*(lam-1))``: nonpositive on the unit box, zero exactly at binary points."""
    lam = _fractions(lam, "lambda")
    return float(np.sum(lam * (lam - 1)))


def penalty_linearized(lam, lam0):
    """Tangent of :func:`penalty_value` at `lam0`; a global under-estimator."""
    lam = _fractions(lam, "lambda")
    lam0 = _fractions(lam0, "lambda0")
    return float(np.sum(lam * (2 * lam0 - 1) - lam0**2))
