"""Stationary scattering off the rectangular barrier.

Inside the barrier the wavenumber is q = sqrt(k^2 - k'^2). Every quantity
here is written through cos(q d) and sin(q d)/q, both even in q, so the
branch of the square root never matters. Trigonometric factors are carried
scaled by exp(-|Im q| d) so that opaque barriers and complex k do not
overflow.

With D(k) = 2k cos(qd) - i(2k^2 - k'^2) sin(qd)/q:

    T(k) = 2k exp(-ikd) / D(k)        (transmitted wave T e^{ikx}, x > d)
    R(k) = -i k'^2 [sin(qd)/q] / D(k) (reflected wave R e^{-ikx}, x < 0)
    G+(0, d; k) = 1 / (i D(k))
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .units import BarrierSpec

_SINC_SERIES_CUTOFF = 1e-4
_DERIV_SERIES_CUTOFF = 1e-2
_EQ10_RTOL = 1e-10


class PoleProximityError(ArithmeticError):
    """The Wronskian vanished to working precision: k sits on a pole."""


class NotAPoleError(ValueError):
    """A resonant eigenfunction failed the outgoing condition at x = d."""


def interior_wavenumber(k, b: BarrierSpec, branch: int = 1):
    """q = sqrt(k^2 - k'^2) on the principal branch (``branch=-1`` flips it)."""
    k = np.asarray(k, dtype=complex)
    return branch * np.sqrt(k * k - b.kprime ** 2)


def _scaled_trig(q, length):
    """cos(q L), sin(q L)/q and the scale |Im q| L.

    The first two are multiplied by exp(-|Im q| L).
    """
    q = np.asarray(q, dtype=complex)
    z = q * length
    sigma = np.abs(z.imag)
    ep = np.exp(1j * z - sigma)
    em = np.exp(-1j * z - sigma)
    cos_s = 0.5 * (ep + em)
    small = np.abs(z) < _SINC_SERIES_CUTOFF
    sinc_s = (ep - em) / (2j * np.where(small, 1.0, q))
    series = length * (1.0 - z ** 2 / 6.0 + z ** 4 / 120.0) * np.exp(-sigma)
    return cos_s, np.where(small, series, sinc_s), sigma


def _scaled_deriv_kernel(q, cos_s, sinc_s, d, sigma):
    """(d cos(qd) - sin(qd)/q) / q^2, scaled like the other trig factors."""
    z = q * d
    small = np.abs(z) < _DERIV_SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (d * cos_s - sinc_s) / (q * q)
    if np.any(small):
        series = d ** 3 * (-1.0 / 3.0 + z ** 2 / 30.0 - z ** 4 / 840.0) * np.exp(-sigma)
        out = np.where(small, series, out)
    return out


def _stable_denominator(k, q, cos_s, sinc_s, sigma, kp2, d, deriv_plain=None):
    """Scaled D (and D') without the cancellation between the two terms of D.

    For |qd| >= 1 uses D = [A^2 exp(-iqd) - B^2 exp(iqd)] / (2q) with
    A = k + q, B = k - q = k'^2 / A, the sign of q chosen so that |A| >= |B|.
    Then D' = (2 - ikd)(A^2 exp(-iqd) + B^2 exp(iqd)) / (2q^2) - k D / q^2.
    Below that the trigonometric form is used as is.
    """
    plain = 2.0 * k * cos_s - 1j * (2.0 * k * k - kp2) * sinc_s
    big = np.abs(q * d) >= 1.0
    if not np.any(big):
        return plain if deriv_plain is None else (plain, deriv_plain)
    qq = np.where(np.abs(k + q) >= np.abs(k - q), q, -q)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        aa = (k + qq) ** 2
        bb = (kp2 / (k + qq)) ** 2
        z = qq * d
        ep = np.exp(1j * z - sigma)
        em = np.exp(-1j * z - sigma)
        stable = (aa * em - bb * ep) / (2.0 * qq)
        dens = np.where(big, stable, plain)
        if deriv_plain is None:
            return dens
        q2 = qq * qq
        dstable = (2.0 - 1j * k * d) * (aa * em + bb * ep) / (2.0 * q2) - k * stable / q2
    return dens, np.where(big, dstable, deriv_plain)


def scaled_denominator(k, b: BarrierSpec, branch: int = 1, derivative: bool = False):
    """D(k) (and optionally D'(k)) times exp(-|Im q| d), with that scale.

    Returns ``(D_s, sigma)`` or ``(D_s, dD_s, sigma)``.
    """
    k = np.asarray(k, dtype=complex)
    kp2 = b.kprime ** 2
    q = interior_wavenumber(k, b, branch)
    c, s, sigma = _scaled_trig(q, b.d)
    if not derivative:
        return _stable_denominator(k, q, c, s, sigma, kp2, b.d), sigma
    kern = _scaled_deriv_kernel(q, c, s, b.d, sigma)
    ddens = (2.0 * c - 2.0 * b.d * k * k * s - 4j * k * s
             - 1j * (2.0 * k * k - kp2) * k * kern)
    dens, ddens = _stable_denominator(k, q, c, s, sigma, kp2, b.d, ddens)
    return dens, ddens, sigma


def transmission_amplitude(k, b: BarrierSpec, branch: int = 1):
    """Transmission amplitude T(k), analytic in k away from its poles.

    ``k`` may be a scalar or an array of complex wavenumbers [1/nm].
    """
    k = np.asarray(k, dtype=complex)
    dens, sigma = scaled_denominator(k, b, branch)
    return 2.0 * k * np.exp(-1j * k * b.d - sigma) / dens


def reflection_amplitude(k, b: BarrierSpec):
    """Reflection amplitude R(k) for real, nonzero k."""
    k = np.asarray(k, dtype=float)
    if np.any(k == 0):
        raise ValueError("reflection_amplitude needs k != 0")
    q = interior_wavenumber(k, b)
    c, s, sigma = _scaled_trig(q, b.d)
    dens = _stable_denominator(k, q, c, s, sigma, b.kprime ** 2, b.d)
    return -1j * b.kprime ** 2 * s / dens


def _outgoing_solutions(k, x, xp, b: BarrierSpec):
    """Scaled left/right outgoing solutions and their Wronskian."""
    q = interior_wavenumber(k, b)
    iq = np.abs(q.imag)
    c_x, s_x, _ = _scaled_trig(q, x)
    c_r, s_r, _ = _scaled_trig(q, b.d - xp)
    u_left = c_x - 1j * k * s_x
    u_right = c_r - 1j * k * s_r
    # Wronskian u_L u_R' - u_L' u_R evaluated at x = 0.
    c_d, s_d, _ = _scaled_trig(q, b.d)
    u_right0 = c_d - 1j * k * s_d
    du_right0 = q * q * s_d + 1j * k * c_d
    wronskian = du_right0 + 1j * k * u_right0
    return u_left, u_right, wronskian, np.exp(-iq * (xp - x))


def outgoing_green_fn(x, xp, k, b: BarrierSpec):
    """Outgoing Green's function G+(x, x'; k) for 0 <= x, x' <= d.

    Built from the solution obeying u' = -ik u at x = 0 and the one obeying
    u' = ik u at x = d, divided by their Wronskian.
    """
    if not (0 <= x <= b.d and 0 <= xp <= b.d):
        raise ValueError(f"x, x' must lie in [0, {b.d}], got ({x}, {xp})")
    lo, hi = min(x, xp), max(x, xp)
    k = np.asarray(k, dtype=complex)
    u_left, u_right, wronskian, decay = _outgoing_solutions(k, lo, hi, b)
    scale = np.maximum(np.abs(u_left * u_right), 1.0)
    if np.any(np.abs(wronskian) < 1e-300 * scale):
        raise PoleProximityError(f"Wronskian underflow at k={k}")
    return u_left * u_right * decay / wronskian


def outgoing_green_fn_edges(k, b: BarrierSpec):
    """G+(0, d; k)."""
    return outgoing_green_fn(0.0, b.d, k, b)


@dataclass(frozen=True)
class EigenfunctionBoundaryValues:
    """Boundary values of a normalized resonant state.

    Interior form: u(x) = u0 * (cos(q x) - i kn sin(q x)/q).
    """

    u0: complex
    ud: complex
    kn: complex

    def flipped(self) -> "EigenfunctionBoundaryValues":
        return EigenfunctionBoundaryValues(-self.u0, -self.ud, self.kn)


def _exp_coefficients(kn, b: BarrierSpec):
    """q, A = k + q and B = k'^2 / A = k - q, with the sign of q giving |A| >= |B|."""
    q = interior_wavenumber(kn, b)
    q = np.where(np.abs(kn + q) >= np.abs(kn - q), q, -q)
    a = kn + q
    return q, a, b.kprime ** 2 / a


def _profile(x, kn, b: BarrierSpec):
    """cos(qx) - i kn sin(qx)/q.

    Written as (A exp(-iqx) - B exp(iqx)) / (2q) when |qd| >= 1, which avoids
    the cancellation between the two trigonometric terms near poles.
    """
    q, a, bb = _exp_coefficients(kn, b)
    x = np.asarray(x, dtype=float)
    if abs(q * b.d) >= 1.0:
        return (a * np.exp(-1j * q * x) - bb * np.exp(1j * q * x)) / (2.0 * q)
    if abs(q * b.d) < _SINC_SERIES_CUTOFF:
        sinc = x * (1.0 - (q * x) ** 2 / 6.0 + (q * x) ** 4 / 120.0)
    else:
        sinc = np.sin(q * x) / q
    return np.cos(q * x) - 1j * kn * sinc


def normalization_integral(kn, b: BarrierSpec):
    """Integral of (cos qx - i k sin(qx)/q)^2 over [0, d] in closed form."""
    kn = np.asarray(kn, dtype=complex)
    d = b.d
    q, a, bb = _exp_coefficients(kn, b)
    z = q * d
    u = 2.0 * z
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sinc = np.sin(z) / q
        sinc2 = np.sin(u) / (2.0 * q)
        tail = (d - sinc2) / (q * q)
        trig = 0.5 * d + 0.5 * sinc2 - 1j * kn * sinc ** 2 - 0.5 * kn * kn * tail
        expo = ((a * a * (1.0 - np.exp(-1j * u)) + bb * bb * (np.exp(1j * u) - 1.0))
                / (8j * q ** 3) - b.kprime ** 2 * d / (2.0 * q * q))
    small = np.abs(z) < _DERIV_SERIES_CUTOFF
    if np.any(small):
        sinc = np.where(small, d * (1 - z ** 2 / 6 + z ** 4 / 120), sinc)
        sinc2 = np.where(small, d * (1 - u ** 2 / 6 + u ** 4 / 120), sinc2)
        tail = np.where(small, 4 * d ** 3 * (1 / 6 - u ** 2 / 120 + u ** 4 / 5040), tail)
        trig = np.where(small, 0.5 * d + 0.5 * sinc2 - 1j * kn * sinc ** 2 - 0.5 * kn * kn * tail, trig)
    use_exp = (np.abs(z) >= 1.0) & (np.abs(z.imag) < 300.0)
    out = np.where(use_exp, expo, trig)
    return out if out.ndim else complex(out)


def resonant_boundary_values(kn, b: BarrierSpec):
    """Vectorised core of resonant_eigenfunction: arrays (u0, ud)."""
    kn = np.asarray(kn, dtype=complex)
    q, a, bb = _exp_coefficients(kn, b)
    big = np.abs(q * b.d) >= 1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        expo = (a * np.exp(-1j * q * b.d) - bb * np.exp(1j * q * b.d)) / (2.0 * q)
    if np.all(big):
        phi_d = expo
    else:
        trig = np.array([_profile(b.d, k, b) for k in np.atleast_1d(kn)[~np.atleast_1d(big)]])
        phi_d = np.atleast_1d(expo).copy()
        phi_d[~np.atleast_1d(big)] = trig
        phi_d = phi_d.reshape(kn.shape)
    # u'(d) - i kn u(d) = -i D(kn) u0
    dens, sigma = scaled_denominator(kn, b)
    residual = np.abs(dens) * np.exp(sigma) / np.maximum(np.abs(kn * phi_d), np.abs(kn))
    if np.any(residual > _EQ10_RTOL):
        i = int(np.argmax(np.atleast_1d(residual)))
        raise NotAPoleError(f"outgoing condition at x=d fails by {np.atleast_1d(residual)[i]:.3e} "
                            f"at k={np.atleast_1d(kn)[i]}")
    lhs = normalization_integral(kn, b) + 1j * (1.0 + phi_d ** 2) / (2.0 * kn)
    u0 = np.sqrt(1.0 / lhs)
    return u0, u0 * phi_d


def resonant_eigenfunction(kn: complex, b: BarrierSpec) -> EigenfunctionBoundaryValues:
    """Normalized resonant state at the pole ``kn``.

    The scale is fixed by
        int_0^d u^2 dx + i (u(0)^2 + u(d)^2) / (2 kn) = 1.
    Raises NotAPoleError if u'(d) = i kn u(d) fails by more than 1e-10
    (relative), which means ``kn`` is not a zero of D.
    """
    u0, ud = resonant_boundary_values(complex(kn), b)
    return EigenfunctionBoundaryValues(u0=complex(u0), ud=complex(ud), kn=complex(kn))


def normalization_residual(ebv: EigenfunctionBoundaryValues, b: BarrierSpec) -> complex:
    """Left side of the normalization condition minus one."""
    integral = ebv.u0 ** 2 * complex(normalization_integral(ebv.kn, b))
    return integral + 1j * (ebv.u0 ** 2 + ebv.ud ** 2) / (2.0 * ebv.kn) - 1.0


def eigenfunction_value(x, ebv: EigenfunctionBoundaryValues, b: BarrierSpec):
    """u_n(x) for 0 <= x <= d; exact u0 and ud at the edges."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(x_arr > b.d):
        raise ValueError(f"x must lie in [0, {b.d}]")
    out = ebv.u0 * _profile(x_arr, ebv.kn, b)
    out = np.where(x_arr == 0.0, ebv.u0, out)
    out = np.where(x_arr == b.d, ebv.ud, out)
    return out if out.ndim else complex(out)
