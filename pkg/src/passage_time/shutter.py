"""Transmitted wave of the quantum shutter, Psi(x, t) for x >= d.

Two independent routes:

* resonance sum over the poles of T, each term a Moshinsky-type M function
  written through the Faddeeva function w;
* the direct k-integral over the real axis with the time factor
  (exp(i a (k0^2 - k^2)) - 1) / (k^2 - k0^2), a = hbar t / 2m.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_laguerre, wofz

from .resonances import PoleSet, find_poles
from .scattering import scaled_denominator, transmission_amplitude
from .units import BarrierSpec

log = logging.getLogger(__name__)

T_MIN = 1e-6          # fs; below this M is replaced by its t -> 0+ limit
POLE_TOL = 1e-8       # change of Psi/T(k0) per doubling of N
N_START = 25
N_MAX = 51200
DIRECT_TOL = 1e-9     # target error of Psi/T(k0) for the direct integral
_CHUNK = 1 << 21

ROUTES = ("pole-expansion", "direct-integral")


class ConvergenceWarning(RuntimeWarning):
    pass


class QuadratureWarning(RuntimeWarning):
    pass


# -- Faddeeva and M -----------------------------------------------------------

def faddeeva_w(z):
    """w(z) = exp(-z^2) erfc(-iz).

    The upper half-plane goes straight to ``scipy.special.wofz``. Below the
    real axis the reflection w(z) = 2 exp(-z^2) - w(-z) is applied explicitly;
    OverflowError is raised when exp(-z^2) is not representable.
    """
    z = np.asarray(z, dtype=complex)
    lower = z.imag < 0
    out = wofz(np.where(lower, -z, z))
    if np.any(lower):
        zl = z[lower]
        expo = -(zl * zl)
        if np.any(expo.real > 709.0):
            bad = zl[expo.real > 709.0][0]
            raise OverflowError(f"w(z): exp(-z^2) overflows at z={bad}")
        out[lower] = 2.0 * np.exp(expo) - out[lower]
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class MFunctionArgument:
    """(x, q, t) of an M function together with hbar/m [nm^2/fs]."""

    x: float
    q: complex
    t: float
    hbar_over_m: float

    @property
    def yq(self) -> complex:
        hm = self.hbar_over_m
        return complex(np.exp(-0.25j * np.pi) * np.sqrt(1.0 / (2.0 * hm * self.t))
                       * (self.x - hm * self.q * self.t))


def _reduced_phase(x, t, hm):
    """x^2 / (2 hm t) mod 2 pi, worked out in extended precision."""
    ld = np.longdouble
    ph = np.asarray(x, dtype=ld) ** 2 / (ld(2) * ld(hm) * np.asarray(t, dtype=ld))
    return np.asarray(np.fmod(ph, ld(2) * np.pi * ld(1)), dtype=float)


def m_function(x, q, t, hbar_over_m):
    """M(x, q; t) = 1/2 exp(i x^2 / (2 hm t)) w(i y_q), with hm = hbar/m.

    Arguments broadcast. When i y_q falls below the real axis the reflected
    form exp(iqx - i hm q^2 t/2) - 1/2 exp(i x^2/(2 hm t)) w(-i y_q) is used,
    which never forms the large intermediate exp(y_q^2). For t < T_MIN and
    x > 0 the t -> 0+ limit 0 is returned.
    """
    hm = float(hbar_over_m)
    x, q, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(q, dtype=complex),
                                  np.asarray(t, dtype=float))
    if np.any(t <= 0) and np.any((t <= 0) & (x <= 0)):
        raise ValueError("m_function needs t > 0 (or x > 0 for the t -> 0 limit)")
    tiny = t < T_MIN
    ts = np.where(tiny, 1.0, t)
    y = np.exp(-0.25j * np.pi) * np.sqrt(1.0 / (2.0 * hm * ts)) * (x - hm * q * ts)
    z = 1j * y
    upper = z.imag >= 0
    pref = 0.5 * np.exp(1j * _reduced_phase(x, ts, hm))
    wz = wofz(np.where(upper, z, -z))
    with np.errstate(over="ignore", invalid="ignore"):
        plane = np.exp(1j * q * x - 0.5j * hm * q * q * ts)
    out = np.where(upper, pref * wz, plane - pref * wz)
    out = np.where(tiny & (x > 0), 0.0, out)
    if not np.all(np.isfinite(out)):
        i = np.flatnonzero(~np.isfinite(out.ravel()))[0]
        raise OverflowError(f"M overflows at q={q.ravel()[i]}, t={t.ravel()[i]}")
    return out if out.ndim else complex(out)


# -- curves --------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexCurve:
    """Psi(x, t) on a time grid, tagged with the route that produced it."""

    grid: np.ndarray
    values: np.ndarray
    route: str
    x: float
    t_norm: complex
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if g.shape != v.shape:
            raise ValueError("grid and values differ in length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        if self.route not in ROUTES:
            raise ValueError(f"unknown route {self.route!r}")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.grid)

    @property
    def normalized(self) -> np.ndarray:
        """|Psi / T(k0)|^2."""
        return np.abs(self.values / self.t_norm) ** 2


# -- pole route ------------------------------------------------------------------

_POLE_CACHE: dict = {}


def cached_poles(b: BarrierSpec, n_poles: int) -> PoleSet:
    """Certified poles n = 1..n_poles, grown incrementally and kept per barrier."""
    held = _POLE_CACHE.get(b)
    if held is None or len(held) < n_poles:
        held = find_poles(b, n_poles, previous=held)
        if len(_POLE_CACHE) > 8:
            _POLE_CACHE.clear()
        _POLE_CACHE[b] = held
    return held.truncated(n_poles)


def _pole_block(x, t, kn, tn, hm):
    """sum over the given signed poles of T_n M(x, k_n; t), for each t.

    Same arithmetic as m_function, arranged for a (t, pole) grid: i y_q is
    affine in q for fixed t, and the prefactor depends on t only.
    """
    out = np.zeros(t.shape, dtype=complex)
    if kn.size == 0:
        return out
    live = t >= T_MIN
    tl = t[live]
    scale = np.exp(0.25j * np.pi) * np.sqrt(1.0 / (2.0 * hm * tl))
    offset = (scale * x)[:, None]
    slope = (-scale * hm * tl)[:, None]
    pref = 0.5 * np.exp(1j * _reduced_phase(x, tl, hm))
    chirp = (-0.5j * hm * tl)[:, None]
    iqx = 1j * kn * x
    q2 = kn * kn
    res = np.empty(tl.shape, dtype=complex)
    step = max(1, _CHUNK // kn.size)
    for i in range(0, tl.size, step):
        sl = slice(i, i + step)
        z = offset[sl] + slope[sl] * kn
        upper = z.imag >= 0
        sign = np.where(upper, 1.0, -1.0)
        w = wofz(z * sign)
        acc = pref[sl] * ((tn * sign) * w).sum(axis=1)
        lower = ~upper
        if lower.any():
            rows, cols = np.nonzero(lower)
            plane = tn[cols] * np.exp(iqx[cols] + chirp[sl][rows, 0] * q2[cols])
            acc += np.bincount(rows, plane.real, minlength=z.shape[0]) \
                + 1j * np.bincount(rows, plane.imag, minlength=z.shape[0])
        res[sl] = acc
    out[live] = res
    return out


def _signed_tn(poles: PoleSet, lo: int, hi: int, k0: float):
    kn = poles.kn[lo:hi]
    rn = poles.rn[lo:hi]
    # n and -n side by side so that each pair is summed together
    kk = np.stack([kn, -kn.conj()], axis=1).ravel()
    rr = np.stack([rn, -rn.conj()], axis=1).ravel()
    return kk, 2.0 * k0 * rr / (k0 * k0 - kk * kk)


def _pole_route(x, t, b: BarrierSpec, poles: PoleSet | None, tol, n_start, n_max):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    hm = b.hbar_over_m
    k0 = b.k0
    if poles is None:
        cap = N_MAX if n_max is None else int(n_max)
        poles = cached_poles(b, min(400, cap))
    else:
        cap = len(poles) if n_max is None else min(int(n_max), len(poles))
    t0 = complex(transmission_amplitude(k0, b))
    base = t0 * m_function(x, k0, t, hm) - complex(transmission_amplitude(-k0, b)) * m_function(x, -k0, t, hm)
    n = min(n_start, cap)
    kk, tn = _signed_tn(poles, 0, n, k0)
    total = _pole_block(x, t, kk, tn, hm)
    history = []
    converged = False
    while n < cap:
        n_next = min(2 * n, cap)
        if n_next > len(poles):
            poles = cached_poles(b, n_next)
        kk, tn = _signed_tn(poles, n, n_next, k0)
        inc = _pole_block(x, t, kk, tn, hm)
        total = total + inc
        change = float(np.max(np.abs(inc))) / abs(t0) if t.size else 0.0
        history.append((n_next, change))
        log.debug("pole route N=%d change=%.3e", n_next, change)
        n = n_next
        if change < tol:
            converged = True
            break
    if not converged and t.size:
        last = history[-1][1] if history else float("nan")
        warnings.warn(f"pole expansion not converged at N={n}: last change {last:.3e} "
                      f"(target {tol:.1e})", ConvergenceWarning, stacklevel=3)
    info = {"n_poles": n, "history": history, "converged": converged}
    return base - total, info, t0


def psi_pole_expansion(x, t, poles: PoleSet | None, b: BarrierSpec, tol: float = POLE_TOL,
                       n_start: int = N_START, n_max: int | None = None):
    """Psi(x, t) from the resonance sum.

        Psi = T(k0) M(x, k0) - T(-k0) M(x, -k0) - sum_n T_n M(x, k_n),
        T_n = 2 k0 r_n / (k0^2 - k_n^2).

    N starts at ``n_start`` and doubles until the largest change of Psi/T(k0)
    over all requested times falls below ``tol``. With ``poles=None`` pole sets
    are found on demand up to N_MAX; otherwise the given set caps N. A
    ConvergenceWarning carries the last increment if the cap is hit first.
    """
    if x < b.d:
        raise ValueError("x must be >= d (transmitted region)")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    if poles is not None and len(poles) == 0:
        raise ValueError("empty pole set")
    vals, _, _ = _pole_route(x, t_arr.ravel(), b, poles, tol, n_start, n_max)
    vals = np.where(t_arr.ravel() == 0, 0.0, vals)
    return vals.reshape(t_arr.shape) if t_arr.ndim else complex(vals[0])


# -- direct integral ---------------------------------------------------------

# 15-point Kronrod rule and its embedded 7-point Gauss rule (QUADPACK values)
_XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245, 0.0])
_WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
_GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_G_WEIGHTS = np.zeros(15)
_G_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])

_LAG_X, _LAG_W = roots_laguerre(48)


def time_bracket(k, a, k0):
    """(exp(-i a u) - 1) / u with u = k^2 - k0^2.

    Written as -i a sinc(a u / 2) exp(-i a u / 2), which is exact, has no
    cancellation and gives -i a at k = +-k0.
    """
    u = (k - k0) * (k + k0)
    return -1j * a * np.sinc(a * u / (2.0 * np.pi)) * np.exp(-0.5j * a * u)


def _integrand(k, x, a, b: BarrierSpec):
    return time_bracket(k, a, b.k0) * transmission_amplitude(k, b) * np.exp(1j * k * x)


def _gk_panels(f, lo, hi):
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    nodes = c[:, None] + h[:, None] * _GK_NODES
    vals = f(nodes)
    kron = h * (vals @ _GK_WEIGHTS)
    gauss = h * (vals @ _G_WEIGHTS)
    mean = kron / (2 * h)
    resasc = h * (np.abs(vals - mean[:, None]) @ _GK_WEIGHTS)
    err = np.abs(kron - gauss)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(resasc > 0, resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5), err)
    return kron, scaled


def _adaptive_gk(f, edges, tol, max_depth=40):
    """Adaptive panel bisection; ``tol`` is the absolute target for the sum."""
    lo, hi = edges[:-1].copy(), edges[1:].copy()
    span = edges[-1] - edges[0]
    total = 0.0 + 0.0j
    err_total = 0.0
    for _ in range(max_depth):
        val, err = _gk_panels(f, lo, hi)
        ok = err <= tol * (hi - lo) / span
        total += val[ok].sum()
        err_total += err[ok].sum()
        if ok.all():
            return total, err_total
        mid = 0.5 * (lo[~ok] + hi[~ok])
        lo, hi = np.concatenate([lo[~ok], mid]), np.concatenate([mid, hi[~ok]])
    total += val[~ok].sum()
    err_total += err[~ok].sum()
    return total, err_total


def _panel_edges(lo, hi, x, a, width_cap):
    """Breakpoints with at most ~pi/2 of phase per panel for both
    exp(ikx) and exp(i(kx - a k^2))."""
    edges = [lo]
    k = lo
    while k < hi:
        rate = max(x, abs(x - 2.0 * a * k), abs(x - 2.0 * a * (k + 0.5 * width_cap)))
        w = min(width_cap, 0.5 * np.pi / rate)
        k = min(hi, k + w)
        edges.append(k)
    return np.array(edges)


def _tail_cut(x, a, tol):
    """K beyond the stationary point k = x/2a with the two-term
    integration-by-parts remainder below ``tol``."""
    saddle = x / (2.0 * a)
    kc = max(12.0, 2.0 * saddle)
    while True:
        dphi = 2.0 * a * kc - x
        bound = 6.0 / (kc ** 4 * dphi ** 3) + 12.0 * a / (kc ** 3 * dphi ** 4) + 12.0 * a * a / (kc ** 2 * dphi ** 5)
        if bound < tol or kc > 5e3:
            return kc, bound
        kc *= 1.15


def _T_and_slope(k, b: BarrierSpec):
    """T(k) and T'(k) for real or complex k."""
    k = np.asarray(k, dtype=complex)
    dens, ddens, sigma = scaled_denominator(k, b, derivative=True)
    t = 2.0 * k * np.exp(-1j * k * b.d - sigma) / dens
    return t, t * (1.0 / k - 1j * b.d - ddens / dens)


def _oscillatory_tails(x, a, kc, b: BarrierSpec):
    """Integral of exp(-iau) T exp(ikx)/u over |k| > K by two-term integration by parts."""
    total = 0.0 + 0.0j
    k0 = b.k0
    for sign in (1.0, -1.0):
        k = sign * kc
        u = (k - k0) * (k + k0)
        tk, dtk = _T_and_slope(k, b)
        h = tk / u
        dh = dtk / u - tk * 2.0 * k / (u * u)
        dphi = x - 2.0 * a * k
        ddphi = -2.0 * a
        u1 = dh / (1j * dphi) - 1j * h * ddphi / (1j * dphi) ** 2
        boundary = np.exp(1j * (k * x - a * u)) / (1j * dphi) * (h - u1)
        total += -sign * boundary
    return complex(total)


def _contour_tails(x, kc, b: BarrierSpec):
    """Integral of T exp(ikx)/u over |k| > K along vertical rays in the upper half-plane."""
    k0 = b.k0
    s = _LAG_X / x
    total = 0.0 + 0.0j
    for sign in (1.0, -1.0):
        k = sign * kc + 1j * s
        vals = transmission_amplitude(k, b) * np.exp(1j * sign * kc * x) / ((k - k0) * (k + k0))
        total += sign * 1j * (_LAG_W @ vals) / x
    return complex(total)


def _direct_one(x, t, b: BarrierSpec, tol):
    if t == 0:
        return 0j, 0.0
    a = 0.5 * b.hbar_over_m * t
    t0 = abs(complex(transmission_amplitude(b.k0, b)))
    abs_tol = tol * t0 * np.pi / b.k0
    kc, tail_bound = _tail_cut(x, a, 0.1 * abs_tol)
    inner = 3.0 * b.kprime
    width_res = 0.02
    edges = np.concatenate([
        _panel_edges(-kc, -inner, x, a, 0.5)[:-1],
        _panel_edges(-inner, inner, x, a, width_res)[:-1],
        _panel_edges(inner, kc, x, a, 0.5),
    ])
    bulk, err = _adaptive_gk(lambda k: _integrand(k, x, a, b), edges, 0.5 * abs_tol)
    integral = bulk + _oscillatory_tails(x, a, kc, b) - _contour_tails(x, kc, b)
    psi = 1j * b.k0 / np.pi * np.exp(-1j * a * b.k0 ** 2) * integral
    err_psi = (err + 2 * tail_bound) * b.k0 / np.pi
    return complex(psi), float(err_psi / t0)


def psi_direct_integral(x, t, b: BarrierSpec, tol: float = DIRECT_TOL, return_error: bool = False):
    """Psi(x, t) from the k-integral over the real axis.

        Psi = (i k0 / pi) exp(-i a k0^2) int T(k) exp(ikx) B(k) dk,
        B = (exp(i a (k0^2 - k^2)) - 1) / (k^2 - k0^2),  a = hbar t / 2m.

    The bulk |k| < K uses adaptive Gauss-Kronrod panels carrying at most a
    quarter turn of phase each. Beyond K the exp(-i a u) part is done by
    integration by parts and the remaining part along vertical rays where
    exp(ikx) decays. ``tol`` is the target error of Psi/T(k0); a
    QuadratureWarning reports the estimate when it is missed.
    """
    if x < b.d:
        raise ValueError("x must be >= d (transmitted region)")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    vals = np.empty(t_arr.shape, dtype=complex)
    errs = np.empty(t_arr.shape)
    for i, tt in enumerate(t_arr):
        vals[i], errs[i] = _direct_one(float(x), float(tt), b, tol)
    if np.any(errs > tol):
        i = int(np.argmax(errs))
        warnings.warn(f"direct integral error estimate {errs[i]:.2e} at t={t_arr[i]} "
                      f"exceeds {tol:.1e}", QuadratureWarning, stacklevel=2)
    out = vals if np.ndim(t) else complex(vals[0])
    if return_error:
        return out, (errs if np.ndim(t) else float(errs[0]))
    return out


def psi_curve(x, grid, b: BarrierSpec, route: str = "pole-expansion",
              poles: PoleSet | None = None, **kwargs) -> ComplexCurve:
    """Psi(x, t) on a time grid by either route.

    Failures at individual grid points are collected and raised together.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if route not in ROUTES:
        raise ValueError(f"route must be one of {ROUTES}")
    t0 = complex(transmission_amplitude(b.k0, b))
    if grid.size == 0:
        return ComplexCurve(grid, np.zeros(0, complex), route, float(x), t0)
    if route == "pole-expansion":
        vals, info, _ = _pole_route(float(x), grid, b, poles, kwargs.get("tol", POLE_TOL),
                                    kwargs.get("n_start", N_START), kwargs.get("n_max"))
        vals = np.where(grid == 0, 0.0, vals)
        return ComplexCurve(grid, vals, route, float(x), t0, info)
    if route == "direct-integral":
        vals = np.empty(grid.shape, dtype=complex)
        errs = np.empty(grid.shape)
        failed = []
        for i, tt in enumerate(grid):
            try:
                vals[i], errs[i] = _direct_one(float(x), float(tt), b, kwargs.get("tol", DIRECT_TOL))
            except (ArithmeticError, ValueError) as exc:
                failed.append((i, exc))
        if failed:
            raise RuntimeError("direct integral failed at " + ", ".join(f"[{i}] {e}" for i, e in failed))
        return ComplexCurve(grid, vals, route, float(x), t0, {"error_estimates": errs})
    raise ValueError(f"route must be one of {ROUTES}")
