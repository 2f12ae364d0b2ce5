"""Passage-time distribution G_p(tau) from the path-integral k-integral.

    G_p(tau) = k0^2 / (pi^2 |T(k0)|^2) |J|^2,
    J = int T(k) exp(ikd) (exp(i a (k0^2 - k^2)) - 1) / (k^2 - k0^2) dk,

with a = hbar tau / 2m. This module deliberately shares nothing with the
shutter code beyond transmission_amplitude: it folds the integral onto
k >= 0 using T(-k) = conj(T(k)), integrates with nested Clenshaw-Curtis
panels, and treats the tails on its own.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .scattering import transmission_amplitude
from .units import BarrierSpec

GP_TOL = 1e-9          # target error on sqrt(G_p), i.e. relative to G(inf) = 1
SERIES_HALF_WIDTH = 1e-4
_MAX_LEVEL = 14


class HistoryQuadratureWarning(RuntimeWarning):
    pass


def _clenshaw_curtis(n):
    """Nodes on [-1, 1] (descending) and weights of the (n+1)-point rule."""
    theta = np.pi * np.arange(n + 1) / n
    x = np.cos(theta)
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = theta[1:-1]
    for j in range(1, n // 2):
        v -= 2.0 * np.cos(2 * j * inner) / (4 * j * j - 1)
    v -= np.cos(n * inner) / (n * n - 1)
    w[1:-1] = 2.0 * v / n
    w[0] = w[-1] = 1.0 / (n * n - 1)
    return x, w


_CC_X, _CC_W = _clenshaw_curtis(32)
_CC_W_COARSE = np.zeros(33)
_CC_W_COARSE[::2] = _clenshaw_curtis(16)[1]


def _bracket(k, a, k0):
    """(exp(-i a u) - 1)/u, u = k^2 - k0^2; Taylor series in u next to k0."""
    u = (k - k0) * (k + k0)
    near = np.abs(k - k0) < SERIES_HALF_WIDTH
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.expm1(-1j * a * u) / u
    if np.any(near):
        z = -1j * a * u[near]
        term = np.ones_like(z)
        acc = np.ones_like(z)
        for n in range(2, 12):
            term = term * z / n
            acc = acc + term
        out[near] = -1j * a * acc
    return out


@dataclass(frozen=True)
class RealCurve:
    """G_p on a time grid with a per-point error estimate."""

    grid: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        e = np.asarray(self.errors, dtype=float)
        if not (g.shape == v.shape == e.shape):
            raise ValueError("grid, values and errors differ in length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("G_p must be non-negative")
        for name, arr in (("grid", g), ("values", v), ("errors", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.grid)


class HistoryIntegrator:
    """Evaluates J(tau) for one barrier, reusing T(k) across taus.

    The half line [0, K] is cut into fixed base panels (fine near the
    resonances of T, 0.25 /nm beyond). For each tau a base panel is split
    into 2^L equal pieces so that each carries at most ``phase_budget`` of
    phase, and L is raised until the 33- and 17-point Clenshaw-Curtis sums
    agree. T on the nodes of each (panel, L) is cached.
    """

    def __init__(self, b: BarrierSpec, phase_budget: float = np.pi, tol: float = GP_TOL):
        self.b = b
        self.phase_budget = float(phase_budget)
        self.t0 = complex(transmission_amplitude(b.k0, b))
        self.scale = b.k0 / (np.pi * abs(self.t0))
        self.abs_tol = tol / self.scale
        self._fine_end = 3.0 * b.kprime
        self._fine_w = 0.01
        self._coarse_w = 0.25
        self._n_fine = int(math.ceil(self._fine_end / self._fine_w))
        self._nodes: dict = {}
        self._ray: dict = {}

    # base partition
    def _edges(self, i):
        if i < self._n_fine:
            return i * self._fine_w, (i + 1) * self._fine_w
        lo = self._n_fine * self._fine_w + (i - self._n_fine) * self._coarse_w
        return lo, lo + self._coarse_w

    def _n_panels(self, kc):
        if kc <= self._n_fine * self._fine_w:
            return int(math.ceil(kc / self._fine_w))
        return self._n_fine + int(math.ceil((kc - self._n_fine * self._fine_w) / self._coarse_w))

    def _panel_nodes(self, i, level):
        key = (i, level)
        hit = self._nodes.get(key)
        if hit is None:
            lo, hi = self._edges(i)
            m = 1 << level
            sub = np.linspace(lo, hi, m + 1)
            c = 0.5 * (sub[:-1] + sub[1:])
            h = 0.5 * (sub[1:] - sub[:-1])
            k = c[:, None] + h[:, None] * _CC_X
            folded = 2.0 * (transmission_amplitude(k, self.b) * np.exp(1j * k * self.b.d)).real
            hit = (k, h, folded)
            self._nodes[key] = hit
        return hit

    def _level(self, i, a):
        lo, hi = self._edges(i)
        d = self.b.d
        rate = max(d, abs(d - 2.0 * a * lo), abs(d - 2.0 * a * hi))
        turns = (hi - lo) * rate / self.phase_budget
        return max(0, int(math.ceil(math.log2(turns))) if turns > 1 else 0)

    def _bulk(self, a, kc):
        total = 0.0 + 0.0j
        err = 0.0
        worst = (0.0, None)
        n = self._n_panels(kc)
        k0 = self.b.k0
        for i in range(n):
            lo, hi = self._edges(i)
            tol_i = 0.5 * self.abs_tol * (hi - lo) / kc
            level = self._level(i, a)
            while True:
                k, h, folded = self._panel_nodes(i, level)
                f = folded * _bracket(k, a, k0)
                fine = (h * (f @ _CC_W)).sum()
                coarse = (h * (f @ _CC_W_COARSE)).sum()
                e = abs(fine - coarse)
                if e <= tol_i or level >= _MAX_LEVEL:
                    break
                level += 1
            total += fine
            err += e
            if e > worst[0]:
                worst = (e, (lo, hi))
        return total, err, worst

    def _cut(self, a):
        d = self.b.d
        kc = max(15.0, 3.0 * d / (2.0 * a))
        while True:
            dphi = 2.0 * a * kc - d
            bound = 2 * (8.0 / (kc ** 5 * dphi ** 3) + 10.0 * a / (kc ** 4 * dphi ** 4))
            if bound < 0.1 * self.abs_tol or kc > 5e3:
                break
            kc *= 1.2
        # snap to the base partition so that cached panels line up
        n = self._n_panels(kc)
        return self._edges(n - 1)[1], bound

    def _ray_integral(self, kc):
        """int_K^inf 2 Re[T exp(ikd)] / u dk along k = K + i s."""
        hit = self._ray.get(kc)
        if hit is None:
            b, k0, d = self.b, self.b.k0, self.b.d

            def g(s):
                k = kc + 1j * s
                v = 1j * transmission_amplitude(k, b) * np.exp(1j * k * d) / ((k - k0) * (k + k0))
                return complex(v).real

            # the k < 0 half is the conjugate, so only the real part survives
            hit = 2.0 * integrate.quad(g, 0, np.inf, epsabs=1e-16, epsrel=1e-13, limit=200)[0]
            self._ray[kc] = hit
        return hit

    def _chirp_tail(self, a, kc):
        """int_K^inf 2 Re[T exp(ikd)] exp(-iau) / u dk by integration by parts.

        Both exp(+ikd) and exp(-ikd) pieces have phase +-kd - a k^2 with
        no stationary point beyond K; slopes of T come from central differences.
        """
        b, k0, d = self.b, self.b.k0, self.b.d
        step = 1e-4
        ks = np.array([kc - step, kc, kc + step])
        tv = transmission_amplitude(ks, b)
        u = (ks - k0) * (ks + k0)
        total = 0.0 + 0.0j
        for sgn, amp in ((1.0, tv / u), (-1.0, tv.conj() / u)):
            h = amp[1]
            dh = (amp[2] - amp[0]) / (2 * step)
            dphi = sgn * d - 2.0 * a * kc
            ddphi = -2.0 * a
            first = h / (1j * dphi)
            second = (dh - h * ddphi / dphi) / (1j * dphi) ** 2
            phase = sgn * kc * d - a * (kc - k0) * (kc + k0)
            total += -np.exp(1j * phase) * (first - second)
        return total

    def amplitude(self, tau):
        """J(tau) normalised by pi |T(k0)| / k0, and its error estimate."""
        if tau == 0:
            return 0j, 0.0, None
        a = 0.5 * self.b.hbar_over_m * tau
        kc, tail_bound = self._cut(a)
        bulk, err, worst = self._bulk(a, kc)
        j = bulk + self._chirp_tail(a, kc) - self._ray_integral(kc)
        return j * self.scale, (err + tail_bound) * self.scale, worst

    def gp(self, tau):
        amp, err, worst = self.amplitude(float(tau))
        g = abs(amp) ** 2
        return g, 2.0 * abs(amp) * err + err * err, worst


def gp_value(tau, b: BarrierSpec, phase_budget: float = np.pi, return_error: bool = False):
    """G_p(tau) for one tau >= 0."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    g, err, worst = HistoryIntegrator(b, phase_budget).gp(tau)
    _warn_if_loose(np.array([err]), np.array([g]), np.array([tau]), [worst])
    return (g, err) if return_error else g


def _warn_if_loose(errs, vals, grid, worsts):
    target = GP_TOL * 2.0 * np.sqrt(np.maximum(vals, 1.0))
    bad = errs > target
    if np.any(bad):
        i = int(np.argmax(errs / target))
        warnings.warn(f"G_p error estimate {errs[i]:.2e} at tau={grid[i]} over target; "
                      f"worst panel {worsts[i]}", HistoryQuadratureWarning, stacklevel=3)


def gp_curve(grid, b: BarrierSpec, phase_budget: float = np.pi) -> RealCurve:
    """G_p on every grid point, in grid order."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0):
        raise ValueError("tau must be >= 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    integ = HistoryIntegrator(b, phase_budget)
    vals = np.empty(grid.shape)
    errs = np.empty(grid.shape)
    worsts = []
    failed = []
    for i, tau in enumerate(grid):
        try:
            vals[i], errs[i], w = integ.gp(tau)
            worsts.append(w)
        except (ArithmeticError, ValueError) as exc:
            failed.append((i, exc))
            worsts.append(None)
    if failed:
        raise RuntimeError("G_p failed at " + ", ".join(f"[{i}] {e}" for i, e in failed))
    _warn_if_loose(errs, vals, grid, worsts)
    return RealCurve(grid, vals, errs, {"phase_budget": phase_budget})
