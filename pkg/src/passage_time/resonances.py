"""Complex poles of T(k), their residues, and pole expansions.

Poles sit at the zeros of D(k) in the lower half plane. Only the
fourth-quadrant poles k_1..k_N are searched for; the third-quadrant
partners follow from k_{-n} = -conj(k_n), r_{-n} = -conj(r_n) and
u_{-n} = conj(u_n).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .scattering import (
    EigenfunctionBoundaryValues,
    eigenfunction_value,
    interior_wavenumber,
    resonant_boundary_values,
    scaled_denominator,
    transmission_amplitude,
)
from .units import BarrierSpec

log = logging.getLogger(__name__)

NEWTON_RTOL = 1e-13
NEWTON_MAX_ITER = 25
DUPLICATE_RTOL = 1e-8
RESIDUE_CHECK_RTOL = 1e-9
CONTOUR_NODES = 256


class PoleSearchError(RuntimeError):
    pass


def characteristic_denominator(k, b: BarrierSpec):
    """D(k) and D'(k) in closed form; T = 2k exp(-ikd) / D."""
    dens, ddens, sigma = scaled_denominator(k, b, derivative=True)
    scale = np.exp(sigma)
    return dens * scale, ddens * scale


# -- winding numbers ---------------------------------------------------------

def _rectangle_path(x0, x1, y0, y1, per_edge):
    s = np.linspace(0.0, 1.0, per_edge, endpoint=False)
    return np.concatenate([
        x0 + (x1 - x0) * s + 1j * y0,
        x1 + 1j * (y0 + (y1 - y0) * s),
        x1 + (x0 - x1) * s + 1j * y1,
        x0 + 1j * (y1 + (y0 - y1) * s),
    ])


def winding_count(b: BarrierSpec, x0, x1, y0, y1, per_edge=64, max_refine=24):
    """Zeros of D inside the rectangle [x0, x1] x [y0, y1].

    The argument of D is tracked along the boundary; any segment whose phase
    step exceeds pi/4 is bisected until none does.
    """
    path = _rectangle_path(x0, x1, y0, y1, per_edge)
    path = np.append(path, path[0])
    vals = scaled_denominator(path, b)[0]
    for _ in range(max_refine):
        steps = np.angle(vals[1:] / vals[:-1])
        bad = np.flatnonzero(np.abs(steps) > np.pi / 4)
        if bad.size == 0:
            break
        mids = 0.5 * (path[bad] + path[bad + 1])
        path = np.insert(path, bad + 1, mids)
        vals = np.insert(vals, bad + 1, scaled_denominator(mids, b)[0])
    else:
        raise PoleSearchError("winding number did not resolve; contour passes too close to a zero")
    total = np.sum(np.angle(vals[1:] / vals[:-1])) / (2 * np.pi)
    count = int(round(total))
    if abs(total - count) > 1e-6:
        raise PoleSearchError(f"non-integer winding {total}")
    return count


def _box_counts(b: BarrierSpec, centers, half, per_edge=32):
    """Winding counts for many small square boxes at once."""
    s = np.linspace(0.0, 1.0, per_edge, endpoint=False)
    unit = np.concatenate([-1 + 2 * s - 1j, 1 + 1j * (-1 + 2 * s), 1 - 2 * s + 1j, -1 + 1j * (1 - 2 * s)])
    unit = np.append(unit, unit[0])
    pts = centers[:, None] + half[:, None] * unit[None, :]
    vals = scaled_denominator(pts, b)[0]
    steps = np.angle(vals[:, 1:] / vals[:, :-1])
    counts = np.rint(steps.sum(axis=1) / (2 * np.pi)).astype(int)
    coarse = np.max(np.abs(steps), axis=1) > np.pi / 4
    for i in np.flatnonzero(coarse):
        c, h = centers[i], half[i]
        counts[i] = winding_count(b, c.real - h, c.real + h, c.imag - h, c.imag + h, per_edge)
    return counts


# -- pole data -----------------------------------------------------------------

@dataclass(frozen=True)
class ResonantState:
    """One pole of T(k) with its residue and resonant-state boundary values."""

    n: int
    kn: complex
    rn: complex
    u0: complex
    ud: complex

    @property
    def boundary_values(self) -> EigenfunctionBoundaryValues:
        return EigenfunctionBoundaryValues(self.u0, self.ud, self.kn)


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PoleSet:
    """Fourth-quadrant poles n = 1..N; third-quadrant ones are mirrored on demand."""

    barrier: BarrierSpec
    kn: np.ndarray
    rn: np.ndarray
    u0: np.ndarray
    ud: np.ndarray
    search_metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("kn", "rn", "u0", "ud"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __len__(self):
        return len(self.kn)

    def truncated(self, n_poles: int) -> "PoleSet":
        n_poles = min(int(n_poles), len(self))
        return PoleSet(self.barrier, self.kn[:n_poles], self.rn[:n_poles],
                       self.u0[:n_poles], self.ud[:n_poles], self.search_metadata)

    def with_residue(self, n: int, value: complex) -> "PoleSet":
        """Copy with r_n replaced (fault injection in tests and reports)."""
        rn = np.array(self.rn)
        rn[n - 1] = value
        return PoleSet(self.barrier, self.kn, rn, self.u0, self.ud, self.search_metadata)

    def signed(self, n_poles: int | None = None):
        """Arrays over n = 1..N followed by n = -1..-N.

        Returns ``(n, kn, rn, u0, ud)``.
        """
        m = len(self) if n_poles is None else min(int(n_poles), len(self))
        idx = np.arange(1, m + 1)
        kn = self.kn[:m]
        return (np.concatenate([idx, -idx]),
                np.concatenate([kn, -kn.conj()]),
                np.concatenate([self.rn[:m], -self.rn[:m].conj()]),
                np.concatenate([self.u0[:m], self.u0[:m].conj()]),
                np.concatenate([self.ud[:m], self.ud[:m].conj()]))

    @property
    def states(self) -> list[ResonantState]:
        n, kn, rn, u0, ud = self.signed()
        return [ResonantState(int(a), complex(b_), complex(c), complex(d_), complex(e))
                for a, b_, c, d_, e in zip(n, kn, rn, u0, ud)]


def pole_seeds(b: BarrierSpec, n_poles: int):
    n = np.arange(1, n_poles + 1)
    return np.sqrt(b.kprime ** 2 + (n * np.pi / b.d) ** 2) - 0.1j / b.d


def _newton(b: BarrierSpec, seeds):
    """Vectorised Newton on D. A point stops when its step drops below
    NEWTON_RTOL |k|, or when the step stalls at rounding level (< 1e-10 |k|
    and no longer shrinking)."""
    k = np.array(seeds, dtype=complex)
    iters = np.zeros(k.shape, dtype=int)
    active = np.ones(k.shape, dtype=bool)
    last = np.full(k.shape, np.inf)
    for it in range(1, NEWTON_MAX_ITER + 1):
        idx = np.flatnonzero(active)
        dens, ddens, _ = scaled_denominator(k[idx], b, derivative=True)
        step = dens / ddens
        k[idx] -= step
        iters[idx] = it
        size = np.abs(step)
        scale = np.abs(k[idx])
        done = (size < NEWTON_RTOL * scale) | ((size < 1e-10 * scale) & (size >= 0.5 * last[idx]))
        last[idx] = size
        active[idx[done]] = False
        if not active.any():
            break
    return k, iters, active


def residue_at(kn, b: BarrierSpec, check: bool = True):
    """Residue of T at the simple pole(s) ``kn``: N(kn) / D'(kn).

    With ``check`` the value is compared with a 256-node circular contour
    integral of T; disagreement beyond 1e-9 (relative) raises.
    """
    kn = np.asarray(kn, dtype=complex)
    _, ddens, sigma = scaled_denominator(kn, b, derivative=True)
    if np.any(np.abs(ddens) < 1e-290):
        raise PoleSearchError("D'(kn) underflows; pole is not simple")
    rn = 2.0 * kn * np.exp(-1j * kn * b.d - sigma) / ddens
    if check:
        ref = residue_contour(kn, b)
        err = np.abs(rn - ref) / np.abs(rn)
        if np.any(err > RESIDUE_CHECK_RTOL):
            raise PoleSearchError(f"residue/contour mismatch {err.max():.2e}")
    return rn if rn.ndim else complex(rn)


def _contour_radius(kn, b: BarrierSpec):
    spacing = np.pi / b.d * np.abs(interior_wavenumber(kn, b)) / np.abs(kn)
    return np.minimum(1e-3 * np.abs(kn), 0.25 * spacing)


def residue_contour(kn, b: BarrierSpec, nodes: int = CONTOUR_NODES, radius=None):
    """Residue of T from the trapezoid rule on a small circle around kn."""
    kn = np.asarray(kn, dtype=complex)
    rad = _contour_radius(kn, b) if radius is None else np.asarray(radius, dtype=float)
    circle = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    offsets = rad[..., None] * circle
    vals = transmission_amplitude(kn[..., None] + offsets, b) * offsets
    out = vals.mean(axis=-1)
    return out if out.ndim else complex(out)


def find_poles(b: BarrierSpec, n_poles: int, certify: bool = True,
               previous: PoleSet | None = None) -> PoleSet:
    """The first ``n_poles`` fourth-quadrant poles of T(k).

    Newton iteration on D from seeds Re k = sqrt(k'^2 + (n pi/d)^2),
    Im k = -0.1/d. Each pole is certified by a winding count of one in a
    surrounding box, and the whole strip up to the N-th pole by a single
    rectangle count of N. Poles already held in ``previous`` (same barrier)
    are reused and only the new ones are searched for.
    """
    if n_poles < 1:
        raise ValueError("n_poles must be >= 1")
    n_old = 0
    if previous is not None:
        if previous.barrier != b:
            raise ValueError("previous pole set belongs to another barrier")
        n_old = min(len(previous), n_poles)
        if n_old == n_poles:
            return previous.truncated(n_poles)
    seeds = pole_seeds(b, n_poles)[n_old:]
    kn_new, iters, stuck = _newton(b, seeds)
    if stuck.any():
        raise PoleSearchError(f"Newton did not converge for n={np.flatnonzero(stuck) + n_old + 1}")
    kn = np.concatenate([previous.kn[:n_old], kn_new]) if n_old else kn_new
    log.debug("newton iterations: max %d, mean %.2f", iters.max(), iters.mean())

    if np.any(kn.imag >= 0) or np.any(kn.real <= 0):
        bad = np.flatnonzero((kn.imag >= 0) | (kn.real <= 0)) + 1
        raise PoleSearchError(f"seeds escaped the fourth quadrant: n={bad}")
    gaps = np.abs(np.diff(kn))
    if np.any(gaps < DUPLICATE_RTOL * np.abs(kn[1:])) or np.any(np.diff(kn.real) <= 0):
        dup = np.flatnonzero(gaps < DUPLICATE_RTOL * np.abs(kn[1:])) + 2
        raise PoleSearchError(f"duplicate or unordered poles near n={dup}")

    if n_old and "newton_iterations" in previous.search_metadata:
        iters = np.concatenate([previous.search_metadata["newton_iterations"][:n_old], iters])
    metadata = {"newton_iterations": iters, "n_poles": n_poles}
    if certify:
        neighbour = np.full(n_poles, 2 * kn[0].real)
        if n_poles > 1:
            neighbour[:-1] = np.minimum(neighbour[:-1], gaps)
            neighbour[1:] = np.minimum(neighbour[1:], gaps)
        half = 0.5 * neighbour
        # boxes of reused poles only change if their new neighbour came closer
        fresh = np.arange(n_poles) >= max(n_old - 1, 0)
        counts = np.ones(n_poles, dtype=int)
        counts[fresh] = _box_counts(b, kn[fresh], half[fresh])
        if np.any(counts != 1):
            raise PoleSearchError(f"box winding != 1 for n={np.flatnonzero(counts != 1) + 1}")
        rect = certification_rectangle(b, kn)
        total = winding_count(b, *rect, per_edge=max(256, 8 * n_poles))
        if total != n_poles:
            raise PoleSearchError(f"rectangle {rect} holds {total} zeros, found {n_poles}")
        metadata.update(box_half_widths=half, rectangle=rect, rectangle_count=total)

    rn = residue_at(kn_new, b, check=certify)
    u0, ud = resonant_boundary_values(kn_new, b)
    if n_old:
        rn = np.concatenate([previous.rn[:n_old], rn])
        u0 = np.concatenate([previous.u0[:n_old], u0])
        ud = np.concatenate([previous.ud[:n_old], ud])
    return PoleSet(b, kn, rn, u0, ud, metadata)


def certification_rectangle(b: BarrierSpec, kn):
    """Rectangle holding exactly the given poles.

    The right edge sits half a level spacing beyond the last pole, measured
    in the interior wavenumber so that it stays correct near the barrier top.
    """
    q_last = interior_wavenumber(kn[-1], b).real
    x1 = float(np.sqrt(b.kprime ** 2 + (q_last + 0.5 * np.pi / b.d) ** 2))
    y0 = float(1.5 * kn.imag.min() - 0.5 / b.d)
    return 0.1 * min(b.k0, b.kprime), x1, y0, 0.0


def mittag_leffler_T(k, poles: PoleSet, n_poles: int | None = None):
    """Partial sum of r_n/(k - k_n) + r_n/k_n over n = +-1..+-N.

    Each n and -n contribution is added as a pair.
    """
    if len(poles) == 0:
        raise ValueError("no poles: the pole expansion does not apply (V0 = 0?)")
    m = len(poles) if n_poles is None else min(int(n_poles), len(poles))
    k = np.asarray(k, dtype=complex)
    kn, rn = poles.kn[:m], poles.rn[:m]
    kk = k[..., None]
    plus = rn / (kk - kn) + rn / kn
    minus = -rn.conj() / (kk + kn.conj()) + rn.conj() / kn.conj()
    out = (plus + minus)[..., ::-1].sum(axis=-1)
    return out if out.ndim else complex(out)


def green_fn_pole_expansion(x, xp, k, poles: PoleSet, b: BarrierSpec, n_poles: int | None = None):
    """Partial sum of u_n(x) u_n(x') / (2 k_n (k - k_n)) over n = +-1..+-N."""
    m = len(poles) if n_poles is None else min(int(n_poles), len(poles))
    k = np.asarray(k, dtype=complex)
    total = np.zeros(k.shape, dtype=complex)
    for i in range(m - 1, -1, -1):
        ebv = EigenfunctionBoundaryValues(poles.u0[i], poles.ud[i], poles.kn[i])
        prod = eigenfunction_value(x, ebv, b) * eigenfunction_value(xp, ebv, b)
        kn = poles.kn[i]
        pair = prod / (2 * kn * (k - kn)) + np.conj(prod) / (2 * (-np.conj(kn)) * (k + np.conj(kn)))
        total = total + pair
    return total if total.ndim else complex(total)
