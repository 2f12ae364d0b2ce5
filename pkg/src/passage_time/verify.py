"""End-to-end checks: equivalence of the two routes, identity checks,
peak location and the self-test battery."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar

from . import histories, resonances, scattering, shutter
from .units import BarrierSpec, UnitSystem, reference_barrier

# reference numbers for the GaAs-like example barrier
REF_OPACITY = 11.18
REF_K0D = 5.00
REF_TF = 11.753
REF_TP = 5.347
REF_TP_OVER_TF = 0.455


@dataclass(frozen=True)
class Tolerances:
    """Every tolerance used by the checks; all can be overridden from config."""

    equivalence: float = 1e-5
    residue_relation: float = 1e-10
    normalization: float = 1e-10
    green_relation: float = 1e-12
    unitarity: float = 1e-12
    mittag_leffler: float = 1e-3
    m_function: float = 1e-8
    faddeeva: float = 1e-13
    initial_vanishing: float = 1e-6
    branch: float = 1e-13
    opacity_rel: float = 1e-3
    k0d_rel: float = 5e-3
    tf_rel: float = 5e-3
    tp_abs_fs: float = 0.01
    tp_over_tf_abs: float = 0.002
    asymptote_lo: float = 0.95
    asymptote_hi: float = 1.05
    pole_truncation: float = shutter.POLE_TOL

    @classmethod
    def from_mapping(cls, values: dict) -> "Tolerances":
        known = {f.name for f in fields(cls)}
        bad = set(values) - known
        if bad:
            raise ValueError(f"unknown tolerance key(s): {', '.join(sorted(bad))}")
        return cls(**{k: float(v) for k, v in values.items()})

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass(frozen=True)
class Check:
    """One recorded check. ``passed`` is recomputed from the stored numbers.

    kind ``max``: observed <= limit; ``min``: observed >= limit;
    ``range``: limit[0] <= observed <= limit[1]; ``true``: observed is True.
    """

    name: str
    observed: object
    limit: object
    kind: str = "max"
    note: str = ""

    @property
    def passed(self) -> bool:
        if self.kind == "true":
            return bool(self.observed)
        if self.observed is None or not np.isfinite(self.observed):
            return False
        if self.kind == "max":
            return self.observed <= self.limit
        if self.kind == "min":
            return self.observed >= self.limit
        if self.kind == "range":
            return self.limit[0] <= self.observed <= self.limit[1]
        raise ValueError(f"unknown check kind {self.kind}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10e}"
    return str(v)


def _checks_text(checks, width=42):
    lines = []
    for c in checks:
        flag = "PASS" if c.passed else "FAIL"
        rel = {"max": "<=", "min": ">=", "range": "in", "true": "is"}[c.kind]
        limit = "true" if c.kind == "true" else _fmt(c.limit)
        line = f"  {flag}  {c.name:<{width}} {_fmt(c.observed)} {rel} {limit}"
        if c.note:
            line += f"  ({c.note})"
        lines.append(line)
    return lines


# -- peak ----------------------------------------------------------------------

def find_peak(curve, evaluate=None, xtol: float = 1e-4):
    """Location and value of the interior maximum of a sampled curve.

    ``curve`` is a RealCurve, a ComplexCurve (its |Psi/T|^2 is used) or a
    ``(grid, values)`` pair. With ``evaluate`` the grid argmax is refined by
    golden-section search on that function until the bracket is below
    ``xtol``; without it the grid point is returned.
    """
    if isinstance(curve, shutter.ComplexCurve):
        grid, vals = curve.grid, curve.normalized
    elif isinstance(curve, histories.RealCurve):
        grid, vals = curve.grid, curve.values
    else:
        grid, vals = (np.asarray(a, dtype=float) for a in curve)
    if len(grid) < 3:
        raise ValueError("need at least 3 points to locate a peak")
    i = int(np.argmax(vals))
    if i == 0 or i == len(grid) - 1:
        raise ValueError("curve is monotone on the grid: no interior peak")
    if evaluate is None:
        return float(grid[i]), float(vals[i])
    lo, mid, hi = float(grid[i - 1]), float(grid[i]), float(grid[i + 1])
    tol = 0.5 * xtol / max(abs(mid), 1e-300)
    res = minimize_scalar(lambda t: -evaluate(t), bracket=(lo, mid, hi), method="golden",
                          options={"xtol": tol})
    t_p = float(res.x)
    if not lo <= t_p <= hi:
        raise ValueError("golden-section search left the bracketing grid cell")
    return t_p, float(-res.fun)


# -- identity checks ------------------------------------------------------------

def real_k_grid(b: BarrierSpec, n: int = 50):
    return np.linspace(0.1 * b.kprime, 5.0 * b.kprime, n)


def unitarity_error(b: BarrierSpec, n: int = 50) -> float:
    k = real_k_grid(b, n)
    t = scattering.transmission_amplitude(k, b)
    r = scattering.reflection_amplitude(k, b)
    return float(np.max(np.abs(np.abs(t) ** 2 + np.abs(r) ** 2 - 1.0)))


def green_relation_error(b: BarrierSpec, n: int = 50) -> float:
    """max relative error of T = 2ik G+(0, d) exp(-ikd) on the real grid."""
    k = real_k_grid(b, n)
    t = scattering.transmission_amplitude(k, b)
    g = scattering.outgoing_green_fn_edges(k, b)
    return float(np.max(np.abs(2j * k * g * np.exp(-1j * k * b.d) - t) / np.abs(t)))


def branch_error(b: BarrierSpec, n: int = 100, seed: int = 7) -> float:
    rng = np.random.default_rng(seed)
    k = rng.uniform(-4, 4, n) * b.kprime + 1j * rng.uniform(-2, 2, n) * b.kprime
    t1 = scattering.transmission_amplitude(k, b, branch=1)
    t2 = scattering.transmission_amplitude(k, b, branch=-1)
    return float(np.max(np.abs(t1 - t2) / np.abs(t1)))


def residue_relation_errors(poles: resonances.PoleSet, n: int = 20):
    b = poles.barrier
    m = min(n, len(poles))
    kn, rn, u0, ud = poles.kn[:m], poles.rn[:m], poles.u0[:m], poles.ud[:m]
    return np.abs(1j * u0 * ud * np.exp(-1j * kn * b.d) - rn) / np.abs(rn)


def normalization_errors(poles: resonances.PoleSet, n: int = 20):
    m = min(n, len(poles))
    return np.array([abs(scattering.normalization_residual(
        scattering.EigenfunctionBoundaryValues(poles.u0[i], poles.ud[i], poles.kn[i]), poles.barrier))
        for i in range(m)])


def mittag_leffler_errors(poles: resonances.PoleSet, k, ns=(25, 50, 100, 200)):
    b = poles.barrier
    exact = complex(scattering.transmission_amplitude(k, b))
    return {n: abs(resonances.mittag_leffler_T(k, poles, n) - exact) / abs(exact) for n in ns}


def green_expansion_errors(poles: resonances.PoleSet, k, ns=(25, 50, 100, 200), x=0.0, xp=None):
    b = poles.barrier
    xp = b.d if xp is None else xp
    exact = complex(scattering.outgoing_green_fn(x, xp, k, b))
    return {n: abs(resonances.green_fn_pole_expansion(x, xp, k, poles, b, n) - exact) / abs(exact)
            for n in ns}


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b_ < a for a, b_ in zip(v, v[1:]))


# -- oracles (high precision) ------------------------------------------------------

def faddeeva_oracle(z, dps: int = 40) -> complex:
    """w(z) = exp(-z^2) erfc(-iz) at ``dps`` digits."""
    with mpmath.workdps(dps):
        zz = mpmath.mpc(z)
        return complex(mpmath.exp(-zz * zz) * mpmath.erfc(-1j * zz))


def m_function_oracle(x, q, t, hbar_over_m, dps: int = 30) -> complex:
    """M(x, q; t) from its integral definition.

    The real k axis is turned through -pi/4 about the stationary point
    k_s = x / (2a), a = hbar t / 2m, where the integrand decays like
    exp(-a r^2). When this sweeps across the pole k = q (q on or below the
    real axis, between the two lines) its residue exp(iqx - i a q^2) is added.
    """
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        q = mpmath.mpc(q)
        a = mpmath.mpf(hbar_over_m) * mpmath.mpf(t) / 2
        ks = x / (2 * a)
        rot = mpmath.exp(-1j * mpmath.pi / 4)

        def f(r):
            k = ks + rot * r
            return mpmath.exp(1j * a * ks ** 2 - a * r * r) / (k - q) * rot

        r_star = mpmath.re((q - ks) / rot)
        width = 1 / mpmath.sqrt(a)
        pts = sorted({float(r_star - width), float(r_star), float(r_star + width), 0.0})
        val = mpmath.quad(f, [-mpmath.inf] + pts + [mpmath.inf])
        out = 1j / (2 * mpmath.pi) * val
        rel = q - ks
        arg = mpmath.arg(rel) if rel != 0 else 0
        if mpmath.im(q) <= 0 and -mpmath.pi / 4 < arg <= 0:
            out += mpmath.exp(1j * q * x - 1j * a * q * q)
        return complex(out)


def normalization_integral_oracle(kn, b: BarrierSpec, dps: int = 30) -> complex:
    with mpmath.workdps(dps):
        k = mpmath.mpc(kn)
        q = mpmath.sqrt(k * k - mpmath.mpf(b.kprime) ** 2)
        f = lambda x: (mpmath.cos(q * x) - 1j * k * mpmath.sin(q * x) / q) ** 2
        return complex(mpmath.quad(f, mpmath.linspace(0, b.d, 9)))


# -- equivalence report ----------------------------------------------------------

def default_grid(b: BarrierSpec, n: int = 2000, t_max_over_tf: float = 10.0, t_min_over_tf: float = 0.05):
    return np.linspace(t_min_over_tf, t_max_over_tf, n) * b.t_f


def is_reference_barrier(b: BarrierSpec) -> bool:
    ref = reference_barrier(b.units)
    return all(math.isclose(getattr(b, f), getattr(ref, f), rel_tol=1e-12)
               for f in ("V0", "d", "mass_ratio", "E"))


@dataclass(frozen=True)
class EquivalenceReport:
    barrier: BarrierSpec
    grid_span: tuple
    grid_size: int
    max_abs_diff: float
    argmax_t: float
    t_p: float
    t_p_over_tf: float
    peak_value: float
    n_poles: int
    ml_errors: dict
    checks: tuple
    tolerances: Tolerances
    curves: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_pairs(self):
        b = self.barrier
        pairs = [
            ("V0_eV", b.V0), ("d_nm", b.d), ("mass_ratio", b.mass_ratio), ("E_eV", b.E),
            ("hbar_eV_fs", b.units.hbar), ("hbar2_over_2me_eV_nm2", b.units.hbar2_over_2me),
            ("k0_per_nm", b.k0), ("k0d", b.k0 * b.d), ("opacity", b.opacity), ("t_f_fs", b.t_f),
            ("grid_t_min_fs", self.grid_span[0]), ("grid_t_max_fs", self.grid_span[1]),
            ("grid_size", self.grid_size), ("n_poles", self.n_poles),
            ("max_abs_diff", self.max_abs_diff), ("argmax_t_fs", self.argmax_t),
            ("t_p_fs", self.t_p), ("t_p_over_tf", self.t_p_over_tf), ("peak_value", self.peak_value),
        ]
        pairs += [(f"ml_relerr_N{n}", e) for n, e in sorted(self.ml_errors.items())]
        for c in self.checks:
            pairs += [(f"check.{c.name}.observed", c.observed),
                      (f"check.{c.name}.limit", "true" if c.kind == "true" else c.limit),
                      (f"check.{c.name}.pass", c.passed)]
        pairs += [(f"tol.{k}", v) for k, v in self.tolerances.items()]
        pairs.append(("overall_pass", self.passed))
        return pairs

    def to_kv(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.as_pairs())

    def to_text(self) -> str:
        b = self.barrier
        lines = [
            "Passage-time equivalence report",
            "",
            f"barrier: V0={b.V0} eV  d={b.d} nm  m={b.mass_ratio} m_e  E={b.E} eV",
            f"derived: k0={b.k0:.6f} /nm  k0*d={b.k0 * b.d:.5f}  opacity={b.opacity:.5f}  t_f={b.t_f:.5f} fs",
            f"grid: {self.grid_size} points on [{self.grid_span[0]:.6f}, {self.grid_span[1]:.6f}] fs",
            f"poles used: {self.n_poles}",
            "",
            f"max |G_p - |Psi/T|^2| = {self.max_abs_diff:.6e} at t = {self.argmax_t:.6f} fs",
            f"peak: t_p = {self.t_p:.6f} fs  t_p/t_f = {self.t_p_over_tf:.6f}  G_p(t_p) = {self.peak_value:.6e}",
            "Mittag-Leffler relative error at k0: "
            + "  ".join(f"N={n}: {e:.3e}" for n, e in sorted(self.ml_errors.items())),
            "",
            "checks:",
        ]
        lines += _checks_text(self.checks)
        lines += ["", "tolerances:"]
        lines += [f"  {k} = {_fmt(v)}" for k, v in self.tolerances.items()]
        lines += ["", f"overall: {'PASS' if self.passed else 'FAIL'}", ""]
        return "\n".join(lines)


def equivalence_report(b: BarrierSpec, grid=None, tolerances: Tolerances | None = None,
                       poles: resonances.PoleSet | None = None) -> EquivalenceReport:
    """Both curves computed independently, compared, plus the identity checks.

    ``poles`` may be given to inject a specific (for instance corrupted) pole
    set; otherwise certified poles are found as the truncation requires.
    Sub-check failures are recorded, never raised.
    """
    tol = Tolerances() if tolerances is None else tolerances
    grid = default_grid(b) if grid is None else np.asarray(grid, dtype=float)

    integ = histories.HistoryIntegrator(b)
    gp = np.empty(grid.shape)
    gp_err = np.empty(grid.shape)
    for i, tau in enumerate(grid):
        gp[i], gp_err[i], _ = integ.gp(tau)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", shutter.ConvergenceWarning)
        psi = shutter.psi_curve(b.d, grid, b, poles=poles, tol=tol.pole_truncation)
    not_converged = any(issubclass(w.category, shutter.ConvergenceWarning) for w in caught)
    norm = psi.normalized
    diff = np.abs(gp - norm)
    j = int(np.argmax(diff))

    try:
        t_p, peak = find_peak((grid, gp), evaluate=lambda t: integ.gp(t)[0])
    except ValueError:
        t_p, peak = float("nan"), float("nan")

    checked = poles if poles is not None else shutter.cached_poles(b, 200)
    ml = mittag_leffler_errors(checked, b.k0)
    checks = [
        Check("equivalence_max_abs_diff", float(diff.max()), tol.equivalence),
        Check("pole_truncation_converged", not not_converged, True, "true",
              f"N={psi.info['n_poles']}"),
        Check("residue_relation_n1_20", float(residue_relation_errors(checked).max()), tol.residue_relation),
        Check("normalization_n1_20", float(normalization_errors(checked).max()), tol.normalization),
        Check("green_relation_grid", green_relation_error(b), tol.green_relation),
        Check("unitarity_grid", unitarity_error(b), tol.unitarity),
        Check("mittag_leffler_N200", ml[200], tol.mittag_leffler),
        Check("mittag_leffler_monotone", strictly_decreasing(ml[n] for n in sorted(ml)), True, "true"),
    ]
    late = (grid >= 8 * b.t_f) & (grid <= 10 * b.t_f)
    if late.any():
        checks.append(Check("asymptote_mean_8_10_tf", float(norm[late].mean()),
                            (tol.asymptote_lo, tol.asymptote_hi), "range"))
    if is_reference_barrier(b):
        checks += [
            Check("reference_opacity", abs(b.opacity / REF_OPACITY - 1), tol.opacity_rel),
            Check("reference_k0d", abs(b.k0 * b.d / REF_K0D - 1), tol.k0d_rel),
            Check("reference_t_f", abs(b.t_f / REF_TF - 1), tol.tf_rel),
            Check("reference_t_p_fs", abs(t_p - REF_TP), tol.tp_abs_fs, note=f"t_p={t_p:.5f}"),
            Check("reference_t_p_over_tf", abs(t_p / b.t_f - REF_TP_OVER_TF), tol.tp_over_tf_abs,
                  note=f"t_p/t_f={t_p / b.t_f:.5f}"),
        ]
    return EquivalenceReport(
        barrier=b, grid_span=(float(grid[0]), float(grid[-1])), grid_size=int(grid.size),
        max_abs_diff=float(diff.max()), argmax_t=float(grid[j]), t_p=t_p, t_p_over_tf=t_p / b.t_f,
        peak_value=peak, n_poles=int(psi.info["n_poles"]), ml_errors=ml, checks=tuple(checks),
        tolerances=tol, curves={"gp": gp, "gp_err": gp_err, "psi": psi},
    )


# -- self test -------------------------------------------------------------------

@dataclass(frozen=True)
class SelfTestReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = ["self-test:"] + _checks_text(self.checks)
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        out = []
        for c in self.checks:
            out += [f"check.{c.name}.observed={_fmt(c.observed)}",
                    f"check.{c.name}.pass={_fmt(c.passed)}"]
        out.append(f"overall_pass={_fmt(self.passed)}")
        return "\n".join(out) + "\n"


def random_m_arguments(b: BarrierSpec, poles: resonances.PoleSet, n: int, seed: int = 11):
    """(x, q, t) triples with q drawn from real values and from poles."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        x = b.d * rng.uniform(1.0, 3.0)
        t = b.t_f * rng.uniform(0.05, 10.0)
        if i % 2 == 0:
            q = complex(rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 3.0) * b.k0)
        else:
            m = int(rng.integers(1, min(20, len(poles)) + 1))
            q = complex(poles.kn[m - 1])
            if rng.random() < 0.5:
                q = -q.conjugate()
        out.append((x, q, t))
    return out


def selftest(fast: bool = False, units: UnitSystem | None = None, tolerances: Tolerances | None = None,
             b: BarrierSpec | None = None) -> SelfTestReport:
    """Unit checks first, then the numerical oracles.

    ``fast`` reduces sample counts but keeps every check.
    """
    tol = Tolerances() if tolerances is None else tolerances
    ref = reference_barrier(units)
    b = ref if b is None else b
    checks = [
        Check("units_k0d", abs(ref.k0 * ref.d / REF_K0D - 1), tol.k0d_rel, note=f"k0*d={ref.k0 * ref.d:.5f}"),
        Check("units_opacity", abs(ref.opacity / REF_OPACITY - 1), tol.opacity_rel,
              note=f"opacity={ref.opacity:.5f}"),
        Check("units_t_f", abs(ref.t_f / REF_TF - 1), tol.tf_rel, note=f"t_f={ref.t_f:.5f} fs"),
    ]
    n_w = 100 if fast else 1000
    rng = np.random.default_rng(3)
    r = 20.0 * np.sqrt(rng.uniform(0, 1, n_w))
    th = rng.uniform(0, np.pi, n_w)
    z = r * np.exp(1j * th)
    w = shutter.faddeeva_w(z)
    ref_w = np.array([faddeeva_oracle(v) for v in z])
    checks += [
        Check("faddeeva_w0", abs(shutter.faddeeva_w(0.0) - 1.0), 1e-14),
        Check("faddeeva_wi", abs(shutter.faddeeva_w(1j) - faddeeva_oracle(1j)) / 0.42758, tol.faddeeva),
        Check("faddeeva_oracle", float(np.max(np.abs(w - ref_w) / np.abs(ref_w))), tol.faddeeva,
              note=f"{n_w} points"),
        Check("unitarity_grid", unitarity_error(b), tol.unitarity),
        Check("green_relation_grid", green_relation_error(b), tol.green_relation),
        Check("branch_independence", branch_error(b), tol.branch),
    ]
    n_p = 5 if fast else 20
    poles = resonances.find_poles(b, max(n_p, 20))
    closed = np.array([complex(scattering.normalization_integral(k, b)) for k in poles.kn[:n_p]])
    quad = np.array([normalization_integral_oracle(k, b) for k in poles.kn[:n_p]])
    checks += [
        Check("normalization_closed_form_vs_quadrature", float(np.max(np.abs(closed - quad) / np.abs(quad))),
              tol.normalization),
        Check("normalization_residual", float(normalization_errors(poles, n_p).max()), tol.normalization),
        Check("residue_relation", float(residue_relation_errors(poles, n_p).max()), tol.residue_relation),
    ]
    n_m = 10 if fast else 50
    worst = 0.0
    for x, q, t in random_m_arguments(b, poles, n_m):
        got = complex(shutter.m_function(x, q, t, b.hbar_over_m))
        exp = m_function_oracle(x, q, t, b.hbar_over_m)
        worst = max(worst, abs(got - exp) / max(1.0, abs(exp)))
    checks.append(Check("m_function_quadrature", worst, tol.m_function, note=f"{n_m} arguments"))
    return SelfTestReport(tuple(checks))
