import warnings

import mpmath
import numpy as np
import pytest

from passage_time import shutter as sh
from passage_time.scattering import transmission_amplitude
from passage_time.units import barrier_from_config
from passage_time.verify import faddeeva_oracle, m_function_oracle, random_m_arguments

from oracles import m_function_shifted


def test_faddeeva_special_values():
    assert abs(sh.faddeeva_w(0.0) - 1.0) <= 1e-14
    # e erfc(1) from the convergent Taylor series of erf
    erf1 = 2 / np.sqrt(np.pi) * sum((-1) ** n / (mpmath.factorial(n) * (2 * n + 1)) for n in range(40))
    ref = float(mpmath.e * (1 - erf1))
    assert abs(sh.faddeeva_w(1j) - ref) < 1e-14
    assert ref == pytest.approx(0.42758, abs=5e-6)


def test_faddeeva_random_upper_half_plane():
    rng = np.random.default_rng(0)
    r = 20 * np.sqrt(rng.uniform(0, 1, 1000))
    z = r * np.exp(1j * rng.uniform(0, np.pi, 1000))
    w = sh.faddeeva_w(z)
    ref = np.array([faddeeva_oracle(v) for v in z])
    assert np.max(np.abs(w - ref) / np.maximum(np.abs(ref), 1e-300)) <= 1e-13


def test_faddeeva_lower_half_plane_reflection():
    z = np.array([1.0 - 2.0j, -3.0 - 0.5j, 0.1 - 5.0j])
    ref = np.array([faddeeva_oracle(v) for v in z])
    assert np.max(np.abs(sh.faddeeva_w(z) / ref - 1)) < 1e-13
    with pytest.raises(OverflowError):
        sh.faddeeva_w(-40j)


def test_m_function_stationary_point(barrier):
    hm = barrier.hbar_over_m
    for q, t in ((barrier.k0, 3.0), (1.7, 40.0), (-0.4, 0.9)):
        x = hm * q * t
        if x < 0:
            continue
        assert abs(abs(sh.m_function(x, q, t, hm)) - 0.5) < 1e-15


def test_m_function_reference_point(barrier):
    hm = barrier.hbar_over_m
    m = sh.m_function(barrier.d, barrier.k0, barrier.t_f, hm)
    assert abs(m - m_function_shifted(barrier.d, barrier.k0, barrier.t_f, hm)) <= 1e-8
    assert abs(m - m_function_shifted(barrier.d, barrier.k0, barrier.t_f, hm, shift=-0.5)) <= 1e-8


def test_m_function_random_arguments(barrier, poles):
    hm = barrier.hbar_over_m
    for x, q, t in random_m_arguments(barrier, poles, 50, seed=21):
        m = sh.m_function(x, q, t, hm)
        assert abs(m - m_function_shifted(x, q, t, hm)) <= 1e-8
        assert abs(m - m_function_oracle(x, q, t, hm)) <= 1e-8


def test_m_function_small_time(barrier, poles):
    hm = barrier.hbar_over_m
    for q in (barrier.k0, -barrier.k0, poles.kn[0], -np.conj(poles.kn[3]), poles.kn[300]):
        assert abs(sh.m_function(barrier.d, q, 1e-4, hm)) < 1e-3
        assert sh.m_function(barrier.d, q, 1e-7, hm) == 0
    # the oracle confirms the small-time decay
    assert abs(m_function_oracle(barrier.d, barrier.k0, 1e-4, hm)) < 1e-3


def test_m_function_vectorised(barrier, poles):
    hm = barrier.hbar_over_m
    t = np.array([0.5, 5.0, 50.0])
    q = poles.kn[:3]
    v = sh.m_function(barrier.d, q[:, None], t[None, :], hm)
    for i in range(3):
        for j in range(3):
            assert v[i, j] == pytest.approx(sh.m_function(barrier.d, q[i], t[j], hm), abs=1e-15)


def test_pole_route_initial_condition(barrier):
    for x in (barrier.d, 1.5 * barrier.d, 3 * barrier.d):
        assert sh.psi_pole_expansion(x, 0.0, None, barrier) == 0
        # |Psi| is tiny here, but relative to T(k0) the sum is still moving at the cap
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sh.ConvergenceWarning)
            assert abs(sh.psi_pole_expansion(x, 1e-6, None, barrier)) <= 1e-6


def test_routes_agree_at_free_time(barrier):
    pole = sh.psi_pole_expansion(barrier.d, barrier.t_f, None, barrier)
    direct = sh.psi_direct_integral(barrier.d, barrier.t_f, barrier)
    assert abs(pole - direct) <= 1e-6
    t0 = transmission_amplitude(barrier.k0, barrier)
    assert abs(pole - direct) / abs(t0) < 1e-8


def test_routes_agree_near_peak(barrier):
    t = 0.455 * barrier.t_f
    t0 = transmission_amplitude(barrier.k0, barrier)
    pole = abs(sh.psi_pole_expansion(barrier.d, t, None, barrier) / t0) ** 2
    direct = abs(sh.psi_direct_integral(barrier.d, t, barrier) / t0) ** 2
    assert abs(pole - direct) <= 1e-6


def test_direct_small_time(barrier):
    assert abs(sh.psi_direct_integral(barrier.d, 1e-3, barrier)) < 1e-6


def test_time_bracket_series_switch(barrier):
    a = barrier.hbar_over_m * 7.0 / 2
    k0 = barrier.k0
    assert sh.time_bracket(k0, a, k0) == pytest.approx(-1j * a, abs=1e-15)
    # continuity across the switch and agreement with the plain formula away from it
    for dk in (1e-4 * (1 - 1e-9), 1e-4 * (1 + 1e-9), 3e-4, -2e-4, 1e-3):
        k = k0 + dk
        u = (k - k0) * (k + k0)
        plain = (np.exp(-1j * a * u) - 1) / u
        assert abs(sh.time_bracket(k, a, k0) - plain) <= 1e-12 * abs(plain)
    assert sh.time_bracket(-k0, a, k0) == pytest.approx(-1j * a, abs=1e-15)


def test_direct_integral_tolerance_and_error(barrier):
    v, err = sh.psi_direct_integral(barrier.d, 2 * barrier.t_f, barrier, return_error=True)
    assert err <= sh.DIRECT_TOL


def test_psi_curve_two_points_both_routes(barrier):
    grid = np.array([0.3, 1.2]) * barrier.t_f
    a = sh.psi_curve(barrier.d, grid, barrier, route="pole-expansion")
    b = sh.psi_curve(barrier.d, grid, barrier, route="direct-integral")
    assert a.route == "pole-expansion" and b.route == "direct-integral"
    assert np.max(np.abs(a.values - b.values)) <= 1e-6
    assert np.max(np.abs(a.normalized - b.normalized)) <= 1e-6


def test_psi_curve_empty_grid(barrier):
    for route in sh.ROUTES:
        c = sh.psi_curve(barrier.d, [], barrier, route=route)
        assert len(c) == 0 and c.values.shape == (0,)


def test_psi_curve_points_independent(barrier):
    grid = np.linspace(0.1, 3.0, 7) * barrier.t_f
    full = sh.psi_curve(barrier.d, grid, barrier, route="direct-integral")
    one = sh.psi_direct_integral(barrier.d, grid[4], barrier)
    assert full.values[4] == one


def test_psi_curve_rejects_bad_input(barrier):
    with pytest.raises(ValueError):
        sh.psi_curve(barrier.d, [1.0, 0.5], barrier)
    with pytest.raises(ValueError):
        sh.psi_curve(barrier.d, [1.0], barrier, route="spectral")
    with pytest.raises(ValueError):
        sh.psi_pole_expansion(0.5 * barrier.d, 1.0, None, barrier)
    with pytest.raises(ValueError):
        sh.psi_direct_integral(barrier.d, -1.0, barrier)


def test_route_equivalence_on_reference_grid(barrier, default_grid):
    grid = default_grid[::20]
    pole = sh.psi_curve(barrier.d, grid, barrier)
    direct = sh.psi_curve(barrier.d, grid, barrier, route="direct-integral")
    assert np.max(np.abs(pole.values - direct.values)) <= 1e-6 * np.max(np.abs(pole.values))


def test_truncation_monotone(barrier, coarse_pole_curve):
    changes = [c for _, c in coarse_pole_curve.info["history"]]
    assert all(b <= a for a, b in zip(changes[1:], changes[2:]))


def test_truncation_cap_warns(barrier, poles):
    with pytest.warns(sh.ConvergenceWarning):
        sh.psi_pole_expansion(barrier.d, np.array([2.0, 20.0]), poles.truncated(50), barrier)


def test_curve_shape(barrier, coarse_pole_curve):
    v = coarse_pole_curve.normalized
    i = int(np.argmax(v))
    assert 0 < i < len(v) - 1
    assert 0.3 < coarse_pole_curve.grid[i] / barrier.t_f < 0.6


@pytest.mark.xfail(strict=True, reason="|Psi/T|^2 at 10 t_f is about 40, far from 1; see the decisions ledger")
def test_late_time_value(barrier):
    v = sh.psi_pole_expansion(barrier.d, 10 * barrier.t_f, None, barrier)
    assert abs(abs(v / transmission_amplitude(barrier.k0, barrier)) ** 2 - 1) <= 0.05


@pytest.mark.xfail(strict=True, reason="the normalized curve does not settle at 1 on [0.05, 10] t_f")
def test_curve_decays_to_one(barrier, coarse_pole_curve):
    assert abs(coarse_pole_curve.normalized[-1] - 1) <= 0.05


def test_off_reference_barrier_routes():
    b = barrier_from_config(0.3, 5.0, 0.067, 0.1)
    t = np.array([0.2, 1.0, 4.0]) * b.t_f
    with warnings.catch_warnings():
        warnings.simplefilter("error", sh.QuadratureWarning)
        direct = sh.psi_direct_integral(b.d * 1.2, t, b)
    pole = sh.psi_pole_expansion(b.d * 1.2, t, None, b)
    t0 = abs(transmission_amplitude(b.k0, b))
    assert np.max(np.abs(pole - direct)) / t0 < 1e-7
