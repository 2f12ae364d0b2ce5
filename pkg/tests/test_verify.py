import numpy as np
import pytest

from passage_time import shutter as sh
from passage_time import verify as v
from passage_time.units import make_unit_system, reference_barrier


def test_find_peak_triangle_apex():
    grid = np.linspace(0.0, 10.0, 101)
    vals = 5.0 - np.abs(grid - 4.0)
    assert v.find_peak((grid, vals)) == (4.0, 5.0)
    t, val = v.find_peak((grid, vals), evaluate=lambda t: 5.0 - abs(t - 4.0))
    assert abs(t - 4.0) < 1e-4 and abs(val - 5.0) < 1e-4


def test_find_peak_refines_off_grid():
    grid = np.linspace(0.0, 3.0, 31)
    f = lambda t: np.exp(-(t - 1.234567) ** 2)
    t, _ = v.find_peak((grid, f(grid)), evaluate=f, xtol=1e-6)
    assert abs(t - 1.234567) < 1e-6


def test_find_peak_rejects_monotone():
    grid = np.linspace(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        v.find_peak((grid, grid))
    with pytest.raises(ValueError):
        v.find_peak((grid[:2], grid[:2]))


def test_check_flags_follow_numbers():
    assert v.Check("a", 1e-6, 1e-5).passed
    assert not v.Check("a", 2e-5, 1e-5).passed
    assert not v.Check("a", float("nan"), 1e-5).passed
    assert v.Check("a", 1.0, (0.95, 1.05), "range").passed
    assert not v.Check("a", 40.0, (0.95, 1.05), "range").passed
    assert v.Check("a", True, True, "true").passed


def test_tolerances_from_mapping():
    t = v.Tolerances.from_mapping({"equivalence": 2e-5})
    assert t.equivalence == 2e-5 and t.unitarity == v.Tolerances().unitarity
    with pytest.raises(ValueError):
        v.Tolerances.from_mapping({"nonsense": 1.0})


def test_strictly_decreasing():
    assert v.strictly_decreasing([3, 2, 1])
    assert not v.strictly_decreasing([3, 3, 1])


@pytest.fixture(scope="module")
def small_report(barrier):
    return v.equivalence_report(barrier, v.default_grid(barrier, 60))


def test_report_records_everything(small_report):
    names = [c.name for c in small_report.checks]
    for n in ("equivalence_max_abs_diff", "residue_relation_n1_20", "normalization_n1_20",
              "green_relation_grid", "unitarity_grid", "mittag_leffler_N200", "reference_t_p_fs"):
        assert n in names
    kv = dict(line.split("=", 1) for line in small_report.to_kv().splitlines())
    assert kv["overall_pass"] == ("true" if small_report.passed else "false")
    assert float(kv["tol.equivalence"]) == 1e-5
    for c in small_report.checks:
        assert kv[f"check.{c.name}.pass"] == ("true" if c.passed else "false")
    assert "tolerances:" in small_report.to_text()


def test_report_flags_rederivable(small_report):
    kv = dict(line.split("=", 1) for line in small_report.to_kv().splitlines())
    for c in small_report.checks:
        if c.kind != "max":
            continue
        obs = float(kv[f"check.{c.name}.observed"])
        lim = float(kv[f"check.{c.name}.limit"])
        assert (obs <= lim) == c.passed


def test_report_deterministic(barrier, small_report):
    again = v.equivalence_report(barrier, v.default_grid(barrier, 60))
    assert again.to_kv() == small_report.to_kv()
    assert again.to_text() == small_report.to_text()


def test_corrupted_residue_detected(barrier):
    good = sh.cached_poles(barrier, sh.N_MAX)
    bad = good.with_residue(1, 1.01 * good.rn[0])
    rep = v.equivalence_report(barrier, v.default_grid(barrier, 60), poles=bad)
    assert not rep.check("residue_relation_n1_20").passed
    assert rep.max_abs_diff > 1e-5
    assert not rep.passed


def test_selftest_fast_passes():
    rep = v.selftest(fast=True)
    assert rep.passed, rep.to_text()
    assert rep.to_kv().endswith("overall_pass=true\n")


def test_selftest_same_check_set():
    fast = v.selftest(fast=True)
    full = v.selftest(fast=False)
    assert [c.name for c in fast.checks] == [c.name for c in full.checks]
    assert full.passed, full.to_text()


def test_selftest_wrong_hbar_fails_unit_checks_first():
    rep = v.selftest(fast=True, units=make_unit_system(hbar=0.7))
    first_fail = next(c for c in rep.checks if not c.passed)
    assert first_fail.name.startswith("units_")
    assert not rep.passed


@pytest.mark.xfail(strict=True, reason="k0*d is built from hbar^2/2m_e only, so a wrong hbar leaves it at 5")
def test_selftest_wrong_hbar_breaks_k0d():
    rep = v.selftest(fast=True, units=make_unit_system(hbar=0.7))
    assert not next(c for c in rep.checks if c.name == "units_k0d").passed


def test_selftest_wrong_mass_constant_breaks_k0d():
    rep = v.selftest(fast=True, units=make_unit_system(hbar2_over_2me=0.04))
    assert not next(c for c in rep.checks if c.name == "units_k0d").passed


def test_oracles_agree(barrier):
    for z in (0.3 + 0.2j, 5.0 + 1e-3j, 12j):
        assert abs(sh.faddeeva_w(z) - v.faddeeva_oracle(z)) < 1e-14 * abs(v.faddeeva_oracle(z))
    p = sh.cached_poles(barrier, 20)
    from passage_time.scattering import normalization_integral
    for kn in p.kn[[0, 9, 19]]:
        ref = v.normalization_integral_oracle(kn, barrier)
        assert abs(normalization_integral(kn, barrier) / ref - 1) < 1e-12


def test_reference_barrier_detection(barrier):
    assert v.is_reference_barrier(barrier)
    assert not v.is_reference_barrier(barrier.with_(d=10.0))
    assert v.default_grid(barrier)[0] == pytest.approx(0.05 * barrier.t_f)
    assert len(v.default_grid(barrier)) == 2000


@pytest.mark.xfail(strict=True, reason="the Mittag-Leffler check fails at N=200 for this set; see the ledger")
def test_off_reference_report_passes(off_reports):
    assert off_reports[0].passed
