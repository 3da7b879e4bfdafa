import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactclass.errors import DomainError
from contactclass.numerics import quad
from contactclass.propagation import (
    LOGNORMAL_2M,
    LOGNORMAL_4M,
    PERSON_RADIUS,
    RICE_2M,
    CrowdLayout,
    LognormalFading,
    PropagationConfig,
    RiceFading,
    crowd_average_pi_md,
    decision_threshold,
    expected_rssi,
    pi_fa_lognormal,
    pi_fa_rice,
    pi_md_lognormal,
    pi_md_rice,
    rice_power_pdf,
    shell_occupancy,
    shell_product,
    total_pfa_shells,
)

CFG = PropagationConfig()
LAYOUT = CrowdLayout.densest_packing()
TABLE4_N = (1, 6, 15, 30, 60, 120, 240, 480)


def mp_q(x):
    return float(mp.erfc(mp.mpf(x) / mp.sqrt(2)) / 2)


def lognormal_avg(n, fading=LOGNORMAL_2M):
    return crowd_average_pi_md(lambda d: float(pi_md_lognormal(fading, CFG, n, d)), LAYOUT)


# configuration types


def test_config_invariants():
    with pytest.raises(DomainError):
        PropagationConfig(path_loss_exponent=0.5)
    with pytest.raises(DomainError):
        PropagationConfig(critical_distance=0)
    with pytest.raises(DomainError):
        RiceFading(0, 1)
    with pytest.raises(DomainError):
        LognormalFading(-1.0)


def test_densest_packing_layout():
    assert LAYOUT.size == 12
    assert LAYOUT.radii[-1] == pytest.approx(math.sqrt(12 / math.pi))
    assert LAYOUT.radii[-1] <= 2.0 < math.sqrt(13 / math.pi)
    dense = CrowdLayout.densest_packing(2.0, 4.0)
    assert dense.size == 50
    assert dense.radii[0] == pytest.approx(LAYOUT.radii[0] / 2)


def test_layout_invariants():
    with pytest.raises(DomainError):
        CrowdLayout((1.0, 0.5), 2.0)
    with pytest.raises(DomainError):
        CrowdLayout((1.0, 2.5), 2.0)
    with pytest.raises(DomainError):
        CrowdLayout((), 2.0)


# RSSI and threshold


def test_expected_rssi_examples():
    assert expected_rssi(CFG, 1.0) == 0.0
    assert expected_rssi(CFG, 10.0) == pytest.approx(-20.0)
    assert expected_rssi(PropagationConfig(tx_power=-40), 2.0) == pytest.approx(-46.0206, abs=1e-4)


def test_expected_rssi_domain():
    for d in (0.0, -1.0):
        with pytest.raises(DomainError):
            expected_rssi(CFG, d)


@given(st.floats(0.01, 100), st.floats(1e-3, 10))
def test_expected_rssi_decreasing(d, dd):
    assert expected_rssi(CFG, d + dd) < expected_rssi(CFG, d)


def test_threshold_examples():
    assert decision_threshold(CFG, 0.0) == pytest.approx(-6.0206, abs=1e-4)
    assert decision_threshold(PropagationConfig(critical_distance=1.0), 0.0) == 0.0
    assert decision_threshold(PropagationConfig(tx_power=-40), -60) == pytest.approx(-106.0206, abs=1e-4)


# Rice


def test_rice_md_near_zero_distance():
    # small-b form of 1 - Q1(a, b): exp(-a^2/2) b^2/2
    s2 = 9.15
    b2 = (247.0 + 2 * s2) * (1e-3 / 2) ** 2 / s2
    approx = math.exp(-247.0 / (2 * s2)) * b2 / 2
    got = pi_md_rice(RICE_2M, CFG, 1, 1e-3)
    assert got < 1e-10
    assert got == pytest.approx(approx, rel=1e-3)


def test_rice_md_at_critical_distance_vs_sampling():
    # independent sampler: |sqrt(gamma_r) + sigma (N1 + j N2)|^2 against the mean power
    rng = np.random.default_rng(2024)
    s = math.sqrt(9.15)
    z = (math.sqrt(247.0) + s * rng.standard_normal(10**6)) ** 2 + (s * rng.standard_normal(10**6)) ** 2
    emp = np.mean(z < 247.0 + 2 * 9.15)
    closed = pi_md_rice(RICE_2M, CFG, 1, 2.0)
    assert 0.4 < closed < 0.6
    assert abs(emp - closed) < 3 * math.sqrt(closed * (1 - closed) / 10**6)


def test_rice_crowd_average():
    avg = crowd_average_pi_md(lambda d: pi_md_rice(RICE_2M, CFG, 1, d), LAYOUT)
    assert abs(avg - 0.15) <= 0.01


def test_rice_boundary_complements():
    for n in (1, 3, 60):
        assert pi_md_rice(RICE_2M, CFG, n, 2.0) + pi_fa_rice(RICE_2M, CFG, n, 2.0) == pytest.approx(1.0, abs=1e-12)


def test_rice_domain():
    with pytest.raises(DomainError):
        pi_md_rice(RICE_2M, CFG, 1, 2.01)
    with pytest.raises(DomainError):
        pi_fa_rice(RICE_2M, CFG, 1, 1.99)
    with pytest.raises(DomainError):
        pi_md_rice(RICE_2M, CFG, 0, 1.0)


@pytest.mark.parametrize("n", [1, 2, 7])
def test_rice_power_pdf_moments(n):
    mass = quad(lambda g: rice_power_pdf(RICE_2M, g, n), 0, 2000 * n)
    mean = quad(lambda g: g * rice_power_pdf(RICE_2M, g, n), 0, 2000 * n)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(n * (247.0 + 2 * 9.15), rel=1e-8)


def test_rice_power_pdf_cdf_matches_marcum():
    # P(sum < gamma_c) by integrating the density
    n, d = 3, 1.7
    gc = n * RICE_2M.mean_power * (d / 2.0) ** 2
    cdf = quad(lambda g: rice_power_pdf(RICE_2M, g, n), 0, gc)
    assert cdf == pytest.approx(pi_md_rice(RICE_2M, CFG, n, d), abs=1e-9)


# lognormal


@pytest.mark.parametrize("n", [1, 3, 60])
def test_lognormal_half_at_boundary(n):
    assert pi_fa_lognormal(LOGNORMAL_4M, CFG, n, 2.0) == 0.5
    assert pi_md_lognormal(LOGNORMAL_2M, CFG, n, 2.0) == 0.5


def test_spot_false_alarms():
    assert abs(pi_fa_lognormal(LOGNORMAL_4M, CFG, 1, 2.5642) - 0.137) <= 2e-3
    assert abs(pi_fa_lognormal(LOGNORMAL_4M, CFG, 3, 2.5642) - 0.029) <= 1e-3


def test_md_lognormal_outer_fellow():
    d = math.sqrt(12 / math.pi)
    ref = mp_q(20 * math.log10(2 / d) / 1.60)
    got = float(pi_md_lognormal(LOGNORMAL_2M, CFG, 1, d))
    assert got == pytest.approx(ref, abs=1e-12)
    assert abs(got - 0.4498) <= 2e-3


def test_lognormal_domain():
    with pytest.raises(DomainError):
        pi_fa_lognormal(LOGNORMAL_4M, CFG, 1, 1.9)
    with pytest.raises(DomainError):
        pi_md_lognormal(LOGNORMAL_2M, CFG, 1, 2.1)
    with pytest.raises(DomainError):
        pi_md_lognormal(LOGNORMAL_2M, CFG, 1, 0.0)


@pytest.mark.parametrize("n", [1, 3, 60])
def test_symmetry_grid(n):
    d = np.linspace(0.02, 2.0, 100)
    md = pi_md_lognormal(LOGNORMAL_2M, CFG, n, d)
    fa = pi_fa_lognormal(LOGNORMAL_2M, CFG, n, 4.0 / d)
    np.testing.assert_allclose(md, fa, rtol=0, atol=1e-12)


@pytest.mark.parametrize("n", [1, 3, 60])
def test_monotone_curves(n):
    inside = np.linspace(0.02, 2.0, 100)
    outside = np.linspace(2.0, 8.0, 100)
    md_ln = pi_md_lognormal(LOGNORMAL_2M, CFG, n, inside)
    md_r = np.array([pi_md_rice(RICE_2M, CFG, n, d) for d in inside])
    fa_ln = pi_fa_lognormal(LOGNORMAL_4M, CFG, n, outside)
    fa_r = np.array([pi_fa_rice(RICE_2M, CFG, n, d) for d in outside])
    assert np.all(np.diff(md_ln) >= 0) and np.all(np.diff(md_r) >= 0)
    assert np.all(np.diff(fa_ln) <= 0) and np.all(np.diff(fa_r) <= 0)


def test_fa_decreasing_in_n():
    vals = [pi_fa_lognormal(LOGNORMAL_4M, CFG, n, 2.5) for n in (1, 2, 5, 20, 100)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# crowd averages


def test_crowd_average_constant():
    assert crowd_average_pi_md(lambda d: 0.3, LAYOUT) == pytest.approx(0.3)


def test_table4_first_entry_by_hand():
    # twelve Q terms written out with the mpmath tail
    terms = [mp_q(20 * math.log10(2 / math.sqrt(m / math.pi)) / 1.6) for m in range(1, 13)]
    assert lognormal_avg(1) == pytest.approx(sum(terms) / 12, abs=1e-12)
    assert abs(lognormal_avg(1) - 0.1212) < 5e-4


@pytest.mark.parametrize(
    "n,ref,tol",
    [(1, 0.12, 0.005), (6, 0.054, 0.005), (15, 0.034, 0.005), (30, 0.023, 0.005), (60, 0.014, 0.002), (120, 0.007, 0.005), (240, 0.002, 0.005), (480, 0.0003, 0.0005)],
)
def test_table4_entries(n, ref, tol):
    assert abs(lognormal_avg(n) - ref) <= tol


def test_diversity_strictly_decreasing():
    vals = [lognormal_avg(n) for n in TABLE4_N]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# shell products


def _shells_by_hand(n, sigma, shells=400):
    # occupancy and midpoint distance written out directly
    delta = 1 / math.sqrt(math.pi)
    log_clear = 0.0
    for k in range(shells):
        occ = math.pi * ((2 + 2 * delta * (k + 1)) ** 2 - (2 + 2 * delta * k) ** 2)
        d = 2 + delta * (2 * k + 1)
        p = mp_q(math.sqrt(n) * 20 * math.log10(d / 2) / sigma)
        log_clear += occ * math.log1p(-p)
    return -math.expm1(log_clear)


@pytest.mark.parametrize("n,ref,tol", [(3, 0.413, 0.01), (6, 0.064, 0.005), (9, 0.009, 0.002)])
def test_shell_totals(n, ref, tol):
    got = total_pfa_shells(LOGNORMAL_4M, CFG, n)
    assert abs(got - ref) <= tol
    assert got == pytest.approx(_shells_by_hand(n, 1.97), rel=1e-9)


def test_shell_occupancy_areas():
    # first shell holds the annulus 2..2+2 delta
    assert shell_occupancy(0, 2.0) == pytest.approx(math.pi * ((2 + 2 * PERSON_RADIUS) ** 2 - 4))
    total = sum(shell_occupancy(k, 2.0) for k in range(10))
    assert total == pytest.approx(math.pi * ((2 + 20 * PERSON_RADIUS) ** 2 - 4))


def test_shell_product_edge_cases():
    assert shell_product(lambda d: 0.0, 2.0) == 0.0
    assert shell_product(lambda d: 1.0, 2.0) == 1.0
    with pytest.raises(DomainError):
        shell_product(lambda d: 0.1, 2.0, max_shells=0)
