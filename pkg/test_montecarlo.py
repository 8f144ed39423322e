#!/usr/bin/env python3
"""
Test the Monte Carlo estimators, the exact oracles and the convergence study
"""

import math

import numpy as np
import pytest
from scipy.special import gammaln

from config import CLI_CONFIG
from errors import DegenerateEigsError, DomainError, SeedError, SizeError
from measure import DiscreteMeasure
from montecarlo import (McEstimate, convergence_study, estimate_In, estimate_In_rank1_dirichlet, estimate_In_tilted,
                        exact_rank1_two_atoms, rows_to_frame, schur_oracle, signature_from_thetas, tilted_proposal)
from randmat import SpectrumSpec
from rate import ThetaVector, rate_single
from variational import SimplexPoint

J_ONE_TWO = 0.453875  # J(1, 2, 1/2 delta_1 + 1/2 delta_2)


def _within(a: McEstimate, b: McEstimate, n_sigma: float, slack: float = 0.0) -> bool:
    return abs(a.log_mean_per_n - b.log_mean_per_n) <= n_sigma * math.hypot(a.stderr, b.stderr) + slack


def _log_complete_homogeneous(x, K: int) -> float:
    """log h_K(x) by the recurrence h_K(x_1..x_n) = h_K(x_1..x_{n-1}) + x_n h_{K-1}(x_1..x_n)"""
    h = np.zeros(K + 1)
    h[0] = 1.0
    for xi in x:
        for j in range(1, K + 1):
            h[j] += xi * h[j - 1]
    return math.log(h[K])


# -- deterministic cases ------------------------------------------------------

def test_identity_matrix_is_exact():
    spec = SpectrumSpec(DiscreteMeasure.point_mass(1.0), N=16)
    estimate = estimate_In(spec, (1.0, -0.5), n_samples=64, n_batches=4, seed=0)
    assert estimate.log_mean_per_n == 0.0
    assert estimate.stderr == 0.0
    assert estimate.n_samples == 64


@pytest.mark.parametrize("beta", [1, 2])
@pytest.mark.parametrize("N", [1, 8, 64])
def test_scaled_identity_is_exact(beta, N):
    spec = SpectrumSpec(DiscreteMeasure.point_mass(3.0), N=N, beta=beta)
    estimate = estimate_In(spec, ThetaVector((2.0,)), n_samples=64, n_batches=4, seed=1)
    assert estimate.log_mean_per_n == pytest.approx(0.5 * beta * 2 * math.log(3.0), rel=1e-12)
    assert estimate.stderr == 0.0


def test_rank1_dirichlet_point_mass():
    spec = SpectrumSpec(DiscreteMeasure.point_mass(1.0), N=10)
    assert estimate_In_rank1_dirichlet(spec, 1.0, n_samples=64, n_batches=4, seed=0).log_mean_per_n == 0.0


# -- sampling contract --------------------------------------------------------

def test_estimate_is_reproducible(two_atoms):
    spec = SpectrumSpec(two_atoms, N=12)
    first = estimate_In(spec, (1.0,), n_samples=640, n_batches=8, seed=123)
    second = estimate_In(spec, (1.0,), n_samples=640, n_batches=8, seed=123)
    other = estimate_In(spec, (1.0,), n_samples=640, n_batches=8, seed=124)
    assert first.to_dict() == second.to_dict()
    assert first.log_mean_per_n != other.log_mean_per_n


def test_worker_count_does_not_change_result(two_atoms):
    spec = SpectrumSpec(two_atoms, upper_outliers=(3.0,), N=12, beta=2)
    serial = estimate_In(spec, (1.0, 0.5), n_samples=800, n_batches=8, seed=5, n_workers=1)
    threaded = estimate_In(spec, (1.0, 0.5), n_samples=800, n_batches=8, seed=5, n_workers=2)
    assert serial.to_dict() == threaded.to_dict()


def test_explicit_batch_seeds(two_atoms):
    spec = SpectrumSpec(two_atoms, N=8)
    estimate = estimate_In(spec, (1.0,), n_samples=400, n_batches=4, batch_seeds=[1, 2, 3, 4])
    assert estimate.n_batches == 4
    with pytest.raises(SeedError):
        estimate_In(spec, (1.0,), n_samples=400, n_batches=4, batch_seeds=[1, 2, 2, 4])
    with pytest.raises(SeedError):
        estimate_In(spec, (1.0,), n_samples=400, n_batches=4, batch_seeds=[1, 2, 3])


def test_sample_count_errors(two_atoms):
    spec = SpectrumSpec(two_atoms, N=8)
    with pytest.raises(DomainError):
        estimate_In(spec, (1.0,), n_samples=100, n_batches=3, seed=0)
    with pytest.raises(DomainError):
        estimate_In(spec, (1.0,), n_samples=100, n_batches=1, seed=0)
    with pytest.raises(SizeError):
        estimate_In(SpectrumSpec(two_atoms, N=2), (1.0, 1.0, 1.0), n_samples=100, n_batches=2, seed=0)


def test_estimate_to_dict_matches_csv_header(two_atoms):
    estimate = estimate_In(SpectrumSpec(two_atoms, N=8), (1.0,), n_samples=200, n_batches=4, seed=0)
    data = estimate.to_dict()
    assert set(CLI_CONFIG["csv_headers"]["mc"]) <= set(data)
    assert data["N"] == 8
    assert 1.0 <= data["ess"] <= 200.0
    assert data["stderr"] > 0


# -- estimator cross-checks ---------------------------------------------------

def test_dirichlet_matches_haar(two_atoms):
    spec = SpectrumSpec(two_atoms, N=64)
    haar = estimate_In(spec, (1.0,), n_samples=6400, n_batches=32, seed=10)
    dirichlet = estimate_In_rank1_dirichlet(spec, 1.0, n_samples=6400, n_batches=32, seed=11)
    assert _within(haar, dirichlet, 4.0)


def test_dirichlet_matches_haar_negative_theta(two_atoms):
    spec = SpectrumSpec(two_atoms, lower_outliers=(0.5,), N=32)
    haar = estimate_In(spec, (-1.0,), n_samples=6400, n_batches=32, seed=20)
    dirichlet = estimate_In_rank1_dirichlet(spec, -1.0, n_samples=6400, n_batches=32, seed=21)
    assert _within(haar, dirichlet, 4.0)


def test_dirichlet_matches_quadrature(two_atoms):
    spec = SpectrumSpec(two_atoms, N=64)
    exact = exact_rank1_two_atoms(two_atoms, None, 1.0, 1, 64)
    estimate = estimate_In_rank1_dirichlet(spec, 1.0, n_samples=12800, n_batches=32, seed=3)
    assert abs(estimate.log_mean_per_n - exact) <= 4 * estimate.stderr + 1e-4


def test_tilted_without_tilt_is_exact(two_atoms):
    """At theta = 0 the proposal is the target and every weight is 1"""
    spec = SpectrumSpec(two_atoms, upper_outliers=(3.0,), N=16)
    estimate = estimate_In_tilted(spec, 0.0, n_samples=320, n_batches=32, seed=0)
    assert estimate.log_mean_per_n == pytest.approx(0.0, abs=1e-14)
    assert estimate.stderr == pytest.approx(0.0, abs=1e-14)
    assert estimate.ess == pytest.approx(320.0)
    assert estimate.warnings == []


def test_tilted_proposal_matches_block_measure(two_atoms):
    spec = SpectrumSpec(two_atoms, upper_outliers=(3.0,), N=10)
    gamma = tilted_proposal(spec, 1.0)
    assert len(gamma) == 3
    assert all(g > 0 for g in gamma.gamma)


def test_tilted_agrees_with_naive(two_atoms):
    spec = SpectrumSpec(two_atoms, N=32)
    naive = estimate_In_rank1_dirichlet(spec, 0.5, n_samples=6400, n_batches=32, seed=30)
    tilted = estimate_In_tilted(spec, 0.5, n_samples=6400, n_batches=32, seed=31)
    assert _within(naive, tilted, 4.0)


def test_tilted_reduces_variance(two_atoms):
    spec = SpectrumSpec(two_atoms, N=256)
    naive = estimate_In_rank1_dirichlet(spec, 2.0, n_samples=3200, n_batches=32, seed=40)
    tilted = estimate_In_tilted(spec, 2.0, n_samples=3200, n_batches=32, seed=41)
    assert tilted.stderr < naive.stderr
    exact = exact_rank1_two_atoms(two_atoms, None, 2.0, 1, 256)
    assert abs(tilted.log_mean_per_n - exact) <= 4 * tilted.stderr + 1e-4


def test_tilted_low_ess_warning(two_atoms):
    spec = SpectrumSpec(two_atoms, N=64)
    estimate = estimate_In_tilted(spec, 1.0, gamma_star=SimplexPoint((0.99, 0.01)), n_samples=640,
                                  n_batches=32, seed=0)
    assert estimate.ess < 0.01 * estimate.n_samples
    assert estimate.warnings and estimate.warnings[0].startswith("LowESS")


def test_tilted_rejects_bad_proposal(two_atoms):
    spec = SpectrumSpec(two_atoms, N=16)
    with pytest.raises(DomainError):
        estimate_In_tilted(spec, 1.0, gamma_star=SimplexPoint((1.0, 0.0)), n_samples=64, n_batches=4, seed=0)
    with pytest.raises(DomainError):
        estimate_In_tilted(spec, 1.0, gamma_star=SimplexPoint((0.2, 0.3, 0.5)), n_samples=64, n_batches=4, seed=0)


# -- exact oracles ------------------------------------------------------------

def test_exact_rank1_closed_forms():
    # Beta(1/2, 1/2) has mean 1/2
    assert exact_rank1_two_atoms((1.0, 2.0), (1, 1), 1.0, 1, 2) == pytest.approx(0.5 * math.log(1.5), rel=1e-9)
    # uniform g: E[(2 - g)^2] = 7/3
    assert exact_rank1_two_atoms((1.0, 2.0), (2, 2), 1.0, 1, 4) == pytest.approx(0.25 * math.log(7.0 / 3.0), rel=1e-9)
    # uniform g: E[(2 - g)^3] = 15/4
    assert exact_rank1_two_atoms((1.0, 2.0), (1, 1), 1.5, 2, 2) == pytest.approx(0.5 * math.log(15.0 / 4.0), rel=1e-9)
    assert exact_rank1_two_atoms((1.0, 2.0), (3, 5), 0.0, 1, 8) == 0.0
    assert exact_rank1_two_atoms((3.0, 3.0), (3, 5), 2.0, 2, 8) == pytest.approx(2 * math.log(3.0))


def test_exact_rank1_against_gamma_moments():
    """E[(g mu_1 + (1-g) mu_2)^p] for integer p expands into Beta moments"""
    a, b, p = 3.5, 2.0, 6
    mu1, mu2 = 1.0, 2.5
    total = 0.0
    for j in range(p + 1):
        log_moment = (gammaln(a + j) - gammaln(a) + gammaln(a + b) - gammaln(a + b + j)
                      + gammaln(b + p - j) - gammaln(b) + gammaln(a + b + j) - gammaln(a + b + p))
        total += math.comb(p, j) * mu1 ** j * mu2 ** (p - j) * math.exp(log_moment)
    N = 6
    # beta = 1 counts (7, 4), theta = 2 p / (beta N)
    value = exact_rank1_two_atoms((mu1, mu2), (7, 4), 2.0 * p / N, 1, N)
    assert value == pytest.approx(math.log(total) / N, rel=1e-9)


def test_exact_rank1_errors(two_atoms):
    with pytest.raises(DomainError):
        exact_rank1_two_atoms((1.0, 2.0, 3.0), (1, 1, 1), 1.0, 1, 3)
    with pytest.raises(DomainError):
        exact_rank1_two_atoms((1.0, 2.0), None, 1.0, 1, 3)


def test_signature_from_thetas():
    assert signature_from_thetas((0.5,), 4).tolist() == [2, 0, 0, 0]
    assert signature_from_thetas(ThetaVector((1.0, 0.5, 0.25)), 4).tolist() == [4, 2, 1, 0]
    with pytest.raises(DomainError):
        signature_from_thetas((0.3,), 4)
    with pytest.raises(DomainError):
        signature_from_thetas((0.25, 0.5), 4)
    with pytest.raises(SizeError):
        signature_from_thetas((1.0, 1.0, 1.0), 2)


def test_schur_oracle_examples():
    assert schur_oracle([1.0, 2.0, 4.0], [0, 0, 0]) == 0.0
    assert schur_oracle([1.0, 2.0], [1, 0]) == pytest.approx(0.5 * math.log(1.5), rel=1e-12)
    # s_(0,0,-1)(x) = e_2(x) / e_3(x) = sum 1/x_i and s_(0,0,-1)(1,1,1) = 3
    assert schur_oracle([1.0, 2.0, 4.0], [0, 0, -1]) == pytest.approx(math.log(7.0 / 12.0) / 3, rel=1e-12)
    # shift by kappa_N: s_(2,2)(x) = (x_1 x_2)^2
    assert schur_oracle([1.5, 3.0], [2, 2]) == pytest.approx(math.log(4.5 ** 2) / 2, rel=1e-12)


@pytest.mark.parametrize("K", [1, 3, 5, 8])
def test_schur_oracle_matches_complete_homogeneous(K):
    x = np.array([1.0, 1.5, 2.0, 2.5, 3.0])
    N = x.size
    expected = (_log_complete_homogeneous(x, K) - math.log(math.comb(N + K - 1, K))) / N
    assert schur_oracle(x, [K]) == pytest.approx(expected, rel=1e-6)


def test_schur_oracle_matches_quadrature():
    """At beta = 2 the rank-one quadrature and the Schur ratio are the same number"""
    assert schur_oracle([1.0, 2.0], [3, 0]) == pytest.approx(
        exact_rank1_two_atoms((1.0, 2.0), (1, 1), 1.5, 2, 2), rel=1e-9)


def test_schur_oracle_errors():
    with pytest.raises(OverflowError):
        schur_oracle(np.linspace(1.0, 2.0, 17), [1])
    with pytest.raises(OverflowError):
        schur_oracle([1.0, 2.0, 3.0], [2000, 0, 0])
    with pytest.raises(DegenerateEigsError):
        schur_oracle([1.0, 1.0 + 1e-9, 2.0], [1, 0, 0])
    with pytest.raises(DegenerateEigsError):
        schur_oracle([-1.0, 2.0], [1, 0])
    with pytest.raises(DomainError):
        schur_oracle([1.0, 2.0], [0, 1])


def test_schur_oracle_matches_haar_small():
    x = (1.0, 1.4, 2.0, 2.6)
    spec = SpectrumSpec(DiscreteMeasure.uniform(x), N=4, beta=2)
    estimate = estimate_In(spec, (0.5,), n_samples=6400, n_batches=32, seed=50)
    exact = schur_oracle(x, signature_from_thetas((0.5,), 4))
    assert abs(estimate.log_mean_per_n - exact) <= 4 * estimate.stderr + 1e-4


# -- convergence study --------------------------------------------------------

def test_convergence_study_identity():
    spec = SpectrumSpec(DiscreteMeasure.point_mass(1.0), N=1)
    rows = convergence_study(spec, (1.0,), [4, 8, 16], n_samples=64, n_batches=4, seed=0)
    assert [r.N for r in rows] == [4, 8, 16]
    assert all(r.gap == pytest.approx(0.0, abs=1e-14) for r in rows)


def test_convergence_study_point_mass():
    spec = SpectrumSpec(DiscreteMeasure.point_mass(3.0), N=1)
    rows = convergence_study(spec, ThetaVector((2.0,)), [8, 16], n_samples=64, n_batches=4, seed=0)
    for row in rows:
        assert row.j_target == pytest.approx(math.log(3.0), rel=1e-12)
        assert row.gap == pytest.approx(0.0, abs=1e-12)
        assert row.estimate.stderr == 0.0

    frame = rows_to_frame(rows)
    assert list(frame.columns) == CLI_CONFIG["csv_headers"]["converge"]
    assert len(frame) == 2


def test_convergence_study_rejects_unsorted_sizes(two_atoms):
    with pytest.raises(DomainError):
        convergence_study(SpectrumSpec(two_atoms, N=1), (1.0,), [16, 8], n_samples=64, n_batches=4, seed=0)


# -- acceptance runs ----------------------------------------------------------

@pytest.mark.slow
def test_quadrature_triangle(two_atoms):
    spec = SpectrumSpec(two_atoms, upper_outliers=(2.0,), N=200)
    exact = exact_rank1_two_atoms(two_atoms, (100, 100), 1.0, 1, 200)
    assert abs(exact - 0.5 * J_ONE_TWO) <= 0.02

    estimate = estimate_In(spec, (1.0,), n_samples=100000, n_batches=32, seed=2024)
    assert abs(estimate.log_mean_per_n - exact) <= 3 * estimate.stderr + 1e-4


@pytest.mark.slow
def test_haar_at_n128_matches_rate(two_atoms):
    spec = SpectrumSpec(two_atoms, upper_outliers=(2.0,), N=128)
    estimate = estimate_In(spec, (1.0,), n_samples=100000, n_batches=32, seed=7)
    target = 0.5 * rate_single(1.0, 2.0, two_atoms).j_value
    assert abs(estimate.log_mean_per_n - target) <= 3 * estimate.stderr + 0.02


@pytest.mark.slow
def test_schur_oracle_matches_haar_n12():
    x = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5)
    spec = SpectrumSpec(DiscreteMeasure.uniform(x), N=12, beta=2)
    exact = schur_oracle(x, signature_from_thetas((1.0,), 12))
    estimate = estimate_In(spec, (1.0,), n_samples=100000, n_batches=32, seed=12)
    assert abs(estimate.log_mean_per_n - exact) <= 3 * estimate.stderr + 1e-4


@pytest.mark.slow
def test_two_theta_additivity(two_atoms):
    """The larger theta pairs with the larger outlier"""
    spec = SpectrumSpec(two_atoms, upper_outliers=(2.5, 2.2), N=128)
    estimate = estimate_In(spec, (1.0, 0.5), n_samples=100000, n_batches=32, seed=77)
    target = 0.5 * (rate_single(1.0, 2.5, two_atoms).j_value + rate_single(0.5, 2.2, two_atoms).j_value)
    assert abs(estimate.log_mean_per_n - target) <= 3 * estimate.stderr + 0.05


@pytest.mark.slow
def test_convergence_trend(two_atoms):
    spec = SpectrumSpec(two_atoms, upper_outliers=(2.0,), N=32)
    rows = convergence_study(spec, (1.0,), [32, 64, 128, 256], n_samples=32000, n_batches=32, seed=99)
    assert rows[0].j_target == pytest.approx(0.5 * J_ONE_TWO, abs=1e-6)
    for a, b in zip(rows, rows[1:]):
        combined = math.hypot(a.estimate.stderr, b.estimate.stderr)
        assert abs(b.gap) <= abs(a.gap) + 3 * combined
