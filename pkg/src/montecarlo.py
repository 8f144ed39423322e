"""
Monte Carlo estimation of (1/N) log I_N(theta, X_N) and exact small-scale oracles

All aggregation happens in the log domain. Each batch draws from its own
SeedSequence child, so results do not depend on the number of worker threads.
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import betaln, gammaln, logsumexp
from tqdm import tqdm

from config import MONTE_CARLO_CONFIG, SCHUR_CONFIG
from errors import DegenerateEigsError, DomainError, QuadratureError, SeedError, SizeError
from measure import DiscreteMeasure
from randmat import SpectrumSpec, build_spectrum, haar_frame, log_delta, spectrum_blocks
from rate import OutlierSet, ThetaVector, outliers_for, rate_multi
from variational import SimplexPoint, solve_rank1

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence]


@dataclass
class McEstimate:
    """Estimate of (1/N) log I_N with its batch-means standard error"""
    log_mean_per_n: float
    stderr: float
    n_samples: int
    n_batches: int
    N: int = 0
    ess: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "N": self.N,
            "estimate": self.log_mean_per_n,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "n_batches": self.n_batches,
            "ess": self.ess,
            "warnings": list(self.warnings),
        }


@dataclass
class ConvergenceRow:
    N: int
    estimate: McEstimate
    j_target: float

    @property
    def gap(self) -> float:
        return self.estimate.log_mean_per_n - self.j_target

    def to_dict(self) -> Dict:
        return {
            "N": self.N,
            "estimate": self.estimate.log_mean_per_n,
            "stderr": self.estimate.stderr,
            "target": self.j_target,
            "gap": self.gap,
        }


def rows_to_frame(rows: Sequence[ConvergenceRow]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in rows], columns=["N", "estimate", "stderr", "target", "gap"])


# -- batching -----------------------------------------------------------------

def _batch_streams(n_batches: int, seed: SeedLike, batch_seeds: Optional[Sequence[int]]) -> List[np.random.Generator]:
    if batch_seeds is not None:
        batch_seeds = list(batch_seeds)
        if len(batch_seeds) != n_batches:
            raise SeedError(f"{len(batch_seeds)} batch seeds for {n_batches} batches")
        if len(set(batch_seeds)) != len(batch_seeds):
            raise SeedError(f"Duplicate batch seeds: {batch_seeds}")
        return [np.random.default_rng(s) for s in batch_seeds]
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in root.spawn(n_batches)]


def _check_counts(n_samples: int, n_batches: int):
    if n_batches < 2:
        raise DomainError("At least two batches are needed for a standard error")
    if n_samples < n_batches or n_samples % n_batches:
        raise DomainError(f"n_samples = {n_samples} is not a positive multiple of n_batches = {n_batches}")


def _run_batches(draw_log_weights: Callable[[np.random.Generator, int], np.ndarray],
                 streams: List[np.random.Generator], batch_size: int,
                 n_workers: int, show_progress: bool, chunk: Optional[int] = None) -> List[np.ndarray]:
    """Log weights of every batch, in batch order"""
    chunk = chunk or MONTE_CARLO_CONFIG["chunk_size"]

    def run(rng: np.random.Generator) -> np.ndarray:
        parts = []
        remaining = batch_size
        while remaining > 0:
            size = min(chunk, remaining)
            parts.append(draw_log_weights(rng, size))
            remaining -= size
        return np.concatenate(parts)

    if n_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as executor:
            results = executor.map(run, streams)
            return list(tqdm(results, total=len(streams), desc="batches", disable=not show_progress))
    return [run(rng) for rng in tqdm(streams, desc="batches", disable=not show_progress)]


def _aggregate(batches: List[np.ndarray], N: int) -> McEstimate:
    """
    Pooled log-mean of all weights; the standard error comes from the spread of
    the batch means around it (delta method on the log).
    """
    batch_size = batches[0].size
    n_batches = len(batches)
    batch_log_means = np.array([logsumexp(w) - math.log(w.size) for w in batches])
    pooled = float(logsumexp(batch_log_means) - math.log(n_batches))
    ratios = np.exp(batch_log_means - pooled)
    stderr = float(np.std(ratios, ddof=1) / math.sqrt(n_batches))

    all_w = np.concatenate(batches)
    ess = float(np.exp(2 * logsumexp(all_w) - logsumexp(2 * all_w)))
    return McEstimate(pooled / N, stderr / N, batch_size * n_batches, n_batches, N, ess)


def _resolve(n_samples, n_batches, n_workers, show_progress):
    n_batches = n_batches or MONTE_CARLO_CONFIG["n_batches"]
    n_samples = n_samples or 1000 * n_batches
    n_workers = n_workers or MONTE_CARLO_CONFIG["n_workers"]
    show_progress = MONTE_CARLO_CONFIG["show_progress"] if show_progress is None else show_progress
    _check_counts(n_samples, n_batches)
    return n_samples, n_batches, n_workers, show_progress


def _deterministic(value_per_n: float, n_samples: int, n_batches: int, N: int) -> McEstimate:
    return McEstimate(value_per_n, 0.0, n_samples, n_batches, N, float(n_samples))


def _theta_vector(thetas) -> ThetaVector:
    return thetas if isinstance(thetas, ThetaVector) else ThetaVector(tuple(np.atleast_1d(thetas)))


# -- estimators ---------------------------------------------------------------

def estimate_In(spec: SpectrumSpec, thetas, n_samples: Optional[int] = None, n_batches: Optional[int] = None,
                seed: SeedLike = None, batch_seeds: Optional[Sequence[int]] = None,
                n_workers: Optional[int] = None, show_progress: Optional[bool] = None) -> McEstimate:
    """
    (1/N) log of the Haar average of Delta_theta(U* X_N U)^(beta N / 2).

    Only the first k columns of U enter Delta_theta, so each sample is a thin
    QR of an N x k Gaussian matrix.
    """
    thetas = _theta_vector(thetas)
    n_samples, n_batches, n_workers, show_progress = _resolve(n_samples, n_batches, n_workers, show_progress)
    eigs = build_spectrum(spec)
    N, k, beta = spec.N, thetas.k, spec.beta
    if k > N:
        raise SizeError(f"{k} theta entries exceed N = {N}")

    if np.all(eigs == eigs[0]):
        # every leading minor of c0 I is c0^i
        value = 0.5 * beta * math.fsum(thetas.values) * math.log(float(eigs[0]))
        return _deterministic(value, n_samples, n_batches, N)

    scale = 0.5 * beta * N

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        frame = haar_frame(N, k, beta, rng, size)
        block = np.einsum("sni,n,snj->sij", frame.conj(), eigs, frame)
        return scale * log_delta(block, thetas)

    # keep one chunk of frames around a few million entries
    chunk = max(1, min(MONTE_CARLO_CONFIG["chunk_size"], 2 ** 21 // (N * k)))
    streams = _batch_streams(n_batches, seed, batch_seeds)
    batches = _run_batches(draw, streams, n_samples // n_batches, n_workers, show_progress, chunk)
    estimate = _aggregate(batches, N)
    logger.info(f"estimate_In: N={N} beta={beta} theta={thetas.values} "
                f"-> {estimate.log_mean_per_n:.6f} +/- {estimate.stderr:.2e}")
    return estimate


def _dirichlet_log_mean(rng: np.random.Generator, params: np.ndarray, atoms: np.ndarray, size: int
                        ) -> Tuple[np.ndarray, np.ndarray]:
    draws = np.maximum(rng.standard_gamma(params, size=(size, params.size)), np.finfo(float).tiny)
    gamma = draws / draws.sum(axis=1, keepdims=True)
    return gamma, np.log(gamma @ atoms)


def estimate_In_rank1_dirichlet(spec: SpectrumSpec, theta: float, n_samples: Optional[int] = None,
                                n_batches: Optional[int] = None, seed: SeedLike = None,
                                batch_seeds: Optional[Sequence[int]] = None, n_workers: Optional[int] = None,
                                show_progress: Optional[bool] = None) -> McEstimate:
    """
    k = 1 estimator sampling the block masses of a uniform sphere vector directly:
    gamma ~ Dirichlet(beta * counts / 2) and <e, X e> = sum mu_i gamma_i.
    """
    n_samples, n_batches, n_workers, show_progress = _resolve(n_samples, n_batches, n_workers, show_progress)
    atoms, counts = spectrum_blocks(spec)
    N, beta = spec.N, spec.beta

    if atoms.size == 1:
        return _deterministic(0.5 * beta * theta * math.log(float(atoms[0])), n_samples, n_batches, N)

    params = 0.5 * beta * counts.astype(float)
    scale = 0.5 * beta * N * theta

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        _, log_inner = _dirichlet_log_mean(rng, params, atoms, size)
        return scale * log_inner

    streams = _batch_streams(n_batches, seed, batch_seeds)
    batches = _run_batches(draw, streams, n_samples // n_batches, n_workers, show_progress)
    return _aggregate(batches, N)


def tilted_proposal(spec: SpectrumSpec, theta: float) -> SimplexPoint:
    """Optimiser of the rank-one problem for the block measure of X_N"""
    atoms, counts = spectrum_blocks(spec)
    empirical = DiscreteMeasure(tuple(atoms), tuple(counts / counts.sum()))
    return solve_rank1(theta, empirical).gamma_star


def _dirichlet_log_norm(params: np.ndarray) -> float:
    return float(gammaln(params.sum()) - gammaln(params).sum())


def estimate_In_tilted(spec: SpectrumSpec, theta: float, gamma_star: Optional[SimplexPoint] = None,
                       n_samples: Optional[int] = None, n_batches: Optional[int] = None,
                       seed: SeedLike = None, batch_seeds: Optional[Sequence[int]] = None,
                       n_workers: Optional[int] = None, show_progress: Optional[bool] = None) -> McEstimate:
    """
    Importance sampling from Dirichlet((beta N / 2) gamma_star), reweighted by the
    exact log density ratio to the target Dirichlet(beta * counts / 2).
    """
    n_samples, n_batches, n_workers, show_progress = _resolve(n_samples, n_batches, n_workers, show_progress)
    atoms, counts = spectrum_blocks(spec)
    N, beta = spec.N, spec.beta

    if atoms.size == 1:
        return _deterministic(0.5 * beta * theta * math.log(float(atoms[0])), n_samples, n_batches, N)

    gamma_star = gamma_star or tilted_proposal(spec, theta)
    centre = np.asarray(gamma_star.gamma)
    if centre.size != atoms.size:
        raise DomainError(f"Proposal has {centre.size} entries for {atoms.size} eigenvalue blocks")
    if np.any(centre <= 0):
        raise DomainError("Proposal centre must be strictly positive")

    target = 0.5 * beta * counts.astype(float)
    proposal = 0.5 * beta * N * centre
    log_norm_ratio = _dirichlet_log_norm(target) - _dirichlet_log_norm(proposal)
    scale = 0.5 * beta * N * theta

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        gamma, log_inner = _dirichlet_log_mean(rng, proposal, atoms, size)
        return scale * log_inner + log_norm_ratio + np.log(gamma) @ (target - proposal)

    streams = _batch_streams(n_batches, seed, batch_seeds)
    batches = _run_batches(draw, streams, n_samples // n_batches, n_workers, show_progress)
    estimate = _aggregate(batches, N)

    floor = MONTE_CARLO_CONFIG["ess_min_fraction"] * estimate.n_samples
    if estimate.ess < floor:
        message = f"LowESS: effective sample size {estimate.ess:.1f} below {floor:.1f}"
        logger.warning(message)
        estimate.warnings.append(message)
    return estimate


# -- exact oracles ------------------------------------------------------------

def exact_rank1_two_atoms(mu: Union[DiscreteMeasure, Sequence[float]], counts: Optional[Sequence[int]],
                          theta: float, beta: int, N: int) -> float:
    """
    (1/N) log E[(g mu_1 + (1-g) mu_2)^p], g ~ Beta(beta a_1 / 2, beta a_2 / 2), p = beta N theta / 2,
    by adaptive quadrature of the log-shifted integrand.
    """
    if isinstance(mu, DiscreteMeasure):
        atoms = mu.atoms
        if counts is None:
            _, counts = spectrum_blocks(SpectrumSpec(mu, N=N, beta=beta))
    else:
        atoms = tuple(float(v) for v in mu)
    if len(atoms) != 2 or counts is None or len(counts) != 2:
        raise DomainError("The two-atom oracle needs exactly two atoms and two counts")

    mu1, mu2 = atoms
    if theta == 0:
        return 0.0
    if mu1 == mu2:
        return 0.5 * beta * theta * math.log(mu1)

    a, b = 0.5 * beta * counts[0], 0.5 * beta * counts[1]
    p = 0.5 * beta * N * theta
    log_beta = betaln(a, b)
    rel_tol = MONTE_CARLO_CONFIG["quad_rel_tol"]
    limit = MONTE_CARLO_CONFIG["quad_limit"]

    def log_inner(g):
        return p * np.log(g * mu1 + (1.0 - g) * mu2)

    if a >= 1 and b >= 1:
        def log_integrand(g):
            return log_inner(g) + (a - 1) * np.log(g) + (b - 1) * np.log1p(-g) - log_beta

        grid = np.linspace(0.0, 1.0, 257)[1:-1]
        peak = grid[int(np.argmax(log_integrand(grid)))]
        bounds = (max(peak - 1 / 256, 1e-12), min(peak + 1 / 256, 1 - 1e-12))
        opt = minimize_scalar(lambda g: -log_integrand(g), bounds=bounds, method="bounded",
                              options={"xatol": 1e-12})
        mode = float(opt.x) if -opt.fun >= log_integrand(peak) else float(peak)
        shift = float(log_integrand(mode))
        value, error = quad(lambda g: math.exp(log_integrand(g) - shift), 0.0, 1.0, points=[mode],
                            epsabs=0.0, epsrel=rel_tol, limit=limit)
    else:
        # algebraic endpoint singularities are absorbed in the quadrature weight
        shift = max(p * math.log(mu1), p * math.log(mu2)) - log_beta
        value, error = quad(lambda g: math.exp(log_inner(g) - log_beta - shift), 0.0, 1.0,
                            weight="alg", wvar=(a - 1, b - 1), epsabs=0.0, epsrel=rel_tol, limit=limit)

    if not (value > 0 and math.isfinite(value)) or error > 100 * rel_tol * value:
        raise QuadratureError(f"Quadrature returned {value!r} with error estimate {error!r}")
    return (shift + math.log(value)) / N


def signature_from_thetas(thetas, N: int) -> np.ndarray:
    """kappa = N theta padded with zeros to length N; must be integral and weakly decreasing"""
    theta = np.asarray(_theta_vector(thetas).values)
    if theta.size > N:
        raise SizeError(f"{theta.size} theta entries exceed N = {N}")
    scaled = N * theta
    kappa = np.rint(scaled)
    if np.any(np.abs(scaled - kappa) > 1e-9 * np.maximum(1.0, np.abs(scaled))):
        raise DomainError(f"N * theta = {scaled} is not integral")
    kappa = np.concatenate([kappa, np.zeros(N - theta.size)]).astype(int)
    if np.any(np.diff(kappa) > 0):
        raise DomainError(f"Signature {kappa.tolist()} is not weakly decreasing")
    return kappa


def schur_oracle(eigs: Sequence[float], kappa: Sequence[int]) -> float:
    """
    (1/N) log s_kappa(x) / s_kappa(1^N), the beta = 2 spherical integral at a signature.

    Numerator by the bialternant det(x_j^(kappa_i + N - i)) / Vandermonde with
    per-column log scaling; s_kappa(1^N) by the hook-content product.
    """
    x = np.sort(np.asarray(eigs, dtype=float))[::-1]
    N = x.size
    kappa = np.asarray(kappa, dtype=int)
    if kappa.size < N:
        kappa = np.concatenate([kappa, np.zeros(N - kappa.size, dtype=int)])
    if kappa.size != N or np.any(np.diff(kappa) > 0):
        raise DomainError(f"kappa must be a weakly decreasing signature of length {N}")

    if N > SCHUR_CONFIG["max_n"] or N * int(np.max(np.abs(kappa))) > SCHUR_CONFIG["exponent_budget"]:
        raise OverflowError(f"N = {N}, max|kappa| = {int(np.max(np.abs(kappa)))} exceed the determinant budget")
    if np.any(x <= 0):
        raise DegenerateEigsError("Eigenvalues must be positive")
    if N > 1 and np.min(-np.diff(x) / x[:-1]) < SCHUR_CONFIG["min_rel_gap"]:
        raise DegenerateEigsError("Eigenvalues are too close for the bialternant formula")

    # s_kappa = (x_1...x_N)^kappa_N s_(kappa - kappa_N)
    base = int(kappa[-1])
    shifted = kappa - base
    logx = np.log(x)

    if not np.any(shifted):
        log_ratio = base * float(logx.sum())
        return log_ratio / N

    exponents = shifted + np.arange(N - 1, -1, -1)
    log_entries = exponents[:, None] * logx[None, :]
    col_shift = log_entries.max(axis=0)
    sign, log_det = np.linalg.slogdet(np.exp(log_entries - col_shift))
    if sign <= 0:
        raise DegenerateEigsError("Bialternant determinant lost its sign")
    log_num = float(log_det + col_shift.sum())

    i, j = np.triu_indices(N, k=1)
    log_vandermonde = float(np.sum(np.log(x[i] - x[j])))
    log_dim = float(np.sum(np.log((shifted[i] - shifted[j] + j - i) / (j - i))))

    log_ratio = base * float(logx.sum()) + log_num - log_vandermonde - log_dim
    return log_ratio / N


# -- convergence study --------------------------------------------------------

def convergence_study(spec: SpectrumSpec, thetas, n_list: Sequence[int], n_samples: Optional[int] = None,
                      n_batches: Optional[int] = None, seed: SeedLike = None,
                      outliers: Optional[OutlierSet] = None,
                      show_progress: Optional[bool] = None) -> List[ConvergenceRow]:
    """One row per N comparing estimate_In with (beta/2) * sum_i J(theta_sigma(i), lambda_i, mu)"""
    thetas = _theta_vector(thetas)
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise DomainError(f"N-list must be increasing, got {n_list}")

    outliers = outliers or outliers_for(spec, thetas)
    target = 0.5 * spec.beta * rate_multi(thetas, outliers, spec.bulk).total
    show_progress = MONTE_CARLO_CONFIG["show_progress"] if show_progress is None else show_progress

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rows = []
    for N, child in zip(tqdm(n_list, desc="N", disable=not show_progress), root.spawn(len(n_list))):
        estimate = estimate_In(spec.with_size(N), thetas, n_samples, n_batches, child)
        row = ConvergenceRow(N, estimate, target)
        logger.info(f"N={N}: estimate {estimate.log_mean_per_n:.6f} +/- {estimate.stderr:.2e}, "
                    f"target {target:.6f}, gap {row.gap:+.2e}")
        rows.append(row)
    return rows
