"""
Rank-one variational problem on the simplex and the deflation identities

sup over gamma in the simplex of f(gamma) = theta log <mu, gamma> - H(gamma), with
H the Dirichlet rate -sum alpha_i log(gamma_i / alpha_i). The supremum equals
J(theta, edge, mu); the closed form is checked against an exponentiated-gradient
ascent. The secular roots and the change of variables reduce a k-component
problem at size N to a (k-1)-component one.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from config import NUMERIC_CONFIG, VARIATIONAL_CONFIG
from errors import ConvergenceError, DomainError, IdentityError
from measure import DiscreteMeasure
from rate import Regime, rate_single, regime_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimplexPoint:
    gamma: Tuple[float, ...]

    def __post_init__(self):
        gamma = tuple(float(g) for g in self.gamma)
        if any(not g >= 0 for g in gamma):
            raise DomainError(f"Simplex coordinates must be >= 0, got {gamma}")
        if abs(math.fsum(gamma) - 1.0) > NUMERIC_CONFIG["weight_sum_tol"]:
            raise DomainError(f"Simplex coordinates sum to {math.fsum(gamma)!r}, not 1")
        object.__setattr__(self, "gamma", gamma)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.gamma)

    def __len__(self) -> int:
        return len(self.gamma)


@dataclass
class VariationalSolution:
    theta: float
    gamma_star: SimplexPoint
    c: float
    f_value: float
    regime: Regime
    iterations: int = 0

    def to_dict(self) -> Dict:
        return {
            "theta": self.theta,
            "gamma": list(self.gamma_star.gamma),
            "c": self.c,
            "f": self.f_value,
            "regime": self.regime.value,
            "iterations": self.iterations,
        }


GammaLike = Union[SimplexPoint, Sequence[float], np.ndarray]


def _as_gamma(gamma: GammaLike) -> np.ndarray:
    if isinstance(gamma, SimplexPoint):
        return gamma.as_array()
    return np.asarray(gamma, dtype=float)


def dirichlet_rate(gamma: GammaLike, alpha: Sequence[float]) -> float:
    """H(gamma) = -sum_{alpha_i > 0} alpha_i log(gamma_i / alpha_i), +inf when gamma misses mass"""
    g = _as_gamma(gamma)
    a = np.asarray(alpha, dtype=float)
    keep = a > 0
    if np.any(g[keep] <= 0):
        return math.inf
    return float(-np.sum(a[keep] * np.log(g[keep] / a[keep])))


def objective_f(theta: float, gamma: GammaLike, mu: DiscreteMeasure) -> float:
    g = _as_gamma(gamma)
    if g.size != len(mu):
        raise DomainError(f"gamma has {g.size} entries for {len(mu)} atoms")
    h = dirichlet_rate(g, mu.weights)
    if math.isinf(h):
        return -math.inf
    if theta == 0:
        return -h
    return theta * math.log(float(np.dot(g, mu.atoms))) - h


def _designated_edge(theta: float, mu: DiscreteMeasure, top_weight_zero: bool) -> Tuple[int, float]:
    """Index and position of the atom the optimiser may pile mass onto"""
    weights = np.asarray(mu.weights)
    idx = len(mu) - 1 if theta > 0 else 0
    if top_weight_zero:
        if weights[idx] != 0:
            raise DomainError(f"Atom {mu.atoms[idx]} was marked as a zero-weight outlier but has weight {weights[idx]}")
        return idx, mu.atoms[idx]
    positive = np.flatnonzero(weights > 0)
    idx = int(positive[-1] if theta > 0 else positive[0])
    return idx, mu.atoms[idx]


def _active_mask(theta: float, mu: DiscreteMeasure, top_weight_zero: bool) -> np.ndarray:
    # zero-weight atoms other than the designated edge never carry mass
    mask = np.asarray(mu.weights) > 0
    if theta != 0:
        idx, _ = _designated_edge(theta, mu, top_weight_zero)
        mask[idx] = True
    return mask


def solve_rank1(theta: float, mu: DiscreteMeasure, top_weight_zero: bool = False) -> VariationalSolution:
    """
    Closed-form optimiser gamma_i = alpha_i / (theta + 1 - theta mu_i / c) on the
    bulk atoms, the designated edge atom taking 1 - sum of the rest.

    For theta > 0 the edge is the top atom, for theta < 0 the bottom one.
    top_weight_zero marks that edge as an outlier carrying no mass in mu.
    """
    alpha = np.asarray(mu.weights)
    atoms = np.asarray(mu.atoms)

    if theta == 0:
        return VariationalSolution(0.0, SimplexPoint(tuple(alpha)), mu.mean, 0.0, Regime.S_TRANSFORM)

    edge_idx, edge = _designated_edge(theta, mu, top_weight_zero)
    bulk = mu.positive_part()
    try:
        component = rate_single(theta, edge, bulk)
    except DomainError as e:
        raise DomainError(f"theta = {theta} does not match the designated edge {edge}: {e}") from e
    c = component.c

    gamma = np.zeros_like(alpha)
    bulk_idx = np.flatnonzero(alpha > 0)
    bulk_idx = bulk_idx[bulk_idx != edge_idx]
    gamma[bulk_idx] = alpha[bulk_idx] / (theta + 1.0 - theta * atoms[bulk_idx] / c)

    edge_mass = 1.0 - math.fsum(gamma[bulk_idx])
    if edge_mass < -NUMERIC_CONFIG["weight_sum_tol"]:
        raise ConvergenceError(f"Edge mass {edge_mass} is negative; the closed form is inconsistent")
    gamma[edge_idx] = max(edge_mass, 0.0)

    point = SimplexPoint(tuple(gamma / gamma.sum()))
    f_value = objective_f(theta, point, mu)
    logger.debug(f"solve_rank1: theta={theta} regime={component.regime.value} c={c:.12g} f={f_value:.12g}")
    return VariationalSolution(theta, point, c, f_value, component.regime)


def _gradient(theta: float, gamma: np.ndarray, atoms: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    grad = theta * atoms / float(np.dot(gamma, atoms))
    keep = alpha > 0
    grad[keep] += alpha[keep] / gamma[keep]
    return grad


def maximize_simplex(theta: float, mu: DiscreteMeasure, iters: Optional[int] = None,
                     step: Optional[float] = None, seed: Optional[int] = None,
                     top_weight_zero: bool = False) -> VariationalSolution:
    """
    Exponentiated-gradient ascent of f on the simplex.

    The multiplicative update is carried out on log gamma with the max
    subtracted before exponentiating. A step that lowers f is rejected and the
    step halved; accepted steps grow it back up to max_step. Stops at the KKT
    condition max_i gamma_i |df/dgamma_i - (theta + 1)| < kkt_tol.
    """
    iters = iters or VARIATIONAL_CONFIG["max_iters"]
    step = step or VARIATIONAL_CONFIG["step"]
    max_step = VARIATIONAL_CONFIG["max_step"]
    growth = VARIATIONAL_CONFIG["step_growth"]
    kkt_tol = VARIATIONAL_CONFIG["kkt_tol"]
    max_declines = VARIATIONAL_CONFIG["max_consecutive_declines"]
    if iters < 1:
        raise DomainError("iters must be >= 1")

    mask = _active_mask(theta, mu, top_weight_zero)
    atoms = np.asarray(mu.atoms)[mask]
    alpha = np.asarray(mu.weights)[mask]
    n = atoms.size

    def embed(g: np.ndarray) -> np.ndarray:
        full = np.zeros(len(mu))
        full[mask] = g
        return full

    def value(g: np.ndarray) -> float:
        return objective_f(theta, embed(g), mu)

    if seed is None:
        gamma = np.full(n, 1.0 / n)
    else:
        rng = np.random.default_rng(seed)
        gamma = 0.5 / n + 0.5 * rng.dirichlet(np.ones(n))
        gamma /= gamma.sum()

    log_gamma = np.log(gamma)
    f_current = value(gamma)
    declines = 0
    iteration = 0

    for iteration in range(1, iters + 1):
        grad = _gradient(theta, gamma, atoms, alpha)
        kkt = float(np.max(gamma * np.abs(grad - (theta + 1.0))))
        if kkt < kkt_tol:
            break

        proposal = log_gamma + step * grad
        proposal -= proposal.max()
        candidate = np.exp(proposal)
        candidate /= candidate.sum()
        f_candidate = value(candidate)

        if f_candidate >= f_current:
            gamma, f_current = candidate, f_candidate
            log_gamma = np.log(np.maximum(gamma, np.finfo(float).tiny))
            step = min(step * growth, max_step)
            declines = 0
            continue

        # rejections within rounding of f_current mean the ascent has stalled at the optimum
        if f_current - f_candidate <= 8 * np.finfo(float).eps * (1.0 + abs(f_current)):
            break
        step *= 0.5
        declines += 1
        if declines >= max_declines:
            raise ConvergenceError(f"Objective decreased on {declines} consecutive steps "
                                   f"(theta={theta}, f={f_current:.12g})")
    else:
        logger.debug(f"maximize_simplex hit the {iters} iteration cap with kkt={kkt:.3e}")

    c = float(np.dot(gamma, atoms))
    regime = Regime.S_TRANSFORM
    if theta != 0:
        _, edge = _designated_edge(theta, mu, top_weight_zero)
        regime = regime_of(theta, edge, mu.positive_part())

    point = SimplexPoint(tuple(embed(gamma)))
    return VariationalSolution(theta, point, c, f_current, regime, iteration)


def _atoms_of(mu: Union[DiscreteMeasure, Sequence[float]]) -> np.ndarray:
    if isinstance(mu, DiscreteMeasure):
        return np.asarray(mu.atoms)
    return np.asarray(mu, dtype=float)


def secular_roots(gamma: GammaLike, mu: Union[DiscreteMeasure, Sequence[float]], m: int, k: int) -> np.ndarray:
    """
    Roots of sum_i gamma_i mu_i / (z - mu_i) = 0, one in each gap between
    consecutive atoms. Returns the m smallest and the k-m-1 largest, ascending.
    """
    g = _as_gamma(gamma)
    atoms = _atoms_of(mu)
    if g.size != atoms.size:
        raise DomainError(f"gamma has {g.size} entries for {atoms.size} atoms")
    if np.any(g <= 0):
        raise ConvergenceError(f"Secular brackets need gamma > 0, got {g}")
    if np.any(np.diff(atoms) <= 0):
        raise DomainError("Atoms must be strictly increasing")

    n_lower, n_upper = m, k - m - 1
    if n_lower < 0 or n_upper < 0 or n_lower + n_upper > atoms.size - 1:
        raise DomainError(f"Cannot take {n_lower} lower and {n_upper} upper roots from {atoms.size - 1} gaps")

    weights = g * atoms

    def secular(z: float) -> float:
        return float(np.sum(weights / (z - atoms)))

    gaps = list(range(n_lower)) + list(range(atoms.size - 1 - n_upper, atoms.size - 1))
    roots = []
    for j in gaps:
        left, right = atoms[j], atoms[j + 1]
        shrink = 1e-14 * (right - left)
        lo, hi = left + shrink, right - shrink
        if not (secular(lo) > 0 > secular(hi)):
            raise ConvergenceError(f"No sign change of the secular function on ({left}, {right})")
        roots.append(brentq(secular, lo, hi, xtol=1e-15 * right, rtol=4 * np.finfo(float).eps, maxiter=500))

    return np.asarray(roots)


def change_of_variables(gamma: GammaLike, chis: Sequence[float], mu: Union[DiscreteMeasure, Sequence[float]],
                        m: int) -> Tuple[np.ndarray, float]:
    """
    gamma_bar_i = gamma_i * prod_j chi_j (p_j - mu_i) / (p_j (chi_j - mu_i)), where each
    lower root chi_j is paired with the atom just below it and each upper root with
    the atom just above. The paired atoms leave the index set; b = prod_j chi_j / p_j.

    Checks sum gamma_bar = 1 and sum mu gamma_bar = b sum mu gamma.
    """
    g = _as_gamma(gamma)
    atoms = _atoms_of(mu)
    chis = np.asarray(chis, dtype=float)
    tol = VARIATIONAL_CONFIG["identity_tol"]

    if chis.size == 0:
        return g.copy(), 1.0

    n_upper = chis.size - m
    if m < 0 or n_upper < 0 or chis.size > atoms.size - 1:
        raise DomainError(f"{chis.size} roots with m={m} do not fit {atoms.size} atoms")

    paired = np.concatenate([atoms[:m], atoms[atoms.size - n_upper:]])
    reduced = np.arange(m, atoms.size - n_upper)
    mu_r = atoms[reduced]

    factor = np.ones(reduced.size)
    for chi, p in zip(chis, paired):
        factor *= chi * (p - mu_r) / (p * (chi - mu_r))
    gamma_bar = g[reduced] * factor
    b = float(np.prod(chis / paired))

    mass = float(gamma_bar.sum())
    if abs(mass - 1.0) > tol:
        raise IdentityError(f"Transformed weights sum to {mass!r}, not 1")
    lhs = float(np.dot(mu_r, gamma_bar))
    rhs = b * float(np.dot(atoms, g))
    if abs(lhs - rhs) > tol * (1.0 + abs(rhs)):
        raise IdentityError(f"First moment identity failed: {lhs!r} vs {rhs!r}")

    return gamma_bar, b
