"""
Limiting rate function J(theta, lambda, mu) of multiplicative spherical integrals

(1/N) log I_N(theta, X_N) converges to (beta/2) * sum_i J(theta_sigma(i), lambda_i, mu),
where the theta's are paired with the extreme eigenvalues by rank.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import NUMERIC_CONFIG
from errors import DomainError
from measure import DiscreteMeasure, TransformValue, log_potential, s_tilde, stieltjes, t_inverse, t_transform

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    STUCK_TO_EDGE = "STUCK_TO_EDGE"
    S_TRANSFORM = "S_TRANSFORM"


@dataclass(frozen=True)
class ThetaVector:
    """Finite-support argument (theta_1, ..., theta_k) with its sign split"""
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(t) for t in self.values)
        if any(not math.isfinite(t) for t in values):
            raise DomainError(f"theta entries must be finite, got {values}")
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def sigma(self) -> Tuple[int, ...]:
        """Stable permutation sorting the values ascending"""
        return tuple(int(i) for i in np.argsort(np.asarray(self.values), kind="stable"))

    @property
    def m(self) -> int:
        """Number of nonpositive entries"""
        return sum(1 for t in self.values if t <= 0)

    @property
    def n_negative(self) -> int:
        """Number of negative entries, paired with lower outliers"""
        return sum(1 for t in self.values if t < 0)

    @property
    def sorted_values(self) -> Tuple[float, ...]:
        return tuple(self.values[i] for i in self.sigma)

    def tail(self) -> "ThetaVector":
        """(theta_2, ..., theta_k), the argument left after one deflation step"""
        return ThetaVector(self.values[1:])

    def scaled(self, factor: float) -> "ThetaVector":
        return ThetaVector(tuple(factor * t for t in self.values))


@dataclass(frozen=True)
class OutlierSet:
    """Limits of the extreme eigenvalues paired with the theta's"""
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        for name, seq in (("lower", lower), ("upper", upper)):
            if any(v <= 0 for v in seq):
                raise DomainError(f"{name} outliers must be > 0, got {seq}")
            if any(b < a for a, b in zip(seq, seq[1:])):
                raise DomainError(f"{name} outliers must be ascending, got {seq}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def k(self) -> int:
        return len(self.lower) + len(self.upper)

    @property
    def m(self) -> int:
        return len(self.lower)

    def as_list(self) -> List[float]:
        return list(self.lower) + list(self.upper)


@dataclass
class RateComponent:
    """One term J(theta, lambda, mu) with the quantities it was built from"""
    theta: float
    lam: float
    c: float
    d: Optional[float]
    regime: Regime
    j_value: float

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["regime"] = self.regime.value
        return data


@dataclass
class RateResult:
    total: float
    components: List[RateComponent] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"total": self.total, "components": [c.to_dict() for c in self.components]}

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"theta": c.theta, "lambda": c.lam, "c": c.c, "d": c.d, "regime": c.regime.value, "J": c.j_value}
            for c in self.components
        ]
        return pd.DataFrame(rows, columns=["theta", "lambda", "c", "d", "regime", "J"])


def _edge_close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=NUMERIC_CONFIG["edge_rel_tol"], abs_tol=0.0)


def _check_domain(theta: float, lam: float, mu: DiscreteMeasure):
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    if theta > 0 and lam < mu.right_edge and not _edge_close(lam, mu.right_edge):
        raise DomainError(f"theta = {theta} > 0 needs lambda >= r(mu) = {mu.right_edge}, got {lam}")
    if theta < 0 and lam > mu.left_edge and not _edge_close(lam, mu.left_edge):
        raise DomainError(f"theta = {theta} < 0 needs lambda <= l(mu) = {mu.left_edge}, got {lam}")


def _is_stuck(theta: float, t_lam: TransformValue) -> bool:
    if t_lam.is_infinite:
        return False
    if theta > 0:
        return 0 <= t_lam.value < theta
    return theta < t_lam.value <= 0


def regime_of(theta: float, lam: float, mu: DiscreteMeasure) -> Regime:
    """Which branch of the dichotomy (theta, lambda) falls in"""
    if theta == 0 or theta == -1:
        return Regime.S_TRANSFORM
    _check_domain(theta, lam, mu)
    return Regime.STUCK_TO_EDGE if _is_stuck(theta, t_transform(mu, lam)) else Regime.S_TRANSFORM


def rate_single(theta: float, lam: float, mu: DiscreteMeasure) -> RateComponent:
    """
    J(theta, lambda, mu) = (theta+1) log c - log|theta| - int log|d - x| dmu(x)

    with d = (theta+1) c / theta and c = theta lambda / (theta+1) when the
    outlier holds the optimiser (theta beyond T_mu(lambda)), c = S~_mu(theta)
    otherwise.
    """
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    if theta == 0:
        return RateComponent(0.0, lam, mu.mean, None, Regime.S_TRANSFORM, 0.0)

    _check_domain(theta, lam, mu)

    if theta == -1:
        return RateComponent(-1.0, lam, mu.harmonic_mean, 0.0, Regime.S_TRANSFORM, -mu.log_mean)

    regime = regime_of(theta, lam, mu)
    if regime is Regime.STUCK_TO_EDGE:
        d = lam
        c = theta * lam / (theta + 1.0)
    else:
        d = t_inverse(mu, theta, allow_nonpositive=True)
        c = theta / (theta + 1.0) * d

    if not c > 0:
        raise DomainError(f"c = {c} is not positive for theta={theta}, lambda={lam}")

    j_value = (theta + 1.0) * math.log(c) - math.log(abs(theta)) - log_potential(mu, d)
    return RateComponent(theta, lam, c, d, regime, j_value)


def rate_integral_form(theta: float, lam: float, mu: DiscreteMeasure, n_points: int = None) -> float:
    """J as the integral of log S~_mu from 0 to theta (S-transform regime only)"""
    n_points = n_points or NUMERIC_CONFIG["gauss_legendre_nodes"]
    if theta == 0:
        return 0.0
    if regime_of(theta, lam, mu) is Regime.STUCK_TO_EDGE:
        raise DomainError(f"theta = {theta} lies beyond T_mu({lam}); the integral form does not apply")

    nodes, weights = np.polynomial.legendre.leggauss(n_points)
    points = 0.5 * theta * (nodes + 1.0)
    values = np.array([math.log(s_tilde(mu, float(t))) for t in points])
    return float(0.5 * theta * np.dot(weights, values))


def rate_multi(thetas: ThetaVector, outliers: OutlierSet, mu: DiscreteMeasure) -> RateResult:
    """Sum of J(theta_sigma(i), lambda_i, mu); the beta/2 prefactor is left to the caller"""
    if outliers.k != thetas.k:
        raise DomainError(f"{thetas.k} theta entries but {outliers.k} outliers")

    m = outliers.m
    ordered = thetas.sorted_values
    if any(t > 0 for t in ordered[:m]) or any(t < 0 for t in ordered[m:]):
        raise DomainError(f"{m} lower outliers do not match the sign split of theta = {thetas.values}")

    components = [rate_single(t, lam, mu) for t, lam in zip(ordered, outliers.as_list())]
    total = math.fsum(c.j_value for c in components)
    logger.debug(f"rate_multi: theta={thetas.values} lambda={outliers.as_list()} total={total:.12g}")
    return RateResult(total, components)


def rate_partial_lambda(theta: float, lam: float, mu: DiscreteMeasure) -> float:
    """dJ/dlambda for theta >= 0: (theta+1)/lambda - G_mu(lambda) when stuck, else 0"""
    if theta < 0:
        raise DomainError("dJ/dlambda is only provided for theta >= 0")
    if theta == 0:
        return 0.0
    if regime_of(theta, lam, mu) is Regime.S_TRANSFORM:
        return 0.0
    return (theta + 1.0) / lam - stieltjes(mu, lam).value


def continuity_bounds(theta: float, theta2: float, lam: float, lam2: float,
                      mu: DiscreteMeasure) -> Tuple[float, float]:
    """
    Lipschitz moduli of J on theta >= 0, lambda >= r(mu):
    |J(t,l) - J(t,l')| <= t |ln l - ln l'| and |J(t,l) - J(t',l)| <= ln l |t - t'|
    """
    for t in (theta, theta2):
        if t < 0:
            raise DomainError(f"continuity bounds need theta >= 0, got {t}")
    for v in (lam, lam2):
        _check_domain(1.0, v, mu)

    bound_lambda = theta * abs(math.log(lam) - math.log(lam2))
    bound_theta = math.log(lam) * abs(theta - theta2)
    return bound_lambda, bound_theta


def outliers_for(spec, thetas: ThetaVector) -> OutlierSet:
    """
    Pairing targets for a spectrum recipe: the m smallest eigenvalue limits for
    the m negative theta's and the k-m largest for the others, padded with the
    bulk edges when the recipe pins fewer outliers.
    """
    m = thetas.n_negative
    n_upper = thetas.k - m

    lower = sorted(spec.lower_outliers)[:m]
    lower = lower + [spec.bulk.left_edge] * (m - len(lower))

    upper = sorted(spec.upper_outliers)[-n_upper:] if n_upper else []
    upper = [spec.bulk.right_edge] * (n_upper - len(upper)) + upper

    return OutlierSet(tuple(lower), tuple(upper))


def rate_for_thetas(thetas: Sequence[float], lower: Sequence[float], upper: Sequence[float],
                    mu: DiscreteMeasure) -> RateResult:
    return rate_multi(ThetaVector(tuple(thetas)), OutlierSet(tuple(lower), tuple(upper)), mu)
