"""
Atomic probability measures on (0, inf) and their transforms

Stieltjes transform G, T-transform T(z) = z G(z) - 1, its inverse on the
branches outside the support, the modified S-transform and log-potentials.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from config import NUMERIC_CONFIG
from errors import ConvergenceError, DomainError, RangeError, SingularError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atomic probability measure sum_i alpha_i delta_{mu_i} with 0 < mu_1 < ... < mu_l"""
    atoms: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

        if len(atoms) == 0:
            raise DomainError("A measure needs at least one atom")
        if len(atoms) != len(weights):
            raise DomainError(f"{len(atoms)} atoms but {len(weights)} weights")
        if any(not math.isfinite(a) or a <= 0 for a in atoms):
            raise DomainError(f"Atoms must be finite and > 0, got {atoms}")
        if any(b <= a for a, b in zip(atoms, atoms[1:])):
            raise DomainError(f"Atoms must be strictly increasing, got {atoms}")
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise DomainError(f"Weights must be finite and >= 0, got {weights}")
        if abs(math.fsum(weights) - 1.0) > NUMERIC_CONFIG["weight_sum_tol"]:
            raise DomainError(f"Weights sum to {math.fsum(weights)!r}, not 1")

    # -- constructors -------------------------------------------------------

    @classmethod
    def point_mass(cls, c: float) -> "DiscreteMeasure":
        return cls((c,), (1.0,))

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "DiscreteMeasure":
        """Equal mass on each atom"""
        atoms = sorted(float(a) for a in atoms)
        return cls(tuple(atoms), tuple([1.0 / len(atoms)] * len(atoms)))

    @classmethod
    def from_masses(cls, atoms: Sequence[float], masses: Sequence[float]) -> "DiscreteMeasure":
        """Build from unnormalised nonnegative masses, sorting atoms"""
        order = np.argsort(np.asarray(atoms, dtype=float), kind="stable")
        atoms_sorted = np.asarray(atoms, dtype=float)[order]
        masses_sorted = np.asarray(masses, dtype=float)[order]
        total = masses_sorted.sum()
        if total <= 0:
            raise DomainError("Masses must have a positive total")
        return cls(tuple(atoms_sorted), tuple(masses_sorted / total))

    @classmethod
    def from_samples(cls, values: Sequence[float], decimals: Optional[int] = None) -> "DiscreteMeasure":
        """Empirical measure of a sample, merging equal values"""
        values = np.asarray(values, dtype=float)
        if decimals is not None:
            values = np.round(values, decimals)
        atoms, counts = np.unique(values, return_counts=True)
        return cls(tuple(atoms), tuple(counts / counts.sum()))

    @classmethod
    def from_dict(cls, data: Dict) -> "DiscreteMeasure":
        unknown = set(data) - {"atoms", "weights"}
        if unknown:
            raise DomainError(f"Unknown measure fields: {sorted(unknown)}")
        return cls(tuple(data["atoms"]), tuple(data["weights"]))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"atoms": list(self.atoms), "weights": list(self.weights)}

    # -- support and moments ------------------------------------------------

    def support_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Atoms and weights restricted to positively weighted atoms"""
        x = np.asarray(self.atoms)
        w = np.asarray(self.weights)
        keep = w > 0
        return x[keep], w[keep]

    def positive_part(self) -> "DiscreteMeasure":
        x, w = self.support_arrays()
        return DiscreteMeasure(tuple(x), tuple(w))

    @property
    def left_edge(self) -> float:
        """l(mu): smallest positively weighted atom"""
        return float(self.support_arrays()[0][0])

    @property
    def right_edge(self) -> float:
        """r(mu): largest positively weighted atom"""
        return float(self.support_arrays()[0][-1])

    @property
    def mean(self) -> float:
        x, w = self.support_arrays()
        return float(np.dot(w, x))

    @property
    def harmonic_mean(self) -> float:
        x, w = self.support_arrays()
        return float(1.0 / np.dot(w, 1.0 / x))

    @property
    def log_mean(self) -> float:
        """Integral of log x"""
        x, w = self.support_arrays()
        return float(np.dot(w, np.log(x)))

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class TransformValue:
    """Value of G or T, possibly an infinite edge limit"""
    value: float
    is_infinite: bool = False


def _near(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=NUMERIC_CONFIG["edge_rel_tol"], abs_tol=0.0)


def _check_outside_support(x: np.ndarray, z: float):
    l, r = float(x[0]), float(x[-1])
    if l < z < r and not (_near(z, l) or _near(z, r)):
        raise DomainError(f"z = {z} lies inside the support interval ({l}, {r})")


def _t_raw(x: np.ndarray, w: np.ndarray, z: float) -> float:
    # z G(z) - 1 written as sum w x / (z - x) to avoid cancellation
    return float(np.sum(w * x / (z - x)))


def stieltjes(mu: DiscreteMeasure, z: float) -> TransformValue:
    """G_mu(z) = sum_i alpha_i / (z - mu_i) for z outside (l(mu), r(mu))"""
    x, w = mu.support_arrays()
    if _near(z, float(x[-1])):
        return TransformValue(math.inf, True)
    if _near(z, float(x[0])):
        return TransformValue(-math.inf, True)
    _check_outside_support(x, z)
    return TransformValue(float(np.sum(w / (z - x))))


def t_transform(mu: DiscreteMeasure, z: float) -> TransformValue:
    """T_mu(z) = z G_mu(z) - 1"""
    g = stieltjes(mu, z)
    if g.is_infinite:
        return TransformValue(math.copysign(math.inf, z * g.value), True)
    x, w = mu.support_arrays()
    return TransformValue(_t_raw(x, w, z))


def t_transform_derivative(mu: DiscreteMeasure, z: float) -> float:
    x, w = mu.support_arrays()
    _check_outside_support(x, z)
    return float(-np.sum(w * x / (z - x) ** 2))


def _expand_bracket(f, fixed: float, moving: float, direction: float) -> float:
    """Push `moving` away from `fixed` geometrically until f changes sign"""
    span = abs(moving - fixed)
    for _ in range(NUMERIC_CONFIG["bracket_max_expansions"]):
        if np.sign(f(moving)) != np.sign(f(fixed)):
            return moving
        span *= 2.0
        moving = fixed + direction * span
    raise ConvergenceError(f"Could not bracket the root after "
                           f"{NUMERIC_CONFIG['bracket_max_expansions']} expansions")


def t_inverse(mu: DiscreteMeasure, theta: float, allow_nonpositive: bool = False) -> float:
    """
    Solve T_mu(z) = theta on the branch outside the support.

    theta > 0 is solved on (r(mu), inf). theta < 0 is solved below l(mu); the
    default contract keeps z in (0, l(mu)) and raises RangeError when the
    solution would be <= 0 (theta in [-1, 0)). With allow_nonpositive=True the
    whole branch (-inf, l(mu)) is searched, which the modified S-transform needs
    for theta in (-1, 0).
    """
    if theta == 0 or not math.isfinite(theta):
        raise RangeError(f"T_mu never takes the value {theta} outside the support")

    x, w = mu.support_arrays()
    l, r = float(x[0]), float(x[-1])
    offset = NUMERIC_CONFIG["bracket_offset"]

    def f(z: float) -> float:
        return _t_raw(x, w, z) - theta

    if theta > 0:
        edge = t_transform(mu, r)
        if not edge.is_infinite and theta > edge.value:
            raise RangeError(f"theta = {theta} exceeds T_mu(r(mu)) = {edge.value}")
        lo = r * (1.0 + offset)
        if f(lo) <= 0:
            raise ConvergenceError(f"theta = {theta} is beyond the resolution of the edge bracket")
        hi = _expand_bracket(f, lo, r + max(r, 1.0), 1.0)
    elif theta < -1:
        edge = t_transform(mu, l)
        if not edge.is_infinite and theta < edge.value:
            raise RangeError(f"theta = {theta} is below T_mu(l(mu)) = {edge.value}")
        lo, hi = 0.0, l * (1.0 - offset)
        if f(hi) >= 0:
            raise ConvergenceError(f"theta = {theta} is beyond the resolution of the edge bracket")
    elif theta == -1:
        # T_mu(0) = -1 exactly
        if not allow_nonpositive:
            raise RangeError("theta = -1 requires z = 0, outside the positive branch")
        return 0.0
    else:
        if not allow_nonpositive:
            raise RangeError(f"theta = {theta} in (-1, 0) requires z < 0, outside the positive branch")
        hi = 0.0
        lo = _expand_bracket(f, hi, -max(l, 1.0), -1.0)

    z = brentq(f, min(lo, hi), max(lo, hi), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    a, b = min(lo, hi), max(lo, hi)
    for _ in range(NUMERIC_CONFIG["newton_polish_steps"]):
        residual = f(z)
        slope = t_transform_derivative(mu, z)
        if residual == 0 or slope == 0:
            break
        candidate = z - residual / slope
        if not (a <= candidate <= b) or abs(f(candidate)) >= abs(residual):
            break
        z = candidate

    tol = NUMERIC_CONFIG["t_inverse_tol"] * (1.0 + abs(theta))
    if abs(f(z)) > tol:
        logger.debug(f"t_inverse residual {abs(f(z)):.3e} above target {tol:.3e} at theta={theta}")
    return float(z)


def s_tilde(mu: DiscreteMeasure, theta: float) -> float:
    """Modified S-transform theta/(theta+1) T^{-1}(theta), extended at 0 and -1"""
    if theta == 0:
        return mu.mean
    if theta == -1:
        return mu.harmonic_mean
    return theta / (theta + 1.0) * t_inverse(mu, theta, allow_nonpositive=True)


def log_potential(mu: DiscreteMeasure, d: float) -> float:
    """Integral of log|d - x| against mu"""
    x, w = mu.support_arrays()
    if any(_near(d, float(a)) for a in x):
        raise SingularError(f"d = {d} coincides with an atom of positive weight")
    return float(np.dot(w, np.log(np.abs(d - x))))


def pushforward_inverse(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Image of mu under x -> 1/x"""
    if any(a == 0 for a in mu.atoms):
        raise DomainError("Cannot invert an atom at 0")
    return DiscreteMeasure(tuple(1.0 / a for a in reversed(mu.atoms)), tuple(reversed(mu.weights)))


def geometric_discretization(values: Union[DiscreteMeasure, Sequence[float]], eps: float) -> DiscreteMeasure:
    """
    Move every point x up to the grid node (1+eps)^n0, n0 the smallest integer
    with x <= (1+eps)^n0, and merge masses landing on the same node.
    """
    if eps <= 0:
        raise DomainError("eps must be > 0")
    if isinstance(values, DiscreteMeasure):
        x = np.asarray(values.atoms)
        w = np.asarray(values.weights)
    else:
        x = np.asarray(values, dtype=float)
        w = np.full(x.shape, 1.0 / x.size)
    if np.any(x <= 0):
        raise DomainError("Geometric discretization needs positive points")

    step = math.log1p(eps)
    exponents = np.ceil(np.log(x) / step - 1e-12).astype(int)
    nodes, inverse = np.unique(exponents, return_inverse=True)
    masses = np.bincount(inverse, weights=w)
    return DiscreteMeasure(tuple(np.exp(nodes * step)), tuple(masses / masses.sum()))
