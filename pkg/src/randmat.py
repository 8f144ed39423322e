"""
Matrix ensembles for multiplicative spherical integrals

Spectrum construction, Haar sampling on the orthogonal (beta=1) and unitary
(beta=2) groups, log Delta_theta(M) from leading principal minors, and the
one-step deflation M -> Y = M[1:,1:] - c c* / a.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError, NotPDError, SizeError
from measure import DiscreteMeasure
from rate import ThetaVector

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]
ThetaLike = Union[ThetaVector, Sequence[float]]


@dataclass(frozen=True)
class SpectrumSpec:
    """Recipe for a diagonal X_N: a bulk measure plus pinned outliers"""
    bulk: DiscreteMeasure
    lower_outliers: Tuple[float, ...] = ()
    upper_outliers: Tuple[float, ...] = ()
    N: int = 1
    beta: int = 1

    def __post_init__(self):
        lower = tuple(sorted(float(v) for v in self.lower_outliers))
        upper = tuple(sorted(float(v) for v in self.upper_outliers))
        object.__setattr__(self, "lower_outliers", lower)
        object.__setattr__(self, "upper_outliers", upper)

        if self.beta not in (1, 2):
            raise DomainError(f"beta must be 1 or 2, got {self.beta}")
        if any(not 0 < v <= self.bulk.left_edge for v in lower):
            raise DomainError(f"Lower outliers must lie in (0, {self.bulk.left_edge}], got {lower}")
        if any(v < self.bulk.right_edge for v in upper):
            raise DomainError(f"Upper outliers must be >= {self.bulk.right_edge}, got {upper}")

    @property
    def n_outliers(self) -> int:
        return len(self.lower_outliers) + len(self.upper_outliers)

    def with_size(self, N: int) -> "SpectrumSpec":
        return SpectrumSpec(self.bulk, self.lower_outliers, self.upper_outliers, N, self.beta)

    def to_dict(self) -> Dict:
        return {
            "bulk": self.bulk.to_dict(),
            "lower_outliers": list(self.lower_outliers),
            "upper_outliers": list(self.upper_outliers),
            "N": self.N,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SpectrumSpec":
        unknown = set(data) - {"bulk", "lower_outliers", "upper_outliers", "N", "beta"}
        if unknown:
            raise DomainError(f"Unknown spectrum fields: {sorted(unknown)}")
        return cls(
            bulk=DiscreteMeasure.from_dict(data["bulk"]),
            lower_outliers=tuple(data.get("lower_outliers", ())),
            upper_outliers=tuple(data.get("upper_outliers", ())),
            N=int(data["N"]),
            beta=int(data.get("beta", 1)),
        )


def build_spectrum(spec: SpectrumSpec) -> np.ndarray:
    """
    Eigenvalues of X_N, ascending. Bulk multiplicities are floor(alpha_i * n_bulk)
    with the remainder handed out by largest fractional part, then largest weight.
    """
    atoms = np.asarray(spec.bulk.atoms)
    alpha = np.asarray(spec.bulk.weights)
    n_bulk = spec.N - spec.n_outliers
    n_atoms = int(np.count_nonzero(alpha > 0))
    if spec.N < 1 or n_bulk < n_atoms:
        raise SizeError(f"N = {spec.N} cannot hold {spec.n_outliers} outliers and {n_atoms} bulk atoms")

    exact = alpha * n_bulk
    counts = np.floor(exact).astype(int)
    remainder = n_bulk - int(counts.sum())
    order = sorted(range(atoms.size), key=lambda i: (-(exact[i] - counts[i]), -alpha[i], i))
    for i in order[:remainder]:
        counts[i] += 1

    eigs = np.concatenate([np.asarray(spec.lower_outliers), np.repeat(atoms, counts),
                           np.asarray(spec.upper_outliers)])
    return np.sort(eigs)


def spectrum_blocks(spec: SpectrumSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues of X_N and their multiplicities"""
    return np.unique(build_spectrum(spec), return_counts=True)


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _ginibre(rng: np.random.Generator, shape: Tuple[int, ...], beta: int) -> np.ndarray:
    if beta == 1:
        return rng.standard_normal(shape)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _phase_fix(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    # Q * diag(R)/|diag(R)| is Haar; plain QR output is not
    d = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(d)
    ph = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    return q * ph[..., None, :]


def haar_sample(N: int, beta: int = 1, seed: SeedLike = None) -> np.ndarray:
    """Haar-distributed N x N orthogonal (beta=1) or unitary (beta=2) matrix"""
    if N < 1:
        raise SizeError(f"N must be >= 1, got {N}")
    if beta not in (1, 2):
        raise DomainError(f"beta must be 1 or 2, got {beta}")
    z = _ginibre(_rng(seed), (N, N), beta)
    q, r = np.linalg.qr(z)
    return _phase_fix(q, r)


def haar_frame(N: int, k: int, beta: int = 1, rng: SeedLike = None, size: int = 1) -> np.ndarray:
    """First k columns of `size` independent Haar matrices, shape (size, N, k)"""
    if not 1 <= k <= N:
        raise SizeError(f"Need 1 <= k <= N, got k={k}, N={N}")
    if beta not in (1, 2):
        raise DomainError(f"beta must be 1 or 2, got {beta}")
    z = _ginibre(_rng(rng), (size, N, k), beta)
    q, r = np.linalg.qr(z, mode="reduced")
    return _phase_fix(q, r)


def _theta_array(thetas: ThetaLike) -> np.ndarray:
    values = thetas.values if isinstance(thetas, ThetaVector) else tuple(thetas)
    return np.asarray(values, dtype=float)


def leading_log_dets(M: np.ndarray, k: int) -> np.ndarray:
    """log det [M]_i for i = 1..k from one Cholesky factorisation of the k x k block"""
    block = np.asarray(M)[..., :k, :k]
    try:
        chol = np.linalg.cholesky(block)
    except np.linalg.LinAlgError as e:
        raise NotPDError(f"Cholesky failed on the leading {k}x{k} block: {e}") from e
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.cumsum(np.log(diag), axis=-1)


def log_delta(M: np.ndarray, thetas: ThetaLike) -> Union[float, np.ndarray]:
    """
    log Delta_theta(M) = sum_i (theta_i - theta_{i+1}) log det [M]_i with theta_{k+1} = 0.
    M may be a stack (..., n, n); the beta N / 2 exponent is not applied.
    """
    theta = _theta_array(thetas)
    k = theta.size
    M = np.asarray(M)
    if k == 0:
        return 0.0 if M.ndim == 2 else np.zeros(M.shape[:-2])
    if k > M.shape[-1]:
        raise SizeError(f"{k} theta entries for a {M.shape[-1]}x{M.shape[-1]} matrix")

    steps = theta - np.append(theta[1:], 0.0)
    result = leading_log_dets(M, k) @ steps
    return float(result) if np.ndim(result) == 0 else result


@dataclass
class Deflation:
    a: float
    c: np.ndarray
    Y: np.ndarray
    residual: float = field(default=0.0)


def deflate(M: np.ndarray, thetas: ThetaLike) -> Deflation:
    """
    Schur complement step Y = M[1:,1:] - c c* / a, a = M[0,0], c = M[1:,0], with the
    residual of log Delta_theta(M) = theta_1 log a + log Delta_(theta_2..theta_k)(Y).
    """
    M = np.asarray(M)
    if M.shape[0] < 2:
        raise SizeError("Deflation needs N >= 2")
    theta = _theta_array(thetas)

    a = float(np.real(M[0, 0]))
    if not a > 0:
        raise NotPDError(f"Top-left entry {a} is not positive")
    c = M[1:, 0]
    Y = M[1:, 1:] - np.outer(c, c.conj()) / a
    Y = 0.5 * (Y + Y.conj().T)

    full = log_delta(M, theta)
    reduced = theta[0] * math.log(a) + log_delta(Y, theta[1:]) if theta.size else 0.0
    residual = abs(full - reduced)
    if residual > 1e-8 * (1.0 + abs(full)):
        logger.warning(f"Deflation residual {residual:.3e} exceeds tolerance (log Delta = {full:.6g})")
    return Deflation(a, c, Y, residual)


def conjugate(eigs: np.ndarray, U: np.ndarray) -> np.ndarray:
    """U* diag(eigs) U"""
    return (U.conj().T * eigs) @ U


def inverse_spectrum_identity(M: np.ndarray, seed: SeedLike = None, beta: int = 1) -> Tuple[float, float]:
    """
    For one Haar sample U: log Delta_(0,...,0,1)(U*MU) against -log (U* M^{-1} U)_{NN}.
    The two agree sample by sample.
    """
    M = np.asarray(M)
    N = M.shape[0]
    U = haar_sample(N, beta, seed)
    A = U.conj().T @ M @ U
    A = 0.5 * (A + A.conj().T)
    theta = np.zeros(N)
    theta[-1] = 1.0
    lhs = log_delta(A, theta)
    B = U.conj().T @ np.linalg.solve(M, U)
    rhs = -math.log(float(np.real(B[-1, -1])))
    return lhs, rhs


def equicontinuity_constant(thetas: ThetaLike) -> float:
    """
    C with |log Delta(X') - log Delta(X)| <= C eps whenever the spectra of X and X'
    are within a factor e^eps of each other: sum_i i |theta_i - theta_{i+1}|.
    """
    theta = _theta_array(thetas)
    steps = np.abs(theta - np.append(theta[1:], 0.0))
    return float(np.dot(np.arange(1, theta.size + 1), steps))


def theta_perturbation_constant(thetas: ThetaLike, eigenvalues: Sequence[float]) -> float:
    """C with |log Delta_theta(X) - log Delta_phi(X)| <= C eps when max |theta_i - phi_i| <= eps"""
    k = _theta_array(thetas).size
    return float(k * (k + 1) * np.max(np.abs(np.log(np.asarray(eigenvalues, dtype=float)))))


def weyl_ratio(x_diag: Sequence[float], e: np.ndarray, z: float) -> Tuple[float, float]:
    """
    sum_i |e_i|^2 / (z - x_i) against chi_{X~}(z) / P(z), X~ the compression of
    diag(x) to the orthogonal complement of e and P the characteristic polynomial of X.
    """
    x = np.asarray(x_diag, dtype=float)
    e = np.asarray(e)
    e = e / np.linalg.norm(e)
    lhs = float(np.sum(np.abs(e) ** 2 / (z - x)))

    q, _ = np.linalg.qr(e.reshape(-1, 1), mode="complete")
    basis = q[:, 1:]
    compressed = (basis.conj().T * x) @ basis
    sign_c, logabs_c = np.linalg.slogdet(z * np.eye(x.size - 1) - compressed)
    log_p = float(np.sum(np.log(np.abs(z - x))))
    sign_p = float(np.prod(np.sign(z - x)))
    rhs = float(np.real(sign_c) * sign_p * math.exp(logabs_c - log_p))
    return lhs, rhs


def random_pd_matrix(N: int, seed: SeedLike = None, beta: int = 1, spread: float = 4.0) -> np.ndarray:
    """U* diag(x) U with x log-uniform on [1, spread]"""
    rng = _rng(seed)
    eigs = np.exp(rng.uniform(0.0, math.log(spread), size=N))
    return conjugate(eigs, haar_sample(N, beta, rng))
