"""
Experiment configurations and runners behind the command line

Each command reads a JSON config into a dataclass (unknown or missing keys
raise ConfigError) and returns a pandas table or a JSON-ready dict.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar, Union, get_args, get_origin, get_type_hints

import numpy as np
import pandas as pd

from config import CLI_CONFIG, MONTE_CARLO_CONFIG
from errors import ConfigError
from measure import DiscreteMeasure, geometric_discretization, s_tilde, stieltjes, t_transform
from montecarlo import (McEstimate, convergence_study, estimate_In, estimate_In_rank1_dirichlet,
                        estimate_In_tilted, rows_to_frame)
from randmat import SpectrumSpec
from rate import RateResult, ThetaVector, OutlierSet, rate_multi, rate_single
from variational import maximize_simplex, solve_rank1

logger = logging.getLogger(__name__)

C = TypeVar("C", bound="ExperimentConfig")


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _conforms(value: Any, hint: Any) -> bool:
    """JSON value against a field annotation; dict contents are checked by their parsers"""
    origin = get_origin(hint)
    if origin is Union:
        return any(_conforms(value, arg) for arg in get_args(hint))
    if hint is type(None):
        return value is None
    if hint is float:
        return _is_number(value)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if hint is bool:
        return isinstance(value, bool)
    if hint is str:
        return isinstance(value, str)
    if origin is list:
        (item,) = get_args(hint)
        return isinstance(value, list) and all(_conforms(v, item) for v in value)
    if origin is dict:
        return isinstance(value, dict)
    return True


@dataclass
class ExperimentConfig:
    """Base for command configs: strict dict parsing and a lossless round trip"""

    @classmethod
    def from_dict(cls: Type[C], data: Dict[str, Any]) -> C:
        if not isinstance(data, dict):
            raise ConfigError(f"{cls.__name__} expects a JSON object, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown {cls.__name__} fields: {sorted(unknown)}")
        hints = get_type_hints(cls)
        for name, value in data.items():
            if not _conforms(value, hints[name]):
                raise ConfigError(f"{cls.__name__}.{name} has the wrong type: {value!r}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid {cls.__name__}: {e}") from e

    @classmethod
    def load(cls: Type[C], path: Union[str, Path]) -> C:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TransformsConfig(ExperimentConfig):
    measure: Dict[str, Any]
    points: List[float] = field(default_factory=list)
    thetas: List[float] = field(default_factory=list)


@dataclass
class RateConfig(ExperimentConfig):
    measure: Dict[str, Any]
    thetas: List[float]
    lower: List[float] = field(default_factory=list)
    upper: List[float] = field(default_factory=list)


@dataclass
class VariationalConfig(ExperimentConfig):
    measure: Dict[str, Any]
    theta: float
    top_weight_zero: bool = False
    iters: Optional[int] = None
    step: Optional[float] = None
    seed: Optional[int] = None


@dataclass
class McConfig(ExperimentConfig):
    spectrum: Dict[str, Any]
    thetas: List[float]
    estimator: str = "haar"
    n_samples: Optional[int] = None
    n_batches: Optional[int] = None
    seed: Optional[int] = None
    n_workers: Optional[int] = None


@dataclass
class ConvergeConfig(ExperimentConfig):
    spectrum: Dict[str, Any]
    thetas: List[float]
    n_list: List[int]
    n_samples: Optional[int] = None
    n_batches: Optional[int] = None
    seed: Optional[int] = None


@dataclass
class AsymmetryConfig(ExperimentConfig):
    measure: Dict[str, Any]
    spike: float
    N: int = 64
    beta: int = 1
    n_samples: Optional[int] = 6400
    n_batches: Optional[int] = None
    seed: Optional[int] = None


CONFIG_TYPES = {
    "transforms": TransformsConfig,
    "rate": RateConfig,
    "variational": VariationalConfig,
    "mc": McConfig,
    "converge": ConvergeConfig,
    "asymmetry": AsymmetryConfig,
}


def _check_keys(name: str, data: Any, required: set, optional: set = frozenset()):
    if not isinstance(data, dict) or not required <= set(data):
        raise ConfigError(f"{name} needs {sorted(required)}")
    unknown = set(data) - required - optional
    if unknown:
        raise ConfigError(f"Unknown {name} fields: {sorted(unknown)}")


def _check_type(name: str, value: Any, hint: Any):
    if not _conforms(value, hint):
        raise ConfigError(f"{name} has the wrong type: {value!r}")


def _spectrum(data: Dict[str, Any]) -> SpectrumSpec:
    _check_keys("spectrum", data, {"bulk", "N"}, {"lower_outliers", "upper_outliers", "beta"})
    _check_type("spectrum.N", data["N"], int)
    _check_type("spectrum.beta", data.get("beta", 1), int)
    for key in ("lower_outliers", "upper_outliers"):
        _check_type(f"spectrum.{key}", data.get(key, []), List[float])
    return SpectrumSpec(
        bulk=_measure(data["bulk"]),
        lower_outliers=tuple(data.get("lower_outliers", ())),
        upper_outliers=tuple(data.get("upper_outliers", ())),
        N=data["N"],
        beta=data.get("beta", 1),
    )


def _measure(data: Dict[str, Any]) -> DiscreteMeasure:
    """
    Either explicit {"atoms", "weights"} or an empirical {"samples"}, optionally
    rounded to "decimals" and moved onto the geometric grid of ratio 1 + "eps".
    """
    if isinstance(data, dict) and "samples" in data:
        _check_keys("measure", data, {"samples"}, {"eps", "decimals"})
        _check_type("measure.samples", data["samples"], List[float])
        _check_type("measure.eps", data.get("eps"), Optional[float])
        _check_type("measure.decimals", data.get("decimals"), Optional[int])
        if not data["samples"]:
            raise ConfigError("measure.samples is empty")
        mu = DiscreteMeasure.from_samples(data["samples"], data.get("decimals"))
        if data.get("eps") is not None:
            mu = geometric_discretization(mu, data["eps"])
        return mu
    _check_keys("measure", data, {"atoms", "weights"})
    _check_type("measure.atoms", data["atoms"], List[float])
    _check_type("measure.weights", data["weights"], List[float])
    return DiscreteMeasure.from_dict(data)


def run_transforms(cfg: TransformsConfig) -> pd.DataFrame:
    """G and T at the z points, S~ on the theta grid"""
    mu = _measure(cfg.measure)
    rows = []
    for z in cfg.points:
        g = stieltjes(mu, z)
        t = t_transform(mu, z)
        rows.append({"grid": "z", "point": z, "G": g.value, "T": t.value, "S_tilde": math.nan})
    for theta in cfg.thetas:
        rows.append({"grid": "theta", "point": theta, "G": math.nan, "T": math.nan, "S_tilde": s_tilde(mu, theta)})
    return pd.DataFrame(rows, columns=CLI_CONFIG["csv_headers"]["transforms"])


def run_rate(cfg: RateConfig) -> RateResult:
    mu = _measure(cfg.measure)
    result = rate_multi(ThetaVector(tuple(cfg.thetas)), OutlierSet(tuple(cfg.lower), tuple(cfg.upper)), mu)
    for c in result.components:
        logger.info(f"theta={c.theta:g} lambda={c.lam:g}: {c.regime.value}, J={c.j_value:.10g}")
    return result


def run_variational(cfg: VariationalConfig) -> Dict[str, Any]:
    """Closed-form optimiser next to the simplex ascent and the rate function"""
    mu = _measure(cfg.measure)
    closed = solve_rank1(cfg.theta, mu, cfg.top_weight_zero)
    oracle = maximize_simplex(cfg.theta, mu, cfg.iters, cfg.step, cfg.seed, cfg.top_weight_zero)
    return {
        "closed_form": closed.to_dict(),
        "oracle": oracle.to_dict(),
        "f_gap": abs(closed.f_value - oracle.f_value),
        "gamma_gap": float(np.max(np.abs(closed.gamma_star.as_array() - oracle.gamma_star.as_array()))),
    }


ESTIMATORS = {
    "haar": lambda spec, cfg: estimate_In(spec, cfg.thetas, cfg.n_samples, cfg.n_batches, cfg.seed,
                                          n_workers=cfg.n_workers),
    "dirichlet": lambda spec, cfg: estimate_In_rank1_dirichlet(spec, _single_theta(cfg), cfg.n_samples,
                                                               cfg.n_batches, cfg.seed, n_workers=cfg.n_workers),
    "tilted": lambda spec, cfg: estimate_In_tilted(spec, _single_theta(cfg), None, cfg.n_samples,
                                                   cfg.n_batches, cfg.seed, n_workers=cfg.n_workers),
}


def _single_theta(cfg: McConfig) -> float:
    if len(cfg.thetas) != 1:
        raise ConfigError(f"Estimator '{cfg.estimator}' needs exactly one theta, got {cfg.thetas}")
    return float(cfg.thetas[0])


def run_mc(cfg: McConfig) -> pd.DataFrame:
    if cfg.estimator not in ESTIMATORS:
        raise ConfigError(f"Unknown estimator '{cfg.estimator}', expected one of {sorted(ESTIMATORS)}")
    spec = _spectrum(cfg.spectrum)
    estimate: McEstimate = ESTIMATORS[cfg.estimator](spec, cfg)
    row = {key: estimate.to_dict()[key] for key in CLI_CONFIG["csv_headers"]["mc"]}
    return pd.DataFrame([row], columns=CLI_CONFIG["csv_headers"]["mc"])


def run_converge(cfg: ConvergeConfig) -> pd.DataFrame:
    spec = _spectrum(cfg.spectrum)
    rows = convergence_study(spec, ThetaVector(tuple(cfg.thetas)), cfg.n_list, cfg.n_samples, cfg.n_batches, cfg.seed)
    return rows_to_frame(rows)


def run_asymmetry(cfg: AsymmetryConfig) -> Dict[str, Any]:
    """
    (a) Monte Carlo (1/N) log I_N((0,...,0,1), X_N) for X_N = bulk + one spike,
    (b) its limit (beta/2) int log x dmu, (c) (beta/2) J(1, spike, mu) for the
    same theta placed first. (b) != (c) exhibits that the position of the
    nonzero theta entry matters.
    """
    mu = _measure(cfg.measure)
    spec = SpectrumSpec(mu, upper_outliers=(cfg.spike,), N=cfg.N, beta=cfg.beta)

    thetas = ThetaVector(tuple([0.0] * (cfg.N - 1) + [1.0]))
    estimate = estimate_In(spec, thetas, cfg.n_samples, cfg.n_batches, cfg.seed)

    half_beta = 0.5 * cfg.beta
    b = half_beta * mu.log_mean
    c = half_beta * rate_single(1.0, cfg.spike, mu).j_value
    is_spike = cfg.spike > mu.right_edge
    gap = estimate.log_mean_per_n - b
    matches = abs(gap) <= 3.0 * estimate.stderr + MONTE_CARLO_CONFIG["bias_budget"]

    report = {
        "mc_estimate": estimate.log_mean_per_n,
        "mc_stderr": estimate.stderr,
        "log_mean_limit": b,
        "rate_first_position": c,
        "mc_gap": gap,
        "mc_matches_limit": matches,
        "asymmetry": c - b,
        "is_spike": is_spike,
    }
    logger.info(f"asymmetry: a={report['mc_estimate']:.6f} b={b:.6f} c={c:.6f}")
    if not matches:
        logger.warning(f"Monte Carlo value {estimate.log_mean_per_n:.6f} is {gap:+.6f} away from its limit "
                       f"(stderr {estimate.stderr:.2g}); N={cfg.N} may be too small")
    return report
