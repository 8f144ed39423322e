"""
Configuration settings for the multiplicative spherical integral toolkit
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Project paths
PROJECT_ROOT = Path(__file__).parent.parent
load_dotenv(PROJECT_ROOT / ".env")

# relative --out paths are resolved here; defaults to the working directory
RESULTS_DIR = Path(os.getenv("SPHERICAL_RESULTS_DIR", "."))

# Logging
LOG_LEVEL = os.getenv("SPHERICAL_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# Measures, transforms and the rate function
NUMERIC_CONFIG = {
    "weight_sum_tol": 1e-12,
    "edge_rel_tol": 1e-12,
    "t_inverse_tol": 1e-12,
    "bracket_offset": 1e-12,       # relative offset from the edge atom for the first bracket
    "bracket_max_expansions": 200,
    "newton_polish_steps": 3,
    "gauss_legendre_nodes": 64,
    "involution_tol": 1e-14,
}

# Rank-one variational problem and its oracle
VARIATIONAL_CONFIG = {
    "step": 0.1,
    "max_step": 2.0,
    "step_growth": 1.1,
    "max_iters": 10000,
    "max_consecutive_declines": 50,
    "kkt_tol": 1e-13,
    "secular_tol": 1e-10,
    "identity_tol": 1e-8,
}

# Monte Carlo estimators
MONTE_CARLO_CONFIG = {
    "n_batches": 32,
    "chunk_size": int(os.getenv("SPHERICAL_MC_CHUNK", "4096")),
    "n_workers": int(os.getenv("SPHERICAL_MC_WORKERS", "1")),
    "ess_min_fraction": 0.01,
    "bias_budget": 0.02,
    "quad_rel_tol": 1e-10,
    "quad_limit": 400,
    "show_progress": os.getenv("SPHERICAL_PROGRESS", "0") == "1",
}

# Exact Schur oracle (beta = 2 signatures)
SCHUR_CONFIG = {
    "max_n": 16,
    "exponent_budget": 4096,       # bound on N * max(kappa)
    "min_rel_gap": 1e-6,
}

# Command line surface
CLI_CONFIG = {
    "commands": ["transforms", "rate", "variational", "mc", "converge", "asymmetry"],
    "exit_codes": {
        "ok": 0,
        "config": 2,
        "domain": 3,
        "estimator": 4,
    },
    "csv_headers": {
        "transforms": ["grid", "point", "G", "T", "S_tilde"],
        "rate": ["theta", "lambda", "c", "d", "regime", "J"],
        "mc": ["N", "estimate", "stderr", "n_samples", "n_batches", "ess"],
        "converge": ["N", "estimate", "stderr", "target", "gap"],
    },
}
