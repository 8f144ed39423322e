"""
Multiplicative Spherical Integrals
==================================

Numerical toolkit for the large-N asymptotics of

    I_N(theta, X_N) = int Delta_theta(U* X_N U)^(beta N / 2) dU,

the multiplicative analogue of the HCIZ integral, for finite-support theta and
positive definite X_N with a converging spectrum plus a few outliers.

Modules (under src/):
- measure: atomic measures, Stieltjes / T / modified S-transforms
- rate: the limiting rate function J(theta, lambda, mu) and its pairing rule
- variational: rank-one simplex problem, secular roots, change of variables
- randmat: spectra, Haar sampling, log Delta via Cholesky, deflation
- montecarlo: log-domain Monte Carlo estimators and exact oracles
- experiments: JSON configs and runners behind main.py
"""

import sys
from pathlib import Path

# Add src to Python path
project_root = Path(__file__).parent
src_path = project_root / "src"
sys.path.insert(0, str(src_path))

__version__ = "1.0.0"
