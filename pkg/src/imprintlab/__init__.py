"""imprintlab: gradient-inversion imprint attacks on federated updates.

The package simulates a malicious-server attack: a crafted layer pair bins a
training batch by a scalar measurement of each example, and the shared
gradient update then reveals every example that landed in a bin alone. It
covers the fedSGD and fedAVG protocols, a one-shot fused variant, label-based
recovery for plain classifiers, token-sequence inputs, DP-style defenses, and
the combinatorial theory predicting how much of a batch comes back.
"""

from .errors import ConfigError
from .numerics import RngStream
from .scenarios import BUNDLED, bundled_config, run_scenario, sweep_scenario

__version__ = "0.1.0"

__all__ = [
    "BUNDLED",
    "ConfigError",
    "RngStream",
    "bundled_config",
    "run_scenario",
    "sweep_scenario",
    "__version__",
]
