"""Scale-free comparison-based search toolkit.

Library surface: the choice-model oracle, hypercube region algebra, the
staged continuous search with its two decision criteria, the Bayesian
item search, triplet-embedding training, and the interactive session
service (``cklsearch.service``).  The ``cklsearch`` console script runs
experiments and serves the HTTP API.
"""

__version__ = "0.1.0"

from .geometry import Region
from .oracle import OracleModel, answer_probability, sample_answer
from .search_continuous import SearchConfig, SimulatedOracle, run_search
from .search_discrete import ItemSet, run_discrete_search

__all__ = [
    "ItemSet",
    "OracleModel",
    "Region",
    "SearchConfig",
    "SimulatedOracle",
    "answer_probability",
    "run_discrete_search",
    "run_search",
    "sample_answer",
    "__version__",
]
