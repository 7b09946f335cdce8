"""Random linear preferential attachment trees with broadcasting-induced
two-colourings: simulation, exact small-n oracles, and limit-law predictions.

Module map
----------
tree      growth of coloured trees and the percolation (cluster) view
stats     per-tree statistics: colour/cluster/leaf counts, root cluster,
          coloured fringe-subtree censuses
urn       generalized Polya urns: construction, simulation, eigenstructure,
          limit covariances
theory    closed-form and recursive limit laws (regimes, moment tables,
          survival probabilities)
oracle    exact distributions at small n (weighted recursions, generating
          functions, exhaustive enumeration)
harness   Monte Carlo experiments, theory-vs-empirical comparison, reports
"""

from .tree import (
    RED,
    BLUE,
    Model,
    RngStream,
    ColouredTree,
    sample_parent,
    grow_coloured_tree,
    percolation_forest,
)

__all__ = [
    "RED",
    "BLUE",
    "Model",
    "RngStream",
    "ColouredTree",
    "sample_parent",
    "grow_coloured_tree",
    "percolation_forest",
]

__version__ = "0.1.0"
