"""knaplab: a laboratory for performative human-ML collaboration on 0-1 knapsack tasks.

Subsystems:

* :mod:`knaplab.knapsack` - instance generation, exact/brute-force solvers, utilities
* :mod:`knaplab.recommenders` - greedy, noisy-greedy, and imitation-trained recommenders
* :mod:`knaplab.humans` - synthetic human decision functions H(X, Y_M)
* :mod:`knaplab.dynamics` - collaborative characteristic functions, learning paths, the closed loop
* :mod:`knaplab.analysis` - cluster-robust estimation of empirical characteristic functions
* :mod:`knaplab.study` - live-experiment session backend (event-sourced, HTTP+JSON)
* :mod:`knaplab.cli` - command-line front door (``knaplab --help``)
"""

from .knapsack import (
    KnapsackInstance,
    Solution,
    UtilityKind,
    generate_instance,
    random_fill,
    solve_bruteforce,
    solve_exact,
    utility,
)

__version__ = "0.1.0"

__all__ = [
    "KnapsackInstance",
    "Solution",
    "UtilityKind",
    "generate_instance",
    "random_fill",
    "solve_bruteforce",
    "solve_exact",
    "utility",
    "__version__",
]
