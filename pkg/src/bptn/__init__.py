"""bptn: belief-propagation tensor-network contraction with systematically
improvable corrections (loop series, cluster expansion, cluster-cumulant
and region expansions) and estimators for observables and correlators."""

__version__ = "0.1.0"
