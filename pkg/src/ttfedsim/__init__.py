"""Deterministic simulator for time-triggered federated learning over an
unreliable, bandwidth-constrained wireless uplink, with synchronous,
asynchronous and tiered baselines, a closed-form bandwidth allocator, and
a convergence-bound evaluator."""

__version__ = "0.1.0"
