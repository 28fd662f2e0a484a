"""Trace-driven simulator for on-device DNN training on heterogeneous
mobile SoCs: trace preprocessing, execution-choice profiling and pruning,
a per-device training engine, battery energy accounting and a federated
round loop comparing scheduling policies."""

__version__ = "0.1.0"
