"""Symbolic regression by goal-conditioned value learning: postfix
construction episodes, an all-point binary reward, hindsight relabeling of
failures, dueling double Q-networks, and structure-partitioned exploration,
with a benchmark harness for recovery-rate, noise, and ablation runs."""

__version__ = "0.1.0"
