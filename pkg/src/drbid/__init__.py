"""Demand-bidding aggregator toolkit.

A day-ahead demand-bidding market simulator plus a two-agent deterministic
policy gradient learner that decides what price and quantity an aggregator
should bid, against simulators of the market clearing price and of customer
curtailment behaviour.
"""

__version__ = "0.1.0"
