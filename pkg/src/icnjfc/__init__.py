"""Joint forwarding and caching in information-centric networks: fluid
model, the MinDelay algorithm, baselines and a packet-level simulator."""

__version__ = "0.1.0"
