"""cfnsync: discrete-event simulation and offline joint training for
semantic state synchronization between an edge service node and an
access point in compute-first networking."""

__version__ = "0.1.0"
