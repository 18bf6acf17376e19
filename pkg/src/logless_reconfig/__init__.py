"""Model checking, simulation and experiments for logless dynamic
reconfiguration of a Raft-style replication protocol."""

__version__ = "0.1.0"
