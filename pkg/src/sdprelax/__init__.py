"""SDP relaxations of mixed-binary quadratic programs and a two-phase
low-rank augmented Lagrangian solver with KKT certification."""

__version__ = "0.1.0"
