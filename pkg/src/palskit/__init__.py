"""Robust control workbench for a PALS-retrofitted SUV full car.

Modules
-------
ssmodel     state-space / LFT / frequency-domain numerics kernel
vehicle     linear-equivalent full-car model, uncertainty LFT, dampers, actuator
excitation  road profiles and handling-maneuver disturbance inputs
synthesis   weighting functions, H-infinity and mu (D-K) synthesis, PID blending
sim         fixed-step closed-loop evaluation and metrics
cli         batch front-end (synthesize / simulate / report)
"""

__version__ = "0.1.0"
