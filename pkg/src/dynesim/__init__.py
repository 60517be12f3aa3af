"""Monte Carlo simulator of feedback-controlled dyne phase measurement.

Propagates the conditioned state of a decaying two-level emitter under
diffusive measurement unravellings, emulates the pump-phase feedback
controller (delay, filtering, replay), and reduces trajectory ensembles to
phase-estimation figures of merit.
"""

__version__ = "0.1.0"
