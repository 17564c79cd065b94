# Invariant nonlinear shrinkage for spiked covariance models
__version__ = "1.0.0"
