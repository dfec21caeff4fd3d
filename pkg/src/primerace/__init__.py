"""Prime number races: the random model built from L-function zeros, its Gaussian
approximation, the small-n oracles and the empirical sieve."""

__version__ = "0.1.0"
