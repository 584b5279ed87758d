"""Equilibrium states of full shifts and Monte Carlo checks of Gaussian concentration.

Modules
-------
shift          words, cylinders and sequence metrics
potentials     potentials, variation profiles and regularity regimes
transfer       truncated transfer operators, eigendata and g-functions
markov         Markov approximations and the trajectory sampler
estimators     trajectory statistics
transport      Kantorovich, d-bar and relative-entropy distances
concentration  fitted concentration constants, tails and variances
experiments    reproducible experiment pipelines
cli            the ``gibbslab`` command
"""

__version__ = "0.1.0"
