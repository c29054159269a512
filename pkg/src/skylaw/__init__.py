"""Compliant and effective UAV routing.

skylaw combines a probabilistic model of airspace rules with physical
cost models and a two-stage many-objective router.  The building blocks
are:

* :mod:`skylaw.geo` -- tagged map features in a local metric frame,
* :mod:`skylaw.starmap` -- distribution-valued spatial relations fitted
  from perturbed map samples,
* :mod:`skylaw.constitution` -- the declarative rule language,
* :mod:`skylaw.inference` -- exact probabilistic inference over grounded
  rule programs,
* :mod:`skylaw.models` -- radio, noise, risk and energy cost models,
* :mod:`skylaw.router` -- Dijkstra seeding plus NSGA-II evolution of
  smooth spline paths,
* :mod:`skylaw.mission` -- clearance, explanation and setting
  optimization for proposal paths,
* :mod:`skylaw.cli` -- the command line pipeline.
"""

__version__ = "0.1.0"
