"""Peering prediction between autonomous systems from public AS-level data.

Pipeline: :mod:`peerlens.ingest` (snapshots) -> :mod:`peerlens.features`
(per-AS tables) and :mod:`peerlens.cone` (cones, affinity) ->
:mod:`peerlens.pairset` (labeled pair datasets) -> :mod:`peerlens.learner`
(tree ensembles) -> :mod:`peerlens.evalx` and :mod:`peerlens.explain`.
"""

__version__ = "0.1.0"
