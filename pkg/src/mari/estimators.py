"""Estimator-style wrappers around the graph passes.

Each pass is exposed as a small class following the scikit-learn protocol:
constructor parameters are plain attributes, ``get_params``/``set_params``
round-trip them, ``fit`` inspects a graph and stores what it learned on
underscore-suffixed attributes, and ``transform`` maps a graph to a graph.
The wrappers are thin; the functional API underneath does the work and
remains the primary surface.
"""

from __future__ import annotations

import inspect

from .errors import InvalidArgumentError
from .gca import Color, group_by_concat, initialize_colors, propagate, run_gca
from .graph import NONCOMPUTATIONAL_KINDS, Graph
from .reorg import reorg_all
from .rewrite import fragment_site, rewrite_all


class GraphPass:
    """get_params/set_params support shared by the pass classes."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "GraphPass":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise InvalidArgumentError(
                    f"invalid parameter {key!r} for {type(self).__name__}"
                )
            setattr(self, key, value)
        return self


class SiteDetector(GraphPass):
    """Colors a graph and records its optimizable MatMul sites.

    After ``fit``, ``coloring_`` maps node ids to colors, ``sites_`` holds
    the detected sites and ``groups_`` the same sites keyed by concat.
    """

    def __init__(self, noncomputational: frozenset = NONCOMPUTATIONAL_KINDS):
        self.noncomputational = noncomputational

    def fit(self, graph: Graph) -> "SiteDetector":
        self.coloring_ = propagate(graph, initialize_colors(graph))
        self.sites_ = run_gca(graph, noncomputational=self.noncomputational)
        self.groups_ = group_by_concat(self.sites_)
        return self

    def yellow_nodes(self) -> list[str]:
        return sorted(i for i, c in self.coloring_.items() if c is Color.YELLOW)


class LayoutReorganizer(GraphPass):
    """Transforms every detected site into grouped [user|item|cross] form."""

    def __init__(self):
        pass

    def fit(self, graph: Graph) -> "LayoutReorganizer":
        return self

    def transform(self, graph: Graph) -> Graph:
        out, self.changed_sites_ = reorg_all(graph)
        return out

    def fit_transform(self, graph: Graph) -> Graph:
        return self.fit(graph).transform(graph)


class MariRewriter(GraphPass):
    """Detects, reorganizes and rewrites every eligible MatMul.

    With ``fragment_chunk`` set, detected sites are fragmented into column
    chunks instead of decomposed, for degradation experiments.
    """

    def __init__(self, fragment_chunk: int | None = None):
        self.fragment_chunk = fragment_chunk

    def fit(self, graph: Graph) -> "MariRewriter":
        self.sites_ = run_gca(graph)
        return self

    def transform(self, graph: Graph) -> Graph:
        if self.fragment_chunk is not None:
            for site in run_gca(graph):
                graph = fragment_site(graph, site.matmul_id, self.fragment_chunk)
            self.report_ = None
            return graph
        out, self.report_ = rewrite_all(graph)
        return out

    def fit_transform(self, graph: Graph) -> Graph:
        return self.fit(graph).transform(graph)
