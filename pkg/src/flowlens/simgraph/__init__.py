"""Similarity graphs over entities, community detection and layout."""

from .export import GraphFormat, export_graph, graph_from_dict, graph_to_dict, import_graph_json, to_dot, to_graphml, to_json
from .graph import SimilarityGraph, build_similarity_graph
from .layout import fr_layout
from .louvain import LouvainResult, louvain, louvain_partition, modularity

__all__ = [
    "GraphFormat",
    "LouvainResult",
    "SimilarityGraph",
    "build_similarity_graph",
    "export_graph",
    "fr_layout",
    "graph_from_dict",
    "graph_to_dict",
    "import_graph_json",
    "louvain",
    "louvain_partition",
    "modularity",
    "to_dot",
    "to_graphml",
    "to_json",
]
