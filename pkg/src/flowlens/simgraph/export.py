"""GraphML / DOT / JSON serialisation of similarity graphs."""

from __future__ import annotations

import enum
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from ..errors import GraphIOError
from .graph import SimilarityGraph

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"

# (attr.name, attr.type, scope)
_GRAPHML_KEYS = [
    ("label", "string", "node"),
    ("degree", "int", "node"),
    ("community", "int", "node"),
    ("x", "double", "node"),
    ("y", "double", "node"),
]


class GraphFormat(str, enum.Enum):
    GRAPHML = "graphml"
    DOT = "dot"
    JSON = "json"

    @classmethod
    def parse(cls, value) -> "GraphFormat":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise GraphIOError(f"unknown graph format {value!r}") from None


def _require_annotations(graph: SimilarityGraph) -> None:
    if graph.communities is None or graph.layout is None:
        raise GraphIOError("communities and layout must be computed before export")


def graph_to_dict(graph: SimilarityGraph) -> dict:
    return {
        "nodes": [
            {
                "id": i,
                "label": lab,
                "degree": int(deg),
                "community": None if graph.communities is None else graph.communities[i],
                "x": None if graph.layout is None else float(graph.layout[i, 0]),
                "y": None if graph.layout is None else float(graph.layout[i, 1]),
            }
            for i, (lab, deg) in enumerate(zip(graph.labels, graph.node_degree))
        ],
        "edges": [[i, j] for i, j in graph.edges()],
    }


def graph_from_dict(d: dict) -> SimilarityGraph:
    nodes = sorted(d["nodes"], key=lambda n: n["id"])
    if [n["id"] for n in nodes] != list(range(len(nodes))):
        raise GraphIOError("node ids must be 0..n-1")
    g = SimilarityGraph.from_edges([n["label"] for n in nodes], [tuple(e) for e in d["edges"]])
    if nodes and all(n.get("community") is not None for n in nodes):
        g.communities = [int(n["community"]) for n in nodes]
    if nodes and all(n.get("x") is not None for n in nodes):
        g.layout = np.array([[n["x"], n["y"]] for n in nodes], dtype=float)
    if any(int(n.get("degree", deg)) != deg for n, deg in zip(nodes, g.node_degree)):
        raise GraphIOError("stored degrees disagree with the edge list")
    return g


def to_json(graph: SimilarityGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=1)


def to_dot(graph: SimilarityGraph) -> str:
    _require_annotations(graph)
    lines = ["graph similarity {"]
    for i, (lab, deg) in enumerate(zip(graph.labels, graph.node_degree)):
        x, y = (float(v) for v in graph.layout[i])
        name = json.dumps(lab)
        lines.append(
            f'  n{i} [label={name}, degree={int(deg)}, community={graph.communities[i]}, '
            f'x={x!r}, y={y!r}, pos="{x!r},{y!r}"];'
        )
    for i, j in graph.edges():
        lines.append(f"  n{i} -- n{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_graphml(graph: SimilarityGraph) -> str:
    _require_annotations(graph)
    ET.register_namespace("", GRAPHML_NS)
    q = lambda tag: f"{{{GRAPHML_NS}}}{tag}"  # noqa: E731
    root = ET.Element(q("graphml"))
    for name, typ, scope in _GRAPHML_KEYS:
        ET.SubElement(root, q("key"), {"id": name, "for": scope, "attr.name": name, "attr.type": typ})
    g = ET.SubElement(root, q("graph"), {"id": "similarity", "edgedefault": "undirected"})
    for i, (lab, deg) in enumerate(zip(graph.labels, graph.node_degree)):
        node = ET.SubElement(g, q("node"), {"id": f"n{i}"})
        x, y = graph.layout[i]
        for key, val in (("label", lab), ("degree", int(deg)), ("community", graph.communities[i]), ("x", repr(float(x))), ("y", repr(float(y)))):
            ET.SubElement(node, q("data"), {"key": key}).text = str(val)
    for k, (i, j) in enumerate(graph.edges()):
        ET.SubElement(g, q("edge"), {"id": f"e{k}", "source": f"n{i}", "target": f"n{j}"})
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


_WRITERS = {GraphFormat.GRAPHML: to_graphml, GraphFormat.DOT: to_dot, GraphFormat.JSON: to_json}


def export_graph(graph: SimilarityGraph, fmt, path) -> Path:
    fmt = GraphFormat.parse(fmt)
    if fmt is not GraphFormat.JSON:
        _require_annotations(graph)
    text = _WRITERS[fmt](graph)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise GraphIOError(f"cannot write {path}: {exc}") from exc
    return path


def import_graph_json(path) -> SimilarityGraph:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise GraphIOError(f"cannot read {path}: {exc}") from exc
    return graph_from_dict(d)
