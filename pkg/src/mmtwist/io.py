"""Layered edge-list files, label files, and real-data preprocessing.

Edge-list format (tab separated, UTF-8)::

    #layers
    <layer_id>\t<layer_name>
    ...
    #nodes                      (optional block)
    <node_id>
    ...
    #edges
    <layer_id>\t<src>\t<dst>\t<weight>
    ...

Blank lines and lines starting with ``//`` are ignored.  Edges are undirected:
``(u, v)`` and ``(v, u)`` rows in one layer collapse to a single edge carrying
the larger weight.  Without a ``#nodes`` block, node ids are numbered in order
of first appearance in the edge rows; with one, the block fixes the node order
(isolated nodes included) and edges may only reference listed nodes.

Label files hold one ``<item_id>\t<label>`` row per item.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DataError, ParseError


@dataclass
class LayeredGraph:
    layer_names: list
    node_ids: list
    edges: list = field(default_factory=list)  # per layer: {(i, j): weight}, i <= j

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_layers(self):
        return len(self.layer_names)

    def n_edges(self):
        return sum(len(e) for e in self.edges)

    def tensor(self, nodes=None, layers=None):
        """Binary symmetric adjacency tensor restricted to node and layer index lists."""
        nodes = np.arange(self.n_nodes) if nodes is None else np.asarray(nodes)
        layers = range(self.n_layers) if layers is None else layers
        position = np.full(self.n_nodes, -1, dtype=np.int64)
        position[nodes] = np.arange(nodes.size)
        A = np.zeros((nodes.size, nodes.size, len(layers)), order="F")
        for out, l in enumerate(layers):
            for (i, j) in self.edges[l]:
                a, b = position[i], position[j]
                if a >= 0 and b >= 0:
                    A[a, b, out] = A[b, a, out] = 1.0
        return A


def _fields(line, count, lineno):
    parts = line.split("\t")
    if len(parts) != count:
        raise ParseError(f"expected {count} tab-separated fields, got {len(parts)}", lineno)
    return parts


def load_layered_edgelist(path):
    with open(path, encoding="utf-8") as fh:
        return parse_layered_edgelist(fh)


def parse_layered_edgelist(lines):
    layer_ids, layer_names = {}, []
    node_index, node_ids = {}, []
    declared_nodes = False
    edges = []
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("//"):
            continue
        if line.startswith("#"):
            section = line[1:].strip().lower()
            if section not in ("layers", "nodes", "edges"):
                raise ParseError(f"unknown section {line!r}", lineno)
            if section == "nodes":
                declared_nodes = True
            continue
        if section is None:
            raise ParseError("data before the first section header", lineno)
        if section == "layers":
            lid, name = _fields(line, 2, lineno)
            if lid in layer_ids:
                raise ParseError(f"duplicate layer id {lid!r}", lineno)
            layer_ids[lid] = len(layer_names)
            layer_names.append(name)
            edges.append({})
        elif section == "nodes":
            (nid,) = _fields(line, 1, lineno)
            if nid in node_index:
                raise ParseError(f"duplicate node id {nid!r}", lineno)
            node_index[nid] = len(node_ids)
            node_ids.append(nid)
        else:
            lid, src, dst, weight = _fields(line, 4, lineno)
            if lid not in layer_ids:
                raise ParseError(f"unknown layer {lid!r}", lineno)
            try:
                w = float(weight)
            except ValueError:
                raise ParseError(f"bad weight {weight!r}", lineno) from None
            if not w >= 0:
                raise ParseError(f"weights must be non-negative, got {weight!r}", lineno)
            ends = []
            for nid in (src, dst):
                if nid not in node_index:
                    if declared_nodes:
                        raise ParseError(f"unknown node {nid!r}", lineno)
                    node_index[nid] = len(node_ids)
                    node_ids.append(nid)
                ends.append(node_index[nid])
            key = (min(ends), max(ends))
            layer = edges[layer_ids[lid]]
            layer[key] = max(layer.get(key, w), w)
    return LayeredGraph(layer_names, node_ids, edges)


def write_layered_edgelist(path, graph, weights=True):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#layers\n")
        for l, name in enumerate(graph.layer_names):
            fh.write(f"{l}\t{name}\n")
        fh.write("#nodes\n")
        for nid in graph.node_ids:
            fh.write(f"{nid}\n")
        fh.write("#edges\n")
        for l, layer in enumerate(graph.edges):
            for (i, j), w in sorted(layer.items()):
                fh.write(f"{l}\t{graph.node_ids[i]}\t{graph.node_ids[j]}\t{w:g}\n")


def graph_from_tensor(A, node_ids=None, layer_names=None):
    """Wrap a binary symmetric tensor as a :class:`LayeredGraph` with unit weights."""
    n, _, L = A.shape
    node_ids = [f"n{i}" for i in range(n)] if node_ids is None else list(node_ids)
    layer_names = [f"layer{l}" for l in range(L)] if layer_names is None else list(layer_names)
    edges = []
    for l in range(L):
        i, j = np.nonzero(np.triu(A[:, :, l]))
        edges.append({(int(a), int(b)): 1.0 for a, b in zip(i, j)})
    return LayeredGraph(layer_names, node_ids, edges)


class Preprocessed(NamedTuple):
    tensor: np.ndarray
    node_ids: list
    layer_names: list


def largest_component(n, pairs):
    """Node indices of the largest connected component (lowest label on ties)."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if pairs:
        i, j = np.array(list(pairs)).T
    else:
        i = j = np.zeros(0, dtype=np.int64)
    graph = coo_matrix((np.ones(i.size), (i, j)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    sizes = np.bincount(comp)
    return np.flatnonzero(comp == sizes.argmax())


def preprocess(graph, weight_min=0.0, min_component=0, intersect=False):
    """Threshold weights, drop small layers, optionally intersect components.

    Edges lighter than ``weight_min`` are removed; layers whose largest
    connected component has fewer than ``min_component`` nodes are dropped;
    with ``intersect`` the node set shrinks to the intersection of the
    surviving layers' largest components.  Returns the binary tensor over the
    surviving nodes and layers, with their ids.
    """
    n = graph.n_nodes
    kept_edges = [
        {key: w for key, w in layer.items() if w >= weight_min} for layer in graph.edges
    ]
    thinned = LayeredGraph(graph.layer_names, graph.node_ids, kept_edges)
    layers, components = [], []
    for l, layer in enumerate(kept_edges):
        comp = largest_component(n, layer.keys())
        if comp.size >= min_component:
            layers.append(l)
            components.append(comp)
    if not layers:
        raise DataError("no layer survives the component-size filter")
    nodes = np.arange(n)
    if intersect:
        for l, comp in zip(layers, components):
            nodes = np.intersect1d(nodes, comp)
            if nodes.size == 0:
                raise DataError(
                    f"node intersection became empty at layer {graph.layer_names[l]!r}"
                )
    return Preprocessed(
        thinned.tensor(nodes, layers),
        [graph.node_ids[i] for i in nodes],
        [graph.layer_names[l] for l in layers],
    )


def write_labels(path, ids, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for item, label in zip(ids, labels):
            fh.write(f"{item}\t{int(label)}\n")


def read_labels(path):
    """Return ``(ids, labels)`` from a label file."""
    ids, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            item, label = _fields(line, 2, lineno)
            try:
                labels.append(int(label))
            except ValueError:
                raise ParseError(f"bad label {label!r}", lineno) from None
            ids.append(item)
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate item ids")
    return ids, np.array(labels, dtype=np.int64)


def write_matrix(path, ids, matrix):
    with open(path, "w", encoding="utf-8") as fh:
        for item, row in zip(ids, np.atleast_2d(matrix)):
            fh.write(item + "\t" + "\t".join(f"{v:.17g}" for v in row) + "\n")
