"""Key-point graph extraction: the identity-bearing representation of a tag.

A pattern is cleaned (closing bridges 1-px scan breaks, then the largest
8-connected component is kept), thinned, and its skeleton pixels classified
by neighbor count: 1 -> endpoint, >=3 -> junction. Junction pixels within
2 px merge into one node at their centroid. Arcs between key points become
edges; residual cycles are broken by a maximum-spanning-tree on arc length;
short leaf spurs (skeleton noise) are pruned and pass-through nodes
dissolved. The node nearest the foreground centroid becomes the root, and
coordinates are put in a canonical frame (centroid at origin, principal
axis along +x, root in the upper half-plane) so equal tags compare equal.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegeneratePattern, EmptyForeground
from .patterns import DendriteImage
from .skeleton import (
    EIGHT,
    bridge_components,
    despeckle,
    largest_component,
    neighbor_counts,
    thin,
)

ENDPOINT = "endpoint"
JUNCTION = "junction"
ROOT = "root"

MERGE_RADIUS = 2.0      # junction pixels at most this far apart fuse into one node
MIN_SPUR = 3.0          # leaf arcs shorter than this are skeletonization noise
COORD_QUANTUM = 0.1     # canonical-form coordinate quantization for hashing

_NBR8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_MERGE_OFFS = tuple(
    (dr, dc)
    for dr in range(-2, 3)
    for dc in range(-2, 3)
    if (dr, dc) != (0, 0) and dr * dr + dc * dc <= MERGE_RADIUS**2
)
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class KeyPoint:
    id: int
    x: float
    y: float
    kind: str


@dataclass(frozen=True)
class GraphEdge:
    a: int
    b: int
    arc_length: float
    chord_angle: float


@dataclass(frozen=True)
class Normalization:
    shift: tuple[float, float]
    rotation: float
    scale: float = 1.0


@dataclass
class KeyPointGraph:
    nodes: list[KeyPoint]
    edges: list[GraphEdge]
    normalization: Normalization
    _degrees: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._degrees:
            deg: dict[int, int] = {n.id: 0 for n in self.nodes}
            for e in self.edges:
                deg[e.a] += 1
                deg[e.b] += 1
            self._degrees = deg

    def degree(self, node_id: int) -> int:
        return self._degrees[node_id]

    @property
    def root(self) -> KeyPoint:
        for n in self.nodes:
            if n.kind == ROOT:
                return n
        raise ValueError("graph has no root")

    def coords(self) -> np.ndarray:
        return np.array([[n.x, n.y] for n in self.nodes], dtype=np.float64)

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": n.id, "x": n.x, "y": n.y, "kind": n.kind} for n in self.nodes],
            "edges": [
                {"a": e.a, "b": e.b, "arc_length": e.arc_length, "chord_angle": e.chord_angle}
                for e in self.edges
            ],
            "normalization": {
                "shift": list(self.normalization.shift),
                "rotation": self.normalization.rotation,
                "scale": self.normalization.scale,
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "KeyPointGraph":
        return cls(
            nodes=[KeyPoint(n["id"], n["x"], n["y"], n["kind"]) for n in doc["nodes"]],
            edges=[
                GraphEdge(e["a"], e["b"], e["arc_length"], e["chord_angle"])
                for e in doc["edges"]
            ],
            normalization=Normalization(
                shift=tuple(doc["normalization"]["shift"]),
                rotation=doc["normalization"]["rotation"],
                scale=doc["normalization"]["scale"],
            ),
        )


def extract_graph(image: DendriteImage, min_spur: float = MIN_SPUR) -> KeyPointGraph:
    """Extract the canonical key-point tree of a pattern."""
    if not image.pixels.any():
        raise EmptyForeground("cannot extract a graph from an empty pattern")
    closed = ndimage.binary_closing(image.pixels, structure=EIGHT)
    cleaned = largest_component(bridge_components(closed))
    skel = thin(cleaned)

    nodes_rc, node_px = _classify_key_points(skel)
    if len(nodes_rc) < 2:
        raise DegeneratePattern(f"only {len(nodes_rc)} key points; unusable tag")
    arcs = _trace_arcs(skel, node_px)
    adjacency = _spanning_tree(len(nodes_rc), arcs)
    adjacency, _pruned = _prune_and_dissolve(adjacency, min_spur)
    if len(adjacency) < 2:
        raise DegeneratePattern("pattern reduces to fewer than 2 key points")

    # the canonical frame comes from the despeckled pattern mass: glued
    # noise nubs and specks are stripped so the centroid and principal
    # axis barely move under scan noise
    frame_mass = despeckle(closed)
    frame_rc = np.argwhere(frame_mass if frame_mass.any() else cleaned).astype(np.float64)
    return _canonicalize(nodes_rc, adjacency, frame_rc)


def _classify_key_points(skel: np.ndarray):
    """Key points from skeleton degrees; junction clusters fuse at their centroid.

    Returns (list of (x, y) node positions, dict pixel -> node index).
    """
    counts = neighbor_counts(skel)
    jmask = (counts >= 3) & skel
    emask = (counts == 1) & skel

    nodes_rc: list[tuple[float, float]] = []
    node_px: dict[tuple[int, int], int] = {}
    jset = set(zip(*(arr.tolist() for arr in np.nonzero(jmask))))
    seen: set[tuple[int, int]] = set()
    for p in sorted(jset):
        if p in seen:
            continue
        cluster = [p]
        seen.add(p)
        stack = [p]
        while stack:
            r, c = stack.pop()
            for dr, dc in _MERGE_OFFS:
                q = (r + dr, c + dc)
                if q in jset and q not in seen:
                    seen.add(q)
                    stack.append(q)
                    cluster.append(q)
        nid = len(nodes_rc)
        nodes_rc.append(
            (sum(q[0] for q in cluster) / len(cluster), sum(q[1] for q in cluster) / len(cluster))
        )
        for q in cluster:
            node_px[q] = nid
    for p in sorted(zip(*(arr.tolist() for arr in np.nonzero(emask)))):
        node_px[p] = len(nodes_rc)
        nodes_rc.append((float(p[0]), float(p[1])))
    return nodes_rc, node_px


@dataclass(frozen=True)
class _Arc:
    a: int
    b: int
    length: float
    px: tuple  # skeleton pixels on the arc, end key pixels included


def _trace_arcs(skel: np.ndarray, node_px: dict) -> list[_Arc]:
    """Walk skeleton arcs between key pixels.

    Interior pixels have exactly two skeleton neighbors, so each arc is
    followed once and its interior marked visited; direct key-to-key
    contacts are deduplicated by pixel pair. Self-loops are kept here and
    removed by the spanning tree.
    """
    skelset = set(zip(*(arr.tolist() for arr in np.nonzero(skel))))
    visited: set[tuple[int, int]] = set()
    pair_seen: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    arcs: list[_Arc] = []
    for p in sorted(node_px):
        pr, pc = p
        for dr, dc in _NBR8:
            q = (pr + dr, pc + dc)
            if q not in skelset:
                continue
            step = _SQRT2 if dr and dc else 1.0
            if q in node_px:
                if node_px[q] == node_px[p]:
                    continue
                key = (p, q) if p < q else (q, p)
                if key in pair_seen:
                    continue
                pair_seen.add(key)
                arcs.append(_Arc(node_px[p], node_px[q], step, (p, q)))
                continue
            if q in visited:
                continue
            length = step
            path = [p, q]
            prev, cur = p, q
            visited.add(q)
            while cur not in node_px:
                nxt = None
                cr, cc = cur
                for dr2, dc2 in _NBR8:
                    w = (cr + dr2, cc + dc2)
                    if w != prev and w in skelset:
                        nxt = w
                        length += _SQRT2 if dr2 and dc2 else 1.0
                        break
                if nxt is None:
                    break  # dead end on a non-key pixel (isolated dot); drop
                prev, cur = cur, nxt
                path.append(cur)
                if cur not in node_px:
                    visited.add(cur)
            if cur in node_px:
                arcs.append(_Arc(node_px[p], node_px[cur], length, tuple(path)))
    return arcs


# adjacency entry: node -> list of (neighbor, arc_length, contributing arc ids)
_Adjacency = dict[int, list[tuple[int, float, frozenset]]]


def _spanning_tree(n_nodes: int, arcs: list[_Arc]) -> _Adjacency:
    """Maximum spanning tree on arc length (Kruskal); drops loops and parallels."""
    order = sorted(
        (i for i in range(len(arcs)) if arcs[i].a != arcs[i].b),
        key=lambda i: (-arcs[i].length, arcs[i].a, arcs[i].b),
    )
    parent = list(range(n_nodes))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    adjacency: _Adjacency = {}
    for i in order:
        arc = arcs[i]
        ra, rb = find(arc.a), find(arc.b)
        if ra == rb:
            continue
        parent[ra] = rb
        adjacency.setdefault(arc.a, []).append((arc.b, arc.length, frozenset((i,))))
        adjacency.setdefault(arc.b, []).append((arc.a, arc.length, frozenset((i,))))
    return adjacency


def _prune_and_dissolve(adjacency: _Adjacency, min_spur: float) -> tuple[_Adjacency, set[int]]:
    """Remove sub-threshold leaf arcs, then contract pass-through nodes.

    Iterates to a fixed point in deterministic order; never reduces the
    tree below 2 nodes. Returns the surviving adjacency and the ids of the
    arcs that were pruned away.
    """
    adj = {n: list(v) for n, v in adjacency.items()}
    pruned: set[int] = set()
    changed = True
    while changed:
        changed = False
        leaves = sorted(
            (n for n in adj if len(adj[n]) == 1), key=lambda n: (adj[n][0][1], n)
        )
        for n in leaves:
            if len(adj) <= 2:
                break
            if len(adj.get(n, ())) != 1:
                continue
            m, length, ids = adj[n][0]
            if length < min_spur:
                adj[m] = [e for e in adj[m] if e[0] != n]
                del adj[n]
                pruned |= ids
                changed = True
        for n in sorted(adj):
            if len(adj.get(n, ())) != 2:
                continue
            (a, la, ia), (b, lb, ib) = adj[n]
            if a == b:
                continue
            merged = ia | ib
            adj[a] = [e for e in adj[a] if e[0] != n] + [(b, la + lb, merged)]
            adj[b] = [e for e in adj[b] if e[0] != n] + [(a, la + lb, merged)]
            del adj[n]
            changed = True
    return adj, pruned


def _canonicalize(nodes_rc: list, adjacency: _Adjacency, frame_rc: np.ndarray) -> KeyPointGraph:
    kept = sorted(adjacency)
    pts = np.array([[nodes_rc[n][1], nodes_rc[n][0]] for n in kept], dtype=np.float64)  # (x, y)

    frame_xy = frame_rc[:, ::-1]
    centroid = frame_xy.mean(axis=0)
    frame_centered = frame_xy - centroid
    shifted = pts - centroid

    # root = key point nearest the foreground centroid
    d2 = (shifted**2).sum(axis=1)
    root_pos = int(np.lexsort((pts[:, 1], pts[:, 0], d2))[0])

    cov = frame_centered.T @ frame_centered / len(frame_centered)
    evals, evecs = np.linalg.eigh(cov)
    major = evecs[:, 1]  # eigh is ascending
    theta = math.atan2(major[1], major[0])
    tied = evals[1] <= 0 or (evals[1] - evals[0]) < 0.01 * evals[1]
    if tied:
        candidates = [-theta, -theta + math.pi / 2, -theta + math.pi, -theta + 3 * math.pi / 2]
        rotation = min(candidates, key=lambda r: _serial_key(_rotated(shifted, r), kept, adjacency, root_pos))
    else:
        rotation = -theta
        if _rotated(shifted, rotation)[root_pos, 1] < 0:
            rotation += math.pi
    canon = _rotated(shifted, rotation)

    # canonical node order and ids
    kinds = {}
    for i, n in enumerate(kept):
        deg = len(adjacency[n])
        kinds[i] = ROOT if i == root_pos else (ENDPOINT if deg == 1 else JUNCTION)
    order = sorted(range(len(kept)), key=lambda i: (canon[i, 0], canon[i, 1], kinds[i]))
    new_id = {old: new for new, old in enumerate(order)}

    nodes = [
        KeyPoint(new_id[i], float(canon[i, 0]), float(canon[i, 1]), kinds[i])
        for i in order
    ]

    kept_pos = {n: i for i, n in enumerate(kept)}
    edges = []
    done = set()
    pos = {new_id[i]: canon[i] for i in range(len(kept))}
    for i, n in enumerate(kept):
        for m, length, _ids in adjacency[n]:
            a, b = new_id[i], new_id[kept_pos[m]]
            if a > b:
                a, b = b, a
            if (a, b) in done:
                continue
            done.add((a, b))
            dx = pos[b][0] - pos[a][0]
            dy = pos[b][1] - pos[a][1]
            angle = math.atan2(dy, dx)
            if angle >= math.pi:
                angle = -math.pi
            edges.append(GraphEdge(a, b, float(length), float(angle)))
    edges.sort(key=lambda e: (e.a, e.b))

    norm = Normalization(
        shift=(-float(centroid[0]), -float(centroid[1])),
        rotation=float(rotation),
        scale=1.0,
    )
    return KeyPointGraph(nodes, edges, norm)


def _rotated(pts: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return pts @ np.array([[c, s], [-s, c]])


def _serial_key(canon: np.ndarray, kept: list, adjacency: dict, root_pos: int):
    rows = []
    for i in range(len(kept)):
        deg = len(adjacency[kept[i]])
        kind = ROOT if i == root_pos else (ENDPOINT if deg == 1 else JUNCTION)
        rows.append((round(canon[i, 0], 1) + 0.0, round(canon[i, 1], 1) + 0.0, kind))
    return sorted(rows)


def canonical_id(graph: KeyPointGraph) -> str:
    """256-bit content hash of the canonical serialized form (hex string).

    Nodes are quantized to 0.1 px, sorted by (x, y, kind) and relabeled, so
    the id is independent of stored node labels; it is not invertible.
    """
    q = COORD_QUANTUM
    keyed = sorted(
        (round(n.x / q) * q + 0.0, round(n.y / q) * q + 0.0, n.kind, n.id) for n in graph.nodes
    )
    relabel = {old_id: new for new, (_, _, _, old_id) in enumerate(keyed)}
    node_part = [[x, y, kind] for x, y, kind, _ in keyed]
    edge_part = sorted(
        [
            min(relabel[e.a], relabel[e.b]),
            max(relabel[e.a], relabel[e.b]),
            round(e.arc_length / q) * q + 0.0,
            round(e.chord_angle / 0.001) * 0.001 + 0.0,
        ]
        for e in graph.edges
    )
    blob = json.dumps({"nodes": node_part, "edges": edge_part}, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def angular_arc_profile(graph: KeyPointGraph, bins: int) -> np.ndarray:
    """Arc-length mass histogram over the angular bin of each edge midpoint."""
    coords = {n.id: (n.x, n.y) for n in graph.nodes}
    hist = np.zeros(bins)
    for e in graph.edges:
        ax, ay = coords[e.a]
        bx, by = coords[e.b]
        ang = math.atan2((ay + by) / 2.0, (ax + bx) / 2.0)
        b = int((ang + math.pi) / (2 * math.pi) * bins) % bins
        hist[b] += e.arc_length
    return hist


def radial_arc_profile(graph: KeyPointGraph, bin_edges: np.ndarray) -> np.ndarray:
    """Arc-length mass histogram over the radius of each edge midpoint."""
    coords = {n.id: (n.x, n.y) for n in graph.nodes}
    radii = []
    weights = []
    for e in graph.edges:
        ax, ay = coords[e.a]
        bx, by = coords[e.b]
        radii.append(math.hypot((ax + bx) / 2.0, (ay + by) / 2.0))
        weights.append(e.arc_length)
    return np.histogram(radii, bins=bin_edges, weights=weights)[0]


def graph_depth(graph: KeyPointGraph) -> int:
    """Maximum hop count from the root."""
    adj: dict[int, list[int]] = {n.id: [] for n in graph.nodes}
    for e in graph.edges:
        adj[e.a].append(e.b)
        adj[e.b].append(e.a)
    start = graph.root.id
    depth = {start: 0}
    frontier = [start]
    best = 0
    while frontier:
        nxt = []
        for n in frontier:
            for m in adj[n]:
                if m not in depth:
                    depth[m] = depth[n] + 1
                    best = max(best, depth[m])
                    nxt.append(m)
        frontier = nxt
    return best
