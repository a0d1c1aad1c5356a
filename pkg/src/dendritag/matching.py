"""Graph similarity scoring and the two-step identification search.

Scoring solves an exact minimum-cost one-to-one assignment between node
descriptors (canonical position, structural kind, degree, mean incident
arc length); pairs within ``tau_node`` count as matched, and the matched
fraction is weighted by how many edges land consistently on both sides.
The canonical frame carries a small residual rotation error (axis noise,
plus a half-turn ambiguity when the root sits near the principal axis),
so before assigning, the matcher estimates the pair's rotation offset
from the circular cross-correlation of angular mass profiles, probing a
bounded window around 0 and around a half turn.

Identification first shortlists the k nearest registered surrogates in
the 2-D plane, then scores only those candidates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import DegenerateGraph, EmptyIndex, EmptyRegistry, ModelVersionMismatch
from .features import ProjectionModel, Surrogate, featurize, project
from .graphs import KeyPointGraph, angular_arc_profile
from .patterns import DendriteImage

# Descriptor weights: position in canonical px; the remaining channels are
# scaled to comparable pixel-equivalent penalties.
KIND_WEIGHT = 2.0
DEGREE_WEIGHT = 0.5
ARC_WEIGHT = 0.1

DEFAULT_TAU_NODE = 4.0
DEFAULT_ACCEPT_THRESHOLD = 0.75
DEFAULT_K = 25
RANKED_LIMIT = 5

PROFILE_BINS = 120           # 3-degree angular resolution
ALIGN_WINDOW_DEG = 15.0      # rotation refinement search half-width
_SMOOTH_KERNEL = np.array([0.25, 0.5, 1.0, 0.5, 0.25])
_SMOOTH_KERNEL = _SMOOTH_KERNEL / _SMOOTH_KERNEL.sum()


@dataclass(frozen=True)
class MatchScore:
    value: float
    matched_nodes: int
    candidate_id: str | None = None

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "matched_nodes": self.matched_nodes,
            "candidate_id": self.candidate_id,
        }


@dataclass(frozen=True)
class IdentifyResult:
    decision: str  # "matched" | "no_match"
    best: MatchScore | None
    shortlist_size: int
    elapsed: float
    ranked: list[MatchScore]
    # seam for a depth-based secondary authenticator; never populated here
    secondary_verdict: str | None = None

    def to_json(self) -> dict:
        return {
            "decision": self.decision,
            "best": self.best.to_json() if self.best else None,
            "shortlist_size": self.shortlist_size,
            "elapsed": self.elapsed,
            "ranked": [s.to_json() for s in self.ranked],
            "secondary_verdict": self.secondary_verdict,
        }


class MatchPrep:
    """Precomputed arrays for repeated scoring of one graph."""

    __slots__ = (
        "graph",
        "descriptors",
        "edge_set",
        "n_nodes",
        "n_edges",
        "order_key",
        "profile_fft",
    )

    def __init__(self, graph: KeyPointGraph):
        if len(graph.nodes) < 2:
            raise DegenerateGraph("cannot match a graph with fewer than 2 nodes")
        self.graph = graph
        self.descriptors = _descriptors(graph)
        self.edge_set = frozenset((min(e.a, e.b), max(e.a, e.b)) for e in graph.edges)
        self.n_nodes = len(graph.nodes)
        self.n_edges = len(graph.edges)
        self.order_key = (self.n_nodes, self.descriptors.tobytes())
        smoothed = ndimage.convolve1d(
            angular_arc_profile(graph, PROFILE_BINS), _SMOOTH_KERNEL, mode="wrap"
        )
        self.profile_fft = np.fft.rfft(smoothed)


def _descriptors(graph: KeyPointGraph) -> np.ndarray:
    """Node descriptor rows ordered by node id."""
    incident: dict[int, list[float]] = {n.id: [] for n in graph.nodes}
    for e in graph.edges:
        incident[e.a].append(e.arc_length)
        incident[e.b].append(e.arc_length)
    rows = np.empty((len(graph.nodes), 5), dtype=np.float64)
    for i, n in enumerate(sorted(graph.nodes, key=lambda n: n.id)):
        deg = graph.degree(n.id)
        arcs = incident[n.id]
        rows[i] = (
            n.x,
            n.y,
            KIND_WEIGHT * (0.0 if deg == 1 else 1.0),
            DEGREE_WEIGHT * deg,
            ARC_WEIGHT * (sum(arcs) / len(arcs)),
        )
    return rows


def prepare(graph: KeyPointGraph) -> MatchPrep:
    return MatchPrep(graph)


def _refinement_angles(pa: MatchPrep, pb: MatchPrep) -> list[float]:
    """Candidate rotation offsets of ``pa`` toward ``pb``.

    The circular cross-correlation of the angular mass profiles peaks at the
    pair's true rotation offset; the search is restricted to a window around
    0 and around pi (half-turn frame ambiguity), because anything further
    means the graphs genuinely differ and should not be aligned away. The
    exact canonical orientations 0 and pi are always probed as well, so the
    refinement can only improve on the unrefined score.
    """
    corr = np.fft.irfft(np.conj(pa.profile_fft) * pb.profile_fft, n=PROFILE_BINS)
    bin_width = 2 * math.pi / PROFILE_BINS
    half_window = max(1, int(round(math.radians(ALIGN_WINDOW_DEG) / bin_width)))
    angles = [0.0, math.pi]

    def refined(best: int) -> float:
        left = corr[(best - 1) % PROFILE_BINS]
        mid = corr[best]
        right = corr[(best + 1) % PROFILE_BINS]
        denom = left - 2 * mid + right
        frac = 0.0 if denom == 0 else 0.5 * (left - right) / denom
        offset = best if best <= PROFILE_BINS // 2 else best - PROFILE_BINS
        return (offset + frac) * bin_width

    for center_bin in (0, PROFILE_BINS // 2):
        bins = [(center_bin + o) % PROFILE_BINS for o in range(-half_window, half_window + 1)]
        angles.append(refined(max(bins, key=lambda i: (corr[i], -abs(i - center_bin)))))
    # global peak rescues pairs whose near-isotropic mass made the canonical
    # frame estimate unreliable beyond the local window
    angles.append(refined(int(np.argmax(corr))))
    unique: list[float] = []
    for a in angles:
        if all(abs(a - u) > bin_width / 4 for u in unique):
            unique.append(a)
    return unique


def _assignment_score(
    desc_a: np.ndarray, pa: MatchPrep, pb: MatchPrep, tau_node: float
) -> MatchScore:
    cost = cdist(desc_a, pb.descriptors)
    rows, cols = linear_sum_assignment(cost)
    within = cost[rows, cols] <= tau_node
    matched = int(within.sum())
    if matched == 0:
        return MatchScore(value=0.0, matched_nodes=0)

    node_term = 2.0 * matched / (pa.n_nodes + pb.n_nodes)
    a_to_b = {int(r): int(c) for r, c, ok in zip(rows, cols, within) if ok}
    b_to_a = {c: r for r, c in a_to_b.items()}
    consistent = 0
    for ea, eb in pa.edge_set:
        ma, mb = a_to_b.get(ea), a_to_b.get(eb)
        if ma is not None and mb is not None and (min(ma, mb), max(ma, mb)) in pb.edge_set:
            consistent += 1
    for ea, eb in pb.edge_set:
        ma, mb = b_to_a.get(ea), b_to_a.get(eb)
        if ma is not None and mb is not None and (min(ma, mb), max(ma, mb)) in pa.edge_set:
            consistent += 1
    edge_term = consistent / (pa.n_edges + pb.n_edges)
    return MatchScore(value=node_term * edge_term, matched_nodes=matched)


def _rotated_descriptors(desc: np.ndarray, angle: float) -> np.ndarray:
    if angle == 0.0:
        return desc
    out = desc.copy()
    c, s = math.cos(angle), math.sin(angle)
    x = desc[:, 0] * c - desc[:, 1] * s
    y = desc[:, 0] * s + desc[:, 1] * c
    out[:, 0] = x
    out[:, 1] = y
    return out


def graph_match_score(
    a: KeyPointGraph | MatchPrep,
    b: KeyPointGraph | MatchPrep,
    tau_node: float = DEFAULT_TAU_NODE,
) -> MatchScore:
    """Assignment-based similarity in [0, 1]; exactly symmetric in (a, b)."""
    pa = a if isinstance(a, MatchPrep) else MatchPrep(a)
    pb = b if isinstance(b, MatchPrep) else MatchPrep(b)
    if pb.order_key < pa.order_key:
        pa, pb = pb, pa  # canonical ordering makes ties side-independent

    best: MatchScore | None = None
    for angle in _refinement_angles(pa, pb):
        score = _assignment_score(_rotated_descriptors(pa.descriptors, angle), pa, pb, tau_node)
        if best is None or score.value > best.value:
            best = score
    return best


@dataclass(frozen=True)
class SurrogateIndex:
    """All registered surrogates for one model version."""

    record_ids: list[str]
    points: np.ndarray  # (n, 2)
    model_version: int

    @classmethod
    def build(cls, entries: list[tuple[str, Surrogate]], model_version: int) -> "SurrogateIndex":
        ids = [r for r, _ in entries]
        pts = (
            np.array([[s.u, s.v] for _, s in entries], dtype=np.float64)
            if entries
            else np.empty((0, 2))
        )
        return cls(record_ids=ids, points=pts, model_version=model_version)


def shortlist(query: Surrogate, index: SurrogateIndex, k: int) -> list[str]:
    """The k nearest record ids by surrogate distance; ties by ascending id."""
    if len(index.record_ids) == 0:
        raise EmptyIndex("no registered surrogates")
    if query.model_version != index.model_version:
        raise ModelVersionMismatch(
            f"query surrogate v{query.model_version} vs index v{index.model_version}"
        )
    if k < 1:
        raise EmptyIndex("k must be positive")
    d = np.linalg.norm(index.points - query.point(), axis=1)
    ranked = sorted(range(len(d)), key=lambda i: (d[i], index.record_ids[i]))
    return [index.record_ids[i] for i in ranked[:k]]


@dataclass(frozen=True)
class RegistrySnapshot:
    """Immutable view of the registry for one identification."""

    model: ProjectionModel | None
    index: SurrogateIndex
    preps: dict[str, MatchPrep] = field(default_factory=dict)


def identify(
    image: DendriteImage,
    snapshot: RegistrySnapshot,
    k: int = DEFAULT_K,
    accept_threshold: float = DEFAULT_ACCEPT_THRESHOLD,
    tau_node: float = DEFAULT_TAU_NODE,
) -> IdentifyResult:
    """Two-step search: surrogate shortlist, then graph matching on candidates."""
    from .graphs import extract_graph  # local import keeps module load light

    if snapshot.model is None or len(snapshot.index.record_ids) == 0:
        raise EmptyRegistry("no records with a current-version surrogate")
    t0 = time.perf_counter()
    graph = extract_graph(image)
    vector = featurize(graph)
    surrogate = project(vector, snapshot.model)
    candidates = shortlist(surrogate, snapshot.index, k)
    query_prep = MatchPrep(graph)
    scored = []
    for rid in candidates:
        s = graph_match_score(query_prep, snapshot.preps[rid], tau_node)
        scored.append(MatchScore(value=s.value, matched_nodes=s.matched_nodes, candidate_id=rid))
    scored.sort(key=lambda s: (-s.value, s.candidate_id))
    elapsed = time.perf_counter() - t0
    best = scored[0] if scored else None
    decision = "matched" if best is not None and best.value >= accept_threshold else "no_match"
    return IdentifyResult(
        decision=decision,
        best=best,
        shortlist_size=len(candidates),
        elapsed=elapsed,
        ranked=scored[:RANKED_LIMIT],
    )


def genuine_impostor_rows(
    preps: list[tuple[str, MatchPrep]],
    queries: list[tuple[str, MatchPrep]] | None = None,
    tau_node: float = DEFAULT_TAU_NODE,
) -> list[tuple[str, float]]:
    """Score distribution rows (pair_kind, score) for threshold calibration.

    With no queries, scores all registered pairs as impostors and each
    record against itself as genuine. With perturbed queries given, each
    query scores against its own record (genuine) and all others
    (impostor).
    """
    rows: list[tuple[str, float]] = []
    if queries is None:
        for i, (_, pi) in enumerate(preps):
            rows.append(("genuine", graph_match_score(pi, pi, tau_node).value))
            for j in range(i + 1, len(preps)):
                rows.append(("impostor", graph_match_score(pi, preps[j][1], tau_node).value))
    else:
        by_id = dict(preps)
        for qid, qprep in queries:
            for rid, rprep in by_id.items():
                kind = "genuine" if rid == qid else "impostor"
                rows.append((kind, graph_match_score(qprep, rprep, tau_node).value))
    return rows
