"""Fixed-length graph descriptors and their low-dimensional surrogates.

A 32-slot vector summarizes a key-point graph: 9 scalar statistics, the
magnitudes of angular-mass Fourier harmonics (how arm mass is laid out
around the centroid; exactly rotation-invariant, so frame jitter cannot
move them), a radial mass histogram, and a node-degree histogram. Slot
scales are fixed constants so vectors are comparable across corpora
without refitting. A PCA projection maps vectors to a 2-D surrogate
plane used for fast shortlisting; the projection is one-way
(non-injective), so surrogates do not expose the pattern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCovariance,
    DegenerateGraph,
    DimensionMismatch,
    InsufficientSamples,
    ModelMissing,
)
from .graphs import KeyPointGraph, angular_arc_profile, graph_depth, radial_arc_profile

DIMENSION = 32
SURROGATE_DIMENSION = 2

# Fixed scalar normalizers (slot -> divisor); angles are handled separately.
SCALAR_NORMALIZERS = {
    "node_count": 512.0,
    "edge_count": 512.0,
    "endpoint_junction_ratio": 16.0,
    "arc_length_mean": 64.0,
    "arc_length_std": 64.0,
    "depth": 64.0,
    "max_degree": 8.0,
}

PROFILE_BINS = 120
SPECTRUM_LO, SPECTRUM_HI = 2, 11  # harmonics |F_2..F_11| / F_0, 10 slots
SPECTRUM_SCALE = 2.0              # boosts the stable slots so PCA prefers them
RADIAL_BINS = np.array([0.0, 24.0, 48.0, 72.0, 96.0, 120.0, np.inf])  # 6 slots
DEGREE_BIN_LO, DEGREE_BIN_HI = 2, 8  # degrees clamp into [2, 8] -> 7 bins


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # float64, shape (32,)

    def __post_init__(self):
        if self.values.shape != (DIMENSION,):
            raise DimensionMismatch(f"feature vector must have {DIMENSION} slots")


@dataclass(frozen=True)
class ProjectionModel:
    mean: np.ndarray        # (32,)
    components: np.ndarray  # (32, 2), orthonormal columns
    trained_on: int
    version: int

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "trained_on": self.trained_on,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, doc: dict) -> "ProjectionModel":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            components=np.asarray(doc["components"], dtype=np.float64),
            trained_on=int(doc["trained_on"]),
            version=int(doc["version"]),
        )


@dataclass(frozen=True)
class Surrogate:
    u: float
    v: float
    model_version: int

    def point(self) -> np.ndarray:
        return np.array([self.u, self.v])


def featurize(graph: KeyPointGraph) -> FeatureVector:
    """Deterministic 32-slot descriptor of a graph."""
    n = len(graph.nodes)
    if n < 2:
        raise DegenerateGraph(f"graph has {n} nodes; need at least 2")
    degrees = np.array([graph.degree(node.id) for node in graph.nodes], dtype=np.float64)
    arcs = np.array([e.arc_length for e in graph.edges], dtype=np.float64)
    angles = np.array([e.chord_angle for e in graph.edges], dtype=np.float64) % np.pi
    n_end = int((degrees == 1).sum())
    n_junc = int((degrees >= 3).sum())

    scalars = np.array(
        [
            n / SCALAR_NORMALIZERS["node_count"],
            len(graph.edges) / SCALAR_NORMALIZERS["edge_count"],
            (n_end / max(n_junc, 1)) / SCALAR_NORMALIZERS["endpoint_junction_ratio"],
            arcs.mean() / SCALAR_NORMALIZERS["arc_length_mean"],
            arcs.std() / SCALAR_NORMALIZERS["arc_length_std"],
            angles.mean() / np.pi,
            angles.std() / np.pi,
            graph_depth(graph) / SCALAR_NORMALIZERS["depth"],
            degrees.max() / SCALAR_NORMALIZERS["max_degree"],
        ]
    )
    profile = angular_arc_profile(graph, PROFILE_BINS)
    F = np.fft.rfft(profile)
    spectrum = SPECTRUM_SCALE * np.abs(F[SPECTRUM_LO : SPECTRUM_HI + 1]) / (np.abs(F[0]) + 1e-12)

    rad_hist = radial_arc_profile(graph, RADIAL_BINS)
    rad_hist = rad_hist / rad_hist.sum()

    clamped = np.clip(degrees, DEGREE_BIN_LO, DEGREE_BIN_HI).astype(int) - DEGREE_BIN_LO
    deg_hist = np.bincount(clamped, minlength=DEGREE_BIN_HI - DEGREE_BIN_LO + 1).astype(np.float64)
    deg_hist /= deg_hist.sum()

    return FeatureVector(np.concatenate([scalars, spectrum, rad_hist, deg_hist]))


def fit_projection(vectors: list[FeatureVector], version: int = 1) -> ProjectionModel:
    """PCA fit: top-2 eigenvectors of the sample covariance, sign-fixed."""
    if len(vectors) < 2:
        raise InsufficientSamples(f"need at least 2 vectors, got {len(vectors)}")
    data = np.stack([v.values for v in vectors])
    mean = data.mean(axis=0)
    cov = np.cov(data, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    rank = int((evals > max(evals[-1], 0.0) * 1e-10 + 1e-300).sum())
    if rank < SURROGATE_DIMENSION:
        raise DegenerateCovariance(rank, SURROGATE_DIMENSION)
    components = evecs[:, ::-1][:, :SURROGATE_DIMENSION].copy()
    for j in range(components.shape[1]):
        col = components[:, j]
        if col[int(np.argmax(np.abs(col)))] < 0:
            components[:, j] = -col
    return ProjectionModel(mean=mean, components=components, trained_on=len(vectors), version=version)


def project(vector: FeatureVector, model: ProjectionModel | None) -> Surrogate:
    """One-way map into the surrogate plane: components^T (v - mean)."""
    if model is None:
        raise ModelMissing("no projection model fitted")
    if vector.values.shape[0] != model.mean.shape[0]:
        raise DimensionMismatch(
            f"vector dimension {vector.values.shape[0]} != model dimension {model.mean.shape[0]}"
        )
    uv = model.components.T @ (vector.values - model.mean)
    return Surrogate(u=float(uv[0]), v=float(uv[1]), model_version=model.version)
