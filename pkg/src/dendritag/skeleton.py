"""Topology-preserving thinning (Zhang-Suen) and skeleton pixel classification."""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .errors import EmptyForeground
from .patterns import DendriteImage

EIGHT = np.ones((3, 3), dtype=np.uint8)


def _neighbor_views(arr: np.ndarray):
    """Zero-padded P2..P9 neighborhoods (N, NE, E, SE, S, SW, W, NW)."""
    p = np.pad(arr, 1)
    return (
        p[:-2, 1:-1],  # P2 north
        p[:-2, 2:],    # P3 north-east
        p[1:-1, 2:],   # P4 east
        p[2:, 2:],     # P5 south-east
        p[2:, 1:-1],   # P6 south
        p[2:, :-2],    # P7 south-west
        p[1:-1, :-2],  # P8 west
        p[:-2, :-2],   # P9 north-west
    )


def thin(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of a boolean mask to a 1-pixel-wide skeleton.

    Runs both sub-iterations until neither deletes a pixel, which makes the
    operation idempotent: a second call starts from a state with nothing
    deletable and returns its input.
    """
    skel = mask.astype(np.uint8)
    while True:
        changed = False
        for parity in (0, 1):
            P2, P3, P4, P5, P6, P7, P8, P9 = _neighbor_views(skel)
            ring = (P2, P3, P4, P5, P6, P7, P8, P9, P2)
            count = P2 + P3 + P4 + P5 + P6 + P7 + P8 + P9
            transitions = np.zeros_like(count)
            for i in range(8):
                transitions += (ring[i] == 0) & (ring[i + 1] == 1)
            if parity == 0:
                c1 = P2 * P4 * P6
                c2 = P4 * P6 * P8
            else:
                c1 = P2 * P4 * P8
                c2 = P2 * P6 * P8
            deletable = (
                (skel == 1)
                & (count >= 2)
                & (count <= 6)
                & (transitions == 1)
                & (c1 == 0)
                & (c2 == 0)
            )
            if deletable.any():
                skel[deletable] = 0
                changed = True
        if not changed:
            return skel.astype(bool)


def skeletonize(image: DendriteImage) -> DendriteImage:
    """Thin a pattern to its skeleton; errors on an empty foreground."""
    if not image.pixels.any():
        raise EmptyForeground("cannot skeletonize an empty pattern")
    return DendriteImage(thin(image.pixels), image.provenance)


def neighbor_counts(skel: np.ndarray) -> np.ndarray:
    """Number of 8-connected skeleton neighbors per skeleton pixel (0 elsewhere)."""
    u8 = skel.astype(np.uint8)
    counts = ndimage.convolve(u8, EIGHT, mode="constant") - u8
    counts[~skel] = 0
    return counts


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 8-connected foreground component."""
    labels, n = ndimage.label(mask, structure=EIGHT)
    if n <= 1:
        return mask
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def bridge_components(mask: np.ndarray, max_gap: float = 8.0, min_fragment: int = 6) -> np.ndarray:
    """Reattach sizable fragments within ``max_gap`` px of the main component.

    Scan noise breaks thin arms; dropping the fragments would shift the
    pattern's centroid and destabilize the canonical frame, so each nearby
    fragment of at least ``min_fragment`` pixels is joined back with a 1-px
    bridge at the closest pixel pair. Smaller components are isolated noise
    specks and are left disconnected. Repeats until nothing more connects.
    """
    mask = mask.copy()
    while True:
        labels, n = ndimage.label(mask, structure=EIGHT)
        if n <= 1:
            return mask
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        main = int(np.argmax(sizes))
        main_px = np.argwhere(labels == main)
        changed = False
        for comp in range(1, n + 1):
            if comp == main or sizes[comp] < min_fragment:
                continue
            comp_px = np.argwhere(labels == comp)
            d = cdist(comp_px.astype(float), main_px.astype(float))
            i, j = np.unravel_index(int(np.argmin(d)), d.shape)
            if d[i, j] <= max_gap:
                _draw_segment(mask, comp_px[i], main_px[j])
                changed = True
        if not changed:
            return mask


def _draw_segment(mask: np.ndarray, p: np.ndarray, q: np.ndarray) -> None:
    steps = int(np.ceil(np.abs(q - p).max())) * 2 + 1
    rr = np.rint(np.linspace(p[0], q[0], steps)).astype(int)
    cc = np.rint(np.linspace(p[1], q[1], steps)).astype(int)
    mask[rr, cc] = True


def component_count(mask: np.ndarray) -> int:
    return int(ndimage.label(mask, structure=EIGHT)[1])


def despeckle(mask: np.ndarray, iterations: int = 2) -> np.ndarray:
    """Strip pixels with at most one foreground neighbor, ``iterations`` times.

    Removes isolated specks and 1-px nubs while leaving runs of connected
    pixels intact; real arm tips shorten by ``iterations`` px, which is
    uniform across images and therefore harmless for frame estimation.
    """
    out = mask.copy()
    for _ in range(iterations):
        u8 = out.astype(np.uint8)
        counts = ndimage.convolve(u8, EIGHT, mode="constant") - u8
        out &= counts >= 2
    return out
