"""Synthetic dendritic tag patterns.

Tags are grown by diffusion-limited aggregation on a square lattice:
particles random-walk inward from a spawn circle and freeze onto the
aggregate, producing the branched, high-entropy patterns the rest of the
pipeline identifies. A perturbation operator models re-scan conditions
(sensor noise, misalignment, small rotation), and ``ingest`` accepts real
camera uploads as PNG bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image, UnidentifiedImageError

from .errors import DecodeFailure, EmptyForeground, InvalidParams

SYNTHETIC = "synthetic"
INGESTED = "ingested"

# Walkers are killed on a ring at twice the spawn radius while that ring
# fits inside the lattice with at least this much clearance; beyond that
# the lattice edge becomes a reflecting wall so every walk terminates by
# attachment (kill rings this tight would discard almost every walker).
_MIN_RING_GAP = 8.0
_MAX_SPAWN_TRIES = 20_000_000


@dataclass(frozen=True)
class GrowthParams:
    lattice_size: int
    particle_count: int
    stickiness: float = 1.0
    spawn_radius_margin: int = 5
    rng_seed: int = 0

    def validate(self) -> None:
        if self.lattice_size < 16:
            raise InvalidParams(f"lattice_size must be >= 16, got {self.lattice_size}")
        if not 0 <= self.particle_count < self.lattice_size**2:
            raise InvalidParams(
                f"particle_count must be in [0, lattice_size^2), got {self.particle_count}"
            )
        if not 0.0 < self.stickiness <= 1.0:
            raise InvalidParams(f"stickiness must be in (0, 1], got {self.stickiness}")
        if self.spawn_radius_margin < 0:
            raise InvalidParams("spawn_radius_margin must be non-negative")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidParams("rng_seed must fit in 64 unsigned bits")

    def to_json(self) -> dict:
        return {
            "lattice_size": self.lattice_size,
            "particle_count": self.particle_count,
            "stickiness": self.stickiness,
            "spawn_radius_margin": self.spawn_radius_margin,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GrowthParams":
        return cls(
            lattice_size=int(doc["lattice_size"]),
            particle_count=int(doc["particle_count"]),
            stickiness=float(doc["stickiness"]),
            spawn_radius_margin=int(doc["spawn_radius_margin"]),
            rng_seed=int(doc["rng_seed"]),
        )


@dataclass
class DendriteImage:
    """Binary raster of a tag pattern; ``pixels[row, col]`` with 1 = deposit."""

    pixels: np.ndarray  # bool, shape (height, width)
    provenance: str = SYNTHETIC

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def copy(self) -> "DendriteImage":
        return DendriteImage(self.pixels.copy(), self.provenance)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DendriteImage)
            and self.provenance == other.provenance
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )


@njit(cache=True)
def _grow(lattice, sticky, particle_count, center, margin, stickiness, rng):  # pragma: no cover
    size = lattice.shape[0]
    half = size // 2
    lo, hi = 1, size - 2
    max_r = 0.0
    attached = 0
    spawn_tries = 0
    while attached < particle_count:
        spawn_r = min(max_r + margin, half - 2.0)
        kill_r = min(2.0 * spawn_r, half - 1.0)
        ringed = kill_r - spawn_r >= _MIN_RING_GAP
        kill_r2 = kill_r * kill_r
        spawn_tries += 1
        if spawn_tries > _MAX_SPAWN_TRIES:
            return -1
        ang = rng.random() * 2.0 * np.pi
        x = int(round(center + spawn_r * np.cos(ang)))
        y = int(round(center + spawn_r * np.sin(ang)))
        if lattice[x, y]:
            continue
        walking = True
        while walking:
            # contact trial fires whenever the walker occupies a cell next
            # to the aggregate, so walkers spawned into one-cell pockets
            # still resolve
            if sticky[x, y] and (stickiness >= 1.0 or rng.random() < stickiness):
                lattice[x, y] = True
                for ox in range(-1, 2):
                    for oy in range(-1, 2):
                        sticky[x + ox, y + oy] = True
                fx = float(x - center)
                fy = float(y - center)
                r = np.sqrt(fx * fx + fy * fy)
                if r > max_r:
                    max_r = r
                attached += 1
                walking = False
                continue
            step = int(rng.random() * 4.0)
            if step == 0:
                nx, ny = x + 1, y
            elif step == 1:
                nx, ny = x - 1, y
            elif step == 2:
                nx, ny = x, y + 1
            else:
                nx, ny = x, y - 1
            if ringed:
                dx = nx - center
                dy = ny - center
                if dx * dx + dy * dy >= kill_r2:
                    break  # killed; respawn
            elif nx < lo or nx > hi or ny < lo or ny > hi:
                continue  # reflecting wall
            if lattice[nx, ny]:
                continue  # never step onto the aggregate
            x, y = nx, ny
    return attached


def generate(params: GrowthParams) -> DendriteImage:
    """Grow a deterministic aggregate: seed pixel plus ``particle_count`` attachments."""
    params.validate()
    size = params.lattice_size
    lattice = np.zeros((size, size), dtype=np.bool_)
    sticky = np.zeros((size, size), dtype=np.bool_)
    c = size // 2
    lattice[c, c] = True
    sticky[c - 1 : c + 2, c - 1 : c + 2] = True
    rng = np.random.default_rng(params.rng_seed)
    got = _grow(
        lattice,
        sticky,
        params.particle_count,
        c,
        float(params.spawn_radius_margin),
        params.stickiness,
        rng,
    )
    if got < 0:
        raise InvalidParams(
            f"growth stalled: no free spawn site after {_MAX_SPAWN_TRIES} tries "
            f"(particle_count {params.particle_count} on lattice {size})"
        )
    return DendriteImage(lattice, SYNTHETIC)


def perturb(
    image: DendriteImage,
    noise_rate: float,
    shift: tuple[int, int] = (0, 0),
    rotation_deg: float = 0.0,
    rng_seed: int = 0,
) -> DendriteImage:
    """Re-scan model: flip pixels at ``noise_rate``, translate, then rotate (NN)."""
    if not 0.0 <= noise_rate <= 0.5:
        raise InvalidParams(f"noise_rate must be in [0, 0.5], got {noise_rate}")
    sx, sy = int(shift[0]), int(shift[1])
    if abs(sx) > image.width // 8 or abs(sy) > image.height // 8:
        raise InvalidParams(f"shift {shift} exceeds lattice_size/8")

    px = image.pixels.copy()
    if noise_rate > 0.0:
        rng = np.random.default_rng(rng_seed)
        px ^= rng.random(px.shape) < noise_rate
    if sx or sy:
        px = _translate(px, sx, sy)
    if rotation_deg:
        px = _rotate_nn(px, rotation_deg)
    return DendriteImage(px, image.provenance)


def _translate(px: np.ndarray, sx: int, sy: int) -> np.ndarray:
    """Shift by (sx, sy) in (x=col, y=row) axes, zero-filling exposed borders."""
    h, w = px.shape
    out = np.zeros_like(px)
    src_r = slice(max(0, -sy), min(h, h - sy))
    src_c = slice(max(0, -sx), min(w, w - sx))
    dst_r = slice(max(0, sy), min(h, h + sy))
    dst_c = slice(max(0, sx), min(w, w + sx))
    out[dst_r, dst_c] = px[src_r, src_c]
    return out


def _rotate_nn(px: np.ndarray, deg: float) -> np.ndarray:
    """Rotate about the image center with nearest-neighbor resampling."""
    h, w = px.shape
    theta = np.deg2rad(deg)
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dr = rows - cr
    dc = cols - cc
    # inverse map: output pixel pulls from the source rotated by -theta
    src_r = np.rint(cr + np.cos(theta) * dr + np.sin(theta) * dc).astype(np.int64)
    src_c = np.rint(cc - np.sin(theta) * dr + np.cos(theta) * dc).astype(np.int64)
    ok = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.zeros_like(px)
    out[ok] = px[src_r[ok], src_c[ok]]
    return out


def ingest(data: bytes, threshold: int = 128) -> DendriteImage:
    """Decode PNG bytes to grayscale, binarize at ``threshold`` (>= is foreground)."""
    if not 0 <= threshold <= 255:
        raise InvalidParams(f"threshold must be in [0, 255], got {threshold}")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeFailure(f"cannot decode image: {exc}") from exc
    gray = np.asarray(img.convert("L"))
    px = gray >= threshold
    if not px.any():
        raise EmptyForeground("no pixel at or above threshold")
    return DendriteImage(px, INGESTED)


def to_png_bytes(image: DendriteImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image: DendriteImage, path: str | Path) -> None:
    Path(path).write_bytes(to_png_bytes(image))


def load_png(path: str | Path, threshold: int = 128) -> DendriteImage:
    return ingest(Path(path).read_bytes(), threshold)


def image_fingerprint(image: DendriteImage) -> str:
    """Stable content hash of the binary grid (shape-sensitive)."""
    h = hashlib.sha256()
    h.update(np.int64(image.height).tobytes())
    h.update(np.int64(image.width).tobytes())
    h.update(np.packbits(image.pixels).tobytes())
    return h.hexdigest()


def write_corpus(
    directory: str | Path,
    params_list: list[GrowthParams],
    extra_metadata: dict | None = None,
    progress: bool = False,
) -> Path:
    """Generate a corpus and its manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples = []
    for i, params in enumerate(params_list):
        name = f"tag-{i:05d}.png"
        save_png(generate(params), directory / name)
        samples.append({"id": f"tag-{i:05d}", "params": params.to_json(), "path": name})
        if progress and (i + 1) % 100 == 0:
            print(f"generated {i + 1}/{len(params_list)}", flush=True)
    manifest = {"samples": samples}
    if extra_metadata:
        manifest.update(extra_metadata)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_corpus(manifest_path: str | Path) -> list[tuple[str, GrowthParams, Path]]:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    return [
        (s["id"], GrowthParams.from_json(s["params"]), base / s["path"])
        for s in doc["samples"]
    ]
