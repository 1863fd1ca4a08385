"""Dataset ingestion (IDX files), Ising pattern synthesis, and manifests.

IDX layout (bit-exact standard MNIST format, all integers big-endian):

    image file: u32 magic 0x00000803, u32 n, u32 rows, u32 cols,
                then n*rows*cols unsigned bytes
    label file: u32 magic 0x00000801, u32 n, then n unsigned bytes

Pixels are scaled to [0, 1] by dividing by 255 on load. Ising datasets
are persisted in the same image format (pixel 0 or 255) so the whole
pipeline is format-uniform.

Datasets are referenced by local path plus an optional JSON manifest
mapping name -> {images, labels, sha256, n_expected}; nothing is ever
downloaded. The CRITREP_DATA_DIR environment variable overrides the
directory that relative manifest paths resolve against.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import Rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file (bad magic, truncation, or count mismatch)."""


@dataclass
class LabeledDataset:
    """Samples as an (n, features) matrix in [0, 1], optional integer labels."""

    samples: np.ndarray
    labels: np.ndarray | None = None
    n_classes: int | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be 2-D (n_samples x n_features)")
        if self.samples.size and (self.samples.min() < 0 or self.samples.max() > 1):
            raise ValueError("sample values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.samples):
                raise ValueError(
                    f"count mismatch: {len(self.samples)} samples vs "
                    f"{len(self.labels)} labels"
                )
            if self.n_classes is None:
                self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
            if len(self.labels) and (
                self.labels.min() < 0 or self.labels.max() >= self.n_classes
            ):
                raise ValueError("labels must lie in [0, n_classes)")

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(
            samples=self.samples[idx],
            labels=None if self.labels is None else self.labels[idx],
            n_classes=self.n_classes,
        )

    def split(self, n_train: int) -> tuple["LabeledDataset", "LabeledDataset"]:
        return self.subset(slice(0, n_train)), self.subset(slice(n_train, None))


def filter_by_label_range(ds: LabeledDataset, lo: int, hi: int) -> LabeledDataset:
    """Samples whose label is in [lo, hi); labels are shifted down by lo.

    This is how letter-class subsets (e.g. the lowercase block of a
    by-class alphabet dump) are carved out of one file.
    """
    if ds.labels is None:
        raise ValueError("dataset has no labels to filter on")
    keep = (ds.labels >= lo) & (ds.labels < hi)
    return LabeledDataset(
        samples=ds.samples[keep], labels=ds.labels[keep] - lo, n_classes=hi - lo
    )


# ---------------------------------------------------------------------------
# IDX file format
# ---------------------------------------------------------------------------

def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise IdxFormatError(f"truncated IDX payload while reading {what}")
    return buf


def read_idx_images(path) -> np.ndarray:
    """Raw (n, rows*cols) uint8 pixel matrix from an IDX image file."""
    with open(path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "header"))
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x} in {path}")
        raw = _read_exact(fh, n * rows * cols, "pixels")
        if fh.read(1):
            raise IdxFormatError(f"trailing bytes after pixel payload in {path}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols).copy()


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", _read_exact(fh, 8, "header"))
        if magic != LABEL_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x} in {path}")
        raw = _read_exact(fh, n, "labels")
        if fh.read(1):
            raise IdxFormatError(f"trailing bytes after label payload in {path}")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path=None) -> LabeledDataset:
    """IDX image file (+ optional label file) as a dataset scaled to [0, 1]."""
    pixels = read_idx_images(images_path)
    labels = None
    if labels_path is not None:
        labels = read_idx_labels(labels_path)
        if len(labels) != len(pixels):
            raise IdxFormatError(
                f"count mismatch: {len(pixels)} images vs {len(labels)} labels"
            )
    return LabeledDataset(samples=pixels / 255.0, labels=labels)


def write_idx_images(pixels: np.ndarray, path, rows: int, cols: int) -> None:
    """Write uint8 or [0,1]-float pixels as an IDX image file."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        pixels = np.round(pixels * 255.0).astype(np.uint8)
    n = pixels.shape[0]
    if pixels.reshape(n, -1).shape[1] != rows * cols:
        raise ValueError("pixel count per sample does not match rows*cols")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.reshape(n, -1).tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must fit in one unsigned byte")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    images: str
    labels: str | None = None
    sha256: str | None = None
    n_expected: int | None = None


def load_manifest(path) -> dict[str, ManifestEntry]:
    with open(path) as fh:
        raw = json.load(fh)
    return {name: ManifestEntry(**entry) for name, entry in raw.items()}


def resolve_data_path(rel, manifest_path) -> Path:
    """Relative manifest paths resolve against CRITREP_DATA_DIR if set,
    otherwise against the manifest's own directory."""
    rel = Path(rel)
    if rel.is_absolute():
        return rel
    base = os.environ.get("CRITREP_DATA_DIR")
    if base:
        return Path(base) / rel
    return Path(manifest_path).parent / rel


def load_from_manifest(manifest_path, name: str) -> LabeledDataset:
    entries = load_manifest(manifest_path)
    if name not in entries:
        raise KeyError(f"dataset {name!r} not in manifest {manifest_path}")
    entry = entries[name]
    images = resolve_data_path(entry.images, manifest_path)
    if not images.exists():
        raise FileNotFoundError(f"dataset file missing: {images}")
    if entry.sha256:
        digest = hashlib.sha256(images.read_bytes()).hexdigest()
        if digest != entry.sha256:
            raise ValueError(
                f"checksum mismatch for {images}: got {digest}, "
                f"manifest says {entry.sha256}"
            )
    labels = None
    if entry.labels:
        labels = resolve_data_path(entry.labels, manifest_path)
        if not labels.exists():
            raise FileNotFoundError(f"label file missing: {labels}")
    ds = load_idx(images, labels)
    if entry.n_expected is not None and len(ds) != entry.n_expected:
        raise ValueError(
            f"{name}: expected {entry.n_expected} samples, file has {len(ds)}"
        )
    return ds


# ---------------------------------------------------------------------------
# Ising lattice sampling
# ---------------------------------------------------------------------------

ISING_TEMPERATURES = {"low": 1.53, "critical": 2.26, "high": 3.28}


@dataclass
class IsingParams:
    """Square-lattice Ising setup. Bonds couple nearest neighbors once each."""

    side: int = 10
    coupling: float = 1.0
    temperature: float = 2.26
    sweeps_equilibrate: int = 10_000
    sweeps_between_samples: int = 10
    boundary: str = "periodic"

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("side must be >= 2")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.boundary not in ("periodic", "free"):
            raise ValueError("boundary must be 'periodic' or 'free'")


@dataclass
class IsingLattice:
    side: int
    spins: np.ndarray  # +-1 ints, length side*side

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.int64).ravel()
        if self.spins.size != self.side * self.side:
            raise ValueError("spin count must equal side*side")
        if not np.all(np.abs(self.spins) == 1):
            raise ValueError("spins must be +-1")

    @property
    def magnetization(self) -> float:
        return float(self.spins.mean())


def all_up_lattice(side: int) -> IsingLattice:
    return IsingLattice(side=side, spins=np.ones(side * side, dtype=np.int64))


def _neighbor_table(side: int, boundary: str) -> np.ndarray:
    """(n, 4) neighbor site indices; missing neighbors point at the sentinel
    slot n, whose spin is pinned to 0 so it never contributes."""
    n = side * side
    nbr = np.full((n, 4), n, dtype=np.int64)
    for r in range(side):
        for c in range(side):
            i = r * side + c
            if boundary == "periodic":
                nbr[i] = [
                    ((r - 1) % side) * side + c,
                    ((r + 1) % side) * side + c,
                    r * side + (c - 1) % side,
                    r * side + (c + 1) % side,
                ]
            else:
                if r > 0:
                    nbr[i, 0] = (r - 1) * side + c
                if r < side - 1:
                    nbr[i, 1] = (r + 1) * side + c
                if c > 0:
                    nbr[i, 2] = r * side + c - 1
                if c < side - 1:
                    nbr[i, 3] = r * side + c + 1
    return nbr


def bond_sum(l: IsingLattice, boundary: str) -> int:
    """Sum of s_i*s_j over each nearest-neighbor bond counted once."""
    grid = l.spins.reshape(l.side, l.side)
    if boundary == "periodic":
        right = (grid * np.roll(grid, -1, axis=1)).sum()
        down = (grid * np.roll(grid, -1, axis=0)).sum()
    else:
        right = (grid[:, :-1] * grid[:, 1:]).sum()
        down = (grid[:-1, :] * grid[1:, :]).sum()
    return int(right + down)


def ising_energy(l: IsingLattice, p: IsingParams) -> float:
    """E = -J * sum over bonds of s_i*s_j."""
    if l.side != p.side:
        raise ValueError("lattice side does not match params")
    return -p.coupling * bond_sum(l, p.boundary)


class IsingChain:
    """One Metropolis chain with incremental energy bookkeeping.

    Each sweep makes side^2 single-spin-flip proposals at uniformly
    random sites, accepting with min(1, exp(-dE/T)). The running bond
    sum is updated incrementally in integer units and must stay equal
    to a full recomputation at all times.
    """

    def __init__(self, params: IsingParams, rng: Rng,
                 start: IsingLattice | None = None):
        self.params = params
        self.rng = rng
        n = params.side * params.side
        lattice = start if start is not None else all_up_lattice(params.side)
        if lattice.side != params.side:
            raise ValueError("start lattice side does not match params")
        # sentinel zero spin at index n services missing free-boundary neighbors
        self._spins = lattice.spins.tolist() + [0]
        self._nbr = _neighbor_table(params.side, params.boundary).ravel().tolist()
        self._n = n
        # acceptance thresholds indexed by s_i * (neighbor sum) in [-4, 4]
        j, t = params.coupling, params.temperature
        self._thr = [min(1.0, math.exp(-2.0 * j * sh / t)) for sh in range(-4, 5)]
        self._bond_sum = bond_sum(lattice, params.boundary)

    def sweep(self, n_sweeps: int = 1) -> None:
        n = self._n
        spins, nbr, thr = self._spins, self._nbr, self._thr
        bsum = self._bond_sum
        for _ in range(n_sweeps):
            sites = self.rng.integers(n, n).tolist()
            us = self.rng.uniforms(n).tolist()
            for t in range(n):
                i = sites[t]
                s = spins[i]
                j4 = 4 * i
                h = (spins[nbr[j4]] + spins[nbr[j4 + 1]]
                     + spins[nbr[j4 + 2]] + spins[nbr[j4 + 3]])
                sh = s * h
                if us[t] < thr[sh + 4]:
                    spins[i] = -s
                    bsum -= 2 * sh
        self._bond_sum = bsum

    @property
    def lattice(self) -> IsingLattice:
        return IsingLattice(side=self.params.side,
                            spins=np.array(self._spins[:-1], dtype=np.int64))

    @property
    def energy(self) -> float:
        return -self.params.coupling * self._bond_sum

    @property
    def tracked_bond_sum(self) -> int:
        return self._bond_sum

    def state_index(self) -> int:
        """Pack spins into an integer (bit i set iff spin i is up)."""
        idx = 0
        for i in range(self._n):
            if self._spins[i] == 1:
                idx |= 1 << i
        return idx


def metropolis_sweep(l: IsingLattice, p: IsingParams, rng: Rng) -> IsingLattice:
    """One sweep (side^2 random-site Metropolis proposals); returns new lattice."""
    chain = IsingChain(p, rng, start=l)
    chain.sweep(1)
    return chain.lattice


def generate_ising_dataset(p: IsingParams, n_samples: int, rng: Rng,
                           n_chains: int = 1) -> LabeledDataset:
    """Equilibrium patterns as a dataset, spins remapped -1 -> 0, +1 -> 1.

    Each chain starts from the all-up state, runs `sweeps_equilibrate`
    sweeps, then records one sample every `sweeps_between_samples`
    sweeps. Chains use jumped RNG streams and their samples concatenate
    in chain-major order, so the result is independent of how chains
    are scheduled.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n_chains = max(1, min(n_chains, n_samples))
    shares = [n_samples // n_chains] * n_chains
    for i in range(n_samples % n_chains):
        shares[i] += 1
    blocks = []
    for ci, share in enumerate(shares):
        chain = IsingChain(p, rng if n_chains == 1 else rng.jumped(ci))
        chain.sweep(p.sweeps_equilibrate)
        rows = np.empty((share, p.side * p.side), dtype=np.float64)
        for s in range(share):
            chain.sweep(p.sweeps_between_samples)
            spins = np.array(chain._spins[:-1], dtype=np.int64)
            rows[s] = (spins + 1) // 2
        blocks.append(rows)
    return LabeledDataset(samples=np.concatenate(blocks, axis=0))


# ---------------------------------------------------------------------------
# Synthetic glyph digits (desk-scale stand-in for handwritten-digit corpora)
# ---------------------------------------------------------------------------

_FONT_CANDIDATES = (
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
)


def _find_font(size: int):
    from PIL import ImageFont

    for path in _FONT_CANDIDATES:
        if os.path.exists(path):
            return ImageFont.truetype(path, size)
    try:
        import matplotlib

        p = Path(matplotlib.get_data_path()) / "fonts" / "ttf" / "DejaVuSans.ttf"
        if p.exists():
            return ImageFont.truetype(str(p), size)
    except ImportError:
        pass
    return ImageFont.load_default(size=size)


def synthetic_digits(n_samples: int, rng: Rng, side: int = 28,
                     n_classes: int = 10, n_styles: int = 400,
                     style_tail: float = 1.0) -> LabeledDataset:
    """Deterministic rendered-digit corpus with natural repetition structure.

    Each class owns `n_styles` style prototypes (a fixed affine pose of
    the glyph: rotation, scale, shear, shift, stroke intensity). Style
    popularity within a class is heavy-tailed (~ rank^-style_tail), the
    way a few handwriting styles dominate a real scan collection while
    most appear rarely. Samples add sub-pixel translation and small
    stroke-intensity noise before 8-bit quantization, so two draws of
    the same style are near-duplicates, never exact copies.

    Labels cycle 0,1,...,n_classes-1, so any contiguous split is balanced.
    """
    from PIL import Image, ImageDraw

    master_px = side * 4
    font = _find_font(int(master_px * 0.82))
    masters = []
    for d in range(n_classes):
        img = Image.new("L", (master_px, master_px), 0)
        draw = ImageDraw.Draw(img)
        bbox = draw.textbbox((0, 0), str(d), font=font)
        w, h = bbox[2] - bbox[0], bbox[3] - bbox[1]
        draw.text(((master_px - w) / 2 - bbox[0], (master_px - h) / 2 - bbox[1]),
                  str(d), fill=255, font=font)
        masters.append(img)

    # style library: pose parameters per (class, style)
    pose = rng.uniforms(n_classes * n_styles * 6).reshape(n_classes, n_styles, 6)
    ranks = np.arange(1, n_styles + 1, dtype=np.float64)
    weights = ranks ** -style_tail
    style_cdf = np.cumsum(weights) / weights.sum()

    style_u = rng.uniforms(n_samples)
    micro = rng.uniforms(n_samples * 3).reshape(n_samples, 3)
    noise = rng.normals(n_samples * side * side).reshape(n_samples, side * side)

    out = np.empty((n_samples, side * side), dtype=np.float64)
    labels = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        d = i % n_classes
        labels[i] = d
        s = int(np.searchsorted(style_cdf, style_u[i], side="left"))
        s = min(s, n_styles - 1)
        j = pose[d, s]
        theta = math.radians((j[0] - 0.5) * 36.0)        # +-18 degrees
        scale = math.exp((j[1] - 0.5) * 0.5)             # ~ x0.78 .. x1.28
        shear = (j[2] - 0.5) * 0.5
        dx = (j[3] - 0.5) * 0.20 * master_px + (micro[i, 0] - 0.5) * 1.5
        dy = (j[4] - 0.5) * 0.20 * master_px + (micro[i, 1] - 0.5) * 1.5
        cx = cy = master_px / 2.0
        # inverse-map affine coefficients, rotation/shear about the center
        a = math.cos(theta) / scale
        b = (math.sin(theta) + shear) / scale
        c_ = -math.sin(theta) / scale
        e = math.cos(theta) / scale
        coeffs = (a, b, cx - a * (cx + dx) - b * (cy + dy),
                  c_, e, cy - c_ * (cx + dx) - e * (cy + dy))
        img = masters[d].transform((master_px, master_px), Image.AFFINE, coeffs,
                                   resample=Image.BILINEAR)
        small = img.resize((side, side), resample=Image.BILINEAR)
        px = np.asarray(small, dtype=np.float64) / 255.0
        px *= 0.65 + 0.35 * j[5]
        # stroke-only noise keeps the background exactly zero, like a
        # contrast-normalized scan
        px *= 1.0 + (0.02 + 0.04 * micro[i, 2]) * noise[i].reshape(side, side) * (px > 0)
        px = np.clip(px, 0.0, 1.0)
        out[i] = np.round(px * 255.0).ravel() / 255.0
    return LabeledDataset(samples=out, labels=labels, n_classes=n_classes)
