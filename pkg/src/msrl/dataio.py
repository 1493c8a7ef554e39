"""On-disk multiview feature format, synthetic data, and mini-batch plans.

Binary layouts (little-endian, bit-exact):

  view file   magic "MVFV" | u32 version=1 | u64 n | u32 dim | u32 dtype | payload
              dtype 0 = f32, dtype 1 = f64; payload is n*dim values row-major
  label file  magic "MVLB" | u32 version=1 | u64 n | payload n * i32
  manifest    UTF-8 JSON {"views": [{"path": ..., "backbone": ...}],
                          "labels": optional path, "clusters": optional int}

Manifest paths are resolved relative to the manifest file's directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VIEW_MAGIC = b"MVFV"
LABEL_MAGIC = b"MVLB"
FORMAT_VERSION = 1

DTYPE_F32 = 0
DTYPE_F64 = 1
_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_F64: np.dtype("<f8")}


class FileFormatError(Exception):
    """Base class for on-disk format violations."""


class BadMagicError(FileFormatError):
    pass


class TruncatedPayloadError(FileFormatError):
    pass


class PayloadSizeError(FileFormatError):
    """Payload length disagrees with the n*dim promised by the header."""


class AlignmentError(FileFormatError):
    """Views or labels of one dataset disagree on the sample count."""


@dataclass
class FeatureView:
    """One backbone's frozen feature matrix: n samples by dim features."""

    view_id: int
    data: np.ndarray  # (n, dim) float64 in memory; f32 at the storage boundary
    backbone_tag: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"view data must be (n>=1, dim>=1), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("view data contains non-finite entries")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]


@dataclass
class MultiviewDataset:
    """Aligned feature views plus optional ground-truth labels.

    Labels are only ever consumed by evaluation metrics, never by training.
    """

    views: list = field(default_factory=list)
    labels: np.ndarray | None = None
    n_clusters: int | None = None

    def __post_init__(self):
        if not self.views:
            raise ValueError("dataset needs at least one view")
        n = self.views[0].n
        for v in self.views:
            if v.n != n:
                raise AlignmentError(
                    f"view {v.view_id} has {v.n} samples, expected {n}"
                )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise AlignmentError(
                    f"labels have shape {self.labels.shape}, expected ({n},)"
                )

    @property
    def n(self):
        return self.views[0].n

    @property
    def n_views(self):
        return len(self.views)


def write_view(view, path):
    """Write a FeatureView in the MVFV layout, data rounded to f32."""
    payload = view.data.astype("<f4").tobytes(order="C")
    header = VIEW_MAGIC + struct.pack(
        "<IQII", FORMAT_VERSION, view.n, view.dim, DTYPE_F32
    )
    Path(path).write_bytes(header + payload)


def read_view(path, view_id=0, backbone_tag=""):
    """Read an MVFV file back into a FeatureView, validating the header."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != VIEW_MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    if len(raw) < 24:
        raise TruncatedPayloadError(f"{path}: header truncated at {len(raw)} bytes")
    version, n, dim, dtype_code = struct.unpack("<IQII", raw[4:24])
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if dtype_code not in _DTYPES:
        raise FileFormatError(f"{path}: unknown dtype code {dtype_code}")
    dt = _DTYPES[dtype_code]
    expected = n * dim * dt.itemsize
    payload = raw[24:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise PayloadSizeError(
            f"{path}: payload has {len(payload)} bytes, n*dim gives {expected}"
        )
    data = np.frombuffer(payload, dtype=dt).reshape(n, dim)
    return FeatureView(view_id=view_id, data=data, backbone_tag=backbone_tag)


def write_labels(labels, path):
    """Write integer labels in the MVLB layout."""
    labels = np.asarray(labels, dtype="<i4")
    header = LABEL_MAGIC + struct.pack("<IQ", FORMAT_VERSION, labels.shape[0])
    Path(path).write_bytes(header + labels.tobytes(order="C"))


def read_labels(path):
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != LABEL_MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    if len(raw) < 16:
        raise TruncatedPayloadError(f"{path}: header truncated at {len(raw)} bytes")
    version, n = struct.unpack("<IQ", raw[4:16])
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    payload = raw[16:]
    if len(payload) < n * 4:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header promises {n * 4}"
        )
    if len(payload) > n * 4:
        raise PayloadSizeError(f"{path}: payload has {len(payload)} bytes for n={n}")
    return np.frombuffer(payload, dtype="<i4").astype(np.int64)


def write_manifest(dataset, out_dir, view_paths, label_path=None):
    """Write the manifest JSON next to the view files; returns its path."""
    out_dir = Path(out_dir)
    doc = {
        "views": [
            {"path": str(Path(p).name), "backbone": v.backbone_tag}
            for p, v in zip(view_paths, dataset.views)
        ]
    }
    if label_path is not None:
        doc["labels"] = str(Path(label_path).name)
    if dataset.n_clusters is not None:
        doc["clusters"] = int(dataset.n_clusters)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest(path):
    """Load a manifest and every file it references into a MultiviewDataset."""
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: invalid manifest JSON: {e}") from e
    entries = doc.get("views")
    if not entries:
        raise FileFormatError(f"{path}: manifest lists no views")
    views = [
        read_view(base / entry["path"], view_id=i, backbone_tag=entry.get("backbone", ""))
        for i, entry in enumerate(entries)
    ]
    labels = None
    if doc.get("labels"):
        labels = read_labels(base / doc["labels"])
    return MultiviewDataset(
        views=views, labels=labels, n_clusters=doc.get("clusters")
    )


@dataclass
class SyntheticSpec:
    """Desk-scale stand-in for real multiview feature extractions."""

    n_clusters: int
    n_views: int
    n_samples: int
    dims: list
    separation: float
    seed: int

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("need at least 2 clusters")
        if self.n_views < 1:
            raise ValueError("need at least 1 view")
        if len(self.dims) != self.n_views:
            raise ValueError(
                f"dims has {len(self.dims)} entries for {self.n_views} views"
            )
        if self.separation <= 0:
            raise ValueError("separation must be positive")


def _centroids_on_sphere(rng, count, dim, separation):
    """Centroids with pairwise distance = separation wherever geometry allows.

    For count <= dim+1 this is a regular simplex (circumradius reduces to
    separation/2 in the two-cluster case). If more clusters than dim+1 are
    requested, falls back to farthest-point selection on the sphere whose
    typical chord length is the separation.
    """
    if count <= dim + 1:
        e = np.eye(count, dim)
        v = e - e.mean(axis=0)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        radius = separation * np.sqrt((count - 1) / (2.0 * count))
        return v * radius
    pool = rng.standard_normal((max(64 * count, 256), dim))
    pool /= np.linalg.norm(pool, axis=1, keepdims=True)
    chosen = [0]
    d2 = np.sum((pool - pool[0]) ** 2, axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((pool - pool[nxt]) ** 2, axis=1))
    return pool[chosen] * (separation / np.sqrt(2.0))


def generate_synthetic(spec):
    """Draw a heterogeneous multiview dataset with known cluster structure.

    Per view: cluster centroids separated by `separation` within-cluster
    standard deviations, unit isotropic noise around them, then a random
    orthogonal rotation and a positive diagonal scaling so each view gets
    its own feature geometry. All views share the sample ordering and
    labels.
    """
    rng = np.random.default_rng(spec.seed)
    n, c = spec.n_samples, spec.n_clusters
    labels = rng.permutation(np.arange(n) % c)
    views = []
    for l, dim in enumerate(spec.dims):
        centroids = _centroids_on_sphere(rng, c, dim, spec.separation)
        points = centroids[labels] + rng.standard_normal((n, dim))
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        q = q * np.sign(np.diag(r))  # fix QR sign ambiguity for determinism
        scale = rng.uniform(0.6, 1.6, size=dim)
        data = (points @ q.T) * scale
        views.append(FeatureView(view_id=l, data=data, backbone_tag=f"synthetic-{l}"))
    return MultiviewDataset(views=views, labels=labels, n_clusters=c)


@dataclass
class BatchPlan:
    """Deterministic epoch plan: a permutation sliced into batches.

    The final partial batch is kept; attention simply runs over fewer rows.
    """

    batch_size: int
    order: np.ndarray

    def batches(self):
        for start in range(0, len(self.order), self.batch_size):
            yield self.order[start:start + self.batch_size]

    def __len__(self):
        return -(-len(self.order) // self.batch_size)


def make_batches(n, batch_size, seed, epoch):
    """Epoch-wise reshuffled batch plan, a pure function of (seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds sample count {n}")
    rng = np.random.default_rng([seed & 0xFFFFFFFF, epoch, 0x5A17])
    return BatchPlan(batch_size=batch_size, order=rng.permutation(n))
