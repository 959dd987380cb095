"""Feature datasets with noisy labels: in-memory types, file formats, synthesis.

Two on-disk feature formats are supported:

* binary: magic ``CRFS``, u32 version=1, u32 N, u32 d, u32 C, then C
  length-prefixed UTF-8 category names, then N records of (length-prefixed
  sample id, u32 label, d little-endian float32 values). All integers are
  little-endian u32. This format is lossless.
* csv: header ``id,label,f0..f{d-1}``, UTF-8, numerics unquoted. Category
  names and the category count are not representable in this format; the
  loader infers ``C = max(label) + 1`` and default names unless the caller
  supplies them.

Ground truth for synthetic data is a CSV ``id,true_label,noise_kind``.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import atomic_write_bytes, atomic_write_text
from .seeding import component_rng

MAGIC = b"CRFS"
BINARY_VERSION = 1

NOISE_CLEAN = "clean"
NOISE_CROSS = "cross-label"
NOISE_UNIFORM = "uniform-noise"
NOISE_KINDS = (NOISE_CLEAN, NOISE_CROSS, NOISE_UNIFORM)

#: true_label value for samples drawn from no category (background noise).
NO_CATEGORY = -1

#: Blob centers are drawn uniformly from this box in every dimension.
CENTER_BOX = (0.0, 10.0)

#: Default reach of the uniform-noise bounding box past the blob centers, in
#: blob sigmas. Far-out background noise keeps the noise bands of the
#: designed curriculum well separated from the category structure.
DEFAULT_BOX_MARGIN_SIGMAS = 14.0

FORMATS = ("binary", "csv")


class DatasetError(ValueError):
    """Malformed dataset file or invalid in-memory dataset."""


def _format_f32(value: np.float32) -> str:
    # Shortest decimal that parses back to the identical float32.
    return np.format_float_positional(value, unique=True, trim="0")


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """N feature vectors with per-sample noisy category labels.

    ``features`` is an (N, d) float32 matrix, ``labels`` an (N,) int64 vector
    of category ids in [0, C), ``sample_ids`` N unique strings and
    ``category_names`` the C display names. Categories are allowed to be
    empty; :meth:`empty_categories` reports which. Instances are validated
    and frozen (arrays are marked read-only) on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    sample_ids: tuple[str, ...]
    category_names: tuple[str, ...]

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = tuple(str(s) for s in self.sample_ids)
        names = tuple(str(s) for s in self.category_names)
        if features.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        n = features.shape[0]
        if n < 1:
            raise DatasetError("a FeatureSet needs at least one sample")
        if labels.shape != (n,) or len(ids) != n:
            raise DatasetError(
                f"length mismatch: {n} feature rows, {labels.shape[0]} labels, "
                f"{len(ids)} sample ids"
            )
        if not names:
            raise DatasetError("at least one category is required")
        bad = np.flatnonzero(~np.isfinite(features).all(axis=1))
        if bad.size:
            raise DatasetError(f"non-finite feature value at row {bad[0]}")
        out_of_range = np.flatnonzero((labels < 0) | (labels >= len(names)))
        if out_of_range.size:
            i = out_of_range[0]
            raise DatasetError(
                f"label {labels[i]} at row {i} outside [0, {len(names)})"
            )
        seen: dict[str, int] = {}
        for i, sid in enumerate(ids):
            if sid in seen:
                raise DatasetError(
                    f"duplicate sample id {sid!r} at rows {seen[sid]} and {i}"
                )
            seen[sid] = i
        features = features.copy() if not features.flags.owndata else features
        labels = labels.copy() if not labels.flags.owndata else labels
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "category_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_categories(self) -> int:
        return len(self.category_names)

    def empty_categories(self) -> tuple[int, ...]:
        present = np.bincount(self.labels, minlength=self.n_categories)
        return tuple(int(c) for c in np.flatnonzero(present == 0))

    def category_indices(self, category: int) -> np.ndarray:
        return np.flatnonzero(self.labels == category)

    def index_of(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.sample_ids)}

    def take(self, indices) -> "FeatureSet":
        """Row subset in the given order; category names are kept in full."""
        indices = np.asarray(indices)
        if indices.dtype == bool:
            indices = np.flatnonzero(indices)
        return FeatureSet(
            features=self.features[indices],
            labels=self.labels[indices],
            sample_ids=tuple(self.sample_ids[i] for i in indices),
            category_names=self.category_names,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
            and np.array_equal(self.labels, other.labels)
            and self.sample_ids == other.sample_ids
            and self.category_names == other.category_names
        )


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Ground-truth annotation for a synthetic FeatureSet (same row order).

    ``true_labels[i]`` is the category whose blob generated sample i, or
    ``NO_CATEGORY`` (-1) for uniform background noise, which belongs to no
    category and is always counted as mislabeled. ``noise_kind[i]`` is one of
    ``clean`` / ``cross-label`` / ``uniform-noise``.
    """

    true_labels: np.ndarray
    noise_kind: tuple[str, ...]

    def __post_init__(self) -> None:
        true_labels = np.asarray(self.true_labels, dtype=np.int64)
        kinds = tuple(str(k) for k in self.noise_kind)
        if true_labels.shape != (len(kinds),):
            raise DatasetError("true_labels and noise_kind lengths differ")
        for i, k in enumerate(kinds):
            if k not in NOISE_KINDS:
                raise DatasetError(f"unknown noise kind {k!r} at row {i}")
        true_labels = true_labels.copy() if not true_labels.flags.owndata else true_labels
        true_labels.setflags(write=False)
        object.__setattr__(self, "true_labels", true_labels)
        object.__setattr__(self, "noise_kind", kinds)

    def __len__(self) -> int:
        return self.true_labels.shape[0]

    def take(self, indices) -> "SyntheticTruth":
        indices = np.asarray(indices)
        if indices.dtype == bool:
            indices = np.flatnonzero(indices)
        return SyntheticTruth(
            true_labels=self.true_labels[indices],
            noise_kind=tuple(self.noise_kind[i] for i in indices),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntheticTruth):
            return NotImplemented
        return (
            np.array_equal(self.true_labels, other.true_labels)
            and self.noise_kind == other.noise_kind
        )


# ---------------------------------------------------------------------------
# binary format


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def read(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DatasetError(f"truncated file while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.read(4, what))[0]

    def string(self, what: str) -> str:
        length = self.u32(what + " length")
        raw = self.read(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DatasetError(f"invalid UTF-8 in {what}") from exc


def _features_to_binary(fs: FeatureSet) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIII", BINARY_VERSION, fs.n_samples, fs.n_features, fs.n_categories))
    for name in fs.category_names:
        buf.write(_pack_str(name))
    rows = np.ascontiguousarray(fs.features, dtype="<f4")
    for i in range(fs.n_samples):
        buf.write(_pack_str(fs.sample_ids[i]))
        buf.write(struct.pack("<I", int(fs.labels[i])))
        buf.write(rows[i].tobytes())
    return buf.getvalue()


def _features_from_binary(data: bytes) -> FeatureSet:
    cur = _Cursor(data)
    if cur.read(4, "magic") != MAGIC:
        raise DatasetError("bad magic bytes: not a CRFS feature file")
    version = cur.u32("version")
    if version != BINARY_VERSION:
        raise DatasetError(f"unsupported feature file version {version}")
    n = cur.u32("sample count")
    d = cur.u32("feature dimension")
    c = cur.u32("category count")
    if n < 1 or d < 1 or c < 1:
        raise DatasetError(f"invalid header counts N={n} d={d} C={c}")
    names = tuple(cur.string(f"category name {i}") for i in range(c))
    ids = []
    labels = np.empty(n, dtype=np.int64)
    features = np.empty((n, d), dtype=np.float32)
    for i in range(n):
        ids.append(cur.string(f"sample id at row {i}"))
        labels[i] = cur.u32(f"label at row {i}")
        raw = cur.read(4 * d, f"features at row {i}")
        features[i] = np.frombuffer(raw, dtype="<f4")
    if cur.pos != len(data):
        raise DatasetError(f"{len(data) - cur.pos} trailing bytes after row {n - 1}")
    return FeatureSet(features=features, labels=labels, sample_ids=tuple(ids), category_names=names)


# ---------------------------------------------------------------------------
# csv format


def _features_to_csv(fs: FeatureSet) -> str:
    out = io.StringIO()
    header = ["id", "label"] + [f"f{k}" for k in range(fs.n_features)]
    out.write(",".join(header) + "\n")
    for i in range(fs.n_samples):
        cells = [fs.sample_ids[i], str(int(fs.labels[i]))]
        cells.extend(_format_f32(v) for v in fs.features[i])
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def _features_from_csv(
    text: str,
    category_names: tuple[str, ...] | None = None,
    n_categories: int | None = None,
) -> FeatureSet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty csv file") from None
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise DatasetError(f"bad csv header {header!r}")
    d = len(header) - 2
    expected = [f"f{k}" for k in range(d)]
    if header[2:] != expected:
        raise DatasetError(f"bad csv feature columns {header[2:]!r}")
    ids: list[str] = []
    labels: list[int] = []
    rows: list[np.ndarray] = []
    for i, row in enumerate(reader):
        if not row:
            continue
        if len(row) != d + 2:
            raise DatasetError(f"row {i} has {len(row)} cells, expected {d + 2}")
        ids.append(row[0])
        try:
            labels.append(int(row[1]))
        except ValueError:
            raise DatasetError(f"row {i}: label {row[1]!r} is not an integer") from None
        try:
            vec = np.array(row[2:], dtype=np.float32)
        except ValueError:
            raise DatasetError(f"row {i}: unparseable feature value") from None
        if not np.isfinite(vec).all():
            raise DatasetError(f"row {i}: non-finite feature value")
        rows.append(vec)
    if not rows:
        raise DatasetError("csv file has no data rows")
    if category_names is None:
        c = n_categories if n_categories is not None else max(labels) + 1
        category_names = tuple(f"cat{k:03d}" for k in range(c))
    return FeatureSet(
        features=np.vstack(rows),
        labels=np.array(labels, dtype=np.int64),
        sample_ids=tuple(ids),
        category_names=category_names,
    )


def save_features(fs: FeatureSet, path: str | Path, format: str) -> None:
    """Write `fs` to `path` atomically; ``load_features`` inverts it.

    The csv format drops category names / trailing empty categories (see
    module docstring); the binary format is exact.
    """
    if format == "binary":
        atomic_write_bytes(path, _features_to_binary(fs))
    elif format == "csv":
        atomic_write_text(path, _features_to_csv(fs))
    else:
        raise ValueError(f"unknown format {format!r}, expected one of {FORMATS}")


def load_features(
    path: str | Path,
    format: str,
    category_names: tuple[str, ...] | None = None,
    n_categories: int | None = None,
) -> FeatureSet:
    """Load and validate a feature file written by :func:`save_features`.

    `category_names` / `n_categories` restore metadata the csv format cannot
    carry; both are ignored for binary files, which store it.
    """
    if format == "binary":
        return _features_from_binary(Path(path).read_bytes())
    if format == "csv":
        return _features_from_csv(
            Path(path).read_text(encoding="utf-8"), category_names, n_categories
        )
    raise ValueError(f"unknown format {format!r}, expected one of {FORMATS}")


# ---------------------------------------------------------------------------
# truth / reference labels


def save_truth(fs: FeatureSet, truth: SyntheticTruth, path: str | Path) -> None:
    if len(truth) != fs.n_samples:
        raise DatasetError("truth length does not match the FeatureSet")
    out = io.StringIO()
    out.write("id,true_label,noise_kind\n")
    for sid, label, kind in zip(fs.sample_ids, truth.true_labels, truth.noise_kind):
        out.write(f"{sid},{int(label)},{kind}\n")
    atomic_write_text(path, out.getvalue())


def load_truth(path: str | Path) -> tuple[tuple[str, ...], SyntheticTruth]:
    """Returns (sample ids in file order, truth annotation)."""
    reader = csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8")))
    header = next(reader, None)
    if header != ["id", "true_label", "noise_kind"]:
        raise DatasetError(f"bad truth header {header!r}")
    ids: list[str] = []
    labels: list[int] = []
    kinds: list[str] = []
    for i, row in enumerate(reader):
        if not row:
            continue
        if len(row) != 3:
            raise DatasetError(f"row {i} has {len(row)} cells, expected 3")
        ids.append(row[0])
        labels.append(int(row[1]))
        kinds.append(row[2])
    return tuple(ids), SyntheticTruth(
        true_labels=np.array(labels, dtype=np.int64), noise_kind=tuple(kinds)
    )


def load_reference_labels(path: str | Path) -> dict[str, int]:
    """Reference labels keyed by sample id.

    Accepts either the truth CSV (``id,true_label,noise_kind``) or an external
    prediction CSV (``id,predicted_label``).
    """
    reader = csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8")))
    header = next(reader, None)
    if header == ["id", "true_label", "noise_kind"] or header == ["id", "predicted_label"]:
        pass
    else:
        raise DatasetError(f"unrecognized reference header {header!r}")
    out: dict[str, int] = {}
    for i, row in enumerate(reader):
        if not row:
            continue
        if row[0] in out:
            raise DatasetError(f"duplicate id {row[0]!r} at row {i}")
        out[row[0]] = int(row[1])
    return out


def reference_from_truth(fs: FeatureSet, truth: SyntheticTruth) -> dict[str, int]:
    return {sid: int(t) for sid, t in zip(fs.sample_ids, truth.true_labels)}


# ---------------------------------------------------------------------------
# synthesis


@dataclass(frozen=True)
class SynthConfig:
    """Planted-noise dataset: per category, a deterministic count of samples
    from the category's own Gaussian blob (clean), from another category's
    blob (cross-label) and from a uniform box around all blobs (uniform
    noise). Counts use half-up rounding of fraction * per_category, with
    uniform noise absorbing the remainder."""

    n_categories: int
    per_category: int
    n_features: int
    clean_frac: float
    cross_frac: float
    uniform_frac: float
    blob_sigma: float = 1.0
    box_margin_sigmas: float = DEFAULT_BOX_MARGIN_SIGMAS
    seed: int = 0

    def validate(self) -> None:
        if self.n_categories < 2:
            raise ValueError("need at least 2 categories")
        if self.per_category < 1:
            raise ValueError("per_category must be >= 1")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.blob_sigma <= 0:
            raise ValueError("blob_sigma must be positive")
        if self.box_margin_sigmas <= 0:
            raise ValueError("box_margin_sigmas must be positive")
        fracs = (self.clean_frac, self.cross_frac, self.uniform_frac)
        if any(f < 0 for f in fracs):
            raise ValueError("noise fractions must be non-negative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"noise fractions sum to {sum(fracs)}, expected 1")

    def kind_counts(self) -> tuple[int, int, int]:
        n_clean = math.floor(self.clean_frac * self.per_category + 0.5)
        n_cross = math.floor(self.cross_frac * self.per_category + 0.5)
        n_uniform = self.per_category - n_clean - n_cross
        if n_uniform < 0:
            raise ValueError(
                "clean_frac and cross_frac round to more samples than per_category"
            )
        return n_clean, n_cross, n_uniform


def generate_synthetic(cfg: SynthConfig) -> tuple[FeatureSet, SyntheticTruth]:
    """Deterministic synthetic dataset with planted label noise.

    Blob centers are drawn once from ``CENTER_BOX``; each category then emits
    its clean, cross-label and uniform-noise blocks in that order. Identical
    configs produce bitwise-identical outputs.
    """
    cfg.validate()
    n_clean, n_cross, n_uniform = cfg.kind_counts()
    c_count, d = cfg.n_categories, cfg.n_features
    centers = component_rng(cfg.seed, "centers").uniform(
        CENTER_BOX[0], CENTER_BOX[1], size=(c_count, d)
    )
    margin = cfg.box_margin_sigmas * cfg.blob_sigma
    box_lo = centers.min(axis=0) - margin
    box_hi = centers.max(axis=0) + margin

    feats: list[np.ndarray] = []
    labels: list[int] = []
    ids: list[str] = []
    true_labels: list[int] = []
    kinds: list[str] = []
    for c in range(c_count):
        rng = component_rng(cfg.seed, "category", c)
        clean = centers[c] + cfg.blob_sigma * rng.standard_normal((n_clean, d))
        # Source categories for cross-label noise: uniform over the others.
        raw = rng.integers(0, c_count - 1, size=n_cross)
        sources = raw + (raw >= c)
        cross = centers[sources] + cfg.blob_sigma * rng.standard_normal((n_cross, d))
        uniform = rng.uniform(box_lo, box_hi, size=(n_uniform, d))
        feats.append(np.vstack([clean, cross, uniform]).astype(np.float32))
        labels.extend([c] * cfg.per_category)
        ids.extend(f"c{c:03d}_{i:04d}" for i in range(cfg.per_category))
        true_labels.extend([c] * n_clean)
        true_labels.extend(int(s) for s in sources)
        true_labels.extend([NO_CATEGORY] * n_uniform)
        kinds.extend([NOISE_CLEAN] * n_clean)
        kinds.extend([NOISE_CROSS] * n_cross)
        kinds.extend([NOISE_UNIFORM] * n_uniform)

    fs = FeatureSet(
        features=np.vstack(feats),
        labels=np.array(labels, dtype=np.int64),
        sample_ids=tuple(ids),
        category_names=tuple(f"cat{c:03d}" for c in range(c_count)),
    )
    truth = SyntheticTruth(
        true_labels=np.array(true_labels, dtype=np.int64), noise_kind=tuple(kinds)
    )
    return fs, truth
