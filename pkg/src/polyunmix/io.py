"""On-disk formats: dataset bundles, result bundles and CSV label maps.

A dataset bundle is a directory holding::

    header.json           {"height", "width", "bands", "num_materials"?, "wavelengths"?}
    data.npy              (n, d) float64, pixel-major, row-major pixel order
    gt_endmembers.npy     (d, m) float64        optional
    gt_abundances.npy     (m, n) float64        optional
    gt_labels.npy         (n,) int64            optional

A result bundle holds ``endmembers.npy`` (d, m), ``abundances.npy`` (m, n),
``labels.npy`` (n,), ``config.json`` and, when present,
``initial_abundances.npy`` and ``metrics.json``. Arrays are NPY v1.0,
little-endian.
"""
import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cluster import ClassificationMap
from .errors import BundleError

ABUNDANCE_SUM_TOL = 1e-6
ABUNDANCE_NEG_TOL = 1e-9
TIE_TOL = 1e-9


@dataclass
class SpectralDataset:
    """Observed cube flattened to an (n pixels, d bands) matrix."""

    data: np.ndarray
    height: int
    width: int
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise BundleError(f"data must be 2-D (n, d), got shape {self.data.shape}")
        n, d = self.data.shape
        if n < 1 or d < 1:
            raise BundleError(f"empty dataset of shape {self.data.shape}")
        if int(self.height) * int(self.width) != n:
            raise BundleError(f"height*width = {self.height}*{self.width} != n = {n}")
        if not np.isfinite(self.data).all():
            bad = int(np.flatnonzero(~np.isfinite(self.data).all(1))[0])
            raise BundleError(f"non-finite values in data (first at pixel {bad})")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
            if self.wavelengths.shape != (d,):
                raise BundleError(f"expected {d} wavelengths, got {self.wavelengths.shape}")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def replace(self, data):
        """Same spatial metadata, new per-pixel vectors (band labels dropped if d changes)."""
        data = np.asarray(data, dtype=np.float64)
        wl = self.wavelengths if data.shape[1] == self.d else None
        return SpectralDataset(data, self.height, self.width, wl)


def check_abundances(A, what="abundances"):
    A = np.asarray(A, dtype=np.float64)
    if A.min() < -ABUNDANCE_NEG_TOL:
        raise BundleError(f"abundance simplex violation in {what}: negative entry {A.min():.3g}")
    sums = A.sum(0)
    worst = int(np.abs(sums - 1.0).argmax())
    if abs(sums[worst] - 1.0) > ABUNDANCE_SUM_TOL:
        raise BundleError(
            f"abundance simplex violation in {what}: column {worst} sums to {sums[worst]:.6g}"
        )


@dataclass
class GroundTruth:
    endmembers: np.ndarray                # (d, m)
    abundances: np.ndarray                # (m, n)
    labels: Optional[np.ndarray] = None   # (n,)

    def __post_init__(self):
        self.endmembers = np.asarray(self.endmembers, dtype=np.float64)
        self.abundances = np.asarray(self.abundances, dtype=np.float64)
        if self.endmembers.ndim != 2 or self.abundances.ndim != 2:
            raise BundleError("ground-truth endmembers and abundances must be 2-D")
        if self.endmembers.shape[1] != self.abundances.shape[0]:
            raise BundleError(
                f"endmembers {self.endmembers.shape} and abundances "
                f"{self.abundances.shape} disagree on m"
            )
        check_abundances(self.abundances, "ground truth")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.shape != (self.n,):
                raise BundleError(f"expected {self.n} labels, got {self.labels.shape}")
            A = self.abundances
            top2 = np.sort(A, axis=0)[-2:] if self.m > 1 else None
            clear = np.ones(self.n, bool) if top2 is None else (top2[1] - top2[0]) > TIE_TOL
            mismatch = clear & (self.labels != A.argmax(0))
            if mismatch.any():
                raise BundleError(
                    f"ground-truth labels disagree with abundance argmax at "
                    f"{int(mismatch.sum())} pixels (first {int(np.flatnonzero(mismatch)[0])})"
                )

    @property
    def m(self):
        return self.endmembers.shape[1]

    @property
    def n(self):
        return self.abundances.shape[1]


@dataclass
class ResultBundle:
    endmembers: np.ndarray                 # (d, m)
    abundances: np.ndarray                 # (m, n)
    labels: np.ndarray                     # (n,)
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    initial_abundances: Optional[np.ndarray] = None
    metrics: Optional[dict] = None

    def __post_init__(self):
        self.endmembers = np.asarray(self.endmembers, dtype=np.float64)
        self.abundances = np.asarray(self.abundances, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()

    def validate(self):
        if self.endmembers.ndim != 2 or self.endmembers.shape[1] == 0 or self.abundances.size == 0:
            raise BundleError("degenerate result: no materials")
        m, n = self.abundances.shape
        if self.endmembers.shape[1] != m:
            raise BundleError(f"endmembers {self.endmembers.shape} vs abundances {self.abundances.shape}")
        if self.labels.shape != (n,):
            raise BundleError(f"expected {n} labels, got {self.labels.shape}")
        if self.initial_abundances is not None and np.shape(self.initial_abundances) != (m, n):
            raise BundleError("initial abundances shape mismatch")


def _save_npy(path, arr, dtype):
    np.save(path, np.ascontiguousarray(arr, dtype=dtype), allow_pickle=False)


def _load_npy(path, dtype=None):
    try:
        arr = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise BundleError(f"missing file: {path}") from None
    except (ValueError, OSError, EOFError) as exc:
        raise BundleError(f"corrupt array file {path}: {exc}") from None
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"corrupt JSON in {path}: {exc}") from None


def _prepare_dir(path, overwrite):
    path = Path(path)
    if path.exists():
        if not path.is_dir():
            raise BundleError(f"{path} exists and is not a directory")
        if any(path.iterdir()) and not overwrite:
            raise BundleError(f"{path} already exists and is not empty (pass overwrite=True)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_bundle(path):
    """Read a dataset bundle; returns ``(dataset, ground_truth_or_None)``."""
    path = Path(path)
    if not path.is_dir():
        raise BundleError(f"bundle directory not found: {path}")
    header = _load_json(path / "header.json")
    try:
        h, w, bands = int(header["height"]), int(header["width"]), int(header["bands"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"header.json lacks a valid {exc} field") from None
    data = _load_npy(path / "data.npy", np.float64)
    if data.shape != (h * w, bands):
        raise BundleError(f"data.npy has shape {data.shape}, header says ({h * w}, {bands})")
    dataset = SpectralDataset(data, h, w, header.get("wavelengths"))

    files = {k: path / f"gt_{k}.npy" for k in ("endmembers", "abundances", "labels")}
    if not (files["endmembers"].exists() or files["abundances"].exists()):
        if files["labels"].exists():
            warnings.warn("gt_labels.npy present without endmembers/abundances; ignored")
        return dataset, None
    M = _load_npy(files["endmembers"], np.float64)
    A = _load_npy(files["abundances"], np.float64)
    labels = _load_npy(files["labels"], np.int64) if files["labels"].exists() else None
    if M.ndim != 2 or M.shape[0] != bands:
        raise BundleError(f"gt_endmembers.npy has shape {M.shape}, expected ({bands}, m)")
    if A.ndim != 2 or A.shape[1] != h * w:
        raise BundleError(f"gt_abundances.npy has shape {A.shape}, expected (m, {h * w})")
    if "num_materials" in header and header["num_materials"] != M.shape[1]:
        raise BundleError(f"header num_materials={header['num_materials']} but gt has m={M.shape[1]}")
    if not (np.isfinite(M).all() and np.isfinite(A).all()):
        raise BundleError("non-finite values in ground truth")
    return dataset, GroundTruth(M, A, labels)


def save_dataset_bundle(dataset, path, gt=None, num_materials=None, overwrite=False):
    """Write ``dataset`` (and optional ground truth) in the bundle layout read by :func:`load_bundle`."""
    path = _prepare_dir(path, overwrite)
    header = {"height": dataset.height, "width": dataset.width, "bands": dataset.d}
    if gt is not None:
        num_materials = gt.m
    if num_materials is not None:
        header["num_materials"] = int(num_materials)
    if dataset.wavelengths is not None:
        header["wavelengths"] = [float(x) for x in dataset.wavelengths]
    with open(path / "header.json", "w") as fh:
        json.dump(header, fh, indent=2)
    _save_npy(path / "data.npy", dataset.data, "<f8")
    if gt is not None:
        _save_npy(path / "gt_endmembers.npy", gt.endmembers, "<f8")
        _save_npy(path / "gt_abundances.npy", gt.abundances, "<f8")
        if gt.labels is not None:
            _save_npy(path / "gt_labels.npy", gt.labels, "<i8")


def save_bundle(result, path, overwrite=False):
    """Write a :class:`ResultBundle`; arrays round-trip bit-exactly via :func:`load_result`."""
    result.validate()
    path = _prepare_dir(path, overwrite)
    _save_npy(path / "endmembers.npy", result.endmembers, "<f8")
    _save_npy(path / "abundances.npy", result.abundances, "<f8")
    _save_npy(path / "labels.npy", result.labels, "<i8")
    if result.initial_abundances is not None:
        _save_npy(path / "initial_abundances.npy", result.initial_abundances, "<f8")
    with open(path / "config.json", "w") as fh:
        json.dump({"config": result.config, "timings": result.timings}, fh, indent=2, sort_keys=True)
    if result.metrics is not None:
        write_metrics(result.metrics, path / "metrics.json")


def write_metrics(metrics, path):
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2)


def load_result(path):
    path = Path(path)
    if not path.is_dir():
        raise BundleError(f"result directory not found: {path}")
    meta = _load_json(path / "config.json")
    init = path / "initial_abundances.npy"
    metrics = path / "metrics.json"
    result = ResultBundle(
        endmembers=_load_npy(path / "endmembers.npy"),
        abundances=_load_npy(path / "abundances.npy"),
        labels=_load_npy(path / "labels.npy"),
        config=meta.get("config", {}),
        timings=meta.get("timings", {}),
        initial_abundances=_load_npy(init) if init.exists() else None,
        metrics=_load_json(metrics) if metrics.exists() else None,
    )
    result.validate()
    return result


def load_labels_csv(path, m=None):
    """Parse an h-row by w-column CSV of integer labels into a row-major map.

    ``m`` defaults to ``max(label) + 1``. Classes in ``range(m)`` that never
    occur are allowed but trigger a warning.
    """
    rows = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([int(c) for c in row])
                except ValueError:
                    raise BundleError(f"{path}:{lineno}: non-integer label") from None
    except FileNotFoundError:
        raise BundleError(f"missing file: {path}") from None
    if not rows:
        raise BundleError(f"{path}: no labels")
    width = len(rows[0])
    for lineno, row in enumerate(rows, 1):
        if len(row) != width:
            raise BundleError(f"{path}: ragged rows (row {lineno} has {len(row)} values, expected {width})")
    labels = np.array(rows, dtype=np.int64).ravel()
    return _label_map(labels, m, str(path))


def load_labels(path, m=None):
    """Load a label map from ``.csv`` or ``.npy``."""
    path = Path(path)
    if path.suffix == ".npy":
        return _label_map(_load_npy(path, np.int64).ravel(), m, str(path))
    return load_labels_csv(path, m)


def _label_map(labels, m, source):
    if labels.min() < 0:
        raise BundleError(f"{source}: negative label {labels.min()}")
    if m is None:
        m = int(labels.max()) + 1
    if labels.max() >= m:
        raise BundleError(f"{source}: label {labels.max()} out of range for m={m}")
    empty = np.flatnonzero(np.bincount(labels, minlength=m) == 0)
    if empty.size:
        warnings.warn(f"{source}: empty class {', '.join(map(str, empty))}")
    return ClassificationMap(labels, m)


def save_labels_csv(labels, height, width, path):
    labels = np.asarray(labels, dtype=np.int64).reshape(height, width)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(labels.tolist())
