"""Datasets: the rotated two-moons toy task, CSV loading, decision-boundary grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import MultiClassifierModel, predict


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingView:
    """What the training loop is allowed to see: no target labels."""

    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    n_classes: int


@dataclass(frozen=True)
class DatasetSplit:
    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    target_y_eval: np.ndarray  # evaluation only; empty when unknown
    n_classes: int

    def __post_init__(self):
        if self.source_x.ndim != 2 or self.target_x.ndim != 2:
            raise DataError("feature arrays must be 2-D")
        if self.source_x.shape[1] != self.target_x.shape[1]:
            raise DataError(
                f"source has {self.source_x.shape[1]} features, target has {self.target_x.shape[1]}"
            )
        if len(self.source_y) != len(self.source_x):
            raise DataError("source labels and features differ in length")
        if self.target_y_eval.size and len(self.target_y_eval) != len(self.target_x):
            raise DataError("target labels and features differ in length")
        for y in (self.source_y, self.target_y_eval):
            if y.size and (y.min() < 0 or y.max() >= self.n_classes):
                raise DataError(f"labels must lie in [0, {self.n_classes})")

    @property
    def has_target_labels(self) -> bool:
        return self.target_y_eval.size > 0

    @property
    def input_dim(self) -> int:
        return self.source_x.shape[1]

    def training_view(self) -> TrainingView:
        return TrainingView(self.source_x, self.source_y, self.target_x, self.n_classes)


@dataclass(frozen=True)
class ToySpec:
    n_per_domain: int = 300
    rotation_deg: float = 30.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_per_domain <= 0:
            raise DataError("n_per_domain must be positive")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be nonnegative")


def rotation_matrix(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


def _moons(n: int, noise: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaving half circles: upper arc class 0, lower arc class 1."""
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower])
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    if noise > 0:
        x = x + rng.normal(scale=noise, size=x.shape)
    perm = rng.permutation(n)
    return x[perm], y[perm]


def make_toy(spec: ToySpec = ToySpec()) -> DatasetSplit:
    """Source moons and a fresh, rotated draw of the same moons as target."""
    rng = np.random.default_rng(spec.seed)
    xs, ys = _moons(spec.n_per_domain, spec.noise_sigma, rng)
    xt, yt = _moons(spec.n_per_domain, spec.noise_sigma, rng)
    xt = xt @ rotation_matrix(spec.rotation_deg).T
    return DatasetSplit(xs, ys, xt, yt, n_classes=2)


def _read_rows(path: Path) -> np.ndarray:
    feats = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not feats:
                    continue  # header
                raise DataError(f"{path}:{lineno}: cannot parse row {row!r}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            feats.append(values)
    if not feats:
        raise DataError(f"{path}: no data rows")
    return np.array(feats, dtype=np.float64)


def _split_label(arr: np.ndarray, path: Path):
    y = arr[:, -1]
    if np.any(y != np.round(y)) or np.any(y < 0):
        raise DataError(f"{path}: label column must hold nonnegative integers")
    return arr[:, :-1], y.astype(np.int64)


def load_csv(source_path, target_path) -> DatasetSplit:
    """Load ``x1,...,xd,label`` rows; the target label column is optional.

    The target file is treated as labelled when it has exactly one more column
    than the source features.
    """
    source_path, target_path = Path(source_path), Path(target_path)
    src = _read_rows(source_path)
    if src.shape[1] < 2:
        raise DataError(f"{source_path}: need at least one feature column and a label")
    xs, ys = _split_label(src, source_path)
    d = xs.shape[1]

    tgt = _read_rows(target_path)
    if tgt.shape[1] == d + 1:
        xt, yt = _split_label(tgt, target_path)
    elif tgt.shape[1] == d:
        xt, yt = tgt, np.zeros(0, dtype=np.int64)
    else:
        raise DataError(
            f"{target_path}: has {tgt.shape[1]} columns; expected {d} features (+ optional label)"
        )

    k = max(int(ys.max()) + 1, 2)
    if yt.size and yt.max() >= k:
        raise DataError(
            f"{target_path}: label {int(yt.max())} not seen in source (source implies K={k})"
        )
    return DatasetSplit(xs, ys, xt, yt, n_classes=k)


def write_csv(path, x: np.ndarray, y: np.ndarray | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, row in enumerate(x):
            cells = [repr(float(v)) for v in row]
            if y is not None:
                cells.append(str(int(y[i])))
            w.writerow(cells)


# -- decision boundaries ----------------------------------------------------

@dataclass
class BoundaryGrid:
    xs: np.ndarray  # (resolution,)
    ys: np.ndarray  # (resolution,)
    points: np.ndarray  # (resolution**2, 2), x varies fastest
    consensus: np.ndarray  # (resolution**2,)
    heads: np.ndarray  # (n_classifiers, resolution**2)

    @property
    def resolution(self) -> int:
        return len(self.xs)


def boundary_grid(model: MultiClassifierModel, bounds, resolution: int) -> BoundaryGrid:
    if model.spec.input_dim != 2:
        raise DataError(f"boundary grid needs a 2-D input model, got input_dim={model.spec.input_dim}")
    if resolution < 2:
        raise DataError("resolution must be at least 2")
    xmin, xmax, ymin, ymax = bounds
    gx = np.linspace(xmin, xmax, resolution)
    gy = np.linspace(ymin, ymax, resolution)
    xx, yy = np.meshgrid(gx, gy)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    consensus, heads = predict(model, pts)
    return BoundaryGrid(gx, gy, pts, consensus, heads)


def padded_bounds(*arrays, pad: float = 0.5):
    allx = np.vstack(arrays)
    lo, hi = allx.min(axis=0) - pad, allx.max(axis=0) + pad
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def write_boundary_csv(grid: BoundaryGrid, path):
    n_heads = grid.heads.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "consensus", *[f"head_{i + 1}" for i in range(n_heads)]])
        for idx, (px, py) in enumerate(grid.points):
            w.writerow([repr(float(px)), repr(float(py)), int(grid.consensus[idx]),
                        *[int(h) for h in grid.heads[:, idx]]])


# Class colours for boundary images; class k uses PALETTE[k % len(PALETTE)].
PALETTE = np.array([
    [228, 26, 28],    # red
    [77, 175, 74],    # green
    [55, 126, 184],   # blue
    [152, 78, 163],   # purple
    [255, 127, 0],    # orange
    [255, 255, 51],   # yellow
    [166, 86, 40],    # brown
    [247, 129, 191],  # pink
], dtype=np.uint8)


def write_boundary_ppm(grid: BoundaryGrid, path, head: int | None = None):
    """Binary PPM (P6), one pixel per grid cell, top row = largest y."""
    labels = grid.consensus if head is None else grid.heads[head]
    r = grid.resolution
    img = PALETTE[labels.reshape(r, r) % len(PALETTE)][::-1]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{r} {r}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
