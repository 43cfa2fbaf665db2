"""Height-flattened bird's-eye-view rasterization of LiDAR points."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from .geom import rot_z
from .scene import Box3D

CHANNELS = ("point_count", "max_z", "mean_z", "mean_intensity")


@dataclass(frozen=True)
class GridSpec:
    """Cells are [min, max) per axis with the last cell closed.

    ``resolution`` is (cells along x, cells along y); grid rows follow x.
    """

    x_range: Tuple[float, float] = (-51.2, 51.2)
    y_range: Tuple[float, float] = (-51.2, 51.2)
    resolution: Tuple[int, int] = (200, 200)
    z_range: Tuple[float, float] = (-5.0, 3.0)

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise ValueError(f"{name} must satisfy min < max, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        h, w = (int(v) for v in self.resolution)
        if h < 1 or w < 1:
            raise ValueError(f"resolution must be >= 1 per side, got {self.resolution}")
        object.__setattr__(self, "resolution", (h, w))

    def to_dict(self) -> Dict[str, Any]:
        return {"x_range": list(self.x_range), "y_range": list(self.y_range),
                "z_range": list(self.z_range), "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GridSpec":
        return cls(tuple(d["x_range"]), tuple(d["y_range"]), tuple(d["resolution"]),
                   tuple(d["z_range"]))


@dataclass
class BEVGrid:
    """Per-cell point statistics; the float channels are NaN in empty cells."""

    spec: GridSpec
    point_count: np.ndarray
    max_z: np.ndarray
    mean_z: np.ndarray
    mean_intensity: np.ndarray
    out_of_range: int = 0

    @property
    def n_points(self) -> int:
        return int(self.point_count.sum()) + self.out_of_range

    def merge(self, other: "BEVGrid") -> "BEVGrid":
        """Combine grids rasterized from disjoint shards of one cloud."""
        if other.spec != self.spec:
            raise ValueError("cannot merge grids with different specs")
        na, nb = self.point_count, other.point_count
        n = na + nb
        with np.errstate(invalid="ignore", divide="ignore"):
            def wmean(a, b):
                return (np.where(na > 0, a, 0.0) * na + np.where(nb > 0, b, 0.0) * nb) / n
            mean_z = np.where(n > 0, wmean(self.mean_z, other.mean_z), np.nan)
            mean_i = np.where(n > 0, wmean(self.mean_intensity, other.mean_intensity), np.nan)
        max_z = np.fmax(self.max_z, other.max_z)
        return BEVGrid(self.spec, n, max_z, mean_z, mean_i, self.out_of_range + other.out_of_range)


def _bin(values: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * n).astype(np.int64)
    return np.minimum(idx, n - 1)


def rasterize(points, spec: GridSpec) -> BEVGrid:
    """Bin (x, y, z, intensity) rows into ``spec``; out-of-range points are counted only."""
    pts = np.asarray(points, dtype=float).reshape(-1, 4)
    if not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")
    h, w = spec.resolution
    x, y, z, inten = pts.T
    inside = ((x >= spec.x_range[0]) & (x <= spec.x_range[1])
              & (y >= spec.y_range[0]) & (y <= spec.y_range[1])
              & (z >= spec.z_range[0]) & (z <= spec.z_range[1]))
    pts = pts[inside]
    ix = _bin(pts[:, 0], *spec.x_range, h)
    iy = _bin(pts[:, 1], *spec.y_range, w)
    cell = ix * w + iy
    # fixed summation order per cell keeps the means permutation-invariant
    order = np.lexsort((pts[:, 3], pts[:, 2], pts[:, 1], pts[:, 0], cell))
    cell, pts = cell[order], pts[order]

    size = h * w
    count = np.bincount(cell, minlength=size)
    max_z = np.full(size, -np.inf)
    np.maximum.at(max_z, cell, pts[:, 2])
    sum_z = np.bincount(cell, weights=pts[:, 2], minlength=size)
    sum_i = np.bincount(cell, weights=pts[:, 3], minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_z = np.where(count > 0, sum_z / count, np.nan)
        mean_i = np.where(count > 0, sum_i / count, np.nan)
    max_z = np.where(count > 0, max_z, np.nan)
    return BEVGrid(spec, count.reshape(h, w), max_z.reshape(h, w), mean_z.reshape(h, w),
                   mean_i.reshape(h, w), int((~inside).sum()))


def crop_points_in_box(points, box: Box3D, eps: float = 1e-9) -> np.ndarray:
    """Rows of ``points`` lying inside ``box``, faces included."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 4)
    local = (pts[:, :3] - np.asarray(box.center)) @ rot_z(box.yaw)
    half = np.asarray(box.size) / 2 + eps
    return pts[np.all(np.abs(local) <= half, axis=1)]


def load_points(path) -> np.ndarray:
    """Read x,y,z,intensity rows from CSV (.csv/.txt) or raw little-endian float32 (.bin)."""
    path = Path(path)
    if path.suffix == ".bin":
        data = np.fromfile(path, dtype="<f4")
        if data.size % 4:
            raise ValueError(f"{path}: size is not a multiple of 4 float32 values")
        return data.reshape(-1, 4).astype(float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty file
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if data.size == 0:
        return np.zeros((0, 4))
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns, got {data.shape[1]}")
    return data


def save_grid(grid: BEVGrid, prefix) -> Tuple[Path, Path]:
    """Write ``<prefix>.json`` metadata and ``<prefix>.bin`` channel planes.

    The binary holds the four channels in CHANNELS order, each a row-major
    (H, W) plane of little-endian float64. Empty cells hold 0 in every
    channel; the count plane tells them apart.
    """
    prefix = Path(prefix)
    meta_path, bin_path = prefix.with_suffix(".json"), prefix.with_suffix(".bin")
    empty = grid.point_count == 0
    planes = np.stack([grid.point_count.astype("<f8")] + [
        np.where(empty, 0.0, c) for c in (grid.max_z, grid.mean_z, grid.mean_intensity)
    ]).astype("<f8")
    planes.tofile(bin_path)
    meta = {
        "spec": grid.spec.to_dict(),
        "channels": list(CHANNELS),
        "dtype": "float64-le",
        "empty_cell_value": 0.0,
        "shape": [len(CHANNELS), *grid.spec.resolution],
        "layout": "channel-major, row-major (x rows, y columns)",
        "binary": bin_path.name,
        "n_points": grid.n_points,
        "out_of_range": grid.out_of_range,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return meta_path, bin_path


def load_grid(prefix) -> BEVGrid:
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    spec = GridSpec.from_dict(meta["spec"])
    planes = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8").reshape(meta["shape"])
    count = planes[0].astype(np.int64)
    floats = [np.where(count > 0, planes[i], np.nan) for i in (1, 2, 3)]
    return BEVGrid(spec, count, *floats, out_of_range=int(meta["out_of_range"]))
