"""Regular tensor grids over the unit cube with a ball (or product) mask.

A :class:`GridField` tabulates a non-negative function on a uniform grid of
cell centers over [0,1]^dim. The mask marks cells whose center lies in the
admissible region; values are forced to zero outside it. Fields are the
carrier for tabulated intensities, bound-heat tables, and PDE state.

On disk a field is a JSON header plus a companion binary file of float64
little-endian values in row-major order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridField", "ball_mask", "save_grid", "load_grid"]


def ball_mask(dim: int, points_per_axis: int) -> np.ndarray:
    """Boolean mask of cells whose center lies in the positive unit ball."""
    h = 1.0 / points_per_axis
    centers = (np.arange(points_per_axis) + 0.5) * h
    grids = np.meshgrid(*([centers] * dim), indexing="ij")
    rsq = np.zeros((points_per_axis,) * dim)
    for g in grids:
        rsq += g * g
    return rsq <= 1.0


@dataclass
class GridField:
    dim: int
    points_per_axis: int
    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    signed: bool = False  # operator outputs may be signed; densities are not

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.points_per_axis,) * self.dim
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.mask is None:
            self.mask = ball_mask(self.dim, self.points_per_axis)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != expected:
            raise ValueError("mask shape mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if not self.signed and np.any(self.values < 0):
            raise ValueError("field values must be non-negative")
        self.values = np.where(self.mask, self.values, 0.0)

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def centers(self, axis: int = 0) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return (np.arange(self.points_per_axis) + 0.5) * self.spacing

    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def copy(self) -> "GridField":
        return GridField(self.dim, self.points_per_axis, self.values.copy(),
                         self.mask.copy(), self.signed)

    def value_at(self, x) -> float:
        """Nearest-cell lookup; zero outside [0,1]^dim or the mask."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            return 0.0
        idx = np.minimum((x / self.spacing).astype(int), self.points_per_axis - 1)
        return float(self.values[tuple(idx)])


def save_grid(grid: GridField, path: str) -> None:
    """Write ``path`` (JSON header) and ``path`` with .bin suffix (payload)."""
    bin_path = os.path.splitext(path)[0] + ".bin"
    header = {
        "dims": list(grid.values.shape),
        "spacing": grid.spacing,
        "dim": grid.dim,
        "points_per_axis": grid.points_per_axis,
        "values_file": os.path.basename(bin_path),
        "dtype": "<f8",
        "order": "row-major",
        "signed": grid.signed,
    }
    if grid.mask.all():
        header["mask"] = "full"
    else:
        mask_path = os.path.splitext(path)[0] + ".mask.bin"
        grid.mask.astype(np.uint8).tofile(mask_path)
        header["mask"] = os.path.basename(mask_path)
    grid.values.astype("<f8").tofile(bin_path)
    with open(path, "w") as fh:
        json.dump(header, fh, indent=1)


def load_grid(path: str) -> GridField:
    with open(path) as fh:
        header = json.load(fh)
    base = os.path.dirname(path)
    values = np.fromfile(os.path.join(base, header["values_file"]),
                         dtype="<f8").reshape(header["dims"])
    mask_ref = header.get("mask", "full")
    if mask_ref == "full":
        mask = np.ones(values.shape, dtype=bool)
    else:
        mask = np.fromfile(os.path.join(base, mask_ref),
                           dtype=np.uint8).reshape(header["dims"]).astype(bool)
    return GridField(header["dim"], header["points_per_axis"], values, mask,
                     header.get("signed", False))
