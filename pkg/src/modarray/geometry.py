"""Array and user geometry: antenna grids, modular activation masks, UE placement.

Coordinate convention: the base-station array lies in the y-z plane with
broadside along +x.  Azimuth is measured from +x toward +y, so angles in
[0, pi/2] cover the sampled quadrant directly.  Grid ordering is row-major
with z decreasing by row and y increasing by column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID_SIDE = 6  # reference sparse array is 6x6
SUB_SIDE = 3  # each corner sub-array is 3x3


@dataclass(frozen=True)
class ArraySpec:
    """Square planar array of n_side x n_side candidate antennas."""

    n_side: int
    spacing_m: float
    wavelength_m: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n_side < 2:
            raise ValueError(f"n_side must be >= 2, got {self.n_side}")
        if self.spacing_m <= 0:
            raise ValueError(f"spacing_m must be positive, got {self.spacing_m}")
        if self.wavelength_m <= 0:
            raise ValueError(f"wavelength_m must be positive, got {self.wavelength_m}")

    @property
    def n_antennas(self) -> int:
        return self.n_side**2

    @property
    def aperture_m(self) -> float:
        """Side length of the square aperture."""
        return (self.n_side - 1) * self.spacing_m


def equal_aperture_spec(reference: ArraySpec, n_side: int) -> ArraySpec:
    """Spec for an n_side x n_side array spanning the same aperture as `reference`."""
    if n_side < 2:
        raise ValueError(f"n_side must be >= 2, got {n_side}")
    spacing = reference.aperture_m / (n_side - 1)
    return ArraySpec(
        n_side=n_side,
        spacing_m=spacing,
        wavelength_m=reference.wavelength_m,
        center=reference.center,
    )


def antenna_positions(spec: ArraySpec) -> np.ndarray:
    """Positions of all candidate antennas, shape (n_side**2, 3), in meters.

    Row-major: index k = row * n_side + col, with z decreasing by row and
    y increasing by column; the grid is centered on spec.center.
    """
    n = spec.n_side
    offsets = (np.arange(n) - (n - 1) / 2.0) * spec.spacing_m
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cx, cy, cz = spec.center
    pos = np.empty((n * n, 3))
    pos[:, 0] = cx
    pos[:, 1] = cy + offsets[cols.ravel()]
    pos[:, 2] = cz - offsets[rows.ravel()]
    return pos


@dataclass(frozen=True)
class ModularConfig:
    """Activation pattern (c_x, c_y) over the 6x6 reference grid.

    Four disjoint 3x3 corner sub-arrays; within each, a contiguous
    c_y-row by c_x-column block anchored at the outer corner of the
    aperture is active, so the four extreme corners are always on.
    """

    c_x: int
    c_y: int
    mask: np.ndarray = field(repr=False)

    @property
    def k_active(self) -> int:
        return 4 * self.c_x * self.c_y

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def modular_mask(c_x: int, c_y: int) -> ModularConfig:
    """Build the ModularConfig for a (c_x, c_y) pair on the 6x6 grid."""
    if c_x not in (1, 2, 3) or c_y not in (1, 2, 3):
        raise ValueError(f"c_x and c_y must be in {{1,2,3}}, got ({c_x}, {c_y})")
    n = GRID_SIDE
    grid = np.zeros((n, n), dtype=bool)
    top_rows = slice(0, c_y)
    bot_rows = slice(n - c_y, n)
    left_cols = slice(0, c_x)
    right_cols = slice(n - c_x, n)
    for rows in (top_rows, bot_rows):
        for cols in (left_cols, right_cols):
            grid[rows, cols] = True
    return ModularConfig(c_x=c_x, c_y=c_y, mask=grid.ravel())


def all_modular_configs() -> list[ModularConfig]:
    """The 9 configurations in (c_x, c_y) lexicographic order."""
    return [modular_mask(cx, cy) for cx in (1, 2, 3) for cy in (1, 2, 3)]


@dataclass(frozen=True)
class UeGeometry:
    """User placement: horizontal range, azimuth, and vertical offset."""

    range_m: float
    azimuth_rad: float
    height_diff_m: float = 10.0
    m_antennas: int = 4
    ue_spacing_m: float | None = None  # None -> half wavelength

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError(f"range_m must be positive, got {self.range_m}")
        if not 0.0 <= self.azimuth_rad <= np.pi / 2:
            raise ValueError(f"azimuth_rad must lie in [0, pi/2], got {self.azimuth_rad}")
        if self.m_antennas < 1:
            raise ValueError(f"m_antennas must be >= 1, got {self.m_antennas}")


def ue_positions(geom: UeGeometry, wavelength_m: float) -> np.ndarray:
    """UE antenna positions, shape (M, 3): a ULA along y centered at the UE.

    The UE center sits at (r cos(phi), r sin(phi), -height_diff) relative to
    the array center; spacing defaults to half a wavelength.
    """
    spacing = geom.ue_spacing_m if geom.ue_spacing_m is not None else wavelength_m / 2.0
    m = geom.m_antennas
    center = np.array(
        [
            geom.range_m * np.cos(geom.azimuth_rad),
            geom.range_m * np.sin(geom.azimuth_rad),
            -geom.height_diff_m,
        ]
    )
    offsets = (np.arange(m) - (m - 1) / 2.0) * spacing
    pos = np.tile(center, (m, 1))
    pos[:, 1] += offsets
    return pos
