"""Directions, array geometries and steering vectors.

Angles follow u = [sin(theta) cos(phi), sin(theta) sin(phi), cos(theta)], with
every aperture lying in the x-y plane and boresight along +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

ROLES = ("comms-tx", "sens-rx", "dcm")

# Uniform-aperture half-power beamwidth constant, HPBW = 0.886 * lambda / D.
HPBW_CONSTANT = 0.886

TWO_PI = 2.0 * np.pi


def wrap_phase(phase):
    """Wrap phase(s) to [0, 2*pi)."""
    out = np.mod(phase, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def wrap_angle_error(delta):
    """Wrap an angle difference to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(delta, dtype=float), TWO_PI)


@dataclass(frozen=True)
class Direction:
    """Polar angle ``theta`` from boresight in [0, pi/2] and azimuth ``phi``.

    ``phi`` is wrapped to [0, 2*pi) on construction.
    """

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        theta = float(self.theta)
        if not np.isfinite(theta) or theta < 0.0 or theta > np.pi / 2:
            raise ValueError(f"theta={theta!r} outside [0, pi/2]")
        if not np.isfinite(self.phi):
            raise ValueError(f"phi={self.phi!r} is not finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", float(wrap_phase(float(self.phi))))

    @classmethod
    def folded(cls, theta: float, phi: float) -> "Direction":
        """Build a direction, mapping a negative polar angle to its equivalent.

        (-theta, phi) and (theta, phi + pi) describe the same unit vector, which
        is how filter outputs that overshoot boresight are brought back into
        the domain.
        """
        if theta < 0.0:
            theta, phi = -theta, phi + np.pi
        return cls(theta, phi)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi])


def direction_to_cosines(d: Direction) -> np.ndarray:
    """Direction cosines (unit 3-vector) of ``d``."""
    st = np.sin(d.theta)
    return np.array([st * np.cos(d.phi), st * np.sin(d.phi), np.cos(d.theta)])


def cosines_to_direction(u) -> Direction:
    """Inverse of :func:`direction_to_cosines` for vectors in the upper half-space."""
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValueError("zero vector has no direction")
    u = u / norm
    # arctan2 keeps full precision near boresight where arccos does not
    return Direction(float(np.arctan2(np.hypot(u[0], u[1]), u[2])), float(np.arctan2(u[1], u[0])))


def wavevector(d: Direction, lambda0: float) -> np.ndarray:
    """Wavevector k = (2 pi / lambda0) u in rad/m."""
    return (TWO_PI / lambda0) * direction_to_cosines(d)


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions (meters) of one aperture.

    For planar arrays ``shape`` is (rows, cols) and ``spacing`` is the (dx, dy)
    pitch; positions are stored row by row, centred on the origin.
    """

    positions: np.ndarray
    role: str
    shape: tuple = None
    spacing: tuple = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] == 0:
            raise ValueError("positions must be a non-empty (n, 3) array")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if len(np.unique(np.round(pos, 12), axis=0)) != len(pos):
            raise ValueError("element positions must be pairwise distinct")
        if self.role == "dcm":
            if self.shape is None or self.shape[0] * self.shape[1] != len(pos):
                raise ValueError("dcm geometry needs a (L_h, L_v) shape matching the element count")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def planar(cls, rows: int, cols: int, dx: float, dy: float = None, role: str = "dcm") -> "ArrayGeometry":
        """Rectangular grid of ``rows`` x ``cols`` elements in the x-y plane.

        Element (i, j) sits at (x_i, y_j) with flat index ``i * cols + j``, so
        ``rows`` counts elements along x (horizontal) and ``cols`` along y
        (vertical).
        """
        dy = dx if dy is None else dy
        if rows < 1 or cols < 1:
            raise ValueError("grid dimensions must be positive")
        if dx <= 0 or dy <= 0:
            raise ValueError("element spacing must be positive")
        x = (np.arange(rows) - (rows - 1) / 2.0) * dx
        y = (np.arange(cols) - (cols - 1) / 2.0) * dy
        xx, yy = np.meshgrid(x, y, indexing="ij")
        pos = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(rows * cols)])
        return cls(pos, role, shape=(rows, cols), spacing=(dx, dy))

    @classmethod
    def linear(cls, n: int, spacing: float, role: str, axis: int = 0) -> "ArrayGeometry":
        """Uniform linear array of ``n`` elements along ``axis`` (0 = x, 1 = y)."""
        if axis == 0:
            return cls.planar(n, 1, spacing, spacing, role)
        return cls.planar(1, n, spacing, spacing, role)

    def aperture_lengths(self) -> tuple:
        """(horizontal, vertical) aperture lengths in meters.

        Grid arrays use count * pitch per axis. Arbitrary geometries fall back
        to the element extent along x and y, floored at a single-element pitch
        estimated from the nearest-neighbour distance.
        """
        if self.shape is not None and self.spacing is not None:
            return (self.shape[0] * self.spacing[0], self.shape[1] * self.spacing[1])
        pos = self.positions
        if len(pos) == 1:
            raise ValueError("cannot infer the aperture of a single free-form element")
        diff = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        pitch = np.min(diff[diff > 0])
        ext = np.ptp(pos[:, :2], axis=0)
        return (float(ext[0] + pitch), float(ext[1] + pitch))


def steering_vector(g: ArrayGeometry, d: Direction, lambda0: float) -> np.ndarray:
    """Array response toward ``d``: entry l is exp(-j k(d)^T p_l)."""
    return np.exp(-1j * (g.positions @ wavevector(d, lambda0)))


def round_trip_steering(g: ArrayGeometry, d: Direction, lambda0: float) -> np.ndarray:
    """Doubled-phase DCM response exp(-j 2 k(d)^T p_l) of the monostatic path."""
    if g.role != "dcm":
        raise ValueError("round-trip steering is defined for the dcm aperture only")
    return np.exp(-2j * (g.positions @ wavevector(d, lambda0)))


def dcm_incident_response(g: ArrayGeometry, d: Direction, lambda0: float) -> np.ndarray:
    """Phase of a plane wave from the transceiver at direction ``d`` on each DCM element.

    The wave travels along -k(d), so the entries are exp(+j k(d)^T p_l). With
    this convention a^H(-u) diag(gamma) a(u) equals the round-trip form and
    the transmission side sum reduces to the usual exp(j [k - k_hat]^T p) kernel.
    """
    return np.conj(steering_vector(g, d, lambda0))


def hpbw(aperture_length: float, lambda0: float) -> float:
    """Half-power beamwidth 0.886 lambda0 / D, clamped to at most pi."""
    if aperture_length <= 0:
        raise ValueError("aperture length must be positive")
    return float(min(HPBW_CONSTANT * lambda0 / aperture_length, np.pi))


def array_hpbw(g: ArrayGeometry, lambda0: float) -> tuple:
    """Per-axis HPBW of ``g`` from its (horizontal, vertical) aperture lengths."""
    lh, lv = g.aperture_lengths()
    return (hpbw(lh, lambda0), hpbw(lv, lambda0))


def effective_hpbw(geometries, lambda0: float) -> tuple:
    """Per-axis minimum HPBW over a collection of apertures.

    The first axis bounds the polar error and the second the azimuth error.
    """
    widths = np.array([array_hpbw(g, lambda0) for g in geometries])
    return (float(widths[:, 0].min()), float(widths[:, 1].min()))


def near_square_shape(n: int) -> tuple:
    """Factor ``n`` as rows x cols with rows <= cols and rows as large as possible."""
    if n < 1:
        raise ValueError("element count must be positive")
    rows = int(np.floor(np.sqrt(n)))
    while n % rows:
        rows -= 1
    return (rows, n // rows)
