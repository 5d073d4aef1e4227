"""Receiver front ends: wide-FOV, angle-diversity and imaging assemblies.

All three use the same photodetector element (4 mm^2, 0.4 A/W); they differ
in how many elements they carry, where those elements point, and whether a
collection lens sits above them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .scene import Vec3, unit, vec3

DETECTOR_AREA_M2 = 4e-6       # 4 mm^2
RESPONSIVITY_A_W = 0.4

WFOV_FOV_DEG = 70.0
ADR_FOV_DEG = 20.0
ADR_TILT_EL_DEG = 25.0
PIXEL_FOV_DEG = 17.0
LENS_FOV_DEG = 65.0
PIXEL_COUNT = 50

# Lens transmission polynomial over incidence angle in radians.
LENS_POLY = (-0.1982, 0.0425, 0.8778)


@dataclass(frozen=True)
class Orientation:
    """Pointing direction as azimuth/elevation angles in degrees."""

    az_deg: float
    el_deg: float

    def __post_init__(self):
        if not 0.0 <= self.az_deg < 360.0:
            raise ValueError(f"azimuth must be in [0, 360), got {self.az_deg}")
        if not 0.0 <= self.el_deg <= 90.0:
            raise ValueError(f"elevation must be in [0, 90], got {self.el_deg}")

    def to_direction(self) -> Vec3:
        """Unit boresight (cos El cos Az, cos El sin Az, sin El)."""
        az = math.radians(self.az_deg)
        el = math.radians(self.el_deg)
        v = [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        # suppress trig dust so straight-up comes out exactly (0, 0, 1)
        v = [0.0 if abs(c) < 1e-15 else c for c in v]
        return unit(v)


@dataclass(frozen=True)
class DetectorSpec:
    """One photodetector element: area, responsivity, pointing and FOV gate."""

    area: float              # m^2
    responsivity: float      # A/W
    boresight: Vec3
    fov_deg: float           # acceptance half-angle about the boresight
    lens_attached: bool = False

    def __post_init__(self):
        if self.area <= 0 or self.responsivity <= 0:
            raise ValueError("detector area and responsivity must be positive")
        if not 0.0 < self.fov_deg <= 90.0:
            raise ValueError(f"FOV must be in (0, 90] degrees, got {self.fov_deg}")


@dataclass(frozen=True)
class LensModel:
    """Collection lens over the imaging pixels: acceptance cone plus a
    quadratic transmission-vs-incidence polynomial, clamped to [0, 1]."""

    fov_deg: float = LENS_FOV_DEG
    poly: tuple = LENS_POLY

    def transmission(self, incidence_rad: float) -> float:
        return lens_transmission(incidence_rad, self)


def lens_transmission(incidence_rad: float, lens: LensModel | None = None) -> float:
    """Lens power transmission at the given incidence angle (radians).

    Polynomial value clamped to [0, 1]; zero outside the acceptance cone.
    """
    if incidence_rad < 0.0:
        raise ValueError(f"incidence angle must be >= 0, got {incidence_rad}")
    lens = lens or LensModel()
    if incidence_rad > math.radians(lens.fov_deg):
        return 0.0
    a, b, c = lens.poly
    t = a * incidence_rad * incidence_rad + b * incidence_rad + c
    return min(1.0, max(0.0, t))


@dataclass(frozen=True)
class ReceiverSpec:
    """A receiver assembly: J detector branches at one mount point."""

    kind: str                # "wfov" | "adr" | "imaging"
    mount: Vec3
    branches: tuple          # tuple of DetectorSpec
    lens: LensModel | None = None

    @property
    def branch_count(self) -> int:
        return len(self.branches)


def _detector(boresight, fov_deg: float, lens_attached: bool = False) -> DetectorSpec:
    return DetectorSpec(DETECTOR_AREA_M2, RESPONSIVITY_A_W,
                        np.asarray(boresight, dtype=float), fov_deg, lens_attached)


def make_wfov(mount) -> ReceiverSpec:
    """Single face-up element with a 70 deg field of view."""
    return ReceiverSpec(
        kind="wfov",
        mount=np.asarray(mount, dtype=float),
        branches=(_detector(vec3(0, 0, 1), WFOV_FOV_DEG),),
    )


def make_adr(mount) -> ReceiverSpec:
    """Three-branch angle-diversity receiver.

    One branch faces straight up; the other two tilt to 25 deg elevation at
    azimuths 90 and 270 so they look along the rack row, toward the two
    flanking light units.  Every branch has a 20 deg FOV.
    """
    orients = (
        Orientation(0.0, 90.0),
        Orientation(90.0, ADR_TILT_EL_DEG),
        Orientation(270.0, ADR_TILT_EL_DEG),
    )
    return ReceiverSpec(
        kind="adr",
        mount=np.asarray(mount, dtype=float),
        branches=tuple(_detector(o.to_direction(), ADR_FOV_DEG) for o in orients),
    )


# Default pixel layout: concentric rings about the lens axis.  Ring
# elevations step down in 17 deg increments so neighbouring rings overlap
# under the 17 deg pixel FOV; populations 1+7+14+28 = 50.
PIXEL_RINGS = ((90.0, 1), (73.0, 7), (56.0, 14), (39.0, 28))


def default_pixel_layout() -> tuple:
    """The 50 default pixel orientations, ring by ring, azimuth ascending."""
    orients = []
    for el, count in PIXEL_RINGS:
        for k in range(count):
            orients.append(Orientation(360.0 * k / count, el))
    return tuple(orients)


def make_imaging(mount, layout=None) -> ReceiverSpec:
    """Fifty narrow-FOV pixels under a shared 65 deg lens.

    `layout` is an optional sequence of 50 Orientations; every boresight
    must lie inside the lens acceptance cone.
    """
    lens = LensModel()
    orients = default_pixel_layout() if layout is None else tuple(layout)
    if len(orients) != PIXEL_COUNT:
        raise ValueError(
            f"imaging layout must have exactly {PIXEL_COUNT} pixels, "
            f"got {len(orients)}"
        )
    min_el = 90.0 - lens.fov_deg
    for i, o in enumerate(orients):
        if o.el_deg < min_el - 1e-9:
            raise ValueError(
                f"pixel {i} boresight at elevation {o.el_deg} deg lies outside "
                f"the {lens.fov_deg} deg lens cone"
            )
    return ReceiverSpec(
        kind="imaging",
        mount=np.asarray(mount, dtype=float),
        branches=tuple(_detector(o.to_direction(), PIXEL_FOV_DEG, True)
                       for o in orients),
        lens=lens,
    )


def load_pixel_layout(path) -> tuple:
    """Read a pixel layout override: CSV `pixel_index,az_deg,el_deg`, 50 rows."""
    rows = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["pixel_index", "az_deg", "el_deg"]:
            raise ValueError(f"{path}: expected header 'pixel_index,az_deg,el_deg'")
        for rec in reader:
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                idx = int(rec[0])
                az, el = float(rec[1]), float(rec[2])
            except (ValueError, IndexError):
                raise ValueError(f"{path}: malformed row {rec!r}") from None
            if idx in rows:
                raise ValueError(f"{path}: duplicate pixel index {idx}")
            rows[idx] = Orientation(az, el)
    if sorted(rows) != list(range(PIXEL_COUNT)):
        raise ValueError(
            f"{path}: layout must define pixel indices 0..{PIXEL_COUNT - 1} "
            f"exactly once ({len(rows)} rows found)"
        )
    return tuple(rows[i] for i in range(PIXEL_COUNT))


def detector_acceptance(detector: DetectorSpec, incoming,
                        lens: LensModel | None = None) -> float:
    """Directional gain factor for a ray hitting a detector element.

    `incoming` is the propagation direction (unit vector from the source
    toward the detector).  Returns cos(theta) inside the FOV and 0 outside,
    times the lens transmission when a lens is present; excludes the
    detector area.
    """
    d = np.asarray(incoming, dtype=float)
    cos_theta = float(np.dot(-d, detector.boresight))
    if cos_theta <= 0.0 or cos_theta < math.cos(math.radians(detector.fov_deg)) - 1e-15:
        return 0.0
    factor = cos_theta
    if lens is not None:
        cos_y = float(-d[2])
        y = math.acos(min(1.0, max(-1.0, cos_y)))
        factor *= lens_transmission(y, lens)
    return factor


def assign_pixel(receiver: ReceiverSpec, incoming) -> int | None:
    """Index of the pixel that captures a ray, or None if the lens rejects it.

    The ray goes to the pixel whose boresight is angularly closest to the
    arrival direction (ties to the lowest index); each ray feeds exactly
    one pixel.
    """
    if receiver.kind != "imaging":
        raise ValueError(f"assign_pixel needs an imaging receiver, got {receiver.kind!r}")
    d = np.asarray(incoming, dtype=float)
    toward = -d  # from the receiver toward the source
    cos_y = float(toward[2])
    if cos_y < math.cos(math.radians(receiver.lens.fov_deg)) - 1e-15:
        return None
    cosines = np.array([float(np.dot(toward, b.boresight)) for b in receiver.branches])
    return int(np.argmax(cosines))


def capture_matrix(receiver: ReceiverSpec, directions: np.ndarray) -> np.ndarray:
    """Effective capture area of every branch for many arrival directions.

    `directions` has shape (N, 3): unit propagation vectors from source to
    mount.  Returns (J, N) with entries area * cos(theta) * FOV gate * lens
    transmission, plus single-pixel assignment for imaging receivers.  This
    is the vectorized counterpart of detector_acceptance used by the tracer.
    """
    dirs = np.asarray(directions, dtype=float).reshape(-1, 3)
    toward = -dirs
    bores = np.stack([b.boresight for b in receiver.branches])   # (J, 3)
    cos_theta = bores @ toward.T                                 # (J, N)
    cos_fov = np.array([math.cos(math.radians(b.fov_deg))
                        for b in receiver.branches])[:, None]
    areas = np.array([b.area for b in receiver.branches])[:, None]
    gate = (cos_theta >= cos_fov - 1e-15) & (cos_theta > 0.0)
    acc = np.where(gate, cos_theta, 0.0) * areas
    if receiver.kind == "imaging":
        cos_y = np.clip(toward[:, 2], -1.0, 1.0)
        y = np.arccos(cos_y)
        a, b_, c = receiver.lens.poly
        trans = np.clip(a * y * y + b_ * y + c, 0.0, 1.0)
        trans[y > math.radians(receiver.lens.fov_deg)] = 0.0
        assigned = np.argmax(cos_theta, axis=0)                  # ties -> lowest index
        one_hot = assigned[None, :] == np.arange(len(receiver.branches))[:, None]
        acc = acc * one_hot * trans[None, :]
    return acc
