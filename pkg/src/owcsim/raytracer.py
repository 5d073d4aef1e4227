"""Impulse-response tracer for the pod's diffuse optical channel.

Propagation model: each luminaire is a point Lambertian emitter of order m;
every surface element re-emits what it receives as an ideal Lambertian
(order 1) source scaled by its reflectance.  Line of sight plus first- and
second-order reflections are accumulated into a fixed-width delay histogram.
First-order paths run over a fine surface grid, second-order paths use a
coarser grid for both bounces to keep the pair count tractable.

The tracer is a pure function of (scene, config): work is split into
fixed-size element chunks and reduced in chunk order, so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .scene import COMM_FLOOR_M, Scene, validate_scene
from .receivers import (
    DetectorSpec,
    LensModel,
    ReceiverSpec,
    capture_matrix,
    detector_acceptance,
)

C_LIGHT = 2.9979e8            # m/s, air
_CHUNK = 256                  # second-order e1 rows per work unit (fixed: determinism)
_EPS = 1e-12


@dataclass(frozen=True)
class TraceConfig:
    """Knobs of the tracer; defaults reproduce the reference setup."""

    max_order: int = 2        # 0 = LOS only, 1, or 2
    first_edge: float = 0.05  # m, first-order element edge
    second_edge: float = 0.20 # m, second-order element edge (both bounces)
    bin_width: float = 50e-12 # s
    occlusion: bool = False   # shadow rays against occluding rack boxes

    def __post_init__(self):
        if self.max_order not in (0, 1, 2):
            raise ValueError(f"max reflection order must be 0, 1 or 2, got {self.max_order}")
        if self.bin_width <= 0.0:
            raise ValueError("bin width must be positive")
        if self.first_edge <= 0.0 or self.second_edge <= 0.0:
            raise ValueError("element edges must be positive")


@dataclass(frozen=True)
class ImpulseResponse:
    """Received power per delay bin; bin k covers [k, k+1) * bin_width + origin."""

    bin_width: float
    origin: float
    bins: np.ndarray          # watts per bin

    def times(self) -> np.ndarray:
        """Bin centre times."""
        return self.origin + (np.arange(self.bins.size) + 0.5) * self.bin_width

    def total_power(self) -> float:
        return float(self.bins.sum())

    def rebin(self, new_width: float) -> "ImpulseResponse":
        """Merge bins into a coarser histogram; total power is conserved."""
        ratio = new_width / self.bin_width
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-9:
            raise ValueError(
                f"new width {new_width} is not an integer multiple of {self.bin_width}"
            )
        if k == 1:
            return self
        pad = (-self.bins.size) % k
        padded = np.concatenate([self.bins, np.zeros(pad)])
        return ImpulseResponse(new_width, self.origin,
                               padded.reshape(-1, k).sum(axis=1))


def total_received_power(ir: ImpulseResponse) -> float:
    """Sum of all bins, watts."""
    return ir.total_power()


# ---------------------------------------------------------------------------
# closed-form single-path gains (also the reference semantics for the tracer)

def los_gain(luminaire, detector: DetectorSpec, det_position,
             lens: LensModel | None = None) -> float:
    """Line-of-sight channel gain between one luminaire and one detector.

    gain = (m+1)/(2 pi d^2) * cos^m(phi) * cos(theta) * A, gated to zero
    outside the detector FOV or when either cosine is negative; the lens
    transmission multiplies the gain when a lens is present.
    """
    pos = np.asarray(det_position, dtype=float)
    v = pos - luminaire.position
    d = float(np.linalg.norm(v))
    if d < _EPS:
        raise ValueError("degenerate geometry: luminaire and detector coincide")
    u = v / d
    cos_phi = float(np.dot(u, luminaire.boresight))
    if cos_phi <= 0.0:
        return 0.0
    acc = detector_acceptance(detector, u, lens)
    if acc == 0.0:
        return 0.0
    m = luminaire.order
    return (m + 1.0) / (2.0 * math.pi * d * d) * cos_phi ** m * acc * detector.area


def reflected_path_gain(luminaire, elements, detector: DetectorSpec, det_position,
                        lens: LensModel | None = None) -> tuple[float, float]:
    """Gain and delay of one reflected path (one or two bounces).

    Each hop applies the upstream emitter's Lambertian transfer (order m for
    the luminaire, order 1 for elements) and the element reflectance is
    applied where the ray bounces.  Returns (gain, delay_s); the gain is zero
    for rays outside any cosine or FOV gate, but the geometric delay is
    always reported.
    """
    if not 1 <= len(elements) <= 2:
        raise ValueError("reflected path must have one or two bounces")
    pos = np.asarray(det_position, dtype=float)
    gain = 1.0
    total_len = 0.0

    def hop(src, dst, order, src_boresight, dst_normal, dst_area):
        nonlocal gain, total_len
        v = dst - src
        d = float(np.linalg.norm(v))
        if d < _EPS:
            raise ValueError("degenerate geometry: zero-length hop")
        total_len += d
        u = v / d
        cos_out = float(np.dot(u, src_boresight))
        cos_in = float(np.dot(-u, dst_normal))
        if cos_out <= 0.0 or cos_in <= 0.0:
            gain = 0.0
            return
        gain *= (order + 1.0) / (2.0 * math.pi * d * d) * cos_out ** order * cos_in * dst_area

    e1 = elements[0]
    hop(luminaire.position, e1.centre, luminaire.order,
        luminaire.boresight, e1.normal, e1.area)
    prev = e1
    if len(elements) == 2:
        e2 = elements[1]
        if gain != 0.0:
            gain *= prev.reflectance
        hop(prev.centre, e2.centre, prev.emission_order, prev.normal,
            e2.normal, e2.area)
        prev = e2

    # final hop to the detector
    v = pos - prev.centre
    d = float(np.linalg.norm(v))
    if d < _EPS:
        raise ValueError("degenerate geometry: element and detector coincide")
    total_len += d
    delay = total_len / C_LIGHT
    if gain == 0.0:
        return 0.0, delay
    u = v / d
    cos_out = float(np.dot(u, prev.normal))
    if cos_out <= 0.0:
        return 0.0, delay
    acc = detector_acceptance(detector, u, lens)
    if acc == 0.0:
        return 0.0, delay
    n = prev.emission_order
    gain *= prev.reflectance
    gain *= (n + 1.0) / (2.0 * math.pi * d * d) * cos_out ** n * acc * detector.area
    return gain, delay


# ---------------------------------------------------------------------------
# occlusion

def _occluder_boxes(scene: Scene):
    boxes = []
    for row in scene.rows:
        if row.occluding:
            lo = np.array([row.centre_x - 0.5 * row.depth, row.y_span[0], 0.0])
            hi = np.array([row.centre_x + 0.5 * row.depth, row.y_span[1], row.top_height])
            boxes.append((lo, hi))
    return boxes


def _segments_blocked(boxes, p0, p1) -> np.ndarray:
    """True where the open segment p0->p1 passes through any occluder box."""
    p0, p1 = np.broadcast_arrays(np.asarray(p0, dtype=float),
                                 np.asarray(p1, dtype=float))
    d = p1 - p0
    blocked = np.zeros(p0.shape[:-1], dtype=bool)
    margin = 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        for lo, hi in boxes:
            ta = (lo - p0) * inv
            tb = (hi - p0) * inv
            near = np.fmin(ta, tb)
            far = np.fmax(ta, tb)
            par = d == 0.0
            inside = (p0 >= lo) & (p0 <= hi)
            near = np.where(par, np.where(inside, -np.inf, np.inf), near)
            far = np.where(par, np.where(inside, np.inf, -np.inf), far)
            tmin = np.maximum(near.max(axis=-1), margin)
            tmax = np.minimum(far.min(axis=-1), 1.0 - margin)
            blocked |= (tmax - tmin) > margin
    return blocked


# ---------------------------------------------------------------------------
# vectorized field computation

def _incident_power(luminaires, grid, boxes):
    """First-bounce power and path length from each luminaire onto a grid.

    Returns (power (L, N) watts, length (L, N) metres).
    """
    n = len(grid)
    nl = len(luminaires)
    power = np.zeros((nl, n))
    length = np.zeros((nl, n))
    for li, lum in enumerate(luminaires):
        v = grid.centres - lum.position[None, :]
        d = np.linalg.norm(v, axis=1)
        safe = d > _EPS
        dd = np.where(safe, d, 1.0)
        u = v / dd[:, None]
        cos_phi = u @ lum.boresight
        cos_in = -(u * grid.normals).sum(axis=1)
        sel = safe & (cos_phi > 0.0) & (cos_in > 0.0)
        p = np.zeros(n)
        p[sel] = (lum.power_w * (lum.order + 1.0) / (2.0 * math.pi * d[sel] ** 2)
                  * cos_phi[sel] ** lum.order * cos_in[sel] * grid.areas[sel])
        if boxes:
            hit = _segments_blocked(boxes, lum.position, grid.centres)
            p[hit] = 0.0
        power[li] = p
        length[li] = d
    return power, length


class ArrivalField:
    """All traced arrivals at one point, before any detector directivity.

    Point arrivals (LOS and first-order) are kept as flat arrays of
    (irradiance flux, bin index, direction); second-order power is
    pre-binned per final element, since its arrival direction only depends
    on that element.  Applying a receiver is then just a directional
    weighting, so all branches of all receiver kinds share one trace.
    """

    def __init__(self, scene: Scene, luminaire_ids, mount, cfg: TraceConfig,
                 threads: int = 1):
        self.scene = scene
        self.mount = np.asarray(mount, dtype=float)
        self.luminaire_ids = tuple(luminaire_ids)
        self.cfg = cfg
        self.totals = {}

        lums = [scene.luminaires[i] for i in self.luminaire_ids]
        boxes = _occluder_boxes(scene) if cfg.occlusion else []
        diag = math.sqrt(sum(s * s for s in scene.room))
        reach = (cfg.max_order + 1) * diag
        self.nbins = int(reach / C_LIGHT / cfg.bin_width) + 2

        flux_parts, len_parts, dir_parts = [], [], []

        # line of sight
        for lum in lums:
            v = self.mount - lum.position
            d = float(np.linalg.norm(v))
            if d < _EPS:
                raise ValueError("degenerate geometry: luminaire coincides with mount")
            u = v / d
            cos_phi = float(np.dot(u, lum.boresight))
            visible = cos_phi > 0.0 and not (
                boxes and bool(_segments_blocked(boxes, lum.position,
                                                 self.mount[None, :])[0]))
            f = (lum.power_w * (lum.order + 1.0) / (2.0 * math.pi * d * d)
                 * cos_phi ** lum.order) if visible else 0.0
            flux_parts.append(np.array([f]))
            len_parts.append(np.array([d]))
            dir_parts.append(u[None, :])

        # first order, fine grid
        if cfg.max_order >= 1 and lums:
            grid = scene.surface_elements(cfg.first_edge)
            p1, l1 = _incident_power(lums, grid, boxes)
            self.totals["first_bounce_fine_w"] = float(p1.sum())
            v = self.mount[None, :] - grid.centres
            dm = np.linalg.norm(v, axis=1)
            safe = dm > _EPS
            dd = np.where(safe, dm, 1.0)
            u = v / dd[:, None]
            cos_emit = (u * grid.normals).sum(axis=1)
            f_out = np.zeros(len(grid))
            sel = safe & (cos_emit > 0.0)
            f_out[sel] = (grid.reflectances[sel] * cos_emit[sel]
                          / (math.pi * dm[sel] ** 2))
            if boxes:
                hit = _segments_blocked(boxes, grid.centres, self.mount[None, :])
                f_out[hit] = 0.0
            flux = p1 * f_out[None, :]
            lengths = l1 + dm[None, :]
            li, ei = np.nonzero(flux > 0.0)
            flux_parts.append(flux[li, ei])
            len_parts.append(lengths[li, ei])
            dir_parts.append(u[ei])

        self.point_flux = np.concatenate(flux_parts) if flux_parts else np.zeros(0)
        lengths_all = np.concatenate(len_parts) if len_parts else np.zeros(0)
        self.point_dirs = (np.concatenate(dir_parts) if dir_parts
                           else np.zeros((0, 3)))
        self.point_idx = np.floor(
            lengths_all / C_LIGHT / cfg.bin_width).astype(np.int64)

        # second order, coarse grid for both bounces
        self.b2_dirs = None
        self.b2_hist = None
        if cfg.max_order >= 2 and lums:
            self._trace_second_order(lums, boxes, max(1, int(threads)))

    def _trace_second_order(self, lums, boxes, threads):
        scene, cfg, mount = self.scene, self.cfg, self.mount
        grid = scene.surface_elements(cfg.second_edge)
        ne = len(grid)
        centres, normals = grid.centres, grid.normals
        areas, rho = grid.areas, grid.reflectances

        p1, l1 = _incident_power(lums, grid, boxes)
        self.totals["first_bounce_coarse_w"] = float(p1.sum())

        # final hop: element -> mount (branch-independent part)
        v3 = mount[None, :] - centres
        d3 = np.linalg.norm(v3, axis=1)
        safe = d3 > _EPS
        dd3 = np.where(safe, d3, 1.0)
        u3 = v3 / dd3[:, None]
        cos3 = (u3 * normals).sum(axis=1)
        f3 = np.zeros(ne)
        sel = safe & (cos3 > 0.0)
        f3[sel] = rho[sel] * cos3[sel] / (math.pi * d3[sel] ** 2)
        if boxes:
            f3[_segments_blocked(boxes, centres, mount[None, :])] = 0.0

        nbins = self.nbins
        bin_width = cfg.bin_width
        e2_base = np.arange(ne, dtype=np.int64) * nbins

        def work(start):
            stop = min(start + _CHUNK, ne)
            dvec = centres[None, :, :] - centres[start:stop, None, :]
            d2 = np.einsum("cek,cek->ce", dvec, dvec)
            ok = d2 > _EPS
            d2s = np.where(ok, d2, 1.0)
            d = np.sqrt(d2s)
            cos_out = np.einsum("cek,ck->ce", dvec, normals[start:stop]) / d
            cos_in = -np.einsum("cek,ek->ce", dvec, normals) / d
            ok &= (cos_out > 0.0) & (cos_in > 0.0)
            t12 = np.where(ok, cos_out * cos_in, 0.0) * areas[None, :] / (math.pi * d2s)
            if boxes:
                src = np.broadcast_to(centres[start:stop, None, :], dvec.shape)
                t12 = np.where(
                    _segments_blocked(boxes, src.reshape(-1, 3),
                                      np.broadcast_to(centres[None, :, :],
                                                      dvec.shape).reshape(-1, 3)
                                      ).reshape(t12.shape),
                    0.0, t12)
            geom = rho[start:stop, None] * t12
            row_reflected = geom.sum(axis=1)           # for bounce accounting
            flat_parts, w_parts = [], []
            second_total = 0.0
            for li in range(len(lums)):
                second_total += float(p1[li, start:stop] @ row_reflected)
                w = p1[li, start:stop, None] * geom * f3[None, :]
                length = l1[li, start:stop, None] + d + d3[None, :]
                # same expression as the point-arrival path: floor(len/c/dt)
                idx = np.floor(length / C_LIGHT / bin_width).astype(np.int64)
                flat = e2_base[None, :] + idx
                keep = w > 0.0
                flat_parts.append(flat[keep])
                w_parts.append(w[keep])
            return (np.concatenate(flat_parts), np.concatenate(w_parts),
                    second_total)

        starts = list(range(0, ne, _CHUNK))
        hist_flat = np.zeros(ne * nbins)
        second_total = 0.0
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = ex.map(work, starts)
                for flat, w, tot in results:       # input order: deterministic
                    hist_flat += np.bincount(flat, weights=w,
                                             minlength=hist_flat.size)
                    second_total += tot
        else:
            for start in starts:
                flat, w, tot = work(start)
                hist_flat += np.bincount(flat, weights=w,
                                         minlength=hist_flat.size)
                second_total += tot
        self.totals["second_bounce_coarse_w"] = second_total
        self.b2_dirs = u3
        self.b2_hist = hist_flat.reshape(ne, nbins)

    # -- applying detectors ------------------------------------------------

    def _assemble(self, acc_point: np.ndarray, acc_b2) -> ImpulseResponse:
        bins = np.bincount(self.point_idx, weights=acc_point * self.point_flux,
                           minlength=self.nbins)
        if self.b2_hist is not None:
            bins = bins + acc_b2 @ self.b2_hist
        nz = np.nonzero(bins)[0]
        bins = bins[: nz[-1] + 1] if nz.size else bins[:0]
        return ImpulseResponse(self.cfg.bin_width, 0.0, bins)

    def receiver_irs(self, receiver: ReceiverSpec) -> list[ImpulseResponse]:
        """One impulse response per receiver branch."""
        acc_point = capture_matrix(receiver, self.point_dirs)
        acc_b2 = (capture_matrix(receiver, self.b2_dirs)
                  if self.b2_hist is not None else None)
        return [
            self._assemble(acc_point[j], acc_b2[j] if acc_b2 is not None else None)
            for j in range(receiver.branch_count)
        ]

    def detector_ir(self, detector: DetectorSpec,
                    lens: LensModel | None = None) -> ImpulseResponse:
        """Impulse response of a bare detector element (no pixel assignment)."""
        acc_point = _single_acceptance(detector, lens, self.point_dirs)
        acc_b2 = (_single_acceptance(detector, lens, self.b2_dirs)
                  if self.b2_hist is not None else None)
        return self._assemble(acc_point, acc_b2)


def _single_acceptance(detector: DetectorSpec, lens, dirs) -> np.ndarray:
    """Vectorized detector_acceptance * area for one element."""
    toward = -np.asarray(dirs, dtype=float).reshape(-1, 3)
    cos_theta = toward @ detector.boresight
    gate = (cos_theta > 0.0) & (
        cos_theta >= math.cos(math.radians(detector.fov_deg)) - 1e-15)
    acc = np.where(gate, cos_theta, 0.0) * detector.area
    if lens is not None:
        y = np.arccos(np.clip(toward[:, 2], -1.0, 1.0))
        a, b, c = lens.poly
        trans = np.clip(a * y * y + b * y + c, 0.0, 1.0)
        trans[y > math.radians(lens.fov_deg)] = 0.0
        acc = acc * trans
    return acc


def _check_pose(scene: Scene, position):
    p = np.asarray(position, dtype=float)
    lx, ly, h = scene.room
    if not (0.0 <= p[0] <= lx and 0.0 <= p[1] <= ly and COMM_FLOOR_M <= p[2] <= h):
        raise ValueError(
            f"detector pose {tuple(p)} must be inside the room and above the "
            f"communication floor ({COMM_FLOOR_M} m)"
        )


def _check_scene(scene: Scene):
    diags = validate_scene(scene)
    if diags:
        raise ValueError("invalid scene: " + "; ".join(diags))


def compute_field(scene: Scene, luminaire_ids, mount, cfg: TraceConfig,
                  threads: int = 1) -> ArrivalField:
    """Trace LOS + reflections from a luminaire set to one mount point."""
    _check_scene(scene)
    _check_pose(scene, mount)
    return ArrivalField(scene, luminaire_ids, mount, cfg, threads)


def trace_impulse_response(scene: Scene, luminaire_ids, detector: DetectorSpec,
                           position, cfg: TraceConfig,
                           lens: LensModel | None = None,
                           threads: int = 1) -> ImpulseResponse:
    """Binned impulse response between a luminaire set and one detector element."""
    if not luminaire_ids:
        _check_scene(scene)
        return ImpulseResponse(cfg.bin_width, 0.0, np.zeros(0))
    field = compute_field(scene, luminaire_ids, position, cfg, threads)
    return field.detector_ir(detector, lens)


def trace_receiver(scene: Scene, luminaire_ids, receiver: ReceiverSpec,
                   cfg: TraceConfig, threads: int = 1,
                   field: ArrivalField | None = None) -> list[ImpulseResponse]:
    """Per-branch impulse responses for a multi-branch receiver."""
    if not luminaire_ids:
        _check_scene(scene)
        return [ImpulseResponse(cfg.bin_width, 0.0, np.zeros(0))
                for _ in receiver.branches]
    if field is None:
        field = compute_field(scene, luminaire_ids, receiver.mount, cfg, threads)
    return field.receiver_irs(receiver)
