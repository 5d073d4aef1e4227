"""Link-level figures of merit derived from impulse responses.

Covers delay statistics, 3-dB channel bandwidth, the two-level OOK eye
decomposition, the receiver noise budget, per-branch SNR, selection and
maximum-ratio combining, BER and the delay-spread-limited data rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raytracer import ImpulseResponse, TraceConfig, trace_receiver
from .receivers import ReceiverSpec
from .scene import Scene

Q_ELECTRON = 1.602e-19        # C

UNBOUNDED = math.inf          # sentinel for flat spectra / zero delay spread


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0.0 else float("-inf")


@dataclass(frozen=True)
class DelayStats:
    mean_delay: float         # s
    rms_spread: float         # s


@dataclass(frozen=True)
class EyePowers:
    ps1: float                # W, power inside the bit slot (logic 1)
    ps0: float                # W, power spilling past the slot (worst-case 0)


@dataclass(frozen=True)
class NoiseBudget:
    """RMS noise currents at the receiver, combined in quadrature."""

    sigma_preamp: float       # A
    sigma_background: float   # A
    sigma_signal: float       # A
    sigma_total: float        # A
    bandwidth: float          # Hz
    background_current: float # A
    preamp_density: float     # A/sqrt(Hz)


@dataclass(frozen=True)
class NoiseParams:
    """Receiver noise configuration; bandwidth defaults to 0.7 x bit rate."""

    preamp_density: float = 4.5e-12      # A/sqrt(Hz)
    background_current: float = 100e-6   # A
    bandwidth_factor: float = 0.7
    bandwidth_hz: float | None = None    # explicit override

    def bandwidth(self, bitrate: float) -> float:
        if self.bandwidth_hz is not None:
            return self.bandwidth_hz
        return self.bandwidth_factor * bitrate


@dataclass(frozen=True)
class LinkReport:
    """Everything the evaluation prints for one receiver at one mount."""

    mount: tuple
    receiver_kind: str
    bitrate: float
    branch_power_w: tuple     # total received power per branch
    branch_snr: tuple         # linear, per branch
    branch_snr_db: tuple
    sc_branch: int            # index selected by SC
    snr_sc: float
    snr_sc_db: float
    snr_mrc: float
    snr_mrc_db: float
    ber: float                # at the MRC SNR
    delay: DelayStats         # of the SC-selected branch
    bandwidth_hz: float       # 3-dB bandwidth of the SC-selected branch
    max_rate_bps: float


def delay_stats(ir: ImpulseResponse, weighting: str = "power-squared") -> DelayStats:
    """Mean delay and RMS delay spread of a power delay profile.

    Default weighting squares the bin powers before averaging; `weighting`
    may be set to "linear" for sensitivity studies.
    """
    p = ir.bins
    if p.size == 0 or float(p.sum()) <= 0.0:
        raise ValueError("delay statistics undefined for a zero-power impulse response")
    if weighting == "power-squared":
        w = p * p
    elif weighting == "linear":
        w = p
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    t = ir.times()
    wsum = float(w.sum())
    mu = float((t * w).sum()) / wsum
    var = float(((t - mu) ** 2 * w).sum()) / wsum
    return DelayStats(mean_delay=mu, rms_spread=math.sqrt(max(0.0, var)))


def bandwidth_3db(ir: ImpulseResponse, resolution: float = 1e6) -> float:
    """Lowest frequency where |H(f)| falls to 1/sqrt(2) of |H(0)|.

    H is the discrete-time Fourier transform of the binned impulse
    response, scanned up to the bin Nyquist frequency at the given
    resolution and refined by bisection.  Returns the UNBOUNDED sentinel
    when the spectrum never crosses the 3-dB line (e.g. a single-bin IR).
    """
    p = ir.bins
    nz = np.nonzero(p)[0]
    if nz.size == 0:
        raise ValueError("bandwidth undefined for a zero-power impulse response")
    if nz.size == 1:
        return UNBOUNDED
    t = ir.times()[nz]
    p = p[nz]
    h0 = float(p.sum())
    target = 1.0 / math.sqrt(2.0)

    def ratio(freqs):
        ph = np.exp(-2j * math.pi * np.multiply.outer(freqs, t))
        return np.abs(ph @ p) / h0

    f_nyq = 0.5 / ir.bin_width
    lo = 0.0
    hi = None
    chunk = 4096
    f = resolution
    while f <= f_nyq:
        freqs = f + resolution * np.arange(chunk)
        freqs = freqs[freqs <= f_nyq]
        if freqs.size == 0:
            break
        r = ratio(freqs)
        below = np.nonzero(r < target)[0]
        if below.size:
            k = int(below[0])
            hi = float(freqs[k])
            lo = float(freqs[k - 1]) if k > 0 else lo
            break
        lo = float(freqs[-1])
        f = float(freqs[-1]) + resolution
    if hi is None:
        return UNBOUNDED
    # bisect the exact DTFT inside the bracketing interval
    for _ in range(60):
        if hi - lo <= 1e3:
            break
        mid = 0.5 * (lo + hi)
        if float(ratio(np.array([mid]))[0]) < target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def eye_powers(ir: ImpulseResponse, bitrate: float,
               launch_power_scale: float = 1.0) -> EyePowers:
    """Worst-case OOK eye decomposition at the given bit rate.

    Power arriving within one bit period of the first arrival counts toward
    logic 1; everything later is intersymbol spill-over that raises the
    logic-0 level.  ps1 + ps0 equals the total power exactly.
    """
    if bitrate <= 0.0:
        raise ValueError("bit rate must be positive")
    p = ir.bins * launch_power_scale
    nz = np.nonzero(p)[0]
    if nz.size == 0:
        return EyePowers(0.0, 0.0)
    t = ir.times()
    rel = t - t[nz[0]]
    slot = rel < 1.0 / bitrate
    return EyePowers(ps1=float(p[slot].sum()), ps0=float(p[~slot].sum()))


def noise_budget(avg_power_w: float, responsivity: float, bandwidth: float,
                 background_current: float, preamp_density: float) -> NoiseBudget:
    """Shot, background and preamplifier noise currents for one branch.

    sigma_signal = sqrt(2 q R P B), sigma_background = sqrt(2 q I_b B),
    sigma_preamp = eta sqrt(B); the total is their quadrature sum.
    """
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    if min(avg_power_w, responsivity, background_current, preamp_density) < 0.0:
        raise ValueError("noise inputs must be non-negative")
    s_sig = math.sqrt(2.0 * Q_ELECTRON * responsivity * avg_power_w * bandwidth)
    s_bn = math.sqrt(2.0 * Q_ELECTRON * background_current * bandwidth)
    s_pr = preamp_density * math.sqrt(bandwidth)
    s_t = math.sqrt(s_pr * s_pr + s_bn * s_bn + s_sig * s_sig)
    return NoiseBudget(s_pr, s_bn, s_sig, s_t, bandwidth,
                       background_current, preamp_density)


def snr_ook(responsivity: float, eye: EyePowers, sigma_total: float) -> float:
    """Linear electrical SNR of the two-level eye: (R (ps1 - ps0) / sigma)^2."""
    if sigma_total <= 0.0:
        raise ValueError("total noise must be positive")
    x = responsivity * (eye.ps1 - eye.ps0) / sigma_total
    return x * x


def combine_sc(branch_snrs) -> float:
    """Selection combining: the best single branch."""
    snrs = list(branch_snrs)
    if not snrs:
        raise ValueError("selection combining needs at least one branch")
    return max(snrs)


def combine_mrc(branch_snrs) -> float:
    """Maximum-ratio combining: branch SNRs add."""
    snrs = list(branch_snrs)
    if not snrs:
        raise ValueError("maximum-ratio combining needs at least one branch")
    return float(sum(snrs))


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = erfc(x / sqrt(2)) / 2."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ber_from_snr(snr_linear: float) -> float:
    """OOK bit error rate Q(sqrt(SNR))."""
    if snr_linear < 0.0:
        raise ValueError("SNR must be non-negative")
    return q_function(math.sqrt(snr_linear))


def max_data_rate(stats: DelayStats) -> float:
    """Delay-spread-limited bit rate: 1 / (10 D), unbounded when D = 0."""
    if stats.rms_spread < 0.0:
        raise ValueError("delay spread must be non-negative")
    if stats.rms_spread == 0.0:
        return UNBOUNDED
    return 1.0 / (10.0 * stats.rms_spread)


def link_report(scene: Scene, receiver: ReceiverSpec, cfg: TraceConfig,
                bitrate: float, noise: NoiseParams = NoiseParams(),
                threads: int = 1, weighting: str = "power-squared",
                field=None) -> LinkReport:
    """Trace every branch of a receiver and evaluate the full OOK link.

    The receiver is served by the luminaires assigned to its mount's row.
    Per-branch eyes feed the noise budget (average received power at 50 %
    duty), SC picks the best branch, MRC sums all branches, and the BER is
    reported at the MRC SNR.  Delay statistics, bandwidth and the maximum
    data rate describe the SC-selected branch.
    """
    lum_ids = scene.assigned_luminaires(receiver.mount)
    irs = trace_receiver(scene, lum_ids, receiver, cfg, threads=threads,
                         field=field)
    bw = noise.bandwidth(bitrate)
    snrs, powers = [], []
    for det, ir in zip(receiver.branches, irs):
        eye = eye_powers(ir, bitrate)
        avg_power = 0.5 * (eye.ps1 + eye.ps0)    # equiprobable OOK symbols
        budget = noise_budget(avg_power, det.responsivity, bw,
                              noise.background_current, noise.preamp_density)
        snrs.append(snr_ook(det.responsivity, eye, budget.sigma_total))
        powers.append(ir.total_power())
    sc_idx = int(np.argmax(snrs))
    snr_sc = combine_sc(snrs)
    snr_mrc = combine_mrc(snrs)
    if powers[sc_idx] <= 0.0:
        raise ValueError("no branch received any power; link is dark")
    stats = delay_stats(irs[sc_idx], weighting)
    return LinkReport(
        mount=tuple(float(c) for c in receiver.mount),
        receiver_kind=receiver.kind,
        bitrate=bitrate,
        branch_power_w=tuple(powers),
        branch_snr=tuple(snrs),
        branch_snr_db=tuple(to_db(s) for s in snrs),
        sc_branch=sc_idx,
        snr_sc=snr_sc,
        snr_sc_db=to_db(snr_sc),
        snr_mrc=snr_mrc,
        snr_mrc_db=to_db(snr_mrc),
        ber=ber_from_snr(snr_mrc),
        delay=stats,
        bandwidth_hz=bandwidth_3db(irs[sc_idx]),
        max_rate_bps=max_data_rate(stats),
    )
