"""OOK/Manchester beacon PHY: frame construction, waveform synthesis and decoding.

On-air frame layout (one level per modulation-clock period)::

    SFD (4 high) | Sync (8, alternating, high first) | payload (32) | checksum (8) | EOF (4 low)

Payload and checksum are Manchester coded MSB-first, ``1 -> (high, low)`` and
``0 -> (low, high)``.

Synthesis happens at an *analog* rate (``PhyConfig.analog_rate``) that is an
integer multiple of the dummy-carrier frequency, so the out-of-band carrier is
representable. :func:`receiver_chain` removes DC, low-pass filters, and samples
the result at the ADC rate (``PhyConfig.sample_rate``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage, signal

from lumicell import kernels

SFD_LEN = 4
SYNC_LEN = 8
PAYLOAD_BITS = 16
CHECKSUM_BITS = 4
EOF_LEN = 4
DATA_LEN = 2 * (PAYLOAD_BITS + CHECKSUM_BITS)
FRAME_LEN = SFD_LEN + SYNC_LEN + DATA_LEN + EOF_LEN  # 56

SFD = slice(0, SFD_LEN)
SYNC = slice(SFD_LEN, SFD_LEN + SYNC_LEN)
DATA = slice(SFD_LEN + SYNC_LEN, SFD_LEN + SYNC_LEN + DATA_LEN)
EOF = slice(FRAME_LEN - EOF_LEN, FRAME_LEN)

# bit -> (first half, second half); shared by encoder and decoder
MANCHESTER = {1: (1, 0), 0: (0, 1)}


class PhyError(ValueError):
    pass


def checksum(payload: int) -> int:
    """XOR of the four nibbles of a 16-bit payload."""
    if not 0 <= payload <= 0xFFFF:
        raise PhyError(f"payload {payload!r} is not a 16-bit value")
    return (payload ^ (payload >> 4) ^ (payload >> 8) ^ (payload >> 12)) & 0xF


@dataclass(frozen=True)
class BeaconFrame:
    payload: int
    checksum: int = -1

    def __post_init__(self):
        if not 0 <= self.payload <= 0xFFFF:
            raise PhyError(f"payload {self.payload!r} is not a 16-bit value")
        if self.checksum == -1:
            object.__setattr__(self, "checksum", checksum(self.payload))
        elif not 0 <= self.checksum <= 0xF:
            raise PhyError(f"checksum {self.checksum!r} is not a 4-bit value")

    @property
    def valid(self) -> bool:
        return self.checksum == checksum(self.payload)


@dataclass(frozen=True)
class SymbolFrame:
    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.uint8)
        if s.shape != (FRAME_LEN,):
            raise PhyError(f"symbol frame must have {FRAME_LEN} symbols, got {s.shape}")
        object.__setattr__(self, "symbols", s)

    @property
    def sfd(self):
        return self.symbols[SFD]

    @property
    def sync(self):
        return self.symbols[SYNC]

    @property
    def data(self):
        return self.symbols[DATA]

    @property
    def eof(self):
        return self.symbols[EOF]

    def __len__(self):
        return FRAME_LEN


@dataclass
class Waveform:
    """Sampled signal.

    ``gain`` maps samples back to input (optical) units; the receiver chain
    peak-normalizes its output and records the scale here.
    """

    samples: np.ndarray
    sample_rate: float
    coupling: str = "unipolar"
    gain: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.coupling not in ("unipolar", "bipolar"):
            raise PhyError(f"unknown coupling {self.coupling!r}")
        if self.sample_rate <= 0:
            raise PhyError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class PhyConfig:
    f_mod: float = 10_000.0
    sample_rate: float = 48_000.0
    dummy_carrier_freq: float = 100_000.0
    lpf_order: int = 4
    lpf_cutoff: float = 20_000.0
    # integer multiple of dummy_carrier_freq, sample_rate and f_mod
    analog_rate: float = 400_000.0
    dc_window_frames: float = 10.0
    # demodulator knobs
    decision_margin: float = 0.5
    fluctuation_ratio: float = 1.5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.f_mod <= 0:
            raise PhyError("f_mod must be positive")
        if self.sample_rate <= 2 * self.f_mod:
            raise PhyError("sample_rate must exceed twice f_mod")
        if not self.dummy_carrier_freq > self.lpf_cutoff > self.f_mod:
            raise PhyError("need dummy_carrier_freq > lpf_cutoff > f_mod")
        if self.lpf_order < 1:
            raise PhyError("lpf_order must be >= 1")
        if self.lpf_cutoff >= self.sample_rate / 2:
            raise PhyError("lpf_cutoff must be below the ADC Nyquist frequency")
        if self.analog_rate < self.sample_rate or self.analog_rate <= 2 * self.dummy_carrier_freq:
            raise PhyError("analog_rate must cover sample_rate and the dummy carrier")
        if not 0 < self.decision_margin < 1:
            raise PhyError("decision_margin must lie in (0, 1)")
        if self.fluctuation_ratio < 1:
            raise PhyError("fluctuation_ratio must be >= 1")

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.f_mod

    @property
    def packet_duration(self) -> float:
        """On-air time of one frame, seconds."""
        return FRAME_LEN / self.f_mod

    def samples_per_symbol(self, rate: float | None = None) -> float:
        return (self.sample_rate if rate is None else rate) / self.f_mod


def _bits(value: int, width: int):
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def encode_frame(frame: BeaconFrame) -> SymbolFrame:
    cs = checksum(frame.payload)
    sym = [1] * SFD_LEN + [1, 0] * (SYNC_LEN // 2)
    for bit in _bits(frame.payload, PAYLOAD_BITS) + _bits(cs, CHECKSUM_BITS):
        sym.extend(MANCHESTER[bit])
    sym += [0] * EOF_LEN
    return SymbolFrame(np.array(sym, dtype=np.uint8))


def symbol_boundaries(n_symbols: int, rate: float, f_mod: float) -> np.ndarray:
    """Sample index where each symbol starts, plus the end index (nearest-sample rounding)."""
    k = np.arange(n_symbols + 1, dtype=float)
    return np.floor(k * rate / f_mod + 0.5).astype(np.int64)


def modulate(sf: SymbolFrame, cfg: PhyConfig, amplitude: float = 1.0,
             rate: float | None = None) -> Waveform:
    """Hold each symbol for ``rate / f_mod`` samples; high = ``amplitude``, low = 0.

    ``rate`` defaults to the ADC rate; the simulator passes ``cfg.analog_rate``.
    """
    cfg.validate()
    if amplitude <= 0:
        raise PhyError("amplitude must be positive")
    rate = cfg.sample_rate if rate is None else rate
    symbols = np.asarray(sf.symbols if isinstance(sf, SymbolFrame) else sf, dtype=float)
    edges = symbol_boundaries(len(symbols), rate, cfg.f_mod)
    samples = np.repeat(symbols * amplitude, np.diff(edges))
    return Waveform(samples, rate, "unipolar")


def dummy_carrier(duration_samples: int, cfg: PhyConfig, amplitude: float = 1.0,
                  rate: float | None = None, phase: int = 0) -> Waveform:
    """Repeated "01" square wave at the dummy-carrier frequency, 50% duty.

    ``phase`` is the absolute sample index of the first sample, so carriers cut
    from one long timeline stay continuous.
    """
    if duration_samples < 0:
        raise PhyError("duration_samples must be >= 0")
    rate = cfg.analog_rate if rate is None else rate
    period = rate / cfg.dummy_carrier_freq
    if period == int(period) and duration_samples > 0:
        period = int(period)
        pattern = np.floor(np.arange(period) * 2.0 * cfg.dummy_carrier_freq / rate) % 2 * amplitude
        off = phase % period
        reps = (off + duration_samples) // period + 1
        return Waveform(np.tile(pattern, reps)[off:off + duration_samples], rate, "unipolar")
    i = np.arange(phase, phase + duration_samples, dtype=float)
    level = np.floor(i * 2.0 * cfg.dummy_carrier_freq / rate) % 2
    return Waveform(level * amplitude, rate, "unipolar")


def remove_dc(x: np.ndarray, window: int) -> np.ndarray:
    if len(x) == 0:
        return x.copy()
    if window >= len(x):
        return x - x.mean()
    return x - ndimage.uniform_filter1d(x, size=window, mode="reflect")


def _lpf_sos(cfg: PhyConfig, rate: float):
    return signal.butter(cfg.lpf_order, cfg.lpf_cutoff, btype="low", fs=rate, output="sos")


def receiver_chain(w: Waveform, cfg: PhyConfig) -> Waveform:
    """DC removal, Butterworth LPF, ADC sampling and peak normalization.

    Input at any rate >= ``cfg.sample_rate``; output is bipolar at the ADC rate,
    within [-1, 1], with ``gain`` holding the normalization scale.
    """
    cfg.validate()
    x = np.asarray(w.samples, dtype=float)
    if len(x) == 0:
        return Waveform(np.zeros(0), cfg.sample_rate, "bipolar", 1.0)
    rate = w.sample_rate
    if rate < cfg.sample_rate:
        raise PhyError("input rate below the ADC rate")
    window = int(round(cfg.dc_window_frames * cfg.packet_duration * rate))
    y = remove_dc(x, window)
    y = signal.sosfilt(_lpf_sos(cfg, rate), y)
    if rate != cfg.sample_rate:
        n_out = int(math.floor(len(y) * cfg.sample_rate / rate))
        idx = np.floor(np.arange(n_out) * (rate / cfg.sample_rate) + 0.5).astype(np.int64)
        y = y[np.minimum(idx, len(y) - 1)]
    peak = float(np.max(np.abs(y))) if len(y) else 0.0
    scale_in = float(np.max(np.abs(x)))
    if peak <= 1e-9 * max(scale_in, 1e-300):
        return Waveform(np.zeros_like(y), cfg.sample_rate, "bipolar", 1.0)
    return Waveform(y / peak, cfg.sample_rate, "bipolar", peak)


@dataclass(frozen=True)
class DecodedFrame:
    frame: BeaconFrame
    rss: float
    start_sample: int
    clean: bool = True
    # fractional start estimate, ADC samples
    start: float = field(default=0.0, compare=False, repr=False)


def demodulate(w: Waveform, cfg: PhyConfig) -> list[DecodedFrame]:
    """Find and decode every frame in a bipolar receiver-chain output.

    SFD candidates are runs of positive samples at least 3.5 symbols long; the
    symbol clock is recovered by correlating the Sync section over +-1/2 symbol.
    A Data pair is accepted only when its half-difference reaches
    ``decision_margin`` times the Sync amplitude, which is what rejects collisions
    between comparable signals. Frames failing Manchester or checksum checks are
    dropped. ``rss`` is the mean Data peak-to-peak amplitude in input units.
    """
    cfg.validate()
    x = np.ascontiguousarray(w.samples, dtype=float)
    if len(x) == 0:
        return []
    spb = cfg.samples_per_symbol(w.sample_rate)
    min_run = int(math.ceil(3.5 * spb))
    max_run = int(math.floor(12.0 * spb))
    starts, payloads, sums, pp, dmin, dmax = kernels.scan_frames(
        x, spb, min_run, max_run, cfg.decision_margin)
    out = []
    for s, p, c, amp, lo, hi in zip(starts, payloads, sums, pp, dmin, dmax):
        p = int(p)
        if int(c) != checksum(p):
            continue
        clean = bool(hi <= cfg.fluctuation_ratio * lo)
        out.append(DecodedFrame(BeaconFrame(p), float(amp) * w.gain,
                                int(math.floor(s + 0.5)), clean, float(s)))
    return out


def transmit(frame: BeaconFrame | SymbolFrame, cfg: PhyConfig, rng=None, noise_sigma: float = 0.0,
             lead: int | None = None, idle_frames: float = 2.0):
    """One frame between stretches of idle dummy carrier, at the analog rate.

    ``lead`` is the number of idle analog samples before the frame; by default
    it is two frame lengths plus a random sub-symbol phase. Returns the
    waveform and the frame's first analog sample.
    """
    sf = encode_frame(frame) if isinstance(frame, BeaconFrame) else frame
    ra = cfg.analog_rate
    body = modulate(sf, cfg, 1.0, rate=ra).samples
    idle = int(round(idle_frames * len(body)))
    if lead is None:
        jitter = int(rng.integers(0, int(math.ceil(ra / cfg.f_mod)))) if rng is not None else 0
        lead = idle + jitter
    n = lead + len(body) + idle
    x = dummy_carrier(n, cfg, 1.0, rate=ra).samples
    x[lead:lead + len(body)] = body
    if noise_sigma > 0:
        if rng is None:
            raise PhyError("noise needs an rng")
        x = x + noise_sigma * rng.standard_normal(n)
    return Waveform(x, ra, "unipolar"), lead


def roundtrip(frame: BeaconFrame, cfg: PhyConfig, rng, noise_sigma: float = 0.0) -> bool:
    """True when the full chain returns exactly ``frame`` and nothing else."""
    w, _ = transmit(frame, cfg, rng, noise_sigma)
    out = demodulate(receiver_chain(w, cfg), cfg)
    return [d.frame for d in out] == [frame]


def corruption_sweep(frame: BeaconFrame, cfg: PhyConfig, width: int = 1):
    """Invert every run of ``width`` consecutive symbols in turn and decode.

    Returns ``(trials, false_accepts, rejected)``; a false accept is any decoded
    payload that differs from the one sent.
    """
    if not 1 <= width <= FRAME_LEN:
        raise PhyError(f"width must lie in [1, {FRAME_LEN}]")
    base = encode_frame(frame).symbols
    trials = false = rejected = 0
    for k in range(FRAME_LEN - width + 1):
        s = base.copy()
        s[k:k + width] ^= 1
        w, _ = transmit(SymbolFrame(s), cfg, lead=2 * FRAME_LEN * int(cfg.analog_rate / cfg.f_mod))
        out = demodulate(receiver_chain(w, cfg), cfg)
        trials += 1
        if any(d.frame.payload != frame.payload for d in out):
            false += 1
        if not out:
            rejected += 1
    return trials, false, rejected


def section_labels(n: int, start: float, spb: float) -> list:
    """Frame-section name for each of ``n`` samples given the frame start (in samples)."""
    names = ["SFD"] * SFD_LEN + ["Sync"] * SYNC_LEN + ["Data"] * DATA_LEN + ["EOF"] * EOF_LEN
    out = []
    for i in range(n):
        k = int(math.floor((i - start) / spb))
        out.append(names[k] if 0 <= k < FRAME_LEN else "idle")
    return out
