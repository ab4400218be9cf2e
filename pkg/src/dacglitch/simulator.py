"""Behavioral waveform synthesis with skewed on/off switching, and SNDR/SFDR.

Time is measured in sample periods ``T``.  The analog output lives on a grid of
``osr`` points per period; each grid value is the exact average of the
continuous piecewise-constant (or ramped) output over its sub-interval, so
pulses narrower than a grid step keep their area.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import Basis, TransitionModel, masks_to_bit_matrix
from .errors import ConsistencyError, UndefinedMeasurementError, ValidationError

SFDR_CEILING_DB = 250.0


@dataclass(frozen=True)
class EdgeModel:
    """Switch edge timing relative to the nominal sample instant.

    ``reference`` selects where the ideal ZOH used as the error reference
    switches: ``"midpoint"`` delays it by the mean of the on and off delays (a
    common delay is not distortion), ``"nominal"`` keeps it at ``nT``.
    """

    tau_on: float = 0.0
    tau_off: float = 0.0
    shape: str = "ideal"
    rise_time: float = 0.0
    reference: str = "midpoint"

    def __post_init__(self) -> None:
        if abs(self.tau_on) >= 0.5 or abs(self.tau_off) >= 0.5:
            raise ValidationError("edge delays must satisfy |tau| < 0.5")
        if self.shape not in ("ideal", "ramp"):
            raise ValidationError(f"unknown edge shape {self.shape!r}")
        if self.rise_time < 0 or self.rise_time >= 0.5:
            raise ValidationError("rise time must lie in [0, 0.5)")
        if self.shape == "ideal" and self.rise_time:
            object.__setattr__(self, "shape", "ramp")
        if self.reference not in ("midpoint", "nominal"):
            raise ValidationError(f"unknown reference alignment {self.reference!r}")

    @classmethod
    def skewed(cls, tau: float, **kw) -> "EdgeModel":
        """Turn-on edges late by ``tau``, turn-off edges on time."""
        return cls(tau_on=tau, tau_off=0.0, **kw)

    @classmethod
    def symmetric(cls, tau: float, **kw) -> "EdgeModel":
        return cls(tau_on=tau / 2, tau_off=-tau / 2, **kw)

    @property
    def reference_delay(self) -> float:
        if self.reference == "nominal":
            return 0.0
        return 0.5 * (self.tau_on + self.tau_off)

    def to_json(self) -> dict:
        return {"tau_on": self.tau_on, "tau_off": self.tau_off, "shape": self.shape,
                "rise_time": self.rise_time, "reference": self.reference}


def parse_frequency(text) -> Fraction:
    if isinstance(text, Fraction):
        return text
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"cannot parse normalized frequency {text!r}") from exc


@dataclass
class StimulusConfig:
    kind: str = "sine"
    frequency: Fraction | str = Fraction(31, 1024)
    samples: int = 1024
    osr: int = 64
    amplitude: float = 1.0
    path: str | None = None

    KINDS = ("sine", "prbs-codes", "file")

    def __post_init__(self) -> None:
        self.frequency_text = str(self.frequency)
        self.frequency = parse_frequency(self.frequency)
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown stimulus kind {self.kind!r}")
        if self.osr < 8:
            raise ValidationError("oversampling ratio must be >= 8")
        if self.kind == "sine":
            cycles = self.frequency * self.samples
            if cycles.denominator != 1:
                raise ValidationError(
                    f"f0/fs = {self.frequency} is not coherent with {self.samples} samples")
            if math.gcd(int(cycles), self.samples) != 1:
                raise ValidationError("cycles and record length must be coprime")
            if not 0 < self.amplitude <= 1:
                raise ValidationError("amplitude must lie in (0, 1]")
        if self.kind == "file" and not self.path:
            raise ValidationError("file stimulus needs a path")

    @property
    def cycles(self) -> int:
        return int(self.frequency * self.samples)

    def sine_values(self, bit_depth: int) -> np.ndarray:
        mid = ((1 << bit_depth) - 1) / 2.0
        n = np.arange(self.samples)
        return mid + self.amplitude * mid * np.sin(2 * np.pi * self.cycles * n / self.samples)

    def codes(self, bit_depth: int, seed: int = 0) -> np.ndarray:
        top = (1 << bit_depth) - 1
        if self.kind == "sine":
            # mid-tread: round to the nearest level
            return np.clip(np.floor(self.sine_values(bit_depth) + 0.5), 0, top).astype(np.int64)
        if self.kind == "prbs-codes":
            return np.random.default_rng(seed).integers(0, top + 1, self.samples)
        codes = np.loadtxt(self.path, dtype=np.int64, ndmin=1)
        if codes.min() < 0 or codes.max() > top:
            raise ValidationError(f"stimulus file has codes outside [0, {top}]")
        self.samples = int(codes.size)
        return codes

    def to_json(self) -> dict:
        d = {"kind": self.kind, "frequency": self.frequency_text, "samples": self.samples,
             "osr": self.osr, "amplitude": self.amplitude}
        if self.path:
            d["path"] = self.path
        return d


# --- synthesis ----------------------------------------------------------------


def _step_integral(s: np.ndarray, rise: float) -> np.ndarray:
    """Integral from -inf to s of the unit edge (ideal step or linear ramp)."""
    if rise <= 0:
        return np.maximum(s, 0.0)
    return np.where(s <= 0, 0.0, np.where(s < rise, s * s / (2 * rise), s - rise / 2))


def render_edges(buf: np.ndarray, osr: int, t_actual: np.ndarray, t_ideal: np.ndarray,
                 amp: np.ndarray, rise: float = 0.0) -> None:
    """Add ``amp * (edge(t - t_actual) - step(t - t_ideal))`` averaged over grid bins.

    Indices wrap around the record, which is treated as one period.
    """
    live = (amp != 0) & ((t_actual != t_ideal) | (rise > 0))
    if not live.any():
        return
    ta, ti, a = t_actual[live], t_ideal[live], amp[live].astype(float)
    lo = np.minimum(ta, ti)
    hi = np.maximum(ta + rise, ti)
    k0 = np.floor(lo * osr).astype(np.int64)
    width = int(np.ceil(((hi - lo) * osr).max())) + 2
    ks = k0[:, None] + np.arange(width)[None, :]
    left = ks / osr
    right = (ks + 1) / osr
    actual = _step_integral(right - ta[:, None], rise) - _step_integral(left - ta[:, None], rise)
    ideal = _step_integral(right - ti[:, None], 0.0) - _step_integral(left - ti[:, None], 0.0)
    np.add.at(buf, ks % buf.size, a[:, None] * (actual - ideal) * osr)


def ideal_zoh(values: Sequence[float], osr: int) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=float), osr)


def reference_zoh(codes: Sequence[int], osr: int, delay: float = 0.0, periodic: bool = True) -> np.ndarray:
    """Ideal staircase of the codes, optionally switching ``delay`` periods late."""
    codes = np.asarray(codes)
    out = ideal_zoh(codes, osr)
    if delay:
        prev = np.roll(codes, 1) if periodic else np.concatenate((codes[:1], codes[:-1]))
        n = np.arange(codes.size, dtype=float)
        render_edges(out, osr, n + delay, n, (codes - prev).astype(float))
    return out


def switch_sums(bits: np.ndarray, weights: np.ndarray, periodic: bool = True):
    """Weight turning on and turning off at every sample boundary."""
    b = bits.astype(np.int64)
    prev = np.roll(b, 1, axis=0) if periodic else np.concatenate((b[:1], b[:-1]))
    on = ((b == 1) & (prev == 0)).astype(np.int64) @ weights
    off = ((b == 0) & (prev == 1)).astype(np.int64) @ weights
    return on, off


def _as_bits(reps, basis: Basis) -> np.ndarray:
    arr = np.asarray(reps) if not isinstance(reps, list) else None
    if arr is not None and arr.ndim == 2:
        if arr.shape[1] != basis.length:
            raise ConsistencyError("representation width does not match the basis")
        return arr.astype(np.uint8)
    return masks_to_bit_matrix(list(reps), basis.length)


def synthesize(codes: Sequence[int], reps, basis: Basis, edges: EdgeModel, osr: int,
               periodic: bool = True) -> np.ndarray:
    """Oversampled DAC output with skewed switching.

    A switch turning on starts conducting at ``nT + tau_on T`` and a switch
    turning off stops at ``nT + tau_off T``; before that it keeps its old
    state.  ``reps`` is an ``(M, L)`` bit matrix or a sequence of masks.
    """
    if osr < 8:
        raise ValidationError("oversampling ratio must be >= 8")
    codes = np.asarray(codes, dtype=np.int64)
    bits = _as_bits(reps, basis)
    w = basis.array
    vals = bits.astype(np.int64) @ w
    if bits.shape[0] != codes.size or (vals != codes).any():
        raise ConsistencyError("representations do not decode to the codes")
    out = ideal_zoh(vals, osr)
    on, off = switch_sums(bits, w, periodic)
    n = np.arange(codes.size, dtype=float)
    rise = edges.rise_time if edges.shape == "ramp" else 0.0
    if edges.tau_on == edges.tau_off and rise == 0:
        render_edges(out, osr, n + edges.tau_on, n, (on - off).astype(float))
    else:
        render_edges(out, osr, n + edges.tau_on, n, on.astype(float), rise)
        render_edges(out, osr, n + edges.tau_off, n, -off.astype(float), rise)
    return out


# --- measurement --------------------------------------------------------------


def power_spectrum(x: np.ndarray) -> np.ndarray:
    """One-sided power per rfft bin; sums to the mean square of ``x``."""
    x = np.asarray(x, dtype=float)
    N = x.size
    X = np.fft.rfft(x)
    p = np.abs(X) ** 2 / N ** 2
    p[1:] *= 2
    if N % 2 == 0:
        p[-1] /= 2
    return p


def measure_sndr(waveform: np.ndarray, reference: np.ndarray, osr: int | None = None) -> float:
    """Signal-to-(noise + distortion) ratio of ``waveform`` against ``reference`` in dB.

    Signal power is the AC power of the reference; error power is the full mean
    square of ``waveform - reference``.  With ``osr`` both are restricted to the
    first Nyquist zone of the code rate (error power keeps its DC term).
    Returns ``inf`` when the error vanishes.
    """
    waveform = np.asarray(waveform, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if waveform.shape != reference.shape:
        raise ValidationError("waveform and reference differ in length")
    err = waveform - reference
    if osr is None:
        sig = float(np.mean((reference - reference.mean()) ** 2))
        noise = float(np.mean(err ** 2))
    else:
        top = reference.size // osr // 2
        sig = float(power_spectrum(reference)[1:top + 1].sum())
        noise = float(power_spectrum(err)[:top + 1].sum())
    if noise == 0:
        return math.inf
    return 10 * math.log10(sig / noise)


def measure_sfdr(waveform: np.ndarray, fundamental_bin: int, osr: int = 1) -> float:
    """Fundamental power over the largest other non-DC bin, in dB.

    The spur search covers the first Nyquist zone of the code rate, i.e. bins
    up to ``len(waveform) / osr / 2``.  A spur floor more than 250 dB down is
    reported as ``inf``.
    """
    p = power_spectrum(waveform)
    top = len(waveform) // osr // 2
    if not 0 < fundamental_bin <= top:
        raise ValidationError(f"fundamental bin {fundamental_bin} outside (0, {top}]")
    fund = p[fundamental_bin]
    if fund == 0 or fund <= 1e-12 * p.sum():
        raise UndefinedMeasurementError("no power at the fundamental bin")
    spurs = p[1:top + 1].copy()
    spurs[fundamental_bin - 1] = 0.0
    spur = spurs.max()
    if spur <= fund * 10 ** (-SFDR_CEILING_DB / 10):
        return math.inf
    return 10 * math.log10(fund / spur)


# --- experiments --------------------------------------------------------------


@dataclass
class SimResult:
    sndr_db: float
    sfdr_db: float | None
    waveform: np.ndarray
    error: np.ndarray
    spectrum_db: np.ndarray
    glitch_cost: int
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def num(v):
            if v is None:
                return None
            return "inf" if math.isinf(v) else float(v)

        return {"sndr_db": num(self.sndr_db), "sfdr_db": num(self.sfdr_db),
                "glitch_cost": int(self.glitch_cost), **self.meta}

    def export_waveform(self, path, osr: int) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["time", "value", "error"])
            t = np.arange(self.waveform.size) / osr
            for row in zip(t, self.waveform, self.error):
                wr.writerow([f"{row[0]:.9g}", repr(float(row[1])), repr(float(row[2]))])

    def export_spectrum(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["bin", "db"])
            for k, v in enumerate(self.spectrum_db):
                wr.writerow([k, f"{v:.6f}"])


def _resolve_mapper(mapper, basis: Basis, model, seed: int):
    from .mappers import make_mapper

    if isinstance(mapper, str):
        return make_mapper(mapper, basis, model, seed=seed)
    return mapper


def run_experiment(basis: Basis, mapper, stimulus: StimulusConfig, edges: EdgeModel,
                   seed: int = 0, model: TransitionModel | None = None) -> SimResult:
    """Generate codes, map them, synthesize the output and measure it.

    SNDR and SFDR are evaluated in the first Nyquist zone of the code rate.
    For SFDR the glitch error is added to the unquantized sine so that only
    glitch spurs compete with the fundamental; SNDR compares against the
    staircase of the quantized codes.  Both therefore exclude quantization.
    """
    handle = _resolve_mapper(mapper, basis, model, seed)
    codes = stimulus.codes(basis.bit_depth, seed)
    path = handle(codes)
    osr = stimulus.osr
    wave = synthesize(codes, path.masks, basis, edges, osr)
    ref = reference_zoh(codes, osr, edges.reference_delay)
    err = wave - ref
    sndr = measure_sndr(wave, ref, osr=osr)
    sfdr = None
    analysis = wave
    if stimulus.kind == "sine":
        analysis = ideal_zoh(stimulus.sine_values(basis.bit_depth), osr) + err
        sfdr = measure_sfdr(analysis, stimulus.cycles, osr)
    p = power_spectrum(analysis)
    spectrum_db = 10 * np.log10(np.maximum(p, 1e-300))
    meta = {
        "basis": basis.to_json(),
        "mapper": getattr(handle, "label", str(mapper)),
        "stimulus": stimulus.to_json(),
        "edges": edges.to_json(),
        "seed": seed,
        "transitions_cost_per_sample": path.cost / max(len(codes) - 1, 1),
    }
    return SimResult(sndr, sfdr, wave, err, spectrum_db, int(path.cost), meta)


def sweep(bases: Sequence[Basis], mappers: Sequence[str], taus: Sequence[float],
          stimulus: StimulusConfig, seed: int = 0, symmetric: bool = False,
          model: TransitionModel | None = None, edge_kw: dict | None = None) -> list[dict]:
    """One row per (basis, mapper, tau); each mapper is built once per basis."""
    rows = []
    edge_kw = edge_kw or {}
    for basis in bases:
        for name in mappers:
            handle = _resolve_mapper(name, basis, model, seed)
            for tau in taus:
                edges = EdgeModel.symmetric(tau, **edge_kw) if symmetric else EdgeModel.skewed(tau, **edge_kw)
                res = run_experiment(basis, handle, stimulus, edges, seed, model)
                rows.append({"basis": basis.label(), "L": basis.length, "mapper": name,
                             "tau": tau, "sndr_db": res.sndr_db, "sfdr_db": res.sfdr_db,
                             "glitch_cost": res.glitch_cost})
    return rows
