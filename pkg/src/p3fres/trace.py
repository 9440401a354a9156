"""Frequency grids, admittance traces and resonance detection on |Y|."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

DEFAULT_PROMINENCE_DB = 3.0
MIN_RESONANCE_POINTS = 16


@dataclass(frozen=True)
class FrequencyGrid:
    f_start: float
    f_stop: float
    n_points: int
    spacing: str = "linear"

    def __post_init__(self):
        if not 0 < self.f_start < self.f_stop:
            raise ValueError(f"need 0 < f_start < f_stop, got {self.f_start}, {self.f_stop}")
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.spacing not in ("linear", "log"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def freqs(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.f_start, self.f_stop, self.n_points)
        return np.linspace(self.f_start, self.f_stop, self.n_points)


@dataclass
class AdmittanceTrace:
    """Complex admittance sampled on a strictly ascending frequency axis.

    ``poles`` lists frequencies that were requested but dropped because the
    model is singular there (lossless resonances). ``meta`` carries
    provenance such as the DUT reduction used to obtain the trace.
    """

    freqs: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)
    poles: tuple = ()

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.y = np.asarray(self.y, dtype=complex)
        if self.freqs.ndim != 1 or self.freqs.shape != self.y.shape:
            raise ValueError("freqs and y must be 1-D arrays of equal length")
        if self.freqs.size == 0:
            raise ValueError("trace is empty")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequencies must be strictly ascending (non-monotonic input)")

    def __len__(self):
        return self.freqs.size

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * self.freqs

    def magnitude_db(self) -> np.ndarray:
        mag = np.abs(self.y)
        tiny = np.finfo(float).tiny
        return 20 * np.log10(np.maximum(mag, tiny))

    def scaled(self, a: complex) -> "AdmittanceTrace":
        return AdmittanceTrace(self.freqs.copy(), self.y * a, dict(self.meta), self.poles)


@dataclass(frozen=True)
class ResonancePair:
    fs: float
    fp: Optional[float]


def parabolic_vertex(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex of the parabola through samples i-1, i, i+1 (non-uniform x allowed)."""
    if i <= 0 or i >= len(x) - 1:
        return float(x[i]), float(y[i])
    x0 = x[i - 1] - x[i]
    x2 = x[i + 1] - x[i]
    y0 = y[i - 1] - y[i]
    y2 = y[i + 1] - y[i]
    # y = a*u^2 + b*u through (x0, y0), (0, 0), (x2, y2)
    den = x0 * x2 * (x0 - x2)
    a = (x2 * y0 - x0 * y2) / den
    b = (x0 * x0 * y2 - x2 * x2 * y0) / den
    if a == 0:
        return float(x[i]), float(y[i])
    u = -b / (2 * a)
    # stay within the bracketing samples
    u = min(max(u, x0), x2)
    return float(x[i] + u), float(y[i] + a * u * u + b * u)


def find_resonances(trace: AdmittanceTrace, prominence_db: float = DEFAULT_PROMINENCE_DB) -> list[ResonancePair]:
    """Locate (fs, fp) pairs as |Y| maxima and the deepest minimum that follows.

    Peaks with a prominence (in dB) below ``prominence_db`` are ignored. The
    fp of a peak is searched between it and the next accepted peak; when the
    minimum falls on the last sample the pair is returned with ``fp=None``.
    """
    n = len(trace)
    if n < MIN_RESONANCE_POINTS:
        raise ValueError(f"need at least {MIN_RESONANCE_POINTS} points, got {n}")
    f = trace.freqs
    logmag = np.log(np.maximum(np.abs(trace.y), np.finfo(float).tiny))
    db = logmag * (20 / np.log(10))
    peaks, _ = find_peaks(db, prominence=prominence_db)

    pairs = []
    for k, pk in enumerate(peaks):
        fs, _ = parabolic_vertex(f, logmag, pk)
        stop = peaks[k + 1] if k + 1 < len(peaks) else n - 1
        fp = None
        if stop > pk + 1:
            j = pk + 1 + int(np.argmin(db[pk + 1:stop + 1]))
            if j < n - 1:
                fp, _ = parabolic_vertex(f, logmag, j)
        pairs.append(ResonancePair(fs, fp))
    return pairs
