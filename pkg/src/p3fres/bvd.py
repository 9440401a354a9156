"""Multi-branch modified Butterworth-Van Dyke circuit.

Topology (fixed)::

    Y = 1 / (rs + 1 / (Y_static + sum_k Y_k))
    Y_static = 1 / (r0 + 1/(jw c0))
    Y_k = 1 / (rm_k + jw lm_k + 1/(jw cm_k))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .trace import AdmittanceTrace, FrequencyGrid

N_MAX_BRANCHES = 8


class UnreachableCouplingError(ValueError):
    pass


@dataclass(frozen=True)
class MotionalBranch:
    rm: float
    lm: float
    cm: float

    def __post_init__(self):
        if not (self.lm > 0 and self.cm > 0 and self.rm >= 0):
            raise ValueError(f"invalid motional branch rm={self.rm}, lm={self.lm}, cm={self.cm}")


@dataclass(frozen=True)
class MbvdParams:
    c0: float
    r0: float = 0.0
    rs: float = 0.0
    branches: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.c0 > 0:
            raise ValueError("c0 must be > 0")
        if self.r0 < 0 or self.rs < 0:
            raise ValueError("r0 and rs must be >= 0")
        if len(self.branches) > N_MAX_BRANCHES:
            raise ValueError(f"at most {N_MAX_BRANCHES} motional branches")
        fss = sorted(branch_fs(b) for b in self.branches)
        for lo, hi in zip(fss, fss[1:]):
            if (hi - lo) <= 1e-6 * hi:
                raise ValueError(f"branch resonances {lo:.6e} and {hi:.6e} Hz are not distinct")

    def to_dict(self) -> dict:
        return {
            "c0_f": self.c0,
            "r0_ohm": self.r0,
            "rs_ohm": self.rs,
            "branches": [{"rm_ohm": b.rm, "lm_h": b.lm, "cm_f": b.cm} for b in self.branches],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MbvdParams":
        branches = tuple(MotionalBranch(float(b["rm_ohm"]), float(b["lm_h"]), float(b["cm_f"]))
                         for b in d.get("branches", []))
        return cls(float(d["c0_f"]), float(d.get("r0_ohm", 0.0)), float(d.get("rs_ohm", 0.0)), branches)

    def sorted(self) -> "MbvdParams":
        return MbvdParams(self.c0, self.r0, self.rs, tuple(sorted(self.branches, key=branch_fs)))


def branch_fs(b: MotionalBranch) -> float:
    return 1.0 / (2 * math.pi * math.sqrt(b.lm * b.cm))


def branch_q(b: MotionalBranch) -> float:
    if b.rm == 0:
        raise ZeroDivisionError("lossless branch has infinite Q")
    return 2 * math.pi * branch_fs(b) * b.lm / b.rm


def _freqs(grid) -> np.ndarray:
    if isinstance(grid, FrequencyGrid):
        return grid.freqs()
    return np.asarray(grid, dtype=float)


def static_admittance(p: MbvdParams, omega: np.ndarray) -> np.ndarray:
    return 1.0 / (p.r0 + 1.0 / (1j * omega * p.c0))


def branch_admittance(b: MotionalBranch, omega: np.ndarray) -> np.ndarray:
    return 1.0 / (b.rm + 1j * omega * b.lm + 1.0 / (1j * omega * b.cm))


def mbvd_y(p: MbvdParams, freqs: np.ndarray) -> np.ndarray:
    omega = 2 * np.pi * np.asarray(freqs, dtype=float)
    yp = static_admittance(p, omega)
    for b in p.branches:
        yp = yp + branch_admittance(b, omega)
    if p.rs == 0:
        return yp
    return 1.0 / (p.rs + 1.0 / yp)


def mbvd_admittance(p: MbvdParams, grid) -> AdmittanceTrace:
    f = _freqs(grid)
    return AdmittanceTrace(f, mbvd_y(p, f), meta={"source": "mbvd"})


@dataclass(frozen=True)
class ToneTarget:
    fs: float
    k2: float
    q: float


def synthesize(targets: Iterable, c0: float, rs: float = 0.0, r0: float = 0.0,
               convention: str = metrics.DEFAULT_CONVENTION) -> MbvdParams:
    """Circuit whose lossless resonances sit at the requested (fs, fp) pairs.

    fp of each tone follows from its k^2 under ``convention``. With a single
    tone this reduces to ``cm = c0 * ((fp/fs)^2 - 1)``; with several tones the
    static-branch loading of every other branch is included, so the zeros of
    the lossless network land exactly on each fp. Zero-coupling tones add no
    branch. ``rm`` is set from ``q`` as the branch quality factor.
    """
    tones = [t if isinstance(t, ToneTarget) else ToneTarget(*t) for t in targets]
    if not c0 > 0:
        raise ValueError("c0 must be > 0")
    kmax = metrics.K2_MAX[convention]
    live = []
    for t in tones:
        if not 0 <= t.k2 < kmax:
            raise UnreachableCouplingError(f"k2={t.k2} outside [0, {kmax}) for convention {convention}")
        if not (t.fs > 0 and t.q > 0):
            raise ValueError("fs and q must be > 0")
        if t.k2 > 0:
            live.append(t)
    live.sort(key=lambda t: t.fs)
    if not live:
        return MbvdParams(c0, r0, rs, ())

    ws = np.array([2 * np.pi * t.fs for t in live])
    wp = np.array([2 * np.pi * t.fs * metrics.fp_over_fs(t.k2, convention) for t in live])
    for i in range(len(live) - 1):
        if wp[i] >= ws[i + 1]:
            raise UnreachableCouplingError(
                f"tone at {live[i].fs:.6e} Hz: fp overlaps the next tone at {live[i + 1].fs:.6e} Hz")
    # zero of Y/(jw) at every fp: c0 + sum_k cm_k / (1 - (wp_j/ws_k)^2) = 0
    M = 1.0 / (1.0 - (wp[:, None] / ws[None, :]) ** 2)
    cm = np.linalg.solve(M, -c0 * np.ones(len(live)))
    if np.any(cm <= 0):
        raise UnreachableCouplingError("requested couplings need a negative motional capacitance")
    branches = []
    for t, w, c in zip(live, ws, cm):
        lm = 1.0 / (w * w * c)
        branches.append(MotionalBranch(w * lm / t.q, lm, float(c)))
    return MbvdParams(c0, r0, rs, tuple(branches))


def add_noise(trace: AdmittanceTrace, rel_sigma: float, seed: int) -> AdmittanceTrace:
    """Multiplicative complex Gaussian noise with total rms ``rel_sigma``."""
    rng = np.random.default_rng(seed)
    n = len(trace)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    y = trace.y * (1 + rel_sigma / math.sqrt(2) * g)
    meta = dict(trace.meta, noise_rel_sigma=rel_sigma, noise_seed=seed)
    return AdmittanceTrace(trace.freqs.copy(), y, meta)


def branches_by_fs(p: MbvdParams) -> Sequence[tuple[float, float]]:
    """(fs, Q) of every branch, ascending in fs."""
    out = []
    for b in p.branches:
        out.append((branch_fs(b), branch_q(b) if b.rm > 0 else math.inf))
    return sorted(out)
