"""fs, fp, 3-dB Q, coupling and figure of merit from admittance traces."""

from __future__ import annotations

import io as _io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .trace import DEFAULT_PROMINENCE_DB, AdmittanceTrace, find_resonances, parabolic_vertex

HALF_POWER_DB = 10 * math.log10(2)  # 3.0103 dB

CONVENTIONS = ("pi2_8", "ieee", "tan_form")
DEFAULT_CONVENTION = "pi2_8"
K2_MAX = {"pi2_8": math.inf, "ieee": 1.0, "tan_form": 1.0}


class InsufficientSpanError(ValueError):
    def __init__(self, side: str, fs: float):
        super().__init__(f"-3 dB crossing on the {side} side of {fs:.6e} Hz lies outside the trace")
        self.side = side


def _check_convention(conv: str):
    if conv not in CONVENTIONS:
        raise ValueError(f"unknown k2 convention {conv!r}; choose from {CONVENTIONS}")


def k2_from_ratio(r: float, conv: str = DEFAULT_CONVENTION) -> float:
    """Coupling for fp/fs = r (r >= 1)."""
    _check_convention(conv)
    if conv == "pi2_8":
        return math.pi ** 2 / 8 * (r * r - 1)
    if conv == "ieee":
        return (r * r - 1) / (r * r)
    x = 1.0 / r
    return math.pi / 2 * x * math.tan(math.pi / 2 * (1 - x))


def k2_from_fs_fp(fs: float, fp: float, conv: str = DEFAULT_CONVENTION) -> float:
    if not 0 < fs < fp:
        raise ValueError(f"invalid resonance pair fs={fs}, fp={fp}")
    return k2_from_ratio(fp / fs, conv)


def fp_over_fs(k2: float, conv: str = DEFAULT_CONVENTION) -> float:
    """Inverse of :func:`k2_from_ratio`."""
    _check_convention(conv)
    if not 0 <= k2 < K2_MAX[conv]:
        raise ValueError(f"k2={k2} unreachable under {conv}")
    if k2 == 0:
        return 1.0
    if conv == "pi2_8":
        return math.sqrt(1 + 8 * k2 / math.pi ** 2)
    if conv == "ieee":
        return 1 / math.sqrt(1 - k2)
    # tan_form: k2 -> 1 as fs/fp -> 0; bracket in x = fs/fp
    x = brentq(lambda x: math.pi / 2 * x / math.tan(math.pi / 2 * x) - k2, 1e-12, 1 - 1e-15,
               xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return 1 / x


def fom(q: float, k2: float) -> float:
    return q * k2


def q_3db(trace: AdmittanceTrace, fs: float) -> float:
    """Half-power Q of the |Y| peak nearest ``fs``.

    Crossings 3.0103 dB below the parabolically refined peak are found by
    linear interpolation in (f, dB).
    """
    f = trace.freqs
    db = trace.magnitude_db()
    n = f.size
    i = int(np.argmin(np.abs(f - fs)))
    # climb to the local maximum
    while 0 < i < n - 1 and (db[i - 1] > db[i] or db[i + 1] > db[i]):
        i = i - 1 if db[i - 1] > db[i + 1] else i + 1
    f_pk, db_pk = parabolic_vertex(f, db, i)
    thr = db_pk - HALF_POWER_DB

    j = i
    while j >= 0 and db[j] > thr:
        j -= 1
    if j < 0:
        raise InsufficientSpanError("low", f_pk)
    f_lo = f[j] + (thr - db[j]) * (f[j + 1] - f[j]) / (db[j + 1] - db[j])

    j = i
    while j < n and db[j] > thr:
        j += 1
    if j >= n:
        raise InsufficientSpanError("high", f_pk)
    f_hi = f[j - 1] + (thr - db[j - 1]) * (f[j] - f[j - 1]) / (db[j] - db[j - 1])
    return f_pk / (f_hi - f_lo)


@dataclass(frozen=True)
class ResonanceMetrics:
    fs: float
    fp: Optional[float] = None
    q_3db: Optional[float] = None
    k2: Optional[float] = None
    fom: Optional[float] = None
    mode_label: Optional[int] = None
    k2_convention: str = DEFAULT_CONVENTION

    def to_dict(self) -> dict:
        return {
            "fs_hz": self.fs,
            "fp_hz": self.fp,
            "q_3db": self.q_3db,
            "k2": self.k2,
            "fom": self.fom,
            "mode_order": self.mode_label,
            "k2_convention": self.k2_convention,
        }


REPORT_COLUMNS = ("fs_hz", "fp_hz", "q_3db", "k2", "fom", "mode_order", "k2_convention")


def extract_report(trace: AdmittanceTrace, conv: str = DEFAULT_CONVENTION, stack=None,
                   prominence_db: float = DEFAULT_PROMINENCE_DB) -> list[ResonanceMetrics]:
    """Per-mode metrics for every resonance in the trace.

    A mode whose -3 dB points leave the band gets ``q_3db=None`` (and no FoM)
    instead of failing the report. When ``stack`` is given each mode is
    labelled by its thickness order, using the stress profile at fp (fs if
    fp is missing).
    """
    _check_convention(conv)
    report = []
    for pair in find_resonances(trace, prominence_db):
        try:
            q = q_3db(trace, pair.fs)
        except InsufficientSpanError:
            q = None
        k2 = None
        if pair.fp is not None and pair.fp > pair.fs:
            k2 = k2_from_fs_fp(pair.fs, pair.fp, conv)
        fom_value = fom(q, k2) if (q is not None and k2 is not None) else None
        label = None
        if stack is not None:
            from .stack_model import label_mode, mode_stress_profile
            label = label_mode(mode_stress_profile(stack, pair.fp if pair.fp is not None else pair.fs))
        report.append(ResonanceMetrics(pair.fs, pair.fp, q, k2, fom_value, label, conv))
    return sorted(report, key=lambda m: m.fs)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.12e" % v
    return str(v)


def report_to_csv(report: list[ResonanceMetrics]) -> str:
    buf = _io.StringIO()
    buf.write(",".join(REPORT_COLUMNS) + "\n")
    for m in report:
        d = m.to_dict()
        buf.write(",".join(_fmt(d[c]) for c in REPORT_COLUMNS) + "\n")
    return buf.getvalue()
