"""Touchstone v1 and CSV readers/writers, S <-> Y conversion, DUT reduction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .trace import AdmittanceTrace

TRACE_HEADER = "freq_hz,re_y_s,im_y_s"
TOPOLOGIES = ("one_port", "series", "shunt")

_FREQ_UNITS = {"HZ": Decimal(1), "KHZ": Decimal(10) ** 3, "MHZ": Decimal(10) ** 6, "GHZ": Decimal(10) ** 9}
_FORMATS = ("RI", "MA", "DB")
# v1 2-port rows are ordered S11 S21 S12 S22
_TWO_PORT_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))


class TouchstoneError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class TraceCsvError(ValueError):
    pass


class SingularConversionError(ValueError):
    pass


@dataclass
class Network:
    """S-parameters of a 1- or 2-port on a shared reference impedance."""

    freqs: np.ndarray
    s: np.ndarray
    z0: float = 50.0

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.s = np.asarray(self.s, dtype=complex)
        if self.s.ndim != 3 or self.s.shape[1] != self.s.shape[2] or self.s.shape[1] not in (1, 2):
            raise ValueError("s must have shape (n_freqs, n, n) with n in {1, 2}")
        if self.s.shape[0] != self.freqs.size:
            raise ValueError("s and freqs disagree in length")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if not self.z0 > 0:
            raise ValueError("z0 must be > 0")

    @property
    def n_ports(self) -> int:
        return self.s.shape[1]


def _split_comment(raw: str) -> str:
    return raw.split("!", 1)[0].strip()


def _parse_option_line(tokens: list[str], lineno: int):
    unit, param, fmt, z0 = "GHZ", "S", "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i].upper()
        if tok in _FREQ_UNITS:
            unit = tok
        elif tok in ("S", "Y", "Z", "H", "G"):
            param = tok
        elif tok in _FORMATS:
            fmt = tok
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TouchstoneError("option 'R' needs a value", lineno)
            try:
                z0 = float(tokens[i + 1])
            except ValueError:
                raise TouchstoneError(f"non-numeric reference impedance {tokens[i + 1]!r}", lineno) from None
            i += 1
        else:
            raise TouchstoneError(f"unknown option {tokens[i]!r}", lineno)
        i += 1
    if param != "S":
        raise TouchstoneError(f"only S-parameter files are supported, got {param}", lineno)
    if not z0 > 0:
        raise TouchstoneError("reference impedance must be > 0", lineno)
    return unit, fmt, z0


def _to_complex(a: float, b: float, fmt: str) -> complex:
    if fmt == "RI":
        return complex(a, b)
    mag = a if fmt == "MA" else 10 ** (a / 20)
    ang = math.radians(b)
    if b % 90 == 0:
        # keep quarter-turn angles exact
        quarter = int(b // 90) % 4
        return mag * (1, 1j, -1, -1j)[quarter]
    return mag * complex(math.cos(ang), math.sin(ang))


def parse_touchstone(text: str, n_ports: int | None = None) -> Network:
    """Parse Touchstone v1 ``.s1p`` / ``.s2p`` text.

    ``n_ports`` (normally implied by the file extension) is inferred from the
    first data row when omitted.
    """
    options = None
    freqs, rows = [], []
    last_f = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _split_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported", lineno)
        if line.startswith("#"):
            if options is not None:
                raise TouchstoneError("duplicate option line", lineno)
            options = _parse_option_line(line[1:].split(), lineno)
            continue
        if options is None:
            raise TouchstoneError("data before the option line", lineno)
        tokens = line.split()
        if n_ports is None:
            n_ports = {3: 1, 9: 2}.get(len(tokens))
            if n_ports is None:
                raise TouchstoneError(f"cannot infer port count from {len(tokens)} columns", lineno)
        expected = 1 + 2 * n_ports * n_ports
        if len(tokens) != expected:
            raise TouchstoneError(f"expected {expected} columns for a {n_ports}-port, got {len(tokens)}", lineno)
        try:
            f = Decimal(tokens[0])
            vals = [float(t) for t in tokens[1:]]
        except (InvalidOperation, ValueError):
            bad = next(t for t in tokens if not _is_number(t))
            raise TouchstoneError(f"non-numeric token {bad!r}", lineno) from None
        if not f.is_finite():
            raise TouchstoneError(f"non-numeric token {tokens[0]!r}", lineno)
        unit, fmt, _ = options
        f_hz = float(f * _FREQ_UNITS[unit])
        if last_f is not None and f_hz <= last_f:
            raise TouchstoneError("frequencies must be strictly ascending", lineno)
        last_f = f_hz
        m = np.empty((n_ports, n_ports), dtype=complex)
        order = ((0, 0),) if n_ports == 1 else _TWO_PORT_ORDER
        for k, (i, j) in enumerate(order):
            m[i, j] = _to_complex(vals[2 * k], vals[2 * k + 1], fmt)
        freqs.append(f_hz)
        rows.append(m)
    if options is None:
        raise TouchstoneError("missing option line")
    if n_ports is None:
        n_ports = 1
    s = np.array(rows, dtype=complex).reshape(len(rows), n_ports, n_ports)
    return Network(np.array(freqs), s, options[2])


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def read_touchstone(path) -> Network:
    path = Path(path)
    suffix = path.suffix.lower()
    n_ports = {".s1p": 1, ".s2p": 2}.get(suffix)
    return parse_touchstone(path.read_text(), n_ports)


def serialize_touchstone(net: Network, fmt: str = "RI") -> str:
    fmt = fmt.upper()
    if fmt not in _FORMATS:
        raise ValueError(f"format must be one of {_FORMATS}")
    if net.freqs.size == 0:
        raise ValueError("nothing to write: network has no frequency points")
    lines = [f"! {net.n_ports}-port S-parameters",
             f"# HZ S {fmt} R {net.z0:.12g}"]
    order = ((0, 0),) if net.n_ports == 1 else _TWO_PORT_ORDER
    for f, m in zip(net.freqs, net.s):
        fields = ["%.12e" % f]
        for i, j in order:
            v = m[i, j]
            if fmt == "RI":
                a, b = v.real, v.imag
            else:
                mag = abs(v)
                a = mag if fmt == "MA" else 20 * math.log10(mag) if mag > 0 else -400.0
                b = math.degrees(math.atan2(v.imag, v.real))
            fields += ["%.12e" % a, "%.12e" % b]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def _bilinear(m: np.ndarray, what: str, freqs: np.ndarray) -> np.ndarray:
    """(I - M)(I + M)^-1 for stacks of 1x1 / 2x2 matrices, in closed form.

    The closed form keeps the 12 and 21 entries built from the same
    expression, so a reciprocal input stays exactly reciprocal.
    """
    n = m.shape[1]
    if n == 1:
        den = 1 + m[:, 0, 0]
        scale = 1 + np.abs(m[:, 0, 0])
        bad = np.abs(den) <= 1e-13 * scale
        if np.any(bad):
            f = freqs[np.argmax(bad)]
            raise SingularConversionError(f"(I + {what}) is singular at {f:.9e} Hz")
        return ((1 - m[:, 0, 0]) / den).reshape(-1, 1, 1)
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    det = (1 + a) * (1 + d) - b * c
    scale = np.abs((1 + a) * (1 + d)) + np.abs(b * c)
    bad = np.abs(det) <= 1e-13 * scale
    if np.any(bad):
        f = freqs[np.argmax(bad)]
        raise SingularConversionError(f"(I + {what}) is singular at {f:.9e} Hz")
    out = np.empty_like(m)
    out[:, 0, 0] = ((1 - a) * (1 + d) + b * c) / det
    out[:, 0, 1] = -2 * b / det
    out[:, 1, 0] = -2 * c / det
    out[:, 1, 1] = ((1 + a) * (1 - d) + b * c) / det
    return out


def s_to_y(net: Network) -> np.ndarray:
    """Y = Y0 (I - S)(I + S)^-1 per frequency, Y0 = 1/z0 (siemens)."""
    return _bilinear(net.s, "S", net.freqs) / net.z0


def y_to_s(y: np.ndarray, z0: float = 50.0, freqs=None) -> np.ndarray:
    y = np.asarray(y, dtype=complex)
    if freqs is None:
        freqs = np.arange(y.shape[0], dtype=float)
    return _bilinear(y * z0, "z0*Y", np.asarray(freqs))


def dut_admittance(net: Network, topology: str | None = None) -> AdmittanceTrace:
    """Scalar device admittance from a 1- or 2-port measurement.

    Defaults: ``one_port`` for 1-port data, ``series`` (-Y21) for 2-port data.
    """
    if topology is None:
        topology = "one_port" if net.n_ports == 1 else "series"
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}; choose from {TOPOLOGIES}")
    if topology == "one_port" and net.n_ports != 1:
        raise ValueError("ambiguous port: 2-port data needs --topology series or shunt")
    if topology != "one_port" and net.n_ports != 2:
        raise ValueError(f"topology {topology} needs 2-port data")
    y = s_to_y(net)
    if topology == "one_port":
        yd = y[:, 0, 0]
    elif topology == "series":
        yd = -y[:, 1, 0]
    else:
        yd = y[:, 0, 0] + y[:, 0, 1]
    return AdmittanceTrace(net.freqs.copy(), yd, meta={"topology": topology, "z0_ohm": net.z0})


def embed_admittance(trace: AdmittanceTrace, topology: str = "series", z0: float = 50.0) -> Network:
    """Network of a device measured in the given configuration.

    ``series`` places the admittance between the two ports; ``one_port``
    terminates a single port with it.
    """
    y = trace.y
    if topology == "one_port":
        s = ((1 - z0 * y) / (1 + z0 * y)).reshape(-1, 1, 1)
    elif topology == "series":
        ym = np.empty((y.size, 2, 2), dtype=complex)
        ym[:, 0, 0] = ym[:, 1, 1] = y
        ym[:, 0, 1] = ym[:, 1, 0] = -y
        s = y_to_s(ym, z0, trace.freqs)
    else:
        raise ValueError(f"cannot embed with topology {topology!r}")
    return Network(trace.freqs.copy(), s, z0)


def read_trace_csv(text: str) -> AdmittanceTrace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceCsvError(f"line 1: expected header {TRACE_HEADER!r}")
    f, y = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise TraceCsvError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            fv, re, im = (float(p) for p in parts)
        except ValueError:
            raise TraceCsvError(f"line {lineno}: non-numeric field") from None
        if f and fv <= f[-1]:
            raise TraceCsvError(f"line {lineno}: non-monotonic frequency {fv}")
        f.append(fv)
        y.append(complex(re, im))
    if not f:
        raise TraceCsvError("no data rows")
    return AdmittanceTrace(np.array(f), np.array(y))


def write_trace_csv(trace: AdmittanceTrace) -> str:
    rows = [TRACE_HEADER]
    rows += ["%.12e,%.12e,%.12e" % (f, v.real, v.imag) for f, v in zip(trace.freqs, trace.y)]
    return "\n".join(rows) + "\n"


def read_trace(path, topology: str | None = None) -> AdmittanceTrace:
    """Trace from a CSV or Touchstone file, chosen by extension."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        tr = read_trace_csv(path.read_text())
        tr.meta["source"] = str(path)
        return tr
    return dut_admittance(read_touchstone(path), topology)


def dumps_json(obj, indent: int = 2) -> str:
    """JSON with every float written as ``%.12e``; deterministic key order."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            if math.isnan(o) or math.isinf(o):
                return "null"
            return "%.12e" % o
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{enc(str(k), level + 1)}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            items = [pad + enc(v, level + 1) for v in o]
            return "[\n" + ",\n".join(items) + "\n" + end + "]"
        if isinstance(o, np.floating):
            return enc(float(o), level)
        if isinstance(o, np.integer):
            return str(int(o))
        raise TypeError(f"cannot encode {type(o).__name__}")

    return enc(obj, 0) + "\n"
