"""One-dimensional thickness-mode model of a poled piezoelectric layer stack.

Each layer is a c^D / h piezoelectric slab (``h = polarity * e / eps``). The
electric displacement D is uniform through the stack, so inside a layer the
displacement obeys the source-free wave equation and the piezoelectric
coupling only enters through stress jumps of ``h * D`` at the layer faces.
The state (u, T) is carried bottom to top as a linear function of the two
unknowns (u at the bottom face, D); the free top face and a unit drive
voltage close the 2x2 system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .trace import AdmittanceTrace, FrequencyGrid, ResonancePair, find_resonances  # noqa: F401

# |det| below this fraction of its term magnitudes is treated as an exact pole
POLE_RTOL = 1e-12
DEFAULT_PROFILE_POINTS = 257


class PoleError(ValueError):
    """Raised when a single-frequency solve lands on a lossless pole."""


class DegenerateProfileError(ValueError):
    pass


class StackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialProps:
    density: float
    c_stiff: float
    e_piezo: float
    eps_clamped: float
    q_mech: float = math.inf
    conductor: bool = False
    name: str = ""

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"{self.name or 'material'}: density must be > 0")
        if not self.c_stiff > 0:
            raise ValueError(f"{self.name or 'material'}: c_stiff must be > 0")
        if not self.eps_clamped > 0:
            raise ValueError(f"{self.name or 'material'}: eps_clamped must be > 0")
        if not self.q_mech > 0:
            raise ValueError(f"{self.name or 'material'}: q_mech must be > 0 or inf")
        kt2 = intrinsic_kt2(self)
        if not 0 <= kt2 < 1:
            raise ValueError(f"{self.name or 'material'}: intrinsic kt^2 = {kt2:.4g} outside [0, 1)")

    @property
    def complex_stiffness(self) -> complex:
        if math.isinf(self.q_mech):
            return complex(self.c_stiff)
        return self.c_stiff * (1 + 1j / self.q_mech)

    @property
    def velocity(self) -> float:
        return math.sqrt(self.c_stiff / self.density)


def intrinsic_kt2(m: MaterialProps) -> float:
    return m.e_piezo ** 2 / (m.c_stiff * m.eps_clamped)


@dataclass(frozen=True)
class Layer:
    material: MaterialProps
    thickness: float
    polarity: int = 1

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError("layer thickness must be > 0")
        if self.polarity not in (-1, 0, 1):
            raise ValueError("polarity must be -1, 0 or +1")

    @property
    def h(self) -> float:
        m = self.material
        if self.polarity == 0 or m.conductor:
            return 0.0
        return self.polarity * m.e_piezo / m.eps_clamped


@dataclass(frozen=True)
class Stack:
    layers: tuple
    area: float
    boundary: str = "free-free"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("stack needs at least one layer")
        if not self.area > 0:
            raise ValueError("area must be > 0")
        if self.boundary != "free-free":
            raise ValueError("only free-free boundaries are modelled")
        if all(layer.material.conductor for layer in self.layers):
            raise ValueError("stack has no dielectric layer between the contacts")

    @property
    def thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)

    def scaled(self, s: float) -> "Stack":
        """Every layer thickness multiplied by ``s``."""
        return replace(self, layers=tuple(replace(l, thickness=l.thickness * s) for l in self.layers))

    def lossless(self) -> "Stack":
        layers = tuple(replace(l, material=replace(l.material, q_mech=math.inf)) for l in self.layers)
        return replace(self, layers=layers)

    @property
    def is_lossless(self) -> bool:
        return all(math.isinf(l.material.q_mech) for l in self.layers)


@dataclass(frozen=True)
class DeviceGeometry:
    """Lateral IDT geometry; only used for order-of-magnitude C0 seeds."""

    n_electrodes: int
    electrode_width: float
    electrode_gap: float
    aperture: float
    wavelength: Optional[float] = None
    busline_distance: Optional[float] = None
    electrode_thickness: Optional[float] = None

    def __post_init__(self):
        if self.n_electrodes < 2:
            raise ValueError("need at least two electrodes")
        lengths = [self.electrode_width, self.electrode_gap, self.aperture,
                   self.wavelength, self.busline_distance, self.electrode_thickness]
        if any(v is not None and not v > 0 for v in lengths):
            raise ValueError("all geometry lengths must be > 0")
        if self.wavelength is not None:
            pitch2 = 2 * (self.electrode_width + self.electrode_gap)
            if abs(pitch2 - self.wavelength) > 1e-9 * self.wavelength:
                raise ValueError(f"wavelength {self.wavelength} != 2*(Le+Lg) = {pitch2}")


# Device drawn in the measured resonator: 17 fingers, Le 800 nm, Lg 3.2 um,
# lambda 8 um, 59 um aperture, 71 um busline spacing, 350 nm Al.
PAPER_GEOMETRY = DeviceGeometry(
    n_electrodes=17, electrode_width=800e-9, electrode_gap=3.2e-6, aperture=59e-6,
    wavelength=8e-6, busline_distance=71e-6, electrode_thickness=350e-9,
)


def estimate_c0(geom: DeviceGeometry, eps_eff: float, fringing: float = 1.0) -> float:
    """Parallel-plate-per-gap estimate of the IDT static capacitance.

    ``eps_eff`` is a sheet permittivity (permittivity times the thickness the
    gap field penetrates, in farads), so that ``(n - 1) * eps_eff * A / Lg``
    is a capacitance. Good to an order of magnitude; only meant to seed fits.
    For PAPER_GEOMETRY with a 185 nm film of eps = 44 eps0 this gives ~21 fF.
    """
    if not eps_eff > 0:
        raise ValueError("eps_eff must be > 0")
    if not fringing > 0:
        raise ValueError("fringing factor must be > 0")
    return (geom.n_electrodes - 1) * eps_eff * geom.aperture / geom.electrode_gap * fringing


@dataclass
class StressProfile:
    depths: np.ndarray
    stress: np.ndarray
    frequency: Optional[float] = None

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=float)
        self.stress = np.asarray(self.stress, dtype=complex)
        if self.depths.shape != self.stress.shape or self.depths.ndim != 1:
            raise ValueError("depths and stress must be 1-D arrays of equal length")
        if self.depths.size < 3 or np.any(np.diff(self.depths) <= 0):
            raise ValueError("depths must be ascending with at least 3 samples")


def _boundary_terms(stack: Stack, omega: np.ndarray):
    """Carry (u, T) bottom to top as linear forms in (u0, D).

    Returns ``(a, b, alpha, beta)`` with ``T_top = a*u0 + b*D`` and the
    electrode voltage ``V = alpha*u0 + beta*D``.
    """
    n = omega.size
    u = np.zeros((2, n), dtype=complex)
    u[0] = 1.0
    T = np.zeros((2, n), dtype=complex)
    V = np.zeros((2, n), dtype=complex)
    for layer in stack.layers:
        m = layer.material
        c = m.complex_stiffness
        k = omega * np.sqrt(m.density / c)
        ck = c * k
        cs = np.cos(k * layer.thickness)
        sn = np.sin(k * layer.thickness)
        h = layer.h
        sig = T.copy()
        sig[1] += h
        u_top = u * cs + sig * (sn / ck)
        sig_top = -u * (ck * sn) + sig * cs
        if h:
            V -= h * (u_top - u)
        if not m.conductor:
            V[1] += layer.thickness / m.eps_clamped
        u = u_top
        T = sig_top
        T[1] -= h
    return T[0], T[1], V[0], V[1]


def _solve(stack: Stack, omega: np.ndarray):
    a, b, alpha, beta = _boundary_terms(stack, omega)
    det = a * beta - b * alpha
    scale = np.abs(a * beta) + np.abs(b * alpha)
    singular = np.abs(det) <= POLE_RTOL * scale
    singular |= scale == 0
    safe = np.where(singular, 1.0, det)
    # unit drive: T_top = 0, V = 1
    u0 = -b / safe
    D = a / safe
    return u0, D, singular


def input_admittance(stack: Stack, grid) -> AdmittanceTrace:
    """Electrical admittance of the stack between its outer faces.

    ``grid`` is a FrequencyGrid or an array of ascending frequencies. Samples
    landing on an exact lossless pole are dropped and listed in ``poles``.
    """
    freqs = grid.freqs() if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    omega = 2 * np.pi * freqs
    _, D, singular = _solve(stack, omega)
    y = 1j * omega * stack.area * D
    keep = ~singular
    return AdmittanceTrace(freqs[keep], y[keep], meta={"source": "stack_model"},
                           poles=tuple(float(f) for f in freqs[singular]))


def mode_stress_profile(stack: Stack, f: float, n_points: int = DEFAULT_PROFILE_POINTS) -> StressProfile:
    """Standing-wave stress through the thickness under a 1 V drive at ``f``."""
    if n_points < 64:
        raise ValueError("profile needs at least 64 depth samples")
    omega = np.array([2 * np.pi * f])
    u0, D, singular = _solve(stack, omega)
    if singular[0]:
        raise PoleError(f"{f:.9e} Hz is a lossless pole of the stack")
    u0, D = u0[0], D[0]

    depths = np.linspace(0.0, stack.thickness, n_points)
    stress = np.zeros(n_points, dtype=complex)
    z_bot = 0.0
    u, T = u0, 0j
    filled = np.zeros(n_points, dtype=bool)
    for layer in stack.layers:
        m = layer.material
        c = m.complex_stiffness
        k = omega[0] * np.sqrt(m.density / c)
        h = layer.h
        sig_b = T + h * D
        z_top = z_bot + layer.thickness
        sel = (~filled) & (depths <= z_top * (1 + 1e-12))
        dz = depths[sel] - z_bot
        stress[sel] = -u * c * k * np.sin(k * dz) + sig_b * np.cos(k * dz) - h * D
        filled |= sel
        t = layer.thickness
        u, T = (u * np.cos(k * t) + sig_b * np.sin(k * t) / (c * k),
                -u * c * k * np.sin(k * t) + sig_b * np.cos(k * t) - h * D)
        z_bot = z_top
    return StressProfile(depths, stress, frequency=f)


def label_mode(profile: StressProfile, hysteresis: float = 1e-3) -> int:
    """Thickness-mode order: one plus the sign changes of the phase-aligned stress."""
    s = profile.stress
    peak = np.max(np.abs(s))
    if peak == 0:
        raise DegenerateProfileError("profile has zero stress everywhere")
    ref = s[np.argmax(np.abs(s))]
    real = (s * np.conj(ref) / abs(ref)).real[1:-1]
    band = hysteresis * peak
    state = 0
    changes = 0
    for v in real:
        if v > band:
            new = 1
        elif v < -band:
            new = -1
        else:
            continue
        if state and new != state:
            changes += 1
        state = new
    return changes + 1


@dataclass(frozen=True)
class ThicknessMode:
    """Exact lossless resonance pair; fs == fp marks an uncoupled mode."""

    order: int
    fs: float
    fp: float


def _real_roots(fun, f_lo: float, f_hi: float, n_scan: int) -> list[float]:
    fs = np.linspace(f_lo, f_hi, n_scan)
    vals = fun(fs)
    roots = []
    for i in range(n_scan - 1):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0:
            roots.append(float(fs[i]))
        elif v0 * v1 < 0:
            r = brentq(lambda x: fun(np.array([x]))[0], fs[i], fs[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps,
                       maxiter=200)
            roots.append(float(r))
    return roots


def lossless_modes(stack: Stack, f_max: float, n_scan: Optional[int] = None) -> list[ThicknessMode]:
    """Exact (fs, fp) of every thickness mode below ``f_max``, loss removed.

    fp are the open-circuit (D = 0) free-plate resonances, labelled by their
    order; fs are the short-circuit zeros of the impedance. Each fp is paired
    with the highest fs above the previous fp.
    """
    ls = stack.lossless()
    if n_scan is None:
        # ~400 samples per mode of the slowest layer
        slowness = sum(l.thickness / l.material.velocity for l in ls.layers)
        n_scan = max(2000, int(400 * 2 * f_max * slowness))

    def open_circuit(f):
        a, _, _, _ = _boundary_terms(ls, 2 * np.pi * f)
        return a.real

    def short_circuit(f):
        a, b, alpha, beta = _boundary_terms(ls, 2 * np.pi * f)
        return (a * beta - b * alpha).real

    f_lo = f_max / n_scan
    fps = _real_roots(open_circuit, f_lo, f_max, n_scan)
    zs = _real_roots(short_circuit, f_lo, f_max, n_scan)
    modes = []
    prev = 0.0
    for order, fp in enumerate(fps, start=1):
        cands = [z for z in zs if prev < z <= fp * (1 + 1e-12)]
        fs = min(max(cands), fp) if cands else fp
        modes.append(ThicknessMode(order, fs, fp))
        prev = fp
    return modes


# --- JSON configuration -----------------------------------------------------

_MATERIAL_FIELDS = ("density", "c_stiff", "e_piezo", "eps_clamped")


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise StackConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def stack_from_dict(doc: dict) -> Stack:
    """Build a Stack from the JSON document layout.

    ``{"materials": {name: {density, c_stiff, e_piezo, eps_clamped,
    q_mech?, conductor?}}, "layers": [{material, thickness_nm, polarity}],
    "area_um2": float}``. Extra keys (notes, provenance) are ignored.
    """
    if not isinstance(doc, dict):
        raise StackConfigError("$: expected an object")
    mats_doc = doc.get("materials")
    if not isinstance(mats_doc, dict) or not mats_doc:
        raise StackConfigError("materials: expected a non-empty object")
    materials = {}
    for name, m in mats_doc.items():
        path = f"materials.{name}"
        if not isinstance(m, dict):
            raise StackConfigError(f"{path}: expected an object")
        kw = {}
        for key in _MATERIAL_FIELDS:
            if key not in m:
                raise StackConfigError(f"{path}.{key}: missing")
            kw[key] = _number(m[key], f"{path}.{key}")
        q = m.get("q_mech")
        kw["q_mech"] = math.inf if q is None else _number(q, f"{path}.q_mech")
        kw["conductor"] = bool(m.get("conductor", False))
        try:
            materials[name] = MaterialProps(name=name, **kw)
        except ValueError as exc:
            raise StackConfigError(f"{path}: {exc}") from None

    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list) or not layers_doc:
        raise StackConfigError("layers: expected a non-empty array")
    layers = []
    for i, l in enumerate(layers_doc):
        path = f"layers[{i}]"
        if not isinstance(l, dict):
            raise StackConfigError(f"{path}: expected an object")
        name = l.get("material")
        if name not in materials:
            raise StackConfigError(f"{path}.material: unknown material {name!r}")
        if "thickness_nm" not in l:
            raise StackConfigError(f"{path}.thickness_nm: missing")
        t = _number(l["thickness_nm"], f"{path}.thickness_nm")
        if not t > 0:
            raise StackConfigError(f"{path}.thickness_nm: must be > 0")
        pol = l.get("polarity", 0)
        if pol not in (-1, 0, 1) or isinstance(pol, bool):
            raise StackConfigError(f"{path}.polarity: must be -1, 0 or 1")
        layers.append(Layer(materials[name], t * 1e-9, int(pol)))

    if "area_um2" not in doc:
        raise StackConfigError("area_um2: missing")
    area = _number(doc["area_um2"], "area_um2")
    if not area > 0:
        raise StackConfigError("area_um2: must be > 0")
    try:
        return Stack(tuple(layers), area * 1e-12)
    except ValueError as exc:
        raise StackConfigError(f"$: {exc}") from None


def load_stack(path) -> Stack:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StackConfigError(f"{path}: invalid JSON ({exc})") from None
    return stack_from_dict(doc)


def bundled_config(name: str) -> Path:
    """Path of a stack configuration shipped with the package."""
    return bundled_file(f"{name}.json")


def bundled_file(name: str) -> Path:
    return Path(__file__).parent / "data" / name


def make_stack(material: MaterialProps, thicknesses: Sequence[float], polarities: Sequence[int],
               area: float) -> Stack:
    return Stack(tuple(Layer(material, t, p) for t, p in zip(thicknesses, polarities)), area)
