"""Independent oracles and small utilities shared by the tests."""

import numpy as np

from p3fres.stack_model import Layer, Stack


def plate(material, t=110e-9, area=1e-11, polarity=1):
    return Stack((Layer(material, t, polarity),), area)


def mason_admittance(material, t, area, freqs):
    """Closed-form admittance of a single free piezoelectric plate."""
    c = material.complex_stiffness
    kt2 = material.e_piezo ** 2 / (c * material.eps_clamped)
    w = 2 * np.pi * np.asarray(freqs)
    v = np.sqrt(c / material.density)
    phi = w * t / (2 * v)
    c0 = material.eps_clamped * area / t
    return 1j * w * c0 / (1 - kt2 * np.tan(phi) / phi)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def series_rlc_admittance(freqs, r, l, c):
    w = 2 * np.pi * np.asarray(freqs)
    return 1 / (r + 1j * w * l + 1 / (1j * w * c))
