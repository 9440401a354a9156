"""Modelling, fitting and figure-of-merit extraction for periodically poled
piezoelectric film (P3F) acoustic resonators."""

from .bvd import MbvdParams, MotionalBranch, ToneTarget, branch_fs, branch_q, mbvd_admittance, synthesize
from .fit import FitOptions, FitResult, fit_mbvd, initial_guess
from .io import Network, dut_admittance, parse_touchstone, s_to_y, serialize_touchstone, y_to_s
from .metrics import ResonanceMetrics, extract_report, fom, k2_from_fs_fp, q_3db
from .stack_model import (DeviceGeometry, Layer, MaterialProps, Stack, StressProfile, estimate_c0, input_admittance,
                          intrinsic_kt2, label_mode, lossless_modes, mode_stress_profile)
from .trace import AdmittanceTrace, FrequencyGrid, find_resonances

__version__ = "0.1.0"
