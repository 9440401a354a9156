"""Least-squares estimation of mBVD parameters from an admittance trace.

Parameters are optimised in log space,
``theta = [log c0, log(r0 + eps), log(rs + eps), (log rm, log lm, log cm) * n]``,
which keeps every element positive without box constraints. The solver is a
Levenberg-Marquardt iteration with Marquardt (diagonal) scaling and
Nielsen's damping update; the Jacobian is analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .bvd import MbvdParams, MotionalBranch, branch_fs
from .metrics import InsufficientSpanError, q_3db
from .trace import MIN_RESONANCE_POINTS, AdmittanceTrace, find_resonances

# offset that lets r0 and rs reach exactly zero under the log transform (ohm)
R_OFFSET = 1e-3
DEFAULT_SEED_Q = 100.0
PLACEHOLDER_COUPLING = 1e-3
SINGULAR_COND = 1e12
# log-space half width of the box around the seed; keeps runaway directions finite
THETA_BOX = 30.0


class InsufficientDataError(ValueError):
    pass


class IllConditionedFitError(ValueError):
    pass


@dataclass
class FitOptions:
    n_branches: int = 5
    max_iterations: int = 500
    step_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-12
    weighting: str = "inverse_magnitude"
    seed_overrides: Optional[Union[MbvdParams, dict]] = None

    def __post_init__(self):
        if self.n_branches < 1:
            raise ValueError("n_branches must be >= 1")
        if not (self.step_tolerance > 0 and self.gradient_tolerance > 0 and self.max_iterations > 0):
            raise ValueError("tolerances and max_iterations must be > 0")
        if self.weighting not in ("uniform", "inverse_magnitude"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass
class FitResult:
    params: MbvdParams
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def pack(p: MbvdParams) -> np.ndarray:
    vals = [math.log(p.c0), math.log(p.r0 + R_OFFSET), math.log(p.rs + R_OFFSET)]
    for b in p.branches:
        vals += [math.log(b.rm), math.log(b.lm), math.log(b.cm)]
    return np.array(vals)


def unpack(theta: np.ndarray) -> MbvdParams:
    n = (len(theta) - 3) // 3
    r0 = max(math.exp(theta[1]) - R_OFFSET, 0.0)
    rs = max(math.exp(theta[2]) - R_OFFSET, 0.0)
    branches = tuple(MotionalBranch(*np.exp(theta[3 + 3 * k: 6 + 3 * k])) for k in range(n))
    return MbvdParams(math.exp(theta[0]), r0, rs, branches)


def model_jacobian(theta: np.ndarray, freqs: np.ndarray):
    """Model admittance and its derivative with respect to ``theta``.

    Returns ``(y, J)`` with ``J[i, j] = dY(f_i) / dtheta_j`` (complex).
    """
    omega = 2 * np.pi * np.asarray(freqs, dtype=float)
    jw = 1j * omega
    n = (len(theta) - 3) // 3
    c0, r0e, rse = np.exp(theta[:3])
    r0, rs = r0e - R_OFFSET, rse - R_OFFSET

    ys = 1.0 / (r0 + 1.0 / (jw * c0))
    yp = ys.copy()
    yk = []
    for k in range(n):
        rm, lm, cm = np.exp(theta[3 + 3 * k: 6 + 3 * k])
        y_b = 1.0 / (rm + jw * lm + 1.0 / (jw * cm))
        yk.append((y_b, rm, lm, cm))
        yp = yp + y_b
    y = 1.0 / (rs + 1.0 / yp)

    J = np.empty((omega.size, len(theta)), dtype=complex)
    dy_dyp = (y / yp) ** 2
    ys2 = ys * ys
    J[:, 0] = dy_dyp * ys2 / (jw * c0)
    J[:, 1] = dy_dyp * (-ys2) * r0e
    J[:, 2] = -(y * y) * rse
    for k, (y_b, rm, lm, cm) in enumerate(yk):
        g = dy_dyp * y_b * y_b
        J[:, 3 + 3 * k] = -g * rm
        J[:, 4 + 3 * k] = -g * jw * lm
        J[:, 5 + 3 * k] = g / (jw * cm)
    return y, J


def _weights(trace: AdmittanceTrace, weighting: str) -> np.ndarray:
    mag = np.abs(trace.y)
    if weighting == "inverse_magnitude":
        return 1.0 / np.maximum(mag, np.finfo(float).tiny)
    return np.full(mag.shape, 1.0 / math.sqrt(np.mean(mag ** 2)))


def initial_guess(trace: AdmittanceTrace, n: int) -> MbvdParams:
    """Seed parameters read off the trace.

    c0 is the median of Im(y)/w over the flattest quarter of the trace; each
    detected (fs, fp) pair gives cm = c0 ((fp/fs)^2 - 1) and a 3-dB Q. Missing
    branches are padded with weakly coupled placeholders at the band edges.
    """
    if len(trace) < MIN_RESONANCE_POINTS:
        raise InsufficientDataError(f"need at least {MIN_RESONANCE_POINTS} points, got {len(trace)}")
    f = trace.freqs
    omega = trace.omega
    mag = np.abs(trace.y)
    slope = np.abs(np.gradient(mag, f))
    flat = np.argsort(slope, kind="stable")[: max(1, len(f) // 4)]
    c_est = trace.y.imag / omega
    c0 = float(np.median(c_est[flat]))
    if not c0 > 0:
        c0 = float(np.median(mag / omega))

    seeds = []
    for p in find_resonances(trace):
        ratio = (p.fp / p.fs) if p.fp is not None else 1.0
        cm = c0 * (ratio * ratio - 1)
        if not cm > 0:
            cm = PLACEHOLDER_COUPLING * c0
        try:
            q = q_3db(trace, p.fs)
        except InsufficientSpanError:
            q = DEFAULT_SEED_Q
        seeds.append((p.fs, cm, q))
    if len(seeds) > n:
        # keep the strongest tones: motional-to-static conductance ~ Q * cm / c0
        strength = np.array([q * cm for _, cm, q in seeds])
        keep = np.sort(np.argsort(-strength, kind="stable")[:n])
        seeds = [seeds[i] for i in keep]
    branches = [_branch(fs, cm, q) for fs, cm, q in seeds]
    for k in range(n - len(branches)):
        side, step = k % 2, k // 2
        fs = f[0] * (1 - 0.01 * step) if side == 0 else f[-1] * (1 + 0.01 * step)
        branches.append(_branch(fs, PLACEHOLDER_COUPLING * c0, DEFAULT_SEED_Q))
    return MbvdParams(c0, 0.0, 0.0, tuple(branches))


def _branch(fs: float, cm: float, q: float) -> MotionalBranch:
    w = 2 * math.pi * fs
    lm = 1.0 / (w * w * cm)
    return MotionalBranch(w * lm / q, lm, cm)


def _seed(trace: AdmittanceTrace, o: FitOptions) -> MbvdParams:
    ov = o.seed_overrides
    if isinstance(ov, MbvdParams):
        return ov
    seed = initial_guess(trace, o.n_branches)
    if ov:
        seed = MbvdParams(ov.get("c0", seed.c0), ov.get("r0", seed.r0), ov.get("rs", seed.rs),
                          tuple(ov.get("branches", seed.branches)))
    return seed


def fit_mbvd(trace: AdmittanceTrace, o: Optional[FitOptions] = None) -> FitResult:
    """Fit an n-branch mBVD to ``trace`` by damped least squares.

    Non-convergence within ``max_iterations`` is reported through
    ``converged=False`` with the best parameters found.
    """
    o = o or FitOptions()
    seed = _seed(trace, o)
    theta = pack(seed)
    lo, hi = theta - THETA_BOX, theta + THETA_BOX
    freqs = trace.freqs
    w = _weights(trace, o.weighting)
    npts = len(trace)
    data_norm = float(np.linalg.norm(w * trace.y))

    def evaluate(th):
        y, J = model_jacobian(th, freqs)
        rc = w * (y - trace.y)
        Jc = w[:, None] * J
        r = np.concatenate([rc.real, rc.imag])
        Jr = np.concatenate([Jc.real, Jc.imag])
        return r, Jr

    def cost_of(th):
        y, _ = model_jacobian(th, freqs)
        rc = w * (y - trace.y)
        return 0.5 * float(np.vdot(rc, rc).real)

    r, J = evaluate(theta)
    col = np.linalg.norm(J, axis=0)
    if np.any(col == 0) or not np.all(np.isfinite(J)):
        raise IllConditionedFitError("Jacobian has a zero column; try fewer branches")
    sv = np.linalg.svd(J / col, compute_uv=False)
    if sv[-1] <= sv[0] / SINGULAR_COND:
        raise IllConditionedFitError(
            f"Jacobian is numerically singular (cond {sv[0] / max(sv[-1], 1e-300):.2e}); try fewer branches")

    cost = 0.5 * float(r @ r)
    A = J.T @ J
    g = J.T @ r
    diag = np.diag(A).copy()
    lam = 1e-3
    nu = 2.0
    history = [cost]
    converged = cost == 0.0
    it = 0
    while not converged and it < o.max_iterations:
        it += 1
        diag = np.maximum(diag, np.diag(A))
        H = A + lam * np.diag(diag)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2
            continue
        dn = np.sqrt(np.diag(A))
        if np.linalg.norm(dn * step) <= o.step_tolerance * (np.linalg.norm(dn * theta) + o.step_tolerance):
            converged = True
            break
        trial = np.clip(theta + step, lo, hi)
        step = trial - theta
        with np.errstate(all="ignore"):
            new_cost = cost_of(trial)
        if not np.isfinite(new_cost):
            new_cost = math.inf
        pred = 0.5 * float(step @ (lam * diag * step - g))
        rho = (cost - new_cost) / pred if pred > 0 else -1.0
        if np.isfinite(new_cost) and new_cost < cost and rho > 0:
            theta = trial
            cost = new_cost
            history.append(cost)
            r, J = evaluate(theta)
            A = J.T @ J
            g = J.T @ r
            lam *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
            nu = 2.0
            gnorm = np.max(np.abs(g) / np.sqrt(np.maximum(np.diag(A), 1e-300)))
            if cost == 0.0 or gnorm <= o.gradient_tolerance * data_norm:
                converged = True
        else:
            lam *= nu
            nu *= 2

    try:
        params = unpack(theta).sorted()
    except ValueError as exc:
        raise IllConditionedFitError(f"{exc}; try fewer branches") from None
    residual = math.sqrt(2 * cost / npts)
    return FitResult(params, residual, it, converged, history)


def fitted_fs_q(result: FitResult) -> list[tuple[float, float]]:
    return sorted((branch_fs(b), 2 * math.pi * branch_fs(b) * b.lm / b.rm) for b in result.params.branches)
