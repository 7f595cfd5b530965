"""Learning-free depth recovery and depth quality metrics.

Normal maps are converted to a gradient field and integrated in the
frequency domain: the gradient images are mirror-extended to a periodic
tile, and the least-squares height is solved against the spectral symbol of
the central-difference operator, which makes integrate(normals(z)) an
almost exact inverse away from the one-sided border rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .normal_cue import NormalCueMap
from .scene import HeightField


@dataclass(frozen=True)
class DepthMetrics:
    rmse_log: float
    delta_125: float


def _gradients_from_normals(n: np.ndarray, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    nz = np.where(n[:, :, 2] <= eps, np.nan, n[:, :, 2])
    p = -n[:, :, 0] / nz
    q = -n[:, :, 1] / nz
    # degenerate pixels carry no gradient information
    p = np.nan_to_num(p, nan=0.0)
    q = np.nan_to_num(q, nan=0.0)
    return p, q


def gradients_from_cue(cue: NormalCueMap, eps: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Heuristic gradient field from a scalar cue map.

    Assumes frontal light and albedo close to uniform, so the cue is n_z up
    to a global scale; the slope magnitude then follows from the unit-normal
    constraint and the downhill direction is taken from the cue's own
    gradient. Valid for dome-like relief (faces); not a general inverse.
    """
    v = cue.values
    nz = np.clip(v / max(float(v.max()), eps), eps, 1.0)
    slope = np.sqrt(1.0 - nz**2) / nz
    gy, gx = np.gradient(nz)
    norm = np.hypot(gx, gy)
    norm = np.where(norm < 1e-12, 1.0, norm)
    # on a dome n_z increases toward the peak, same direction as z
    return slope * gx / norm, slope * gy / norm


def _solve_gradient_field(p: np.ndarray, q: np.ndarray, dx: float) -> np.ndarray:
    H, W = p.shape
    P = np.block([[p, -p[:, ::-1]], [p[::-1, :], -p[::-1, ::-1]]])
    Q = np.block([[q, q[:, ::-1]], [-q[::-1, :], -q[::-1, ::-1]]])
    fy = np.fft.fftfreq(2 * H)  # cycles per sample
    fx = np.fft.fftfreq(2 * W)
    dx_sym = 1j * np.sin(2.0 * np.pi * fx)[None, :] / dx
    dy_sym = 1j * np.sin(2.0 * np.pi * fy)[:, None] / dx
    denom = np.abs(dx_sym) ** 2 + np.abs(dy_sym) ** 2
    num = np.conj(dx_sym) * np.fft.fft2(P) + np.conj(dy_sym) * np.fft.fft2(Q)
    with np.errstate(invalid="ignore", divide="ignore"):
        zf = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    z = np.real(np.fft.ifft2(zf))[:H, :W]
    return z - z.mean()


def integrate_normals(
    source: np.ndarray | NormalCueMap, dx: float = 1.0 / 16.0
) -> HeightField:
    """Least-squares integration of a normal map (or cue map) to a height field.

    The integration constant is unobservable; output is zero-mean.
    """
    if isinstance(source, NormalCueMap):
        p, q = gradients_from_cue(source)
    else:
        if source.ndim != 3 or source.shape[2] != 3:
            raise ValueError("normal map must be (H, W, 3)")
        if not np.any(source[:, :, 2] > 1e-6):
            raise ValueError("all pixels degenerate, nothing to integrate")
        p, q = _gradients_from_normals(source)
    return HeightField(z=_solve_gradient_field(p, q, dx), dx=dx)


def _positive_depths(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Height fields are not natively positive; when the ground truth dips
    # below 1 both fields get a common shift putting its minimum at 1.0.
    shift = max(0.0, 1.0 - float(gt.min()))
    pred = pred + shift
    gt = gt + shift
    if pred.min() <= 0.0 or gt.min() <= 0.0:
        raise ValueError("non-positive depths remain after offset")
    return pred, gt


def depth_metrics(pred: HeightField | np.ndarray, gt: HeightField | np.ndarray) -> DepthMetrics:
    """rmse_log = sqrt(mean((log pred - log gt)^2)); delta_125 = accuracy at 1.25."""
    a = pred.z if isinstance(pred, HeightField) else np.asarray(pred, dtype=np.float64)
    b = gt.z if isinstance(gt, HeightField) else np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("prediction and ground truth dimensions differ")
    a, b = _positive_depths(a, b)
    log_err = np.log(a) - np.log(b)
    ratio = np.maximum(a / b, b / a)
    return DepthMetrics(
        rmse_log=float(np.sqrt(np.mean(log_err**2))),
        delta_125=float(np.mean(ratio < 1.25)),
    )
