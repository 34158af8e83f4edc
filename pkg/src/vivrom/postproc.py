"""Diagnostics for FOM/ROM comparison: field errors, spectra, lock-in and
phase portraits."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import directed_hausdorff, pdist

MIN_PSD_SAMPLES = 64


def relative_l2_error(fom, rom, weights=None) -> float:
    """``100 * |fom - rom|_W / |fom|_W``; relative to the full-order field."""
    fom = np.asarray(fom, dtype=float)
    rom = np.asarray(rom, dtype=float)
    if fom.shape != rom.shape:
        raise ValueError(f"shape mismatch {fom.shape} vs {rom.shape}")
    w = 1.0 if weights is None else np.asarray(weights, dtype=float)
    if fom.ndim == 2 and np.ndim(w) == 1:
        w = w[:, None]
    den = float(np.sqrt(np.sum(w * fom * fom)))
    if den == 0.0:
        raise ZeroDivisionError("full-order field has zero norm")
    return 100.0 * float(np.sqrt(np.sum(w * (fom - rom) ** 2))) / den


def frobenius_error(fom, rom) -> float:
    """Relative Frobenius-norm error in percent over a whole matrix."""
    fom = np.asarray(fom, dtype=float)
    rom = np.asarray(rom, dtype=float)
    if fom.shape != rom.shape:
        raise ValueError(f"shape mismatch {fom.shape} vs {rom.shape}")
    den = float(np.linalg.norm(fom))
    if den == 0.0:
        raise ZeroDivisionError("full-order matrix has zero norm")
    return 100.0 * float(np.linalg.norm(fom - rom)) / den


def psd(series, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Hann-windowed periodogram of a mean-removed series.

    Power is per bin and normalised so that its sum approximates the
    variance of a stationary series.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < MIN_PSD_SAMPLES:
        raise ValueError(f"need at least {MIN_PSD_SAMPLES} samples, got {n}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = np.hanning(n)
    X = np.fft.rfft((x - x.mean()) * w)
    P = np.abs(X) ** 2 / (n * np.sum(w * w))
    P[1:] *= 2.0
    if n % 2 == 0:
        P[-1] /= 2.0
    return np.fft.rfftfreq(n, dt), P


def bin_width(n: int, dt: float) -> float:
    return 1.0 / (n * dt)


def dominant_frequency(freqs, power) -> float:
    """Peak frequency (DC excluded) refined by a parabola through the peak
    bin and its neighbours."""
    f = np.asarray(freqs, dtype=float)
    P = np.asarray(power, dtype=float)
    if len(P) < 3:
        raise ValueError("spectrum too short")
    k = int(np.argmax(P[1:])) + 1
    if k >= len(P) - 1 or P[k] <= 0:
        return float(f[k])
    a, b, c = P[k - 1], P[k], P[k + 1]
    den = a - 2 * b + c
    shift = 0.0 if den == 0 else 0.5 * (a - c) / den
    return float(f[k] + np.clip(shift, -0.5, 0.5) * (f[1] - f[0]))


def last_window(x, fraction: float = 0.5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not 0 < fraction <= 1:
        raise ValueError("window fraction must lie in (0, 1]")
    return x[len(x) - max(int(round(fraction * len(x))), 1):]


def strouhal(series, dt: float, D: float = 1.0, U: float = 1.0, fraction: float = 0.5) -> float:
    f, P = psd(last_window(series, fraction), dt)
    return dominant_frequency(f, P) * D / U


def lock_in_report(lift, drag, motion, dt: float, fraction: float = 0.5) -> dict:
    """Dominant frequencies of lift, drag and motion over the final window."""
    cl, cd, y = (last_window(s, fraction) for s in (lift, drag, motion))
    fl = dominant_frequency(*psd(cl, dt))
    fd = dominant_frequency(*psd(cd, dt))
    fm = dominant_frequency(*psd(y, dt))
    bw = bin_width(len(cl), dt)
    return {
        "f_lift": fl,
        "f_drag": fd,
        "f_motion": fm,
        "ratio": fd / fl if fl > 0 else float("nan"),
        "motion_lift_gap": abs(fm - fl),
        "bin_width": bw,
        "gap_in_bins": abs(fm - fl) / bw,
    }


def phase_portrait(lift, motion, D: float = 1.0, fraction: float = 0.5) -> np.ndarray:
    """``(C_L, y/D)`` pairs over the final window."""
    cl = last_window(lift, fraction)
    y = last_window(motion, fraction) / D
    if len(cl) != len(y):
        raise ValueError("lift and motion must share a time grid")
    return np.column_stack([cl, y])


def ellipse_area(points) -> float:
    """Area of the ellipse with the sample covariance of ``points``.

    Exact for a harmonic orbit sampled uniformly over whole periods.
    """
    p = np.asarray(points, dtype=float)
    cov = np.cov(p.T, bias=True)
    return float(2.0 * np.pi * np.sqrt(max(np.linalg.det(cov), 0.0)))


def hausdorff_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


def curve_diameter(points) -> float:
    p = np.asarray(points, dtype=float)
    return float(pdist(p).max()) if len(p) > 1 else 0.0


def coefficient_cycles(coeffs, pairs=((0, 1), (1, 2), (0, 2))) -> np.ndarray:
    """Columns ``a_i, a_j`` for each requested pair (limit-cycle plots)."""
    a = np.asarray(coeffs, dtype=float)
    cols = [a[:, [i, j]] for i, j in pairs if max(i, j) < a.shape[1]]
    return np.hstack(cols) if cols else np.zeros((len(a), 0))
