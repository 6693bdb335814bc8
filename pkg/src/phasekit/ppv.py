"""Perturbation projection vector: conversion from PRC and adjoint oracle.

Gamma maps injected charge to oscillator time shift (seconds per coulomb);
the companion quantity omega0*gamma is the shift in radians per coulomb.
Two independent routes produce it:

* ``ppv_from_prc`` divides a measured PRC by q*omega0, and
* ``adjoint_ppv`` integrates the adjoint variational equation backward
  along the cycle until periodic, normalized so z(t).f(x(t)) = 1.

Curves carry a truncated Fourier series as their canonical smooth periodic
representation (least-squares fit on the sample grid).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynsys import OdeSystem, integrate
from .errors import (ConvergenceError, FourierFitError, IncompatibleCurvesError,
                     OrbitAccuracyError)
from .limit_cycle import LimitCycle
from .models import InjectionPort
from .prc import PrcCurve

DEFAULT_HARMONICS = 16
DEFAULT_ADJOINT_PERIODS = 10
DEFAULT_ADJOINT_TOL = 1e-6
DEFAULT_ADJOINT_STEPS = 2048
DEFAULT_NORM_TOL = 1e-3

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FourierSeries:
    """c0 + sum_k a_k cos(k theta) + b_k sin(k theta); periodic by construction."""

    c0: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ValueError("a and b must be 1-D arrays of equal length")
        # python-float copies for the scalar fast path
        object.__setattr__(self, "_al", [float(v) for v in self.a])
        object.__setattr__(self, "_bl", [float(v) for v in self.b])

    @property
    def harmonics(self) -> int:
        return self.a.size

    def __call__(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float) % _TWO_PI
        k = np.arange(1, self.harmonics + 1)
        ang = th[..., None] * k
        return self.c0 + (np.cos(ang) * self.a).sum(-1) + (np.sin(ang) * self.b).sum(-1)

    def eval_scalar(self, theta: float) -> float:
        """Scalar evaluation via the angle-addition recurrence (loop-friendly)."""
        th = theta % _TWO_PI
        c1 = math.cos(th)
        s1 = math.sin(th)
        ck, sk = c1, s1
        acc = self.c0 + self._al[0] * c1 + self._bl[0] * s1
        for k in range(1, len(self._al)):
            ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
            acc += self._al[k] * ck + self._bl[k] * sk
        return acc

    def harmonic_energy(self) -> np.ndarray:
        return self.a * self.a + self.b * self.b

    def fundamental_complex(self) -> complex:
        """Complex amplitude g1 with fundamental = Re(g1 * e^{i theta})."""
        return complex(self.a[0], -self.b[0])


def fit_fourier(theta: np.ndarray, values: np.ndarray,
                harmonics: int = DEFAULT_HARMONICS) -> FourierSeries:
    """Least-squares truncated Fourier fit on an arbitrary sample grid."""
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    if harmonics < 1:
        raise ValueError("harmonics must be >= 1")
    if theta.size < 2 * harmonics + 1:
        raise ValueError(
            f"{theta.size} samples cannot determine {harmonics} harmonics")
    k = np.arange(1, harmonics + 1)
    ang = theta[:, None] * k
    design = np.hstack([np.ones((theta.size, 1)), np.cos(ang), np.sin(ang)])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return FourierSeries(c0=float(coef[0]), a=coef[1:harmonics + 1],
                         b=coef[harmonics + 1:])


@dataclass(frozen=True)
class PpvCurve:
    """Gamma sampled on a phase grid plus its smooth Fourier form.

    gamma is in seconds per coulomb; source records which route produced the
    curve ("from_prc" or "adjoint").
    """

    lc: LimitCycle
    theta: np.ndarray
    gamma: np.ndarray
    fourier: FourierSeries
    source: str

    def __post_init__(self):
        resid = self.fourier(self.theta) - self.gamma
        rms = math.sqrt(float(np.mean(resid * resid))) if resid.size else 0.0
        scale = float(np.max(np.abs(self.gamma))) if self.gamma.size else 0.0
        if rms > 0.02 * scale:
            raise FourierFitError(
                f"Fourier reconstruction RMS {rms:.3e} exceeds 2% of "
                f"max|gamma|={scale:.3e}; raise the harmonic count")

    @property
    def gamma_phase(self) -> np.ndarray:
        """Phase shift per coulomb (rad/C) at the sample grid."""
        return self.lc.omega0 * self.gamma


@dataclass(frozen=True)
class PpvComparison:
    rms_rel: float
    max_rel: float
    phase_lag_rad: float


@dataclass(frozen=True)
class SinusoidalityReport:
    output_thd: float
    ppv_fundamental_fraction: float
    offset_deg: float


def ppv_from_prc(curve: PrcCurve,
                 harmonics: int = DEFAULT_HARMONICS) -> PpvCurve:
    """Gamma(theta1) = prc(theta1) / (q * omega0), q = h*b of the impulse."""
    q = curve.impulse.q
    if q <= 0.0:
        raise ValueError(f"impulse charge must be positive, got q={q}")
    gamma = curve.prc / (q * curve.lc.omega0)
    fourier = fit_fourier(curve.theta1, gamma, harmonics)
    return PpvCurve(lc=curve.lc, theta=curve.theta1.copy(), gamma=gamma,
                    fourier=fourier, source="from_prc")


def _batched_jacobians(sys: OdeSystem, xs: np.ndarray) -> np.ndarray:
    """Jacobian at every stored state; finite differences when unregistered."""
    if sys.jacobian is not None:
        return np.asarray(sys.jacobian(xs, sys.params), dtype=float)
    span = xs.max(axis=0) - xs.min(axis=0)
    scale = np.maximum(span, 1e-12 * max(1.0, float(np.abs(xs).max())))
    h = 1e-6 * scale
    cols = []
    for j in range(sys.dim):
        e = np.zeros(sys.dim)
        e[j] = h[j]
        cols.append((sys.field(xs + e, sys.params)
                     - sys.field(xs - e, sys.params)) / (2.0 * h[j]))
    return np.stack(cols, axis=-1)


def adjoint_ppv(sys: OdeSystem, lc: LimitCycle, port: InjectionPort,
                periods: int = DEFAULT_ADJOINT_PERIODS,
                tol: float = DEFAULT_ADJOINT_TOL,
                steps_per_period: int = DEFAULT_ADJOINT_STEPS,
                harmonics: int = DEFAULT_HARMONICS,
                norm_tol: float = DEFAULT_NORM_TOL,
                method: str = "rk4") -> PpvCurve:
    """Gamma from backward integration of dz/dt = -J(x(t))^T z over the cycle.

    The orbit is re-integrated once at half-step resolution so every RK4
    stage of the backward pass reads an exactly stored state.  After the
    per-period change of z drops below ``tol`` the solution is normalized to
    z(t).f(x(t)) = 1 at the section and verified to hold everywhere.
    """
    n_b = int(steps_per_period)
    if n_b < 64:
        raise ValueError("steps_per_period must be >= 64")
    h = lc.T0 / n_b
    fwd = integrate(sys, lc.orbit[0], 0.0, lc.T0, h / 2.0, method)
    xs = fwd.states  # (2*n_b + 1, dim) states at half-grid resolution
    fs = sys.field(xs, sys.params)
    A = -np.swapaxes(_batched_jacobians(sys, xs), -1, -2)

    # per-step backward transfer matrices: z_{k-1} = M[k-1] @ z_k
    eye = np.eye(sys.dim)
    s = -h
    A_start = A[2::2]
    A_mid = A[1::2]
    A_end = A[0:-1:2]
    K1 = A_start
    K2 = A_mid @ (eye + (0.5 * s) * K1)
    K3 = A_mid @ (eye + (0.5 * s) * K2)
    K4 = A_end @ (eye + s * K3)
    M = eye + (s / 6.0) * (K1 + 2.0 * (K2 + K3) + K4)

    f0 = fs[0]
    z = f0 / float(np.linalg.norm(f0))
    converged = False
    for _ in range(periods):
        z_prev = z.copy()
        for k in range(n_b, 0, -1):
            z = M[k - 1] @ z
        norm = float(np.linalg.norm(z))
        # the per-period factor should approach the trivial multiplier 1;
        # anything far from it means the anchor is off-cycle or the cycle
        # is not hyperbolic
        if not np.isfinite(norm) or not 1e-3 < norm < 1e3:
            raise ConvergenceError(
                "backward adjoint integration is diverging; the cycle may be "
                "non-hyperbolic or the anchor state off-cycle")
        z /= norm
        # periodicity up to scale: the direction must stop moving
        drift = min(float(np.linalg.norm(z - z_prev)),
                    float(np.linalg.norm(z + z_prev)))
        if drift <= tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"adjoint solution not periodic after {periods} backward periods; "
            "increase the period budget (weakly contracting cycles need more)")

    z_rec = np.empty((n_b + 1, sys.dim))
    z_rec[n_b] = z  # periodic: z(T0) = z(0)
    for k in range(n_b, 0, -1):
        z_rec[k - 1] = M[k - 1] @ z_rec[k]
    prod = np.einsum("kd,kd->k", z_rec, fs[::2])
    p0 = float(prod[0])
    if p0 == 0.0 or not math.isfinite(p0):
        raise OrbitAccuracyError("adjoint normalization product vanished at the section")
    z_rec /= p0
    drift = float(np.max(np.abs(prod / p0 - 1.0)))
    if drift > norm_tol:
        raise OrbitAccuracyError(
            f"z.f drifts {drift:.2e} (relative) over the cycle (tol {norm_tol:g}); "
            "re-extract the cycle with a smaller step or raise steps_per_period")

    theta = _TWO_PI * np.arange(n_b) / n_b
    gamma = z_rec[:n_b, port.state_index] * port.gain
    fourier = fit_fourier(theta, gamma, harmonics)
    return PpvCurve(lc=lc, theta=theta, gamma=gamma, fourier=fourier,
                    source="adjoint")


def compare_ppv(a: PpvCurve, b: PpvCurve, grid: int = 512) -> PpvComparison:
    """RMS/max mismatch (relative to max|b|) and circular phase lag."""
    if abs(a.lc.T0 - b.lc.T0) > 1e-6 * b.lc.T0:
        raise IncompatibleCurvesError(
            f"curves have different periods ({a.lc.T0!r} vs {b.lc.T0!r})")
    theta = _TWO_PI * np.arange(grid) / grid
    va = a.fourier(theta)
    vb = b.fourier(theta)
    scale = float(np.max(np.abs(vb)))
    if scale == 0.0:
        rms_rel = 0.0 if float(np.max(np.abs(va))) == 0.0 else math.inf
        return PpvComparison(rms_rel=rms_rel, max_rel=rms_rel, phase_lag_rad=0.0)
    diff = va - vb
    rms_rel = math.sqrt(float(np.mean(diff * diff))) / scale
    max_rel = float(np.max(np.abs(diff))) / scale
    am = va - va.mean()
    bm = vb - vb.mean()
    corr = np.array([float(np.dot(am, np.roll(bm, -m))) for m in range(grid)])
    lag = _TWO_PI * int(np.argmax(corr)) / grid
    if lag > math.pi:
        lag -= _TWO_PI
    return PpvComparison(rms_rel=rms_rel, max_rel=max_rel, phase_lag_rad=lag)


def sinusoidality_report(ppv: PpvCurve, lc: LimitCycle) -> SinusoidalityReport:
    """How sinusoidal output and gamma are, and their fundamental offset.

    offset_deg is the phase difference between the two fundamentals, folded
    into [0, 180] degrees.
    """
    if abs(ppv.lc.T0 - lc.T0) > 1e-9 * lc.T0:
        raise IncompatibleCurvesError("ppv and lc come from different runs")
    y = lc.output_waveform()
    n = y.size
    spec = np.fft.rfft(y - y.mean())
    amps = 2.0 * np.abs(spec) / n
    a1 = float(amps[1])
    if a1 == 0.0:
        thd = math.inf
    else:
        thd = float(np.sqrt(np.sum(amps[2:] ** 2)) / a1)
    out1 = 2.0 * spec[1] / n  # output fundamental = Re(out1 * e^{i theta})
    g1 = ppv.fourier.fundamental_complex()
    energy = ppv.fourier.harmonic_energy()
    total = float(energy.sum())
    frac = float(energy[0] / total) if total > 0.0 else 0.0
    offset = math.atan2(g1.imag, g1.real) - math.atan2(out1.imag, out1.real)
    offset = abs((offset + math.pi) % _TWO_PI - math.pi)
    return SinusoidalityReport(output_thd=thd, ppv_fundamental_fraction=frac,
                               offset_deg=math.degrees(offset))
