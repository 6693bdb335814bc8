"""Phase response curve extraction by impulse injection.

A weak current impulse of charge q = h*b is injected at a grid of times
t1 spanning one period; for each injection the asymptotic phase shift
against an identically started free run gives one PRC point.  The free run
is shared across all points of a sweep, and injected runs are integrated in
fixed-size batches so results never depend on how many worker threads run
the sweep.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dynsys import OdeSystem, Trajectory, run_fixed_step, _check_finite
from .errors import TooStrongImpulseError
from .limit_cycle import (DEFAULT_CROSSINGS, DEFAULT_DISCARD_PERIODS,
                          DEFAULT_PERIOD_TOL, LimitCycle, _shift_from_crossings,
                          _tail_crossings)
from .models import InjectionPort

DEFAULT_STEP_DIVISOR = 2000
DEFAULT_TARGET_PRC = 0.05
_CHUNK = 32  # fixed batch width; independent of thread count by design


@dataclass(frozen=True)
class ImpulseSpec:
    """Injected impulse: width h (s), peak b (A), and its entry port.

    In ``state_jump`` mode the impulse is an exact jump of q*gain on the
    port state.  ``rect_pulse`` applies a constant current over a window of
    whole integration steps, rescaled so the delivered charge is exactly q;
    it exists to check how well a narrow pulse approximates the jump.
    """

    h: float
    b: float
    port: InjectionPort
    mode: str = "state_jump"

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"pulse width h must be > 0, got {self.h}")
        if not math.isfinite(self.b):
            raise ValueError(f"pulse peak b must be finite, got {self.b}")
        if self.mode not in ("state_jump", "rect_pulse"):
            raise ValueError(f"mode must be 'state_jump' or 'rect_pulse', got {self.mode!r}")

    @property
    def q(self) -> float:
        """Injected charge in coulombs."""
        return self.h * self.b


@dataclass(frozen=True)
class PrcCurve:
    """Measured phase shifts over one period of injection times."""

    lc: LimitCycle
    impulse: ImpulseSpec
    t1: np.ndarray      # (n,) injection times in [0, T0), strictly increasing
    theta1: np.ndarray  # (n,) = omega0 * t1
    prc: np.ndarray     # (n,) asymptotic phase shifts, radians

    def __post_init__(self):
        t1 = np.asarray(self.t1, dtype=float)
        if t1.size and not (np.all(np.diff(t1) > 0.0)
                            and t1[0] >= 0.0 and t1[-1] < self.lc.T0):
            raise ValueError("t1 must be strictly increasing within [0, T0)")
        scale = np.maximum(np.abs(self.theta1), 1.0)
        if t1.size and np.max(np.abs(self.theta1 - self.lc.omega0 * t1) / scale) > 1e-12:
            raise ValueError("theta1 must equal omega0 * t1")


@dataclass(frozen=True)
class LinearityReport:
    """Outcome of the half-charge linearity check."""

    linear: bool
    deviation: float  # max pointwise violation / max |prc|


def _sweep_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PHASEKIT_THREADS")
    if env is not None:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _measure_shifts(sys: OdeSystem, lc: LimitCycle, impulse: ImpulseSpec,
                    t1_values: np.ndarray, step: float,
                    discard_periods: int, n_crossings: int,
                    period_tol: float, method: str, wrap_guard: bool,
                    threads: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Measure phase shifts for many injection times; returns (t1_snapped, prc)."""
    T0 = lc.T0
    # discard+1 periods cover both the injection window and re-stabilization
    horizon_periods = discard_periods + 1 + n_crossings + 3
    n_steps = int(math.ceil(horizon_periods * T0 / step))
    x0 = lc.orbit[0]

    times, free_states = run_fixed_step(sys.field, sys.params, x0[None, :],
                                        0.0, n_steps, step, method)
    _check_finite(times, free_states)
    free = Trajectory(times=times, states=free_states[:, 0, :], step=step)
    cross_free = _tail_crossings(free, lc, discard_periods + 1)

    k1 = np.rint(np.asarray(t1_values, dtype=float) / step).astype(int)
    t1_snapped = k1 * step
    delta = np.zeros(sys.dim)
    delta[impulse.port.state_index] = impulse.q * impulse.port.gain
    n_pulse = max(1, int(round(impulse.h / step)))
    rate = delta / (n_pulse * step)

    def run_chunk(chunk_idx: np.ndarray) -> np.ndarray:
        batch = chunk_idx.size
        x0b = np.broadcast_to(x0, (batch, sys.dim)).copy()
        jumps: dict[int, list] = {}
        forcings = []
        for row, j in enumerate(chunk_idx):
            if impulse.mode == "state_jump":
                jumps.setdefault(int(k1[j]), []).append((row, delta))
            else:
                forcings.append((row, int(k1[j]), int(k1[j]) + n_pulse, rate))
        ts, states = run_fixed_step(sys.field, sys.params, x0b, 0.0, n_steps,
                                    step, method, jumps or None, forcings)
        _check_finite(ts, states)
        shifts = np.empty(batch)
        for row in range(batch):
            traj = Trajectory(times=ts, states=states[:, row, :], step=step)
            cp = _tail_crossings(traj, lc, discard_periods + 1)
            shifts[row] = _shift_from_crossings(cross_free, cp, lc,
                                                n_crossings, period_tol)
        return shifts

    chunks = [np.arange(lo, min(lo + _CHUNK, len(k1)))
              for lo in range(0, len(k1), _CHUNK)]
    n_workers = _sweep_threads(threads)
    if n_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    prc = np.concatenate(parts) if parts else np.empty(0)

    if wrap_guard and prc.size and np.max(np.abs(prc)) > 0.5 * math.pi:
        worst = float(prc[np.argmax(np.abs(prc))])
        raise TooStrongImpulseError(
            f"measured shift {worst:.4f} rad exceeds pi/2; the impulse is too "
            "strong for unambiguous weak-injection phase unwrapping")
    return t1_snapped, prc


def measure_prc_point(sys: OdeSystem, lc: LimitCycle, impulse: ImpulseSpec,
                      t1: float, step: float | None = None,
                      discard_periods: int = DEFAULT_DISCARD_PERIODS,
                      n_crossings: int = DEFAULT_CROSSINGS,
                      period_tol: float = DEFAULT_PERIOD_TOL,
                      method: str = "rk4", wrap_guard: bool = True) -> float:
    """Phase shift (radians) for one impulse injected at absolute time t1.

    Both the free and the injected run start from the section-anchored state
    (orbit row 0); t1 is snapped to the integration grid.
    """
    if not 0.0 <= t1 < lc.T0:
        raise ValueError(f"t1 must lie in [0, T0), got {t1}")
    if step is None:
        step = lc.T0 / DEFAULT_STEP_DIVISOR
    _, prc = _measure_shifts(sys, lc, impulse, np.array([t1]), step,
                             discard_periods, n_crossings, period_tol,
                             method, wrap_guard, threads=1)
    return float(prc[0])


def sweep_prc(sys: OdeSystem, lc: LimitCycle, impulse: ImpulseSpec,
              n_points: int = 100, step: float | None = None,
              discard_periods: int = DEFAULT_DISCARD_PERIODS,
              n_crossings: int = DEFAULT_CROSSINGS,
              period_tol: float = DEFAULT_PERIOD_TOL,
              method: str = "rk4", wrap_guard: bool = True,
              threads: int | None = None) -> PrcCurve:
    """PRC over one period: injections at t1 = k*T0/n_points, k = 0..n-1."""
    if n_points < 4:
        raise ValueError(f"n_points must be >= 4, got {n_points}")
    if step is None:
        step = lc.T0 / DEFAULT_STEP_DIVISOR
    if step > lc.T0 / (2.0 * n_points):
        raise ValueError(
            f"step {step:g} too coarse for {n_points} distinct injection "
            "times per period; reduce step or n_points")
    t1 = np.arange(n_points) * (lc.T0 / n_points)
    t1_snapped, prc = _measure_shifts(sys, lc, impulse, t1, step,
                                      discard_periods, n_crossings,
                                      period_tol, method, wrap_guard, threads)
    return PrcCurve(lc=lc, impulse=impulse, t1=t1_snapped,
                    theta1=lc.omega0 * t1_snapped, prc=prc)


def weakness_check(sys: OdeSystem, curve: PrcCurve, rel_tol: float = 0.05,
                   step: float | None = None,
                   discard_periods: int = DEFAULT_DISCARD_PERIODS,
                   n_crossings: int = DEFAULT_CROSSINGS,
                   period_tol: float = DEFAULT_PERIOD_TOL,
                   method: str = "rk4",
                   threads: int | None = None) -> LinearityReport:
    """Check prc(q) ~ 2*prc(q/2) pointwise via an internal half-charge sweep."""
    if step is None:
        step = curve.lc.T0 / DEFAULT_STEP_DIVISOR
    half = replace(curve.impulse, b=0.5 * curve.impulse.b)
    _, prc_half = _measure_shifts(sys, curve.lc, half, curve.t1, step,
                                  discard_periods, n_crossings, period_tol,
                                  method, wrap_guard=False, threads=threads)
    scale = float(np.max(np.abs(curve.prc))) if curve.prc.size else 0.0
    if scale == 0.0:
        return LinearityReport(linear=True, deviation=0.0)
    deviation = float(np.max(np.abs(curve.prc - 2.0 * prc_half)) / scale)
    return LinearityReport(linear=deviation <= rel_tol, deviation=deviation)


def pick_weak_charge(sys: OdeSystem, lc: LimitCycle, port: InjectionPort,
                     target_prc: float = DEFAULT_TARGET_PRC,
                     probe_points: int = 8, step: float | None = None,
                     discard_periods: int = DEFAULT_DISCARD_PERIODS,
                     n_crossings: int = DEFAULT_CROSSINGS,
                     method: str = "rk4",
                     threads: int | None = None) -> float:
    """Charge giving max |prc| near target_prc, from two coarse probe sweeps."""
    if step is None:
        step = lc.T0 / DEFAULT_STEP_DIVISOR
    span = float(np.ptp(lc.orbit[:, port.state_index]))
    q = 1e-3 * span / abs(port.gain)
    h = lc.T0 / 1000.0
    for _ in range(2):
        probe = ImpulseSpec(h=h, b=q / h, port=port)
        curve = sweep_prc(sys, lc, probe, n_points=probe_points, step=step,
                          discard_periods=discard_periods,
                          n_crossings=n_crossings, method=method,
                          wrap_guard=False, threads=threads)
        peak = float(np.max(np.abs(curve.prc)))
        if peak == 0.0 or not math.isfinite(peak):
            raise ValueError(
                "probe injection produced no measurable phase response; "
                "check the injection port and gain")
        q *= target_prc / peak
    return q
