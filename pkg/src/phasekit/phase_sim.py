"""Phase-domain macromodel: time-shift dynamics, locking, coupled networks.

Each oscillator is reduced to (omega0, gamma); its state is the time shift
alpha, advanced by RK4 on d(alpha)/dt = gamma(omega0*(t + alpha)) * b(t).
Output waveforms for coupling are reconstructed from the stored orbit by
periodic linear interpolation in phase (amplitude dynamics are dropped).
Network updates are synchronous: within one step every source alpha is
frozen at its step-start value while stage times still advance.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynsys import OdeSystem, Trajectory, integrate
from .errors import PhasekitError
from .limit_cycle import refined_crossings
from .models import InjectionPort
from .ppv import PpvCurve

_TWO_PI = 2.0 * math.pi

DEFAULT_NETWORK_STEPS_PER_PERIOD = 500
DEFAULT_LOCK_STEPS_PER_CYCLE = 500


@dataclass
class PhaseOscillator:
    """One oscillator reduced to its frequency, sensitivity and time shift."""

    omega0: float
    gamma: PpvCurve
    alpha: float = 0.0

    def __post_init__(self):
        if abs(self.gamma.lc.omega0 - self.omega0) > 1e-9 * abs(self.omega0):
            raise ValueError(
                "gamma was extracted at a different frequency than omega0")

    @property
    def T0(self) -> float:
        return _TWO_PI / self.omega0

    def output(self, phase: float) -> float:
        """Orbit output reconstructed at a phase (periodic linear interpolation)."""
        w = self.gamma.lc.output_waveform()
        n = w.size
        pos = (phase % _TWO_PI) / _TWO_PI * n
        k = int(pos) % n
        frac = pos - int(pos)
        return float(w[k] + frac * (w[(k + 1) % n] - w[k]))


@dataclass(frozen=True)
class LinearKernel:
    """Linear coupling kernel: source output value -> injected amperes."""

    gain: float

    def __call__(self, v):
        return self.gain * v


@dataclass(frozen=True)
class Injection:
    target: int
    waveform: Callable[[float], float]  # seconds -> amperes


@dataclass(frozen=True)
class Coupling:
    source: int
    target: int
    kernel: Callable[[float], float]  # source output value -> amperes


@dataclass(frozen=True)
class PhaseNetwork:
    oscillators: list[PhaseOscillator]
    injections: list[Injection] = field(default_factory=list)
    couplings: list[Coupling] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.oscillators)
        for inj in self.injections:
            if not 0 <= inj.target < n:
                raise ValueError(f"injection target {inj.target} out of range")
        for c in self.couplings:
            if not (0 <= c.source < n and 0 <= c.target < n):
                raise ValueError(f"coupling {c.source}->{c.target} out of range")


@dataclass(frozen=True)
class PhaseTrace:
    times: np.ndarray   # (n,)
    alphas: np.ndarray  # (n, m) seconds
    phases: np.ndarray  # (n, m) omega0_i*(t + alpha_i) mod 2pi


@dataclass(frozen=True)
class LockReport:
    locked: bool
    steady_phase_deg: float | None
    beat_freq: float | None  # rad/s secular slip when unlocked


def phase_step(osc: PhaseOscillator, b_of_t: Callable[[float], float],
               t: float, dt: float) -> float:
    """One RK4 step of d(alpha)/dt = gamma(omega0*(t+alpha)) * b(t)."""
    if dt > osc.T0 / 200.0:
        raise ValueError(
            f"dt={dt:g} too coarse; need dt <= T0/200 = {osc.T0 / 200.0:g}")
    g = osc.gamma.fourier.eval_scalar
    w0 = osc.omega0
    a = osc.alpha
    b1 = b_of_t(t)
    b2 = b_of_t(t + 0.5 * dt)
    b4 = b_of_t(t + dt)
    if not (math.isfinite(b1) and math.isfinite(b2) and math.isfinite(b4)):
        raise PhasekitError(f"non-finite injection waveform near t={t!r}")
    k1 = g(w0 * (t + a)) * b1
    k2 = g(w0 * (t + 0.5 * dt + a + 0.5 * dt * k1)) * b2
    k3 = g(w0 * (t + 0.5 * dt + a + 0.5 * dt * k2)) * b2
    k4 = g(w0 * (t + dt + a + dt * k3)) * b4
    return a + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def adler_lock_range(gamma: PpvCurve, amp: float) -> float:
    """Half-width (rad/s) of the first-harmonic locking range for amp*cos."""
    r1 = math.hypot(float(gamma.fourier.a[0]), float(gamma.fourier.b[0]))
    return 0.5 * gamma.lc.omega0 * abs(amp) * r1


def injection_lock(osc: PhaseOscillator, amp: float, w_inj: float,
                   horizon_periods: int,
                   steps_per_cycle: int = DEFAULT_LOCK_STEPS_PER_CYCLE,
                   lock_rel_tol: float = 1e-4,
                   settle_cycles: int = 5) -> LockReport:
    """Drive with amp*cos(w_inj*t) and decide lock from the cycle-mean frequency.

    Locked means the per-cycle average of omega0*(1 + d(alpha)/dt) stays
    within lock_rel_tol of w_inj for ``settle_cycles`` consecutive cycles.
    """
    if not w_inj > 0.0:
        raise ValueError("w_inj must be positive")
    if abs(w_inj - osc.omega0) > 0.2 * osc.omega0:
        raise ValueError("injection_lock assumes near-resonant drive "
                         "(|w_inj - omega0| <= 0.2*omega0)")
    t_cycle = _TWO_PI / w_inj
    dt = t_cycle / steps_per_cycle

    def b_of_t(t: float) -> float:
        return amp * math.cos(w_inj * t)

    work = PhaseOscillator(osc.omega0, osc.gamma, osc.alpha)
    cycle_alphas = [osc.alpha]
    in_tol = 0
    locked = False
    for m in range(horizon_periods):
        base = m * steps_per_cycle
        for i in range(steps_per_cycle):
            work.alpha = phase_step(work, b_of_t, (base + i) * dt, dt)
        cycle_alphas.append(work.alpha)
        freq = osc.omega0 * (1.0 + (cycle_alphas[-1] - cycle_alphas[-2]) / t_cycle)
        in_tol = in_tol + 1 if abs(freq - w_inj) <= lock_rel_tol * w_inj else 0
        if in_tol >= settle_cycles:
            locked = True
            break
    t_end = (len(cycle_alphas) - 1) * t_cycle
    if locked:
        psi = osc.omega0 * (t_end + work.alpha) - w_inj * t_end
        psi = (psi + math.pi) % _TWO_PI - math.pi
        return LockReport(locked=True, steady_phase_deg=math.degrees(psi),
                          beat_freq=None)
    half = len(cycle_alphas) // 2
    dt_span = (len(cycle_alphas) - 1 - half) * t_cycle
    beat = (osc.omega0 - w_inj) + osc.omega0 * (
        (cycle_alphas[-1] - cycle_alphas[half]) / dt_span)
    return LockReport(locked=False, steady_phase_deg=None, beat_freq=beat)


def simulate_network(net: PhaseNetwork, t_end: float,
                     dt: float | None = None,
                     record_every: int = 1) -> PhaseTrace:
    """Synchronous phase-domain simulation of a coupled oscillator network."""
    m = len(net.oscillators)
    if m == 0:
        raise ValueError("network has no oscillators")
    w0 = np.array([o.omega0 for o in net.oscillators])
    t0_min = float(_TWO_PI / w0.max())
    if dt is None:
        dt = t0_min / DEFAULT_NETWORK_STEPS_PER_PERIOD
    if dt > t0_min / 200.0:
        raise ValueError(
            f"dt={dt:g} too coarse; need dt <= min(T0)/200 = {t0_min / 200.0:g}")
    n_steps = max(1, int(round(t_end / dt)))

    in_edges: list[list[Coupling]] = [[] for _ in range(m)]
    for c in net.couplings:
        in_edges[c.target].append(c)
    in_waves: list[list[Injection]] = [[] for _ in range(m)]
    for inj in net.injections:
        in_waves[inj.target].append(inj)
    gammas = [o.gamma.fourier.eval_scalar for o in net.oscillators]
    outputs = [o.output for o in net.oscillators]

    alphas = np.array([o.alpha for o in net.oscillators])
    n_rec = n_steps // record_every + 1
    rec_t = np.empty(n_rec)
    rec_a = np.empty((n_rec, m))
    rec_t[0] = 0.0
    rec_a[0] = alphas
    row = 1

    for k in range(n_steps):
        t = k * dt
        frozen = alphas.copy()

        def drive(i: int, tau: float) -> float:
            s = 0.0
            for c in in_edges[i]:
                out = outputs[c.source](w0[c.source] * (tau + frozen[c.source]))
                cur = c.kernel(out)
                if not math.isfinite(cur):
                    raise PhasekitError(
                        f"coupling {c.source}->{c.target} produced a "
                        f"non-finite current at t={tau!r}")
                s += cur
            for inj in in_waves[i]:
                val = inj.waveform(tau)
                if not math.isfinite(val):
                    raise PhasekitError(
                        f"injection into oscillator {i} is non-finite at t={tau!r}")
                s += val
            return s

        for i in range(m):
            a = alphas[i]
            g = gammas[i]
            w = w0[i]
            b1 = drive(i, t)
            b2 = drive(i, t + 0.5 * dt)
            b4 = drive(i, t + dt)
            k1 = g(w * (t + a)) * b1
            k2 = g(w * (t + 0.5 * dt + a + 0.5 * dt * k1)) * b2
            k3 = g(w * (t + 0.5 * dt + a + 0.5 * dt * k2)) * b2
            k4 = g(w * (t + dt + a + dt * k3)) * b4
            alphas[i] = a + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if (k + 1) % record_every == 0:
            rec_t[row] = (k + 1) * dt
            rec_a[row] = alphas
            row += 1

    rec_t = rec_t[:row]
    rec_a = rec_a[:row]
    phases = (w0[None, :] * (rec_t[:, None] + rec_a)) % _TWO_PI
    return PhaseTrace(times=rec_t, alphas=rec_a, phases=phases)


def _staircase_phase(crossings: np.ndarray, k0: int, t: float) -> float:
    """Full-ODE phase at time t, linear between section crossings."""
    m = int(np.searchsorted(crossings, t)) - 1
    m = max(0, min(m, crossings.size - 2))
    frac = (t - crossings[m]) / (crossings[m + 1] - crossings[m])
    return _TWO_PI * (k0 + m + frac)


def _model_phase(trace: PhaseTrace, omega0: float, i: int, t: float) -> float:
    alpha = float(np.interp(t, trace.times, trace.alphas[:, i]))
    return omega0 * (t + alpha)


@dataclass(frozen=True)
class CosimReport:
    """Phase-model vs full-ODE co-simulation comparison."""

    phase_err_deg: np.ndarray  # per-oscillator max |phase difference|
    speedup: float             # full-ODE wall clock / phase-model wall clock
    trace: PhaseTrace
    full_crossings: list
    cycle_offsets: np.ndarray
    _omega0: tuple = ()

    def model_phase(self, i: int, t: float) -> float:
        """Unwrapped phase-model phase of oscillator i at time t."""
        return _model_phase(self.trace, self._omega0[i], i, t)

    def full_phase(self, i: int, t: float) -> float:
        """Unwrapped full-ODE phase of oscillator i at time t."""
        return _staircase_phase(self.full_crossings[i],
                                int(self.cycle_offsets[i]), t)


def cosim_compare(net: PhaseNetwork, full_systems: Sequence[OdeSystem],
                  t_end: float, ports: Sequence[InjectionPort],
                  step_divisor: int = 2000,
                  dt: float | None = None) -> CosimReport:
    """Run the phase model and a coupled full-ODE simulation side by side.

    The full model stacks the member ODEs and injects each coupling current
    (kernel applied to the actual source output state) into the target's
    port.  Phases of the full run are read off from section crossings and
    compared against the phase model at those times.
    """
    m = len(net.oscillators)
    if len(full_systems) != m or len(ports) != m:
        raise ValueError("full_systems and ports must match the network size")
    if net.injections:
        raise ValueError("co-simulation supports coupled free-running "
                         "networks; external injections are not modelled")
    lcs = [o.gamma.lc for o in net.oscillators]
    w0 = [o.omega0 for o in net.oscillators]

    offsets = np.cumsum([0] + [s.dim for s in full_systems])
    total_dim = int(offsets[-1])

    def combined_field(states: np.ndarray, _params) -> np.ndarray:
        parts = [full_systems[i].field(states[..., offsets[i]:offsets[i + 1]],
                                       full_systems[i].params)
                 for i in range(m)]
        for c in net.couplings:
            src_out = states[..., offsets[c.source]
                             + full_systems[c.source].output_index]
            cur = c.kernel(src_out)
            parts[c.target][..., ports[c.target].state_index] += \
                ports[c.target].gain * cur
        return np.concatenate(parts, axis=-1)

    combined = OdeSystem(
        dim=total_dim,
        state_names=tuple(f"{name}_{i}" for i, s in enumerate(full_systems)
                          for name in s.state_names),
        field=combined_field,
        params=None,
    )
    x0 = np.concatenate([lcs[i].state_at_phase(w0[i] * net.oscillators[i].alpha)
                         for i in range(m)])
    step = min(lc.T0 for lc in lcs) / step_divisor

    t_start = time.perf_counter()
    trace = simulate_network(net, t_end, dt)
    wall_phase = time.perf_counter() - t_start

    t_start = time.perf_counter()
    full = integrate(combined, x0, 0.0, t_end, step)
    wall_full = time.perf_counter() - t_start

    errs = np.empty(m)
    crossing_lists = []
    k0s = np.empty(m, dtype=int)
    for i in range(m):
        y = full.states[:, offsets[i] + full_systems[i].output_index]
        cross = refined_crossings(full.times, y, lcs[i].ref_level, "rising")
        if cross.size < 2:
            raise PhasekitError(
                f"full-ODE run of oscillator {i} shows no repeated section "
                "crossings; it stopped oscillating")
        k0 = int(round(_model_phase(trace, w0[i], i, float(cross[0])) / _TWO_PI))
        diffs = [(_model_phase(trace, w0[i], i, float(tc))
                  - _TWO_PI * (k0 + j)) for j, tc in enumerate(cross)]
        errs[i] = math.degrees(float(np.max(np.abs(diffs))))
        crossing_lists.append(cross)
        k0s[i] = k0
    return CosimReport(phase_err_deg=errs,
                       speedup=wall_full / max(wall_phase, 1e-12),
                       trace=trace, full_crossings=crossing_lists,
                       cycle_offsets=k0s, _omega0=tuple(w0))
