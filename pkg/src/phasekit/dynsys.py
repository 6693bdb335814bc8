"""Autonomous ODE systems, fixed-step integrators and level-crossing detection.

All integration here is deliberately fixed-step (explicit Euler or classic
RK4): runs are bit-reproducible, and instantaneous state jumps land exactly
on grid points.  Vector fields must accept states of shape ``(dim,)`` or
``(batch, dim)`` and operate elementwise over the leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError

FieldFn = Callable[[np.ndarray, object], np.ndarray]
JacobianFn = Callable[[np.ndarray, object], np.ndarray]


@dataclass(frozen=True)
class OdeSystem:
    """A finite-dimensional autonomous vector field with named states.

    ``field(states, params)`` must be deterministic and vectorized over a
    leading batch axis.  ``jacobian`` is optional; when absent, callers fall
    back to central finite differences.  ``output_index`` selects the state
    used as the observable waveform (phase reference, coupling output).
    """

    dim: int
    state_names: tuple[str, ...]
    field: FieldFn
    params: object
    jacobian: JacobianFn | None = None
    output_index: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if len(self.state_names) != self.dim:
            raise ValueError("state_names length must equal dim")
        if not 0 <= self.output_index < self.dim:
            raise ValueError(f"output_index {self.output_index} out of range")

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return self.field(states, self.params)


@dataclass(frozen=True)
class Trajectory:
    """Dense fixed-step record of a single integration run."""

    times: np.ndarray   # (n+1,) strictly increasing, uniform spacing
    states: np.ndarray  # (n+1, dim)
    step: float

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def output(self, state_index: int) -> np.ndarray:
        return self.states[:, state_index]


@dataclass(frozen=True)
class ImpulseEvent:
    """Instantaneous state jump applied once, at the grid point nearest `at`.

    The jump lands between the incoming and outgoing derivative evaluations:
    the recorded state at the event time is the post-jump state.
    """

    at: float
    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("impulse delta must be finite")


def _euler_step(field: FieldFn, params, x: np.ndarray, h: float,
                extra: np.ndarray | None) -> np.ndarray:
    k1 = field(x, params)
    if extra is not None:
        k1 = k1 + extra
    return x + h * k1


def _rk4_step(field: FieldFn, params, x: np.ndarray, h: float,
              extra: np.ndarray | None) -> np.ndarray:
    if extra is None:
        k1 = field(x, params)
        k2 = field(x + (0.5 * h) * k1, params)
        k3 = field(x + (0.5 * h) * k2, params)
        k4 = field(x + h * k3, params)
    else:
        k1 = field(x, params) + extra
        k2 = field(x + (0.5 * h) * k1, params) + extra
        k3 = field(x + (0.5 * h) * k2, params) + extra
        k4 = field(x + h * k3, params) + extra
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


_STEPPERS = {"euler": _euler_step, "rk4": _rk4_step}


def run_fixed_step(field: FieldFn, params, x0: np.ndarray, t0: float,
                   n_steps: int, step: float, method: str = "rk4",
                   jumps: dict[int, list[tuple[int, np.ndarray]]] | None = None,
                   forcings: Sequence[tuple[int, int, int, np.ndarray]] = ()
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Batched fixed-step integration engine.

    x0: (batch, dim) initial states.
    jumps: grid index -> list of (row, delta) state jumps, applied after the
        step that lands on that index (and before it is recorded).
    forcings: (row, k_start, k_end, rate) additive constant derivative
        contributions, active while k_start <= step index < k_end.

    Returns (times (n+1,), states (n+1, batch, dim)).  Elementwise arithmetic
    makes results for each row independent of the batch they ran in.
    """
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    if method not in _STEPPERS:
        raise ValueError(f"unknown method {method!r}; use 'euler' or 'rk4'")
    stepper = _STEPPERS[method]
    x0 = np.asarray(x0, dtype=float)
    batch, dim = x0.shape
    times = t0 + step * np.arange(n_steps + 1)
    out = np.empty((n_steps + 1, batch, dim))

    starts: dict[int, list[tuple[int, np.ndarray]]] = {}
    ends: dict[int, list[tuple[int, np.ndarray]]] = {}
    for row, k_start, k_end, rate in forcings:
        starts.setdefault(k_start, []).append((row, rate))
        ends.setdefault(k_end, []).append((row, rate))
    extra = np.zeros((batch, dim)) if forcings else None
    active = 0

    x = x0.copy()
    if jumps and 0 in jumps:
        for row, delta in jumps[0]:
            x[row] += delta
    out[0] = x
    for k in range(n_steps):
        if extra is not None:
            if k in starts:
                for row, rate in starts[k]:
                    extra[row] += rate
                    active += 1
            if k in ends:
                for row, rate in ends[k]:
                    extra[row] -= rate
                    active -= 1
        x = stepper(field, params, x, step, extra if active else None)
        if jumps and (k + 1) in jumps:
            for row, delta in jumps[k + 1]:
                x[row] += delta
        out[k + 1] = x
    return times, out


def _check_finite(times: np.ndarray, states: np.ndarray) -> None:
    finite = np.isfinite(states).all(axis=tuple(range(1, states.ndim)))
    if not finite.all():
        first = int(np.argmin(finite))
        raise DivergenceError(float(times[first]))


def integrate(sys: OdeSystem, x0, t0: float, t1: float, step: float,
              method: str = "rk4",
              events: Sequence[ImpulseEvent] = ()) -> Trajectory:
    """Integrate over [t0, t1], snapping the horizon to a whole step count.

    Impulse events are snapped to the nearest grid point; the jump is applied
    between the incoming and outgoing derivative evaluations.
    """
    if t1 <= t0:
        raise ValueError(f"t1 must exceed t0, got [{t0}, {t1}]")
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    n_steps = max(1, int(round((t1 - t0) / step)))
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise ValueError(f"x0 must have shape ({sys.dim},), got {x0.shape}")

    jumps: dict[int, list[tuple[int, np.ndarray]]] = {}
    slack = 0.5 * step
    for ev in events:
        if not (t0 - slack <= ev.at <= t0 + n_steps * step + slack):
            raise ValueError(f"event time {ev.at} outside [{t0}, {t1}]")
        k = min(n_steps, max(0, int(round((ev.at - t0) / step))))
        jumps.setdefault(k, []).append((0, ev.delta))

    times, states = run_fixed_step(sys.field, sys.params, x0[None, :], t0,
                                   n_steps, step, method, jumps or None)
    _check_finite(times, states)
    return Trajectory(times=times, states=states[:, 0, :], step=step)


def crossing_times(traj: Trajectory, state_index: int, level: float,
                   direction: str = "rising") -> np.ndarray:
    """Linear-interpolation roots of states[state_index] - level.

    Rising crossings require y[k] < 0 <= y[k+1]; falling ones the mirror.
    Returns strictly increasing times (empty array when nothing crosses).
    """
    if not 0 <= state_index < traj.dim:
        raise ValueError(f"state_index {state_index} out of range")
    y = traj.states[:, state_index] - level
    if direction == "rising":
        hit = (y[:-1] < 0.0) & (y[1:] >= 0.0)
    elif direction == "falling":
        hit = (y[:-1] > 0.0) & (y[1:] <= 0.0)
    else:
        raise ValueError(f"direction must be 'rising' or 'falling', got {direction!r}")
    idx = np.nonzero(hit)[0]
    if idx.size == 0:
        return np.empty(0)
    frac = y[idx] / (y[idx] - y[idx + 1])
    return traj.times[idx] + frac * (traj.times[idx + 1] - traj.times[idx])


def numerical_jacobian(field: FieldFn, params, x: np.ndarray,
                       scale: np.ndarray | float = 1.0) -> np.ndarray:
    """Central finite-difference Jacobian, step 1e-6 per unit of state scale."""
    x = np.asarray(x, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), x.shape)
    h = 1e-6 * np.maximum(scale, 1e-30)
    dim = x.shape[-1]
    cols = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h[j]
        cols.append((field(x + e, params) - field(x - e, params)) / (2.0 * h[j]))
    return np.stack(cols, axis=-1)
