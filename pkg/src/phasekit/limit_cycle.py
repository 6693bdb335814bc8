"""Limit-cycle settling, period estimation and asymptotic phase shifts.

Phase zero is anchored at the rising crossing of the output state through
its one-period mean (a plain zero level may never be crossed when the
waveform has a DC offset).  Internally crossings are refined with a local
4-point cubic so that period and settling checks resolve well below the
sampling error of linear interpolation; the public coarse crossing search
stays in :mod:`phasekit.dynsys`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynsys import OdeSystem, Trajectory, integrate
from .errors import ConvergenceError, NotOscillatingError, PeriodUnstableError

DEFAULT_SETTLE_TOL = 1e-8
DEFAULT_PERIOD_TOL = 1e-6
DEFAULT_MAX_SETTLE_PERIODS = 500
DEFAULT_CROSSINGS = 16
DEFAULT_GRID_SIZE = 512
DEFAULT_DISCARD_PERIODS = 20

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LimitCycle:
    """Steady-state period and orbit sampled on a uniform phase grid.

    Row k of ``orbit`` is the state at phase 2*pi*k/grid_size; row 0 sits on
    the reference section (output rising through ref_level).
    """

    T0: float
    omega0: float
    grid_size: int
    orbit: np.ndarray  # (grid_size, dim)
    ref_state_index: int
    ref_level: float
    mean_output: float

    @property
    def phases(self) -> np.ndarray:
        return _TWO_PI * np.arange(self.grid_size) / self.grid_size

    def output_waveform(self) -> np.ndarray:
        return self.orbit[:, self.ref_state_index]

    def state_at_phase(self, theta: float) -> np.ndarray:
        """Cubic-interpolated orbit state at an arbitrary phase."""
        pos = (theta % _TWO_PI) / _TWO_PI * self.grid_size
        k = int(np.floor(pos))
        frac = pos - k
        idx = [(k - 1 + j) % self.grid_size for j in range(4)]
        window = self.orbit[idx]
        return _newton_cubic_eval(window, 1.0 + frac)


# ---------------------------------------------------------------------------
# local cubic refinement helpers (uniform sampling assumed)

def _newton_cubic_coeffs(f: np.ndarray):
    """Forward-difference Newton coefficients for 4 uniform samples."""
    d1 = f[1] - f[0]
    d2 = f[2] - 2.0 * f[1] + f[0]
    d3 = f[3] - 3.0 * f[2] + 3.0 * f[1] - f[0]
    return f[0], d1, d2, d3


def _newton_cubic_eval(f: np.ndarray, s):
    """Evaluate the interpolating cubic at normalized position s in [0, 3]."""
    c0, c1, c2, c3 = _newton_cubic_coeffs(f)
    return (c0 + s * c1 + s * (s - 1.0) / 2.0 * c2
            + s * (s - 1.0) * (s - 2.0) / 6.0 * c3)


def _newton_cubic_deriv(f: np.ndarray, s):
    c0, c1, c2, c3 = _newton_cubic_coeffs(f)
    return (c1 + (s - 0.5) * c2
            + ((3.0 * s - 6.0) * s + 2.0) / 6.0 * c3)


def _cubic_root_in_bracket(f: np.ndarray, lo: float, hi: float, y_lo: float,
                           y_hi: float) -> float:
    """Root of the 4-point cubic inside [lo, hi] (normalized coordinates).

    Newton iteration guarded by bisection; the bracket is maintained using
    the cubic's own sign, so the result refines the linear-interpolation
    root rather than wandering off.
    """
    s = lo + (hi - lo) * (y_lo / (y_lo - y_hi)) if y_lo != y_hi else 0.5 * (lo + hi)
    a, b = lo, hi
    fa = _newton_cubic_eval(f, a)
    for _ in range(12):
        fs = _newton_cubic_eval(f, s)
        if fs == 0.0:
            return s
        if (fs < 0.0) == (fa < 0.0):
            a, fa = s, fs
        else:
            b = s
        ds = _newton_cubic_deriv(f, s)
        s_new = s - fs / ds if ds != 0.0 else 0.5 * (a + b)
        if not (a < s_new < b):
            s_new = 0.5 * (a + b)
        if abs(s_new - s) <= 1e-15 * max(1.0, abs(s)):
            return s_new
        s = s_new
    return s


def refined_crossings(times: np.ndarray, y: np.ndarray, level: float,
                      direction: str = "rising") -> np.ndarray:
    """Level-crossing times refined with a local 4-point cubic.

    Falls back to linear interpolation for crossings in the first or last
    sampling interval.  Sampling must be uniform.
    """
    g = y - level
    if direction == "rising":
        hit = (g[:-1] < 0.0) & (g[1:] >= 0.0)
    elif direction == "falling":
        hit = (g[:-1] > 0.0) & (g[1:] <= 0.0)
    else:
        raise ValueError(f"direction must be 'rising' or 'falling', got {direction!r}")
    idx = np.nonzero(hit)[0]
    if idx.size == 0:
        return np.empty(0)
    n = len(y)
    out = np.empty(idx.size)
    step = times[1] - times[0]
    for j, k in enumerate(idx):
        if k == 0 or k >= n - 2:
            frac = g[k] / (g[k] - g[k + 1])
            out[j] = times[k] + frac * step
        else:
            window = g[k - 1:k + 3]
            s = _cubic_root_in_bracket(window, 1.0, 2.0, g[k], g[k + 1])
            out[j] = times[k - 1] + s * step
    return out


def _interp_state(times: np.ndarray, states: np.ndarray, t: float) -> np.ndarray:
    """Cubic-interpolated full state at time t (uniform sampling)."""
    step = times[1] - times[0]
    pos = (t - times[0]) / step
    k = int(np.floor(pos))
    k = max(1, min(len(times) - 3, k))
    s = pos - (k - 1)
    return _newton_cubic_eval(states[k - 1:k + 3], s)


def _refined_max(y: np.ndarray, lo: int, hi: int) -> float:
    """Maximum of y over sample range [lo, hi), refined by a local cubic."""
    seg = y[lo:hi]
    k = lo + int(np.argmax(seg))
    if k < 1 or k > len(y) - 3:
        return float(y[k])
    window = y[k - 1:k + 3]
    c0, c1, c2, c3 = _newton_cubic_coeffs(window)
    # stationary points of the Newton cubic: quadratic in s
    qa = 0.5 * c3
    qb = c2 - c3
    qc = c1 - 0.5 * c2 + c3 / 3.0
    best = float(y[k])
    if qa == 0.0:
        roots = [-qc / qb] if qb != 0.0 else []
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0:
            roots = []
        else:
            sq = math.sqrt(disc)
            roots = [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)]
    for s in roots:
        if 0.0 <= s <= 3.0:
            best = max(best, float(_newton_cubic_eval(window, s)))
    return best


# ---------------------------------------------------------------------------
# rough period bootstrap

def _bootstrap_rough_period(sys: OdeSystem, x0: np.ndarray, step: float,
                            method: str) -> tuple[float, np.ndarray]:
    """Integrate until the output shows repeated mean-level crossings.

    Returns (rough period, end state).  Raises NotOscillatingError when no
    oscillation shows up within the bootstrap horizon.
    """
    chunk = 8192
    state = np.asarray(x0, dtype=float)
    t0 = 0.0
    tail_t: list[np.ndarray] = []
    tail_y: list[np.ndarray] = []
    for _ in range(16):
        traj = integrate(sys, state, t0, t0 + chunk * step, step, method)
        state = traj.states[-1]
        tail_t.append(traj.times[:-1])
        tail_y.append(traj.output(sys.output_index)[:-1])
        t0 = traj.times[-1]
        y = np.concatenate(tail_y)
        spread = y.max() - y.min()
        if spread <= 1e-12 * max(1.0, abs(y).max()):
            continue  # flat so far: still sliding toward an attractor
        level = y.mean()
        t_all = np.concatenate(tail_t)
        rising = (y[:-1] - level < 0.0) & (y[1:] - level >= 0.0)
        idx = np.nonzero(rising)[0]
        if idx.size >= 4:
            cross = t_all[idx]
            gaps = np.diff(cross[-min(idx.size, 9):])
            return float(np.mean(gaps)), state
        if len(tail_y) > 4:
            tail_t.pop(0)
            tail_y.pop(0)
    raise NotOscillatingError(
        "no repeated output crossings found within the bootstrap horizon; "
        "the system does not appear to oscillate at this operating point")


def _settle(sys: OdeSystem, x0, settle_periods_hint: int, step: float,
            settle_tol: float = DEFAULT_SETTLE_TOL,
            max_settle_periods: int = DEFAULT_MAX_SETTLE_PERIODS,
            method: str = "rk4") -> tuple[np.ndarray, float]:
    """Settle onto the attractor; returns (state, rough period)."""
    if settle_periods_hint < 1:
        raise ValueError("settle_periods_hint must be >= 1")
    rough, state = _bootstrap_rough_period(sys, x0, step, method)
    burn = integrate(sys, state, 0.0, settle_periods_hint * rough, step, method)
    state = burn.states[-1]

    periods_seen = 0
    prev_amp: float | None = None
    swing_first: float | None = None
    out_idx = sys.output_index
    while periods_seen <= max_settle_periods:
        traj = integrate(sys, state, 0.0, 4.0 * rough, step, method)
        state = traj.states[-1]
        y = traj.output(out_idx)
        level = float(y.mean())
        swing = float(y.max() - y.min())
        if swing_first is None:
            swing_first = max(swing, 1e-300)
        if swing < 1e-6 * swing_first:
            raise NotOscillatingError(
                "output swing collapsed while settling; the trajectory is "
                "falling into a fixed point, not a limit cycle")
        cross = refined_crossings(traj.times, y, level, "rising")
        if cross.size < 2:
            raise NotOscillatingError(
                "output stopped crossing its mean level while settling")
        idx = np.searchsorted(traj.times, cross)
        for j in range(cross.size - 1):
            amp = _refined_max(y, idx[j], max(idx[j] + 2, idx[j + 1]))
            if prev_amp is not None:
                ref = max(abs(amp), 1e-300)
                if abs(amp - prev_amp) < settle_tol * ref:
                    return state, rough
            prev_amp = amp
            periods_seen += 1
        rough = float(np.mean(np.diff(cross)))
    raise ConvergenceError(
        f"cycle amplitude still drifting after {max_settle_periods} periods; "
        "raise max_settle_periods or loosen settle_tol")


def settle(sys: OdeSystem, x0, settle_periods_hint: int, step: float,
           settle_tol: float = DEFAULT_SETTLE_TOL,
           max_settle_periods: int = DEFAULT_MAX_SETTLE_PERIODS,
           method: str = "rk4") -> np.ndarray:
    """Integrate until successive cycle amplitudes agree to settle_tol."""
    state, _ = _settle(sys, x0, settle_periods_hint, step, settle_tol,
                       max_settle_periods, method)
    return state


def _window_mean(times: np.ndarray, y: np.ndarray, t_lo: float,
                 t_hi: float) -> float:
    """Trapezoid mean of y over [t_lo, t_hi], snapped to the sample grid."""
    lo = int(np.searchsorted(times, t_lo))
    hi = int(np.searchsorted(times, t_hi))
    hi = min(max(hi, lo + 2), len(times))
    seg = y[lo:hi]
    return float((0.5 * (seg[0] + seg[-1]) + seg[1:-1].sum()) / (len(seg) - 1))


def find_period(sys: OdeSystem, settled, step: float,
                n_crossings: int = DEFAULT_CROSSINGS,
                grid_size: int = DEFAULT_GRID_SIZE,
                period_tol: float = DEFAULT_PERIOD_TOL,
                method: str = "rk4") -> LimitCycle:
    """Estimate T0 from section crossings and sample one closed orbit.

    The reference level is the one-period time average of the output; T0 is
    the mean gap between the last ``n_crossings`` rising crossings, with the
    level refined once after the first period estimate.
    """
    settled = np.asarray(settled, dtype=float)
    rough, state = _bootstrap_rough_period(sys, settled, step, method)
    horizon = (n_crossings + 8) * rough
    traj = integrate(sys, state, 0.0, horizon, step, method)
    y = traj.output(sys.output_index)

    level = _window_mean(traj.times, y, traj.times[-1] - rough, traj.times[-1])
    cross = refined_crossings(traj.times, y, level, "rising")
    for _ in range(2):
        if cross.size >= n_crossings + 1:
            break
        horizon *= 2.0
        traj = integrate(sys, state, 0.0, horizon, step, method)
        y = traj.output(sys.output_index)
        level = _window_mean(traj.times, y, traj.times[-1] - rough, traj.times[-1])
        cross = refined_crossings(traj.times, y, level, "rising")
    if cross.size < n_crossings + 1:
        raise NotOscillatingError(
            f"found only {cross.size} reference crossings; cannot estimate a period")

    t_est = float(np.mean(np.diff(cross[-(n_crossings + 1):])))
    level = _window_mean(traj.times, y, cross[-1] - t_est, cross[-1])
    cross = refined_crossings(traj.times, y, level, "rising")
    if cross.size < n_crossings + 1:
        raise PeriodUnstableError("reference-level refinement lost crossings")
    gaps = np.diff(cross[-(n_crossings + 1):])
    T0 = float(np.mean(gaps))
    spread = float(np.max(np.abs(gaps - T0)))
    if spread > period_tol * T0:
        raise PeriodUnstableError(
            f"crossing-interval spread {spread / T0:.3e} (relative) exceeds "
            f"period_tol={period_tol:g}; the cycle is not period-stable yet")

    anchor_t = float(cross[-1])
    anchor = _interp_state(traj.times, traj.states, anchor_t)

    m = max(1, int(math.ceil(T0 / (grid_size * step))))
    orbit_step = T0 / (grid_size * m)
    orbit_traj = integrate(sys, anchor, 0.0, grid_size * m * orbit_step,
                           orbit_step, method)
    orbit = orbit_traj.states[: grid_size * m : m].copy()
    mean_output = float(orbit_traj.output(sys.output_index)[:-1].mean())

    return LimitCycle(
        T0=T0,
        omega0=_TWO_PI / T0,
        grid_size=grid_size,
        orbit=orbit,
        ref_state_index=sys.output_index,
        ref_level=level,
        mean_output=mean_output,
    )


def _wrap_phase(shift: float) -> float:
    """Wrap to (-pi, pi]."""
    w = shift % _TWO_PI
    if w > math.pi:
        w -= _TWO_PI
    return w


def _tail_crossings(traj: Trajectory, lc: LimitCycle,
                    discard_periods: int) -> np.ndarray:
    y = traj.output(lc.ref_state_index)
    cross = refined_crossings(traj.times, y, lc.ref_level, "rising")
    t_min = traj.times[0] + discard_periods * lc.T0
    return cross[cross > t_min]


def _shift_from_crossings(cross_free: np.ndarray, cross_pert: np.ndarray,
                          lc: LimitCycle, n_crossings: int,
                          period_tol: float) -> float:
    if cross_free.size < n_crossings + 1 or cross_pert.size < n_crossings + 1:
        raise ConvergenceError(
            "too few reference crossings left after the discard window; "
            "integrate longer or discard fewer periods")
    for cross in (cross_free, cross_pert):
        gaps = np.diff(cross[-(n_crossings + 1):])
        drift = float(np.max(np.abs(gaps - lc.T0)))
        if drift > period_tol * lc.T0:
            raise ConvergenceError(
                f"crossing gaps still drift {drift / lc.T0:.3e} (relative) from T0; "
                "the oscillator has not re-stabilized -- run longer or "
                "discard more periods")
    diffs = cross_free[-n_crossings:] - cross_pert[-n_crossings:]
    return _wrap_phase(lc.omega0 * float(np.mean(diffs)))


def asymptotic_phase_shift(free: Trajectory, perturbed: Trajectory,
                           lc: LimitCycle,
                           discard_periods: int = DEFAULT_DISCARD_PERIODS,
                           n_crossings: int = DEFAULT_CROSSINGS,
                           period_tol: float = DEFAULT_PERIOD_TOL) -> float:
    """Long-run phase shift of `perturbed` relative to `free`, in radians.

    Crossing pairs are matched by index from the trajectory tails after
    discarding ``discard_periods`` periods; the result is wrapped to
    (-pi, pi] with positive values meaning a phase advance (the perturbed
    run crosses the section earlier).
    """
    cf = _tail_crossings(free, lc, discard_periods)
    cp = _tail_crossings(perturbed, lc, discard_periods)
    return _shift_from_crossings(cf, cp, lc, n_crossings, period_tol)
