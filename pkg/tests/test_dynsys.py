import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import phasekit as pk
from phasekit.dynsys import OdeSystem


def _const_system(dim=2):
    return OdeSystem(dim=dim, state_names=tuple(f"s{i}" for i in range(dim)),
                     field=lambda s, p: np.zeros_like(s), params=None)


def _decay_system():
    return OdeSystem(dim=1, state_names=("x",),
                     field=lambda s, p: -s, params=None)


def test_zero_field_keeps_state():
    traj = pk.integrate(_const_system(), [1.0, 2.0], 0.0, 1.0, 0.01)
    assert np.all(traj.states == [1.0, 2.0])


def test_rk4_single_step_matches_exponential():
    # closed-form oracle: x(0.1) = exp(-0.1) for dx/dt = -x, x0 = 1
    traj = pk.integrate(_decay_system(), [1.0], 0.0, 0.1, 0.1, method="rk4")
    assert traj.states.shape == (2, 1)
    assert abs(traj.states[-1, 0] - math.exp(-0.1)) < 1e-6


def test_impulse_on_zero_field():
    ev = pk.ImpulseEvent(at=0.5, delta=[0.1])
    traj = pk.integrate(_const_system(dim=1), [1.0], 0.0, 1.0, 0.01,
                        events=[ev])
    assert traj.states[-1, 0] == pytest.approx(1.1, abs=0.0)
    k = int(round(0.5 / 0.01))
    assert traj.states[k - 1, 0] == 1.0
    assert traj.states[k, 0] == 1.1


def test_zero_delta_impulse_is_bit_identical():
    sys_ = pk.vdp_system(1.0)
    base = pk.integrate(sys_, [0.3, 0.1], 0.0, 5.0, 0.01)
    ev = pk.ImpulseEvent(at=2.5, delta=[0.0, 0.0])
    with_ev = pk.integrate(sys_, [0.3, 0.1], 0.0, 5.0, 0.01, events=[ev])
    assert np.array_equal(base.states, with_ev.states)


def _global_error(method, step):
    traj = pk.integrate(_decay_system(), [1.0], 0.0, 1.0, step, method=method)
    return abs(traj.states[-1, 0] - math.exp(-1.0))


@pytest.mark.parametrize("method,min_order", [("euler", 0.9), ("rk4", 3.5)])
def test_convergence_order(method, min_order):
    errs = [_global_error(method, h) for h in (0.1, 0.05, 0.025)]
    for e0, e1 in zip(errs, errs[1:]):
        assert math.log2(e0 / e1) >= min_order


def test_time_grid_is_uniform():
    traj = pk.integrate(_decay_system(), [1.0], 0.0, 3.0, 0.007)
    gaps = np.diff(traj.times)
    assert np.max(np.abs(gaps - 0.007)) < 1e-15


def test_step_must_be_positive():
    with pytest.raises(ValueError):
        pk.integrate(_decay_system(), [1.0], 0.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        pk.integrate(_decay_system(), [1.0], 1.0, 0.5, 0.1)


def test_event_outside_horizon_rejected():
    ev = pk.ImpulseEvent(at=2.0, delta=[0.1])
    with pytest.raises(ValueError):
        pk.integrate(_const_system(1), [0.0], 0.0, 1.0, 0.01, events=[ev])


def test_divergence_reports_first_bad_time():
    blowup = OdeSystem(dim=1, state_names=("x",),
                       field=lambda s, p: s * s, params=None)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(pk.DivergenceError) as err:
            pk.integrate(blowup, [1.0], 0.0, 5.0, 0.01)
    assert 0.0 < err.value.first_bad_time <= 5.0


# --- crossing_times ---------------------------------------------------------

def test_crossings_of_sine_land_on_multiples_of_two_pi():
    t = np.arange(0.0, 7.0, 0.001)
    traj = pk.Trajectory(times=t, states=np.sin(t)[:, None], step=0.001)
    cross = pk.crossing_times(traj, 0, 0.0, "rising")
    assert cross.size >= 1
    for c in cross:
        k = round(c / (2.0 * math.pi))
        assert abs(c - 2.0 * math.pi * k) < 1e-5


def test_constant_trajectory_has_no_crossings():
    t = np.arange(0.0, 1.0, 0.01)
    traj = pk.Trajectory(times=t, states=np.full((t.size, 1), 3.0), step=0.01)
    assert pk.crossing_times(traj, 0, 1.0, "rising").size == 0
    assert pk.crossing_times(traj, 0, 1.0, "falling").size == 0


def test_linear_ramp_crossing_is_exact():
    t = np.linspace(0.0, 1.0, 101)
    traj = pk.Trajectory(times=t, states=t[:, None], step=t[1] - t[0])
    cross = pk.crossing_times(traj, 0, 0.5, "rising")
    assert cross.size == 1
    assert abs(cross[0] - 0.5) < 1e-12


def test_falling_crossings():
    t = np.arange(0.0, 7.0, 0.001)
    traj = pk.Trajectory(times=t, states=np.sin(t)[:, None], step=0.001)
    cross = pk.crossing_times(traj, 0, 0.0, "falling")
    for c in cross:
        k = round((c - math.pi) / (2.0 * math.pi))
        assert abs(c - math.pi - 2.0 * math.pi * k) < 1e-5


@settings(max_examples=25, deadline=None)
@given(offset=st.floats(-50.0, 50.0, allow_nan=False))
def test_crossings_shift_with_time_translation(offset):
    t = np.arange(0.0, 7.0, 0.001)
    y = np.sin(t)[:, None]
    base = pk.crossing_times(pk.Trajectory(t, y, 0.001), 0, 0.3, "rising")
    moved = pk.crossing_times(pk.Trajectory(t + offset, y, 0.001), 0, 0.3,
                              "rising")
    assert moved.size == base.size
    assert np.max(np.abs(moved - base - offset)) < 1e-9


def test_numerical_jacobian_matches_closed_form():
    state = np.array([0.7, -1.3])
    num = pk.numerical_jacobian(lambda s, p: pk.vdp_field(s, 1.5), None,
                                state, scale=1.0)
    exact = pk.models.vdp_jacobian(state, 1.5)
    assert np.max(np.abs(num - exact)) < 1e-7
