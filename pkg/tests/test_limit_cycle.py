import math

import numpy as np
import pytest

import phasekit as pk
from phasekit.dynsys import OdeSystem, Trajectory, integrate


def test_settle_vdp_reaches_classical_amplitude():
    sys_ = pk.vdp_system(1.0)
    state = pk.settle(sys_, np.array([0.1, 0.0]), 5, 0.005)
    traj = integrate(sys_, state, 0.0, 14.0, 0.005)
    amp = np.max(np.abs(traj.output(0)))
    assert abs(amp - 2.0) < 0.01  # vdP limit-cycle amplitude ~ 2


def test_settle_is_idempotent_up_to_cycle(vdp1):
    sys_, lc = vdp1
    settled = pk.settle(sys_, lc.orbit[0], 1, lc.T0 / 1200)
    # the returned state must lie on the same attractor: the return map
    # after one period comes back to it
    back = integrate(sys_, settled, 0.0, lc.T0, lc.T0 / 2400)
    scale = np.max(np.abs(lc.orbit), axis=0)
    assert np.max(np.abs(back.states[-1] - settled) / scale) < 1e-5


def test_settle_rejects_fixed_point_decay():
    sys_ = OdeSystem(dim=1, state_names=("x",),
                     field=lambda s, p: -s, params=None)
    with pytest.raises(pk.NotOscillatingError):
        pk.settle(sys_, np.array([1.0]), 5, 0.01)


def test_settle_rejects_damped_spiral():
    def spiral(s, p):
        x = s[..., 0]
        y = s[..., 1]
        return np.stack([-0.08 * x - y, x - 0.08 * y], axis=-1)

    sys_ = OdeSystem(dim=2, state_names=("x", "y"), field=spiral, params=None)
    with pytest.raises(pk.NotOscillatingError):
        pk.settle(sys_, np.array([1.0, 0.0]), 5, 0.01,
                  max_settle_periods=300)


@pytest.mark.parametrize("mu,t0_expected", [(0.2, 6.2989), (1.0, 6.6633)])
def test_vdp_period(mu, t0_expected):
    # mu=0.2 oracle: 2*pi*(1 + mu^2/16) perturbation expansion;
    # mu=1 oracle: high-accuracy fine-step integration (frozen value)
    sys_ = pk.vdp_system(mu)
    state = pk.settle(sys_, np.array([0.1, 0.0]), 5, 0.005)
    lc = pk.find_period(sys_, state, t0_expected / 1200, grid_size=128)
    assert abs(lc.T0 - t0_expected) < 0.005


def test_omega0_consistency(vdp1):
    _, lc = vdp1
    assert abs(lc.omega0 * lc.T0 - 2.0 * math.pi) < 1e-12 * 2.0 * math.pi


def test_orbit_row0_on_section(vdp1):
    _, lc = vdp1
    scale = np.max(np.abs(lc.orbit[:, lc.ref_state_index]))
    assert abs(lc.orbit[0, lc.ref_state_index] - lc.ref_level) < 1e-6 * scale


def test_orbit_closes(vdp1):
    sys_, lc = vdp1
    back = integrate(sys_, lc.orbit[0], 0.0, lc.T0, lc.T0 / 2400)
    scale = np.max(np.abs(lc.orbit), axis=0)
    assert np.max(np.abs(back.states[-1] - lc.orbit[0]) / scale) < 1e-5


def test_time_rescaled_field_halves_period(vdp1):
    _, lc_ref = vdp1
    fast = OdeSystem(dim=2, state_names=("x", "y"),
                     field=lambda s, p: 2.0 * pk.vdp_field(s, 1.0),
                     params=None)
    state = pk.settle(fast, np.array([0.1, 0.0]), 5, 0.0025)
    lc = pk.find_period(fast, state, lc_ref.T0 / 2400, grid_size=128)
    assert lc.T0 == pytest.approx(lc_ref.T0 / 2.0, rel=1e-5)
    assert lc.omega0 == pytest.approx(2.0 * lc_ref.omega0, rel=1e-5)


def test_quasiperiodic_output_raises_period_unstable():
    w1, w2 = 1.0, math.sqrt(2.0)

    def rotors(s, p):
        c1, s1, c2, s2, _ = (s[..., 0], s[..., 1], s[..., 2], s[..., 3],
                             s[..., 4])
        return np.stack([-w1 * s1, w1 * c1, -w2 * s2, w2 * c2,
                         -w1 * s1 - w2 * s2], axis=-1)

    sys_ = OdeSystem(dim=5, state_names=("c1", "s1", "c2", "s2", "sum"),
                     field=rotors, params=None, output_index=4)
    x0 = np.array([1.0, 0.0, 1.0, 0.0, 2.0])
    with pytest.raises((pk.PeriodUnstableError, pk.NotOscillatingError)):
        pk.find_period(sys_, x0, 0.005)


# --- asymptotic phase shift --------------------------------------------------

def _free_run(vdp1, periods=40.0):
    sys_, lc = vdp1
    step = lc.T0 / 1200
    return integrate(sys_, lc.orbit[0], 0.0, periods * lc.T0, step), lc


def test_shift_of_identical_trajectories_is_zero(vdp1):
    traj, lc = _free_run(vdp1)
    for discard in (5, 10, 20):
        assert pk.asymptotic_phase_shift(traj, traj, lc,
                                         discard_periods=discard) == 0.0


def test_pure_delay_gives_quarter_period_shift(vdp1):
    traj, lc = _free_run(vdp1)
    delayed = Trajectory(times=traj.times + lc.T0 / 4.0, states=traj.states,
                         step=traj.step)
    shift = pk.asymptotic_phase_shift(traj, delayed, lc)
    assert abs(shift - (-math.pi / 2.0)) < 1e-3


def test_shift_is_additive_in_delay(vdp1):
    traj, lc = _free_run(vdp1)
    rng = np.random.default_rng(7)
    base = pk.asymptotic_phase_shift(traj, traj, lc)
    for dt in rng.uniform(0.0, lc.T0 / 3.0, size=3):
        delayed = Trajectory(times=traj.times + dt, states=traj.states,
                             step=traj.step)
        shift = pk.asymptotic_phase_shift(traj, delayed, lc)
        want = base - lc.omega0 * dt
        want = (want + math.pi) % (2.0 * math.pi) - math.pi
        assert abs(shift - want) < 1e-6


def test_too_few_crossings_raises(vdp1):
    traj, lc = _free_run(vdp1, periods=12.0)
    with pytest.raises(pk.ConvergenceError):
        pk.asymptotic_phase_shift(traj, traj, lc, discard_periods=10)
