import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evnav import rotations
from evnav.dynamics import (DroneState, EnergyAccumulator, QuadParams, _consts, accumulate, hover_speed,
                            rk4_vector, rotor_power, step, wrench_from_rotors)
from evnav.errors import NumericalDivergenceError

P = QuadParams()


def _hover_state():
    return DroneState(p=np.array([0.0, 0.0, 1.5]), rotor_speeds=np.full(4, hover_speed(P)))


def test_params_validation():
    with pytest.raises(ValueError):
        QuadParams(mass=0.6)
    with pytest.raises(ValueError):
        QuadParams(k_f=0.0)
    with pytest.raises(ValueError):
        QuadParams(linear_drag=-0.1)


def test_hover_speed_value_and_scaling():
    assert hover_speed(P) == pytest.approx(math.sqrt(0.5 * 9.81 / (4 * 6.11e-6)), rel=1e-15)
    assert hover_speed(P) == pytest.approx(448.0, abs=0.1)
    doubled = QuadParams(k_f=2 * P.k_f)
    assert hover_speed(doubled) == pytest.approx(hover_speed(P) / math.sqrt(2), rel=1e-14)
    thrust, _ = wrench_from_rotors(np.full(4, hover_speed(P)), P)
    assert thrust == pytest.approx(P.mass * P.g, rel=1e-12)


def test_hover_power_near_declared_level():
    assert rotor_power(np.full(4, hover_speed(P)), P) == pytest.approx(36.0, rel=0.01)


def test_equal_rotors_pure_thrust():
    thrust, tau = wrench_from_rotors(np.full(4, 300.0), P)
    assert thrust == pytest.approx(4 * P.k_f * 300.0 ** 2, rel=1e-14)
    assert np.allclose(tau, 0.0, atol=1e-15)


def test_zero_rotors_zero_wrench():
    thrust, tau = wrench_from_rotors(np.zeros(4), P)
    assert thrust == 0.0 and np.all(tau == 0.0)


@pytest.mark.parametrize("w, expected", [
    # hand arithmetic: rotors 1 (+x,-y) and 3 (-x,+y) give +yaw, 2 and 4 give -yaw
    ((500.0, 400.0, 500.0, 400.0), (0.0, 0.0, 2 * 1.5e-7 * (500.0 ** 2 - 400.0 ** 2))),
    ((400.0, 500.0, 400.0, 500.0), (0.0, 0.0, -2 * 1.5e-7 * (500.0 ** 2 - 400.0 ** 2))),
    # rotors 2 and 3 (+y side) faster: positive roll; rotors 3 and 4 (-x side) faster: positive pitch
    ((400.0, 500.0, 500.0, 400.0), (2 * 6.11e-6 * 0.115 / math.sqrt(2) * (500.0 ** 2 - 400.0 ** 2), 0.0, 0.0)),
    ((400.0, 400.0, 500.0, 500.0), (0.0, 2 * 6.11e-6 * 0.115 / math.sqrt(2) * (500.0 ** 2 - 400.0 ** 2), 0.0)),
])
def test_torque_conventions_by_hand(w, expected):
    _, tau = wrench_from_rotors(np.array(w), P)
    assert np.allclose(tau, expected, rtol=1e-12, atol=1e-15)


def test_hover_force_balance():
    s = _hover_state()
    nxt = step(s, s.rotor_speeds, 1e-3, P)
    acc = (nxt.v - s.v) / 1e-3
    assert np.linalg.norm(acc) <= 1e-9
    for _ in range(999):
        nxt = step(nxt, s.rotor_speeds, 1e-3, P)
    assert np.linalg.norm(nxt.p - s.p) <= 1e-9
    assert np.allclose(nxt.q, s.q, atol=1e-12)


def test_free_fall():
    params = QuadParams(linear_drag=0.0)
    s = DroneState(p=np.array([0.0, 0.0, 10.0]))
    for _ in range(500):
        s = step(s, np.zeros(4), 1e-3, params)
    drop = 10.0 - s.p[2]
    assert drop == pytest.approx(0.5 * 9.81 * 0.25, rel=1e-3)


def test_hover_energy_five_seconds():
    s = _hover_state()
    acc = EnergyAccumulator()
    consts = _consts(P)
    for _ in range(5000):
        s = step(s, s.rotor_speeds, 1e-3, P, consts=consts)
        acc = accumulate(acc, rotor_power(s.rotor_speeds, P), 1e-3)
    expected = 4 * P.k_p * hover_speed(P) ** 3 * 5.0
    assert acc.joules == pytest.approx(expected, rel=0.01)


def _command_sequence(seed, n=50):
    rng = np.random.default_rng(seed)
    return hover_speed(P) + rng.uniform(-40, 40, (n, 4))


def _run(cmds, dt, hold=0.01):
    x = _hover_state().as_vector()
    consts = _consts(P)
    per = int(round(hold / dt))
    for c in cmds:
        for _ in range(per):
            x = rk4_vector(x, c, dt, P, consts=consts)
    return x


def test_rk4_self_convergence():
    cmds = _command_sequence(0)
    coarse = _run(cmds, 1e-3)
    fine = _run(cmds, 1e-4)
    assert np.linalg.norm(coarse[:3] - fine[:3]) <= 1e-5


def test_aggressive_costs_more_than_gentle():
    # same endpoints (hover, then back to hover), one with a sharp thrust pulse
    base = hover_speed(P)
    def energy(cmds):
        s = _hover_state()
        acc = EnergyAccumulator()
        for c in cmds:
            for _ in range(10):
                s = step(s, c, 1e-3, P)
                acc = accumulate(acc, rotor_power(s.rotor_speeds, P), 1e-3)
        return acc.joules
    gentle = [np.full(4, base)] * 100
    aggressive = [np.full(4, base + 120.0)] * 10 + [np.full(4, base - 120.0)] * 10 + [np.full(4, base)] * 80
    assert energy(aggressive) > energy(gentle)


def test_angular_momentum_conserved_torque_free():
    params = QuadParams(linear_drag=0.0)
    s = DroneState(omega_body=np.array([1.0, -2.0, 3.0]))
    inertia = np.array(params.inertia)
    def world_momentum(st_):
        return rotations.to_matrix(st_.q) @ (inertia * st_.omega_body)
    h0 = world_momentum(s)
    for _ in range(1000):
        s = step(s, np.zeros(4), 1e-3, params)
    assert abs(np.linalg.norm(world_momentum(s)) - np.linalg.norm(h0)) <= 1e-6
    assert np.linalg.norm(world_momentum(s) - h0) <= 1e-6


def test_quaternion_norm_one_million_steps():
    x = DroneState(omega_body=np.array([1.0, -2.0, 3.0])).as_vector()
    consts = _consts(P)
    cmd = np.zeros(4)
    worst = 0.0
    for k in range(1_000_000):
        x = rk4_vector(x, cmd, 1e-3, P, consts=consts)
        if k % 1000 == 0:
            worst = max(worst, abs(np.linalg.norm(x[6:10]) - 1.0))
    worst = max(worst, abs(np.linalg.norm(x[6:10]) - 1.0))
    assert worst <= 1e-9


@settings(max_examples=60, deadline=None)
@given(cmd=st.lists(st.floats(-1e4, 1e4), min_size=4, max_size=4),
       w0=st.lists(st.floats(0, 900), min_size=4, max_size=4), dt=st.floats(1e-5, 5e-3))
def test_rotor_speeds_stay_in_bounds(cmd, w0, dt):
    s = DroneState(rotor_speeds=np.array(w0))
    for _ in range(3):
        s = step(s, np.array(cmd), dt, P)
        assert np.all(s.rotor_speeds >= 0.0) and np.all(s.rotor_speeds <= P.omega_max)
        assert abs(np.linalg.norm(s.q) - 1.0) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(powers=st.lists(st.floats(0, 500), min_size=1, max_size=30),
       dts=st.lists(st.floats(1e-4, 1e-2), min_size=30, max_size=30))
def test_energy_monotone(powers, dts):
    acc = EnergyAccumulator()
    prev = 0.0
    for p_, dt in zip(powers, dts):
        acc = accumulate(acc, p_, dt)
        assert acc.joules >= prev
        prev = acc.joules


def test_accumulate_trapezoid():
    acc = accumulate(EnergyAccumulator(), 10.0, 0.5)
    acc = accumulate(acc, 20.0, 0.5)
    assert acc.joules == pytest.approx(5.0 + 7.5)
    with pytest.raises(ValueError):
        accumulate(acc, 1.0, 0.0)


def test_rotor_power_zero():
    assert rotor_power(np.zeros(4), P) == 0.0


def test_step_dt_bounds():
    s = _hover_state()
    with pytest.raises(ValueError):
        step(s, s.rotor_speeds, 0.0, P)
    with pytest.raises(ValueError):
        step(s, s.rotor_speeds, 0.006, P)


def test_non_finite_state_raises():
    s = _hover_state()
    s.v[0] = np.inf
    with pytest.raises(NumericalDivergenceError):
        step(s, s.rotor_speeds, 1e-3, P)


def test_rotor_lag_first_order():
    s = DroneState(rotor_speeds=np.zeros(4))
    target = np.full(4, 500.0)
    t = 0.0
    while t < P.motor_tau - 1e-12:
        s = step(s, target, 1e-3, P)
        t += 1e-3
    assert s.rotor_speeds[0] == pytest.approx(500.0 * (1 - math.exp(-1.0)), rel=1e-6)
