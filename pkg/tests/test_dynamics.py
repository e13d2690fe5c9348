import math
import random
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bimodal_hydro.dynamics import (
    CLOSED,
    OPEN,
    ActuationInput,
    ContinuousState,
    PressureRatingWarning,
    SingularMassMatrix,
    full_accel,
    generalized_accel,
    hf_accel,
    hs_accel,
    is_singular,
    mass_matrix,
    mass_matrix_from,
    output_force_and_pressure,
    regime_for,
    stop_force,
    throttle_force,
)
from bimodal_hydro.params import LoadScenario

M1 = 0.1 + 1.00308e-4 * (2 * math.pi / 0.02) ** 2
M2 = 0.1 + 7.18868e-6 * (2 * math.pi * 28 / 0.005) ** 2


def test_mass_matrix_entries(params):
    h = mass_matrix(params, params.scenario("swing"))
    assert h[0, 0] == pytest.approx(17 + M2)
    assert h[0, 1] == h[1, 0] == pytest.approx(-M2)
    assert h[1, 1] == pytest.approx(M1 + M2)
    assert np.linalg.det(h) == pytest.approx(17 * M1 + 17 * M2 + M1 * M2, rel=1e-9)


def test_determinant_example():
    h = mass_matrix_from(17.0, 10.0, 8900.0)
    assert np.linalg.det(h) == pytest.approx(17 * 10 + 17 * 8900 + 10 * 8900, rel=1e-12)
    assert np.linalg.det(h) == pytest.approx(240470.0, rel=1e-12)


def test_singular_matrix_detected():
    assert is_singular(np.zeros((2, 2)))
    assert is_singular(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert not is_singular(mass_matrix_from(17.0, 10.0, 8900.0))
    with pytest.raises(SingularMassMatrix):
        generalized_accel(OPEN, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0)


@given(
    m_o=st.floats(0.5, 1000),
    m1=st.floats(0.1, 100),
    m2=st.floats(0.1, 20000),
    f=st.tuples(*[st.floats(-5000, 5000)] * 3),
)
def test_open_accel_solves_mass_matrix(m_o, m1, m2, f):
    a_o, a_1 = generalized_accel(OPEN, m_o, m1, m2, *f)
    h = mass_matrix_from(m_o, m1, m2)
    q = np.array([f[0] + f[2], f[1] - f[2]])
    np.testing.assert_allclose(h @ np.array([a_o, a_1]), q, rtol=1e-9, atol=1e-9 * max(1.0, abs(q).max()))


def test_throttle_force_opposes_m1_motion(params):
    b = throttle_force(math.radians(45), 0.47, params.fluid, params.valve)
    area = math.pi * 9.52e-3**2 / 4
    assert b == pytest.approx(0.5 * 1.85e5 * 1036 * area * 0.47**2, rel=1e-12)
    assert throttle_force(math.radians(45), -0.47, params.fluid, params.valve) == -b


def test_hs_closed_form_accelerations(params):
    # Full current, valves open, M2 parked: the swing and stance load cases.
    f_max = 0.0934 * (2 * math.pi / 0.02) * 11.9281
    for load, fe in (("swing", 0.0), ("stance", 1155.0)):
        sc = params.scenario(load)
        a = hs_accel(ContinuousState(), ActuationInput(i1=11.9281), params, sc)
        assert a == pytest.approx((f_max - fe) / (sc.output_mass + M1), rel=1e-12)


def test_hf_closed_form_accelerations(params):
    f_max = 0.0255 * (2 * math.pi * 28 / 0.005) * 3.20985
    sc = params.scenario("stance")
    a_o, a_1 = hf_accel(ContinuousState(), ActuationInput(i1=2.0, i2=3.20985, valve_angle=math.pi / 2), params, sc)
    assert a_o == pytest.approx((f_max - 1155.0) / (460.0 + M2), rel=1e-12)
    assert a_1 == pytest.approx(0.0934 * (2 * math.pi / 0.02) * 2.0 / M1, rel=1e-12)


def test_constrained_full_model_matches_hf_reduction(params):
    rng = random.Random(7)
    worst = 0.0
    for _ in range(1000):
        sc = LoadScenario("r", rng.uniform(1, 800), rng.uniform(-3000, 3000), rng.uniform(0, 50))
        state = ContinuousState(v_o=rng.uniform(-0.03, 0.03), v1=0.0)
        inp = ActuationInput(i1=0.0, i2=rng.uniform(-3.2, 3.2), valve_angle=math.pi / 2)
        a_full, a1 = full_accel(state, inp, params, sc, constrained=True)
        a_red, _ = hf_accel(state, inp, params, sc)
        assert a1 == 0.0
        worst = max(worst, abs(a_full - a_red) / max(abs(a_red), 1e-300))
    assert worst <= 1e-9


def test_hs_reduction_matches_full_model_on_swing_inputs(params):
    rng = random.Random(11)
    worst = 0.0
    for _ in range(1000):
        sc = LoadScenario("r", rng.uniform(5, 30), 0.0)
        v = rng.uniform(-0.8, 0.8)
        i1 = rng.choice((-1, 1)) * rng.uniform(1.0, 11.9)
        state = ContinuousState(v_o=v, v1=v)  # M2 parked: v2 = v_o - v1 = 0
        inp = ActuationInput(i1=i1, i2=0.0, valve_angle=0.0)
        a_full, _ = full_accel(state, inp, params, sc)
        a_red = hs_accel(state, inp, params, sc)
        worst = max(worst, abs(a_full - a_red) / abs(a_red))
    assert worst < 0.01


def test_regime_threshold(params):
    tol = math.radians(0.5)
    assert regime_for(math.pi / 2 - tol, params.valve) == CLOSED
    assert regime_for(math.pi / 2 - 1.01 * tol, params.valve) == OPEN
    assert regime_for(0.0, params.valve) == OPEN


def test_output_force_and_pressure(params):
    sc = LoadScenario("heavy", 460.0, 2500.0)
    state = ContinuousState()
    with pytest.warns(PressureRatingWarning):
        f, p = output_force_and_pressure(state, ActuationInput(i2=3.20985, valve_angle=math.pi / 2), params, sc)
    assert p == pytest.approx(f / 5.70e-4)
    # In HF the fluid force is F2 minus the inertial share of M2.
    f2 = 0.0255 * (2 * math.pi * 28 / 0.005) * 3.20985
    a = (f2 - 2500.0) / (460 + M2)
    assert f == pytest.approx(460 * a + 2500.0, rel=1e-9)
    assert p > 3.45e6
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        output_force_and_pressure(state, ActuationInput(i1=5.0), params, params.scenario("swing"))


def test_static_hold_gives_zero_motion(params):
    # EM2 current balancing the stance payload holds it in HF.
    sc = params.scenario("stance")
    i2 = 1155.0 / (0.0255 * (2 * math.pi * 28 / 0.005))
    a_o, _ = hf_accel(ContinuousState(), ActuationInput(i2=i2, valve_angle=math.pi / 2), params, sc)
    assert a_o == pytest.approx(0.0, abs=1e-12)


def test_stop_force_is_unilateral():
    f, pe, d = stop_force(-0.001, -0.1, 0.0, 0.07, 1e6, 1e4)
    assert f == pytest.approx(1e6 * 0.001 + 1e4 * 0.1)
    assert pe == pytest.approx(0.5)
    assert d == pytest.approx(1e4 * 0.1 * 0.1)
    # Rebounding quickly: the damper would pull, so the force clips at zero.
    f, _, _ = stop_force(-0.001, 1.0, 0.0, 0.07, 1e6, 1e4)
    assert f == 0.0
    f, _, _ = stop_force(0.071, 0.0, 0.0, 0.07, 1e6, 1e4)
    assert f == pytest.approx(-1e6 * 0.001)
    assert stop_force(0.03, 1.0, 0.0, 0.07, 1e6, 1e4) == (0.0, 0.0, 0.0)
