import numpy as np
import pytest
from scipy.optimize import brentq

from helpers import rich_point, rich_system
from resphase.averaging import (
    ImprovedState, averaged_crossing, averaged_crossings, from_improved, from_improved_arrays, improved_crossing,
    improved_crossings, state_with_invariant, states_with_invariant, to_improved, to_improved_arrays,
)
from resphase.errors import NoCrossing, PreconditionViolation, TooCloseToResonance, TransformDiverged
from resphase.integrate import IntegratorConfig
from resphase.model import PhaseState, resonant_action


def test_to_improved_examples(example):
    st = to_improved(example, PhaseState(1.0, 0.0, [0.0], [0.0], 1e-3))
    assert st.J == 1.0
    st = to_improved(example, PhaseState(1.0, np.pi / 2, [0.0], [0.0], 1e-3))
    # scalar oracle for I = J - eps (1/2 + J) sin(phi) / J
    oracle = brentq(lambda J: J - 1e-3 * (0.5 + J) / J - 1.0, 0.9, 1.1, xtol=1e-16)
    assert abs(st.J - 1.0015) < 1e-6
    assert st.J == pytest.approx(oracle, abs=1e-14)


def test_zero_epsilon_is_identity(example):
    sys_ = rich_system()
    s = PhaseState(2.1, 0.7, [0.3, -0.2], [0.1, 0.4], 0.0)
    imp = to_improved(sys_, s)
    assert imp.J == s.I and imp.psi == s.phi
    np.testing.assert_array_equal(imp.eta, s.y)
    np.testing.assert_array_equal(imp.xi, s.x)
    back = from_improved(sys_, imp, 0.0)
    np.testing.assert_array_equal(back.as_array(), s.as_array())


def _random_states(sys_, rng, count, eps):
    out = []
    while len(out) < count:
        y, x = rich_point(rng)
        I = resonant_action(sys_, y, x) + rng.choice([-1, 1]) * rng.uniform(0.25, 1.5)
        if abs(sys_.omega0(I, y, x)) > 0.2:
            out.append(PhaseState(I, rng.uniform(-20, 20), y, x, eps))
    return out


def test_round_trip(rng):
    sys_ = rich_system()
    worst = 0.0
    for s in _random_states(sys_, rng, 100, 1e-3):
        back = from_improved(sys_, to_improved(sys_, s), 1e-3)
        worst = max(worst, np.max(np.abs(back.as_array() - s.as_array())))
        imp = ImprovedState(s.I, s.phi, s.y, s.x)
        again = to_improved(sys_, from_improved(sys_, imp, 1e-3))
        worst = max(worst, abs(again.J - imp.J), abs(again.psi - imp.psi),
                    np.max(np.abs(again.eta - imp.eta)), np.max(np.abs(again.xi - imp.xi)))
    assert worst < 1e-12


def test_vectorised_transform_matches_scalar(rng):
    sys_ = rich_system()
    states = _random_states(sys_, rng, 8, 2e-3)
    I = np.array([s.I for s in states])
    phi = np.array([s.phi for s in states])
    y = np.array([s.y for s in states])
    x = np.array([s.x for s in states])
    J, psi, eta, xi = to_improved_arrays(sys_, I, phi, y, x, 2e-3)
    for k, s in enumerate(states):
        one = to_improved(sys_, s)
        assert J[k] == pytest.approx(one.J, abs=1e-14)
        assert psi[k] == pytest.approx(one.psi, abs=1e-13)
        np.testing.assert_allclose(eta[k], one.eta, atol=1e-14)
    I2, phi2, y2, x2 = from_improved_arrays(sys_, J, psi, eta, xi, 2e-3)
    np.testing.assert_allclose(I2, I, atol=1e-12)


def test_transform_errors(example):
    with pytest.raises(TooCloseToResonance):
        to_improved(example, PhaseState(0.25, 0.0, [0.0], [0.5], 1e-3))
    with pytest.raises(TooCloseToResonance):
        from_improved(example, ImprovedState(1.0, 0.0, [0.0], [1.0]), 1e-3)
    # eps / omega0**2 of order 500: no contraction
    with pytest.raises(TransformDiverged):
        to_improved(example, PhaseState(0.01, 1.0, [0.0], [0.0], 0.05))


def test_near_identity_scaling(example):
    phis = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    gaps = []
    for eps in (1e-3, 5e-4):
        J, _, _, _ = to_improved_arrays(example, np.full(64, 0.8), phis, np.zeros((64, 1)), np.zeros((64, 1)), eps)
        gaps.append(np.max(np.abs(J - 0.8)))
    assert 1.8 < gaps[0] / gaps[1] < 2.2


def test_state_with_invariant(example, rng):
    sys_ = rich_system()
    for _ in range(10):
        y, x = rich_point(rng)
        J0 = resonant_action(sys_, y, x) + 1.0
        s = state_with_invariant(sys_, J0, rng.uniform(0, 6), y, x, 1e-3)
        assert to_improved(sys_, s).J == pytest.approx(J0, abs=1e-14)
    phis = np.linspace(0, 6, 5)
    I0, y0 = states_with_invariant(example, 1.0, phis, np.zeros((5, 1)), np.zeros((5, 1)), 1e-3)
    for k, p in enumerate(phis):
        s = state_with_invariant(example, 1.0, p, [0.0], [0.0], 1e-3)
        assert I0[k] == s.I
        np.testing.assert_array_equal(y0[k], s.y)


def test_improved_crossing_examples(example):
    c = improved_crossing(example, 1.0, [0.0], [0.0], 1e-3)
    assert abs(c.tau_star_a - 1.0) < 1e-10
    assert abs(c.Phi_star - 2.0 / 3.0) < 1e-10
    assert abs(example.omega0(1.0, c.eta_star, c.xi_star)) < 1e-12
    c = improved_crossing(example, 0.25, [0.0], [0.0], 1e-3)
    assert abs(c.tau_star_a - 0.5) < 1e-10


def test_improved_crossing_errors(example):
    with pytest.raises(NoCrossing):
        improved_crossing(example, 1.0, [0.0], [0.0], 1e-3, horizon_tau=0.5)
    with pytest.raises(PreconditionViolation):
        improved_crossing(example, 0.25, [0.0], [1.0], 1e-3)


def test_improved_crossing_tolerance_invariance():
    sys_ = rich_system()
    y, x = np.array([0.2, -0.1]), np.array([-0.6, 0.3])
    J0 = resonant_action(sys_, y, x) + 0.6
    a = improved_crossing(sys_, J0, y, x, 1e-3)
    b = improved_crossing(sys_, J0, y, x, 1e-3, config=IntegratorConfig(1e-13, 1e-13))
    assert abs(a.tau_star_a - b.tau_star_a) < 1e-9


def test_batched_crossings_match_single(example):
    J0 = np.array([1.0, 0.25, 2.0])
    tau, Phi, eta, xi, ok = improved_crossings(example, J0, np.zeros((3, 1)), np.zeros((3, 1)), 1e-3)
    assert np.all(ok)
    np.testing.assert_allclose(tau, np.sqrt(J0), atol=1e-10)
    np.testing.assert_allclose(Phi, 2 * J0**1.5 / 3, atol=1e-10)
    tau, ys, xs, ok = averaged_crossings(example, J0, np.zeros((3, 1)), np.zeros((3, 1)))
    np.testing.assert_allclose(tau, np.sqrt(J0), atol=1e-10)
    np.testing.assert_allclose(xs[:, 0], np.sqrt(J0), atol=1e-10)


def test_averaged_crossing_examples(example):
    tau, ys, xs = averaged_crossing(example, 1.0, [0.0], [0.0])
    assert abs(tau - 1.0) < 1e-10 and abs(xs[0] - 1.0) < 1e-10
    tau, _, _ = averaged_crossing(example, 4.0, [0.0], [0.0])
    assert abs(tau - 2.0) < 1e-10
    with pytest.raises(PreconditionViolation):
        averaged_crossing(example, 0.25, [0.0], [1.0])
    with pytest.raises(NoCrossing):
        averaged_crossing(example, 4.0, [0.0], [0.0], horizon_tau=1.0)
