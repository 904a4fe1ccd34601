import csv

import numpy as np
import pytest

from mutsis.dynamics import simulate
from mutsis.model import EpidemicState, ModelSequence, ModelStep, constant_sequence, state_matrix
from mutsis.spectral import slow_variation_constants
from mutsis.stability import (ASSUMPTIONS_FAIL, PREMISES_FAIL, PREMISES_HOLD, check_theorem1, check_theorem2,
                              verify_lyapunov_decrease_T1, verify_lyapunov_decrease_T2)


def diagonal_system(h=0.1, n=3):
    # Bbar = 0 and D = 0.5 I / h give M = 0.5 I
    return constant_sequence(ModelStep(np.zeros((n, n)), np.ones(n), np.full(n, 0.5 / h)), h, 5)


def directed_pair(A, delta, beta=(1.0, 0.7)):
    return ModelStep(A, beta, delta)


def interpolated(step_a, step_b, T, h):
    steps = []
    for k in range(T + 1):
        w = k / T
        steps.append(ModelStep((1 - w) * step_a.A + w * step_b.A, (1 - w) * step_a.beta + w * step_b.beta,
                               (1 - w) * step_a.delta + w * step_b.delta))
    return ModelSequence(tuple(steps), h)


class TestTheorem1:
    def test_diagonal_system_holds(self):
        r = check_theorem1(diagonal_system())
        assert r.verdict == PREMISES_HOLD and r.holds and not r.failed_premises
        assert r.rho_margin == pytest.approx(0.5, abs=1e-12)

    def test_heterogeneous_infection_fails(self):
        s = ModelStep(np.eye(2), [0.3, 0.4], [1, 1])
        r = check_theorem1(constant_sequence(s, 0.1, 3))
        assert r.verdict == PREMISES_FAIL
        assert {f.premise for f in r.failed_premises} == {"homogeneous_infection"}
        assert not r.premise_flags["homogeneous"].any()

    def test_saturated_control_configuration_holds(self):
        # delta = 1/h leaves M = h*beta*A; a row sum product of 0.9 bounds rho by the infinity norm
        h, beta = 0.1, 1.0
        A = np.array([[1, 4, 4], [4, 1, 3], [4, 3, 2]], dtype=float)
        A *= 0.9 / (h * beta * A.sum(axis=1).max())
        r = check_theorem1(constant_sequence(ModelStep(A, [beta] * 3, [1 / h] * 3), h, 4))
        assert r.holds
        assert r.rho_max <= 0.9 + 1e-12

    def test_asymmetry_fails(self):
        s = ModelStep([[1, 0.5], [0.2, 1]], [1, 1], [5, 5])
        r = check_theorem1(constant_sequence(s, 0.1, 2))
        assert [f.premise for f in r.failed_premises] == ["symmetric_adjacency"] * 2

    def test_unstable_step_is_listed(self):
        good = ModelStep(np.eye(2) * 0.1, [1, 1], [5, 5])
        bad = ModelStep(np.eye(2) * 0.3, [1, 1], [0, 0])  # M = 1.03 I
        r = check_theorem1(ModelSequence((good, bad, good), 0.1))
        (f,) = r.failed_premises
        assert f.premise == "spectral_radius" and f.k == 1
        np.testing.assert_array_equal(r.premise_flags["rho_below_one"], [True, False, True])

    def test_margin_is_configurable(self):
        s = ModelStep(np.zeros((1, 1)), [1], [1e-3])  # M = 1 - 1e-4
        assert check_theorem1(constant_sequence(s, 0.1, 1)).holds
        assert not check_theorem1(constant_sequence(s, 0.1, 1), margin=1e-3).holds

    def test_assumption_failure_short_circuits(self):
        s = ModelStep(np.eye(2), [1, 1], [20, 0])
        r = check_theorem1(constant_sequence(s, 0.1, 2))
        assert r.verdict == ASSUMPTIONS_FAIL and r.failed_premises[0].node == 0

    def test_report_serialisation(self, tmp_path):
        r = check_theorem1(diagonal_system())
        text = r.to_text()
        assert "verdict: premises_hold" in text and "required_margin: 1e-09" in text
        r.to_csv(tmp_path / "c.csv")
        rows = list(csv.reader(open(tmp_path / "c.csv")))
        assert rows[0] == ["k", "rho", "homogeneous", "symmetric", "rho_below_one"]
        assert rows[1] == ["0", repr(0.5), "1", "1", "1"]


class TestTheorem2:
    A0 = np.array([[0.8, 0.6], [0.1, 0.9]])

    def test_constant_stable_holds(self):
        seq = constant_sequence(directed_pair(self.A0, [5.0, 6.0]), 0.1, 6)
        r = check_theorem2(seq)
        assert r.holds and r.constants.kappa == 0.0

    def test_alternating_sequence_fails_slow_variation(self):
        a = directed_pair(self.A0, [10.0, 6.0])
        b = directed_pair(self.A0, [5.0, 6.0])  # M differs by 0.5 in one diagonal entry
        assert np.linalg.norm(state_matrix(a, 0.1) - state_matrix(b, 0.1), 2) == pytest.approx(0.5)
        r = check_theorem2(ModelSequence((a, b) * 3, 0.1))
        assert not r.holds
        (f,) = r.failed_premises
        assert f.premise == "slow_variation"
        assert r.constants.kappa == pytest.approx(0.5)
        text = r.to_text()
        assert "kappa: 0.5" in text and "kappa_threshold:" in text

    def test_slow_interpolation_holds(self):
        h = 0.1
        a = directed_pair(self.A0, [5.0, 6.0])
        b = directed_pair(self.A0 + [[0, 1e-4], [5e-5, 0]], [5.0005, 6.0])
        diff = np.linalg.norm(state_matrix(b, h) - state_matrix(a, h), 2)
        # constants barely move with T; pick T from the threshold of the coarse sequence
        threshold = slow_variation_constants([state_matrix(a, h), state_matrix(b, h)], 0.5).kappa_threshold
        T = int(np.ceil(2 * diff / threshold))
        seq = interpolated(a, b, T, h)
        r = check_theorem2(seq)
        assert r.holds
        # M is affine in k, so kappa is the total change divided by T
        assert r.constants.kappa == pytest.approx(diff / T, rel=1e-6)
        assert r.premise_flags["variation_below_threshold"].all()

    def test_unstable_fails(self):
        s = ModelStep(np.eye(2) * 0.3, [1, 1], [0, 0])
        r = check_theorem2(constant_sequence(s, 0.1, 2))
        assert {f.premise for f in r.failed_premises} >= {"spectral_radius"}

    def test_assumption_failure(self):
        s = ModelStep(np.eye(2), [1, 1], [20, 0])
        assert check_theorem2(constant_sequence(s, 0.1, 2)).verdict == ASSUMPTIONS_FAIL


class TestDecrease:
    def test_healthy_trajectory(self):
        seq = diagonal_system()
        traj = simulate(seq, EpidemicState(np.zeros(3)))
        r1 = verify_lyapunov_decrease_T1(traj, seq)
        assert r1.ok and np.all(r1.dV == 0)
        c = slow_variation_constants(seq.state_matrices(), 0.5)
        r2 = verify_lyapunov_decrease_T2(traj, seq, c)
        assert r2.ok and np.all(r2.V == 0)

    def test_violating_run_is_informational(self):
        s = ModelStep(np.full((2, 2), 0.5), [1, 1], [0, 0])
        seq = constant_sequence(s, 0.5, 10)
        traj = simulate(seq, EpidemicState([0.1, 0.1]))
        r = verify_lyapunov_decrease_T1(traj, seq)
        assert not check_theorem1(seq).holds
        assert not r.ok and r.max_dV > 0
        assert "violations:" in r.to_text()

    def test_t2_agrees_with_t1_on_symmetric_system(self):
        A = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])
        seq = constant_sequence(ModelStep(A, [1.0] * 3, [4.0] * 3), 0.1, 30)
        traj = simulate(seq, EpidemicState([0.9, 0.1, 0.5]))
        r1 = verify_lyapunov_decrease_T1(traj, seq)
        c = check_theorem2(seq).constants
        r2 = verify_lyapunov_decrease_T2(traj, seq, c)
        assert r1.ok and r2.ok
        np.testing.assert_array_equal(np.sign(r1.dV), np.sign(r2.dV))

    def test_slow_run_sandwich_and_decrease(self):
        h = 0.1
        a = directed_pair(TestTheorem2.A0, [5.0, 6.0])
        b = directed_pair(TestTheorem2.A0 + [[0, 1e-4], [0, 0]], [5.0, 6.0])
        seq = interpolated(a, b, 200, h)
        cert = check_theorem2(seq)
        assert cert.holds
        traj = simulate(seq, EpidemicState([0.7, 0.4]))
        r = verify_lyapunov_decrease_T2(traj, seq, cert.constants, tol=0.0)
        assert r.ok, r.violations[:3]
        sq = np.sum(traj.states ** 2, axis=1)
        assert np.all(r.V >= sq * (1 - 1e-12))
        assert np.all(r.V <= cert.constants.q_bound * sq)
        assert "upper_factor" in r.to_text()

    def test_sequence_too_short(self):
        seq = diagonal_system()
        traj = simulate(seq, EpidemicState([0.1] * 3), horizon=5)
        c = slow_variation_constants(seq.state_matrices(), 0.5)
        with pytest.raises(ValueError):
            verify_lyapunov_decrease_T2(traj, ModelSequence(seq.steps[:2], 0.1), c)

    def test_needs_states(self):
        traj = simulate(diagonal_system(), EpidemicState([0.1] * 3), keep_states=False)
        with pytest.raises(ValueError, match="keep_states"):
            verify_lyapunov_decrease_T1(traj)
