import json
import math
import os

import numpy as np
import pytest

from sosroa import powersys, sim
from sosroa.poly import Polynomial, lie_derivative
from sosroa.powersys import (NetworkData, PowerSystemError, dynamics_jacobian,
                             electrical_power, find_sep, inverse_transform,
                             load_config, swing_rhs, to_polynomial_system,
                             transform, transform_trajectory)

DATA = os.path.join(os.path.dirname(__file__), "data")


def two_machine(Pm=0.5, b=1.0, D=2.0, M=(1.0, 1.0), G=None):
    G = np.zeros((2, 2)) if G is None else G
    return NetworkData(M=list(M), D=[D * M[0], D * M[1]], E=[1.0, 1.0],
                       Pm=[Pm, -Pm], G=G,
                       B=np.array([[0.0, b], [b, 0.0]]), reference=1)


@pytest.fixture(scope="module")
def smib():
    nets, _ = load_config(os.path.join(DATA, "smib.json"))
    return nets


@pytest.fixture(scope="module")
def smib_poly(smib):
    sep = find_sep(smib["postfault"], np.zeros(2))
    return to_polynomial_system(smib["postfault"], sep), sep


class TestNetworkData:
    def test_asymmetric_matrix_rejected_with_location(self):
        B = np.array([[0.0, 1.0], [0.5, 0.0]])
        with pytest.raises(PowerSystemError, match=r"B.*\(0,1\)|B.*not symmetric"):
            NetworkData(M=[1, 1], D=[2, 2], E=[1, 1], Pm=[0.5, -0.5],
                        G=np.zeros((2, 2)), B=B)

    def test_nonpositive_inertia_rejected(self):
        with pytest.raises(PowerSystemError, match="inertia"):
            NetworkData(M=[1, 0], D=[2, 0], E=[1, 1], Pm=[0, 0],
                        G=np.zeros((2, 2)), B=np.zeros((2, 2)))

    def test_nonuniform_damping_rejected(self):
        with pytest.raises(PowerSystemError, match="uniform"):
            NetworkData(M=[1, 1], D=[2, 3], E=[1, 1], Pm=[0, 0],
                        G=np.zeros((2, 2)), B=np.zeros((2, 2)))

    def test_reference_out_of_range(self):
        with pytest.raises(PowerSystemError, match="reference"):
            NetworkData(M=[1, 1], D=[2, 2], E=[1, 1], Pm=[0, 0],
                        G=np.zeros((2, 2)), B=np.zeros((2, 2)), reference=5)

    def test_acceptance_damping_ratio_is_two(self, smib):
        for nd in smib.values():
            assert abs(nd.damping_ratio - 2.0) < 1e-12


class TestSwingRhs:
    def test_zero_at_solved_sep(self, smib):
        nd = smib["postfault"]
        sep = find_sep(nd, np.zeros(2))
        assert np.max(np.abs(swing_rhs(sep, nd))) < 1e-10

    def test_lossless_energy_conservation(self):
        # Undamped two-machine system with G = 0: the reduced-mass energy
        # 1/2 Meff w^2 - Pme d - E1 E2 B cos d is a first integral.
        nd = NetworkData(M=[1.0, 2.0], D=[0.0, 0.0], E=[1.0, 1.0],
                         Pm=[0.3, -0.3], G=np.zeros((2, 2)),
                         B=np.array([[0.0, 1.0], [1.0, 0.0]]), reference=1)
        meff = 1.0 / (1.0 / 1.0 + 1.0 / 2.0)
        pme = meff * (0.3 / 1.0 + 0.3 / 2.0)

        def energy(x):
            d, w = x
            return 0.5 * meff * w * w - pme * d - math.cos(d)

        traj = sim.integrate(lambda x: swing_rhs(x, nd),
                             np.array([0.2, 0.1]), (0.0, 10.0), tol=1e-10)
        vals = [energy(x) for x in traj.states]
        assert max(vals) - min(vals) < 1e-6

    def test_absolute_angle_shift_invariance(self):
        # Shifting every absolute angle by a constant leaves all electrical
        # powers (and hence the relative dynamics) unchanged.
        nd = two_machine(G=np.array([[0.1, 0.05], [0.05, 0.2]]))
        delta = np.array([0.4, -0.1])
        for c in (0.7, -2.3, math.pi):
            assert np.allclose(electrical_power(nd, delta),
                               electrical_power(nd, delta + c), atol=1e-12)

    def test_damping_term(self):
        nd = two_machine(Pm=0.0, b=1.0, D=3.0)
        out = swing_rhs(np.array([0.0, 2.0]), nd)
        assert abs(out[0] - 2.0) < 1e-12          # angle rate = speed
        assert abs(out[1] + 3.0 * 2.0) < 1e-12    # pure damping at delta = 0


class TestFindSep:
    def test_speeds_are_zero_and_residual_small(self, smib):
        nd = smib["postfault"]
        sep = find_sep(nd, np.zeros(2))
        m = nd.n_machines - 1
        assert np.all(sep[m:] == 0.0)
        assert np.max(np.abs(swing_rhs(sep, nd))) < 1e-10

    def test_arcsin_oracle(self):
        # Pm = 0.5 against E1 E2 B = 1 on two unit-inertia machines gives a
        # mismatch 2 (0.5 - sin d): equilibrium at arcsin(0.5).
        nd = two_machine(Pm=0.5, b=1.0)
        sep = find_sep(nd)
        assert abs(sep[0] - math.asin(0.5)) < 1e-9
        assert sep[1] == 0.0

    def test_unstable_branch_rejected(self):
        nd = two_machine(Pm=0.5, b=1.0)
        # Guess in the basin of the mirror equilibrium pi - arcsin(0.5):
        # Newton converges there but the point is not asymptotically stable.
        with pytest.raises(PowerSystemError, match="stable"):
            find_sep(nd, guess=np.array([math.pi - 0.5, 0.0]))

    def test_infeasible_loading(self):
        # Pm beyond the transfer limit: no equilibrium at all.
        nd = two_machine(Pm=3.0, b=1.0)
        with pytest.raises(PowerSystemError):
            find_sep(nd)

    def test_nonfinite_guess(self):
        nd = two_machine()
        with pytest.raises(PowerSystemError, match="finite"):
            find_sep(nd, guess=np.array([np.nan, 0.0]))

    def test_stability_eigenvalues(self, smib):
        nd = smib["postfault"]
        sep = find_sep(nd, np.zeros(2))
        lam = np.linalg.eigvals(dynamics_jacobian(nd, sep))
        assert np.max(lam.real) < 0


class TestTransform:
    def test_sep_maps_to_origin(self):
        sep = np.array([0.7, 0.0])
        assert np.allclose(transform(sep, sep), 0.0, atol=1e-15)

    def test_quarter_turn(self):
        sep = np.array([0.2, 0.0])
        z = transform(np.array([0.2 + math.pi / 2, 0.3]), sep)
        assert np.allclose(z, [0.3, 1.0, 1.0], atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(30)
        sep = np.array([0.5, -0.3, 0.0, 0.0])
        for _ in range(100):
            th = rng.uniform(-math.pi + 1e-6, math.pi - 1e-6, size=2)
            w = rng.normal(size=2)
            x = np.concatenate([sep[:2] + th, w])
            back = inverse_transform(transform(x, sep), sep)
            assert np.max(np.abs(back - x)) < 1e-12

    def test_inverse_rejects_off_manifold(self):
        sep = np.array([0.0, 0.0])
        with pytest.raises(PowerSystemError, match="circle"):
            inverse_transform(np.array([0.1, 0.5, 0.9]), sep)

    def test_trajectory_helper_shape(self):
        sep = np.array([0.1, 0.0])
        xs = np.array([[0.1, 0.0], [0.2, 0.5]])
        Z = transform_trajectory(xs, sep)
        assert Z.shape == (2, 3)


class TestPolynomialSystem:
    def test_origin_is_equilibrium(self, smib_poly):
        sysz, _ = smib_poly
        z0 = np.zeros(sysz.nvars)
        for fi in sysz.f:
            assert abs(fi.evaluate(z0)) < 1e-12

    def test_constraints_vanish_on_transformed_states(self, smib_poly, smib):
        sysz, sep = smib_poly
        rng = np.random.default_rng(31)
        for _ in range(1000):
            x = np.array([rng.uniform(-math.pi, math.pi), rng.normal()])
            z = transform(x, sep)
            for gi in sysz.g:
                assert abs(gi.evaluate(z)) < 1e-12

    def test_constraints_invariant_along_flow(self, smib_poly):
        # d/dt g(z(t)) along the polynomial dynamics is identically zero.
        sysz, _ = smib_poly
        for gi in sysz.g:
            assert lie_derivative(gi, sysz.f).max_abs_coeff() < 1e-12

    def test_linearization_matches_machine_frame(self, smib_poly, smib):
        sysz, sep = smib_poly
        nd = smib["postfault"]
        Jx = dynamics_jacobian(nd, sep)
        n = sysz.nvars
        h = 1e-6
        Jz = np.zeros((n, n))
        z0 = np.zeros(n)
        for k in range(n):
            zp = z0.copy(); zp[k] += h
            zm = z0.copy(); zm[k] -= h
            Jz[:, k] = [(fi.evaluate(zp) - fi.evaluate(zm)) / (2 * h)
                        for fi in sysz.f]
        # Constraint tangent space at the origin: the 1-cos coordinates are
        # second order, leaving the speed and sine coordinates.
        m = sysz.n_rel
        tangent = list(range(m)) + [m + 2 * k for k in range(m)]
        eig_t = np.sort_complex(np.linalg.eigvals(Jz[np.ix_(tangent, tangent)]))
        eig_x = np.sort_complex(np.linalg.eigvals(Jx))
        assert np.max(np.abs(eig_t - eig_x)) < 1e-6

    def test_chain_rule_along_flow(self, smib_poly, smib):
        # Integrate the machine dynamics, map to z, and compare the
        # finite-difference zdot against f(z(t)): the error is second order
        # in the sampling step.
        sysz, sep = smib_poly
        nd = smib["postfault"]
        x0 = sep + np.array([0.4, 0.3])

        def err_at(hstep):
            traj = sim.integrate(lambda x: swing_rhs(x, nd), x0, (0.0, 1.0),
                                 tol=1e-11, capture=hstep)
            Z = transform_trajectory(traj.states, sep)
            worst = 0.0
            for i in range(1, len(Z) - 1):
                fd = (Z[i + 1] - Z[i - 1]) / (2 * hstep)
                fz = np.array([fi.evaluate(Z[i]) for fi in sysz.f])
                worst = max(worst, float(np.max(np.abs(fd - fz))))
            return worst

        e1 = err_at(1e-2)
        e2 = err_at(5e-3)
        assert e1 < 0.05
        assert e2 < 0.35 * e1 + 1e-9

    def test_bad_sep_rejected(self, smib):
        nd = smib["postfault"]
        with pytest.raises(PowerSystemError, match="residual"):
            to_polynomial_system(nd, np.array([0.3, 0.0]))

    def test_three_machine_dimensions(self):
        nets, _ = load_config(os.path.join(DATA, "threemachine_f1.json"))
        nd = nets["postfault"]
        sep = find_sep(nd, np.zeros(4))
        sysz = to_polynomial_system(nd, sep)
        assert sysz.nvars == 6
        assert len(sysz.f) == 6
        assert len(sysz.g) == 2


class TestLoadConfig:
    def test_acceptance_configs_load(self):
        for name in ("smib.json", "threemachine_f1.json",
                     "threemachine_f2.json"):
            nets, cfg = load_config(os.path.join(DATA, name))
            assert set(nets) == {"prefault", "fault", "postfault"}
            assert len(cfg["machines"]) == nets["prefault"].n_machines

    def test_missing_section(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"machines": []}))
        with pytest.raises(PowerSystemError, match="phases"):
            load_config(path)

    def test_missing_machine_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "machines": [{"M": 1, "D": 2, "E": 1}],
            "phases": {}}))
        with pytest.raises(PowerSystemError, match=r"machines\[0\].*Pm"):
            load_config(path)

    def test_unknown_phase(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "machines": [{"M": 1, "D": 2, "E": 1, "Pm": 0}],
            "phases": {"midfault": {"G": [[0]], "B": [[0]]}}}))
        with pytest.raises(PowerSystemError, match="midfault"):
            load_config(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(PowerSystemError, match="JSON"):
            load_config(path)

    def test_asymmetric_phase_matrix_located(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "machines": [{"M": 1, "D": 2, "E": 1, "Pm": 0.1},
                         {"M": 1, "D": 2, "E": 1, "Pm": -0.1}],
            "phases": {"fault": {"G": [[0, 0], [0, 0]],
                                 "B": [[0, 1], [0.5, 0]]}}}))
        with pytest.raises(PowerSystemError, match=r"phases\.fault"):
            load_config(path)
