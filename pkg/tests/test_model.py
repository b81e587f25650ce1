import math

import numpy as np
import pytest

from parametric_qed.model import (ConfigError, CouplingSpec, SystemParams, build_basis,
                                  build_hamiltonian, build_operators, dressed_resonance,
                                  frame_generator, map_to_parametric, second_order_shift,
                                  validate_rwa)


def P(**kw):
    base = dict(omega_e=21.0, omega=20.0, omega_v=1.0)
    base.update(kw)
    return SystemParams(**base)


class TestParams:
    def test_detuning_recomputed(self):
        p = P()
        assert p.detuning == 0.0
        assert p.replace(omega_v=1.5).detuning == pytest.approx(0.5)

    def test_negative_rate_named(self):
        with pytest.raises(ConfigError, match="mu_omega"):
            P(mu_omega=-0.1)

    def test_zero_frequency_rejected(self):
        with pytest.raises(ConfigError, match="omega_v"):
            P(omega_v=0.0)

    def test_all_problems_reported(self):
        with pytest.raises(ConfigError) as exc:
            P(mu_omega=-1, gamma_e=-1, omega=0)
        assert len(exc.value.problems) == 3

    def test_from_dict_unknown_and_temperature(self):
        with pytest.raises(ConfigError) as exc:
            SystemParams.from_dict({"omega_e": 1, "omega": 1, "omega_v": 1, "foo": 1,
                                    "temperature": 4.0})
        text = str(exc.value)
        assert "foo" in text and "T=0 only" in text

    def test_complex_coupling_forms(self):
        p = SystemParams.from_dict({"omega_e": 2, "omega": 1, "omega_v": 1, "rabi3": [0.0, 0.5]})
        assert p.rabi3 == 0.5j
        assert p.theta == pytest.approx(math.pi / 2)
        p = SystemParams.from_dict({"omega_e": 2, "omega": 1, "omega_v": 1,
                                    "rabi2": {"re": 1.0, "im": -1.0}})
        assert p.rabi2 == 1 - 1j

    def test_swapped_modes(self):
        p = P(mu_omega=0.2, mu_v=0.3)
        q = p.swapped_modes()
        assert (q.omega, q.omega_v, q.mu_omega, q.mu_v) == (1.0, 20.0, 0.3, 0.2)


class TestBasis:
    def test_dims(self):
        assert build_basis(1, 1).dim == 8
        assert build_basis(4, 1).dim == 20

    def test_round_trip(self):
        b = build_basis(2, 2)
        for a in range(3):
            for n in range(3):
                for i in range(2):
                    assert b.label(b.index(a, n, i)) == (a, n, i)
        assert sorted(b.index(*s) for s in b.states()) == list(range(b.dim))

    @pytest.mark.parametrize("cut", [(0, 1), (1, 0), (-1, 2), (1.5, 1)])
    def test_bad_cutoffs(self, cut):
        with pytest.raises(ConfigError, match="cutoff"):
            build_basis(*cut)

    def test_dim_overflow(self):
        with pytest.raises(ConfigError, match="exceeds"):
            build_basis(100, 100)


class TestOperators:
    def test_matrix_elements(self):
        b = build_basis(1, 4)
        ops = build_operators(b)
        assert ops.sigma[b.index(0, 0, 0), b.index(0, 0, 1)] == 1
        n_c = ops.c.conj().T @ ops.c
        assert n_c[b.index(0, 1, 0), b.index(0, 1, 0)] == pytest.approx(1)
        assert ops.c[b.index(0, 3, 0), b.index(0, 4, 0)] == pytest.approx(2.0)

    def test_commutator_below_cutoff(self):
        b = build_basis(3, 2)
        ops = build_operators(b)
        comm = ops.b @ ops.b.conj().T - ops.b.conj().T @ ops.b
        for k, (a, n, i) in enumerate(b.states()):
            if a < b.n_phonon_max:
                assert comm[k, k] == pytest.approx(1)


class TestHamiltonians:
    def test_parametric_elements(self):
        b = build_basis(1, 1)
        H = build_hamiltonian("parametric", P(rabi3=1.0), None, b)
        assert H[b.index(0, 0, 1), b.index(1, 1, 0)] == 1
        assert H[b.index(1, 1, 0), b.index(1, 1, 0)] == pytest.approx(21.0)

    def test_molecular_element(self):
        b = build_basis(2, 1)
        H = build_hamiltonian("molecular", P(rabi2=0.5), CouplingSpec("molecular", huang_rhys=0.04), b)
        for n in (0, 1):
            assert H[b.index(1, n, 1), b.index(0, n, 1)] == pytest.approx(0.2)

    def test_optomechanical_element(self):
        b = build_basis(2, 2)
        H = build_hamiltonian("optomechanical", P(rabi2=0.5),
                              CouplingSpec("optomechanical", g_factor=0.02), b)
        assert H[b.index(1, 2, 0), b.index(0, 2, 0)] == pytest.approx(-0.04)

    def test_missing_couplings(self):
        b = build_basis(1, 1)
        with pytest.raises(ConfigError, match="rabi3"):
            build_hamiltonian("parametric", P(), None, b)
        with pytest.raises(ConfigError, match="rabi2"):
            build_hamiltonian("molecular", P(), CouplingSpec("molecular", huang_rhys=0.1), b)
        with pytest.raises(ConfigError, match="CouplingSpec"):
            build_hamiltonian("molecular", P(rabi2=0.1), None, b)

    def test_sector_closure(self):
        b = build_basis(3, 3)
        H = build_hamiltonian("parametric", P(rabi3=0.3 + 0.4j), None, b)
        v = H @ b.ket(0, 0, 1)
        support = {b.label(k) for k in np.nonzero(np.abs(v) > 0)[0]}
        assert support <= {(0, 0, 1), (1, 1, 0)}

    def test_five_state_truncation_exact(self):
        b = build_basis(3, 3)
        H = build_hamiltonian("parametric", P(rabi3=0.7), None, b)
        ops = build_operators(b)
        five = [b.index(*s) for s in [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0), (0, 0, 1)]]
        rest = [k for k in range(b.dim) if k not in five]
        for A in (H, ops.c, ops.b, ops.sigma):
            assert np.all(A[np.ix_(rest, five)] == 0)

    def test_frame_commutes(self):
        b = build_basis(2, 2)
        ops = build_operators(b)
        G = frame_generator(ops, (20.0, 1.0))
        H = build_hamiltonian("parametric", P(rabi3=0.1), None, ops=ops)
        assert np.abs(G @ H - H @ G).max() < 1e-12
        Hm = build_hamiltonian("molecular", P(rabi2=0.1), CouplingSpec("molecular", huang_rhys=0.1), ops=ops)
        Gc = frame_generator(ops, (20.0, 0.0))
        assert np.abs(Gc @ Hm - Hm @ Gc).max() < 1e-12
        with pytest.raises(ValueError, match="phonon"):
            build_hamiltonian("molecular", P(rabi2=0.1), CouplingSpec("molecular", huang_rhys=0.1),
                              ops=ops, frame=(20.0, 1.0))


class TestMapping:
    def test_examples(self):
        p = P(rabi2=0.5)
        assert map_to_parametric(CouplingSpec("molecular", huang_rhys=0.04), p) == pytest.approx(-0.1)
        assert map_to_parametric(CouplingSpec("optomechanical", g_factor=0.02), p) == pytest.approx(-0.01)
        assert map_to_parametric(CouplingSpec("molecular", huang_rhys=0.0), p) == 0
        assert map_to_parametric(CouplingSpec("gradient", gradient_overlap=0.3j), p) == 0.3j

    def test_spec_validation(self):
        with pytest.raises(ConfigError, match="huang_rhys"):
            CouplingSpec("molecular")
        with pytest.raises(ConfigError, match="huang_rhys"):
            CouplingSpec("molecular", huang_rhys=-1)
        with pytest.raises(ConfigError, match="mechanism"):
            CouplingSpec("magnetic")


class TestRwa:
    def test_resonant(self):
        r = validate_rwa(P(rabi3=0.05))
        assert (r.detuning_ratio, r.coupling_ratio, r.passed) == (0.0, pytest.approx(0.05), True)

    def test_detuned(self):
        r = validate_rwa(P(omega_v=1.5))
        assert r.detuning_ratio == pytest.approx(0.5) and not r.passed

    def test_strong_coupling(self):
        r = validate_rwa(P(rabi2=2.0))
        assert r.coupling_ratio == pytest.approx(2.0) and not r.coupling_ok

    def test_two_wave_degenerate(self):
        r = validate_rwa(P(omega_e=20.0))
        assert math.isinf(r.detuning_ratio) and not r.passed


def test_second_order_shift_two_level():
    H = np.array([[0.0, 0.1], [0.1, 1.0]])
    assert second_order_shift(H, 0) == pytest.approx(-0.01)
    assert second_order_shift(H, 1) == pytest.approx(0.01)


def test_dressed_resonance_removes_mismatch():
    b = build_basis(4, 1)
    spec = CouplingSpec("molecular", huang_rhys=0.01)
    p = dressed_resonance("molecular", P(rabi2=0.05), spec, b)
    H = build_hamiltonian("molecular", p, spec, b)
    k1, k2 = b.index(0, 0, 1), b.index(1, 1, 0)
    e1 = H[k1, k1].real + second_order_shift(H, k1)
    e2 = H[k2, k2].real + second_order_shift(H, k2)
    assert abs(e1 - e2) < 1e-10
    assert p.omega_e == pytest.approx(21.005, abs=2e-4)
