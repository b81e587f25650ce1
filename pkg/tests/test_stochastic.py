import math

import numpy as np
import pytest

from conftest import rotating_parametric, start_state
from parametric_qed import stochastic as st
from parametric_qed.lindblad_oracle import correlator_qrt, evolve_density
from parametric_qed.model import ConfigError, SystemParams, build_basis, build_operators

SE_FLOOR = 1e-8   # oracle accuracy; zero-variance MC components are compared against this


def lossless(rabi3=1.0):
    return SystemParams(omega_e=120.0, omega=100.0, omega_v=20.0, rabi3=rabi3)


def ket(label):
    s = np.zeros(5, dtype=complex)
    s[st.STATES.index(label)] = 1
    return s


def zscore(diff, se):
    return np.abs(diff) / np.maximum(se, SE_FLOOR)


class TestStep:
    def test_deterministic_derivative(self):
        p = lossless(0.8 - 0.3j)
        dt = 1e-4
        out = st.step_sse(ket("001"), p, 0, 0, 0, dt, frame=(100.0, 20.0))
        slope = (out - ket("001")) / dt
        assert slope[st.STATES.index("110")] == pytest.approx(-1j * np.conj(p.rabi3), abs=1e-3)
        out2 = st.step_sse(ket("110"), p, 0, 0, 0, dt)
        slope2 = (out2 - ket("110")) / dt
        assert slope2[3] == pytest.approx(-1j * (p.omega + p.omega_v), rel=1e-2)

    def test_drift_second_order(self, ref_params):
        # deterministic part is exact: halving dt twice reproduces expm
        from scipy.linalg import expm
        H = st.effective_hamiltonian(ref_params, (100.0, 20.0))
        s = ket("001")
        for _ in range(10):
            s = st.step_sse(s, ref_params, 0, 0, 0, 0.05, frame=(100.0, 20.0))
        assert np.allclose(s, expm(-0.5j * H) @ ket("001"), atol=1e-13)

    def test_photon_noise_increment(self, ref_params):
        p = ref_params
        s = 0.6 * ket("110") + 0.8 * ket("001")
        fp, dt = 0.7 - 0.2j, 0.01
        dN = st.noise_increment(s, p, 0, 0, fp, dt)
        assert dN[st.STATES.index("010")] == pytest.approx(-1j * math.sqrt(p.mu_v) * 0.6 * fp * dt)
        assert dN[st.STATES.index("100")] == 0
        assert dN[st.STATES.index("000")] == 0

    def test_no_increment_from_ground_manifold(self, ref_params):
        s = np.array([0.3, 0.5j, -0.2, 0, 0], dtype=complex)
        dN = st.noise_increment(s, ref_params, 0, 0, 0, 0.01)
        assert np.all(dN == 0)
        s2 = np.array([0, 0, 0, 0, 0], dtype=complex)
        assert np.all(st.noise_increment(s2, ref_params, 1, 2j, 3, 0.01) == 0)

    def test_no_noise_without_upper_states(self, ref_params):
        s = np.array([0.3, 0.5j, -0.2, 0, 0], dtype=complex)
        dN = st.noise_increment(s, ref_params, 1.0, 1.0, 1.0, 0.01)
        # only downward couplings from 010 and 100 into 000 remain
        assert dN[1] == dN[2] == dN[3] == dN[4] == 0

    def test_batched(self, ref_params):
        s = np.stack([ket("001"), ket("110")])
        f = np.array([[0.1, 0.2, 0.3], [0.3j, -0.1, 0.2]])
        out = st.step_sse(s, ref_params, f[:, 0], f[:, 1], f[:, 2], 0.01)
        for k in range(2):
            assert np.allclose(out[k], st.step_sse(s[k], ref_params, *f[k], 0.01))


class TestNoise:
    def test_moments(self):
        dt = 0.02
        f = st.draw_noise(st.trajectory_rng(1, 0), 200_000, dt)
        n = f.shape[0]
        se = math.sqrt(1 / (2 * dt) / n)
        assert np.all(np.abs(f.real.mean(0)) < 3 * se)
        assert np.all(np.abs(f.imag.mean(0)) < 3 * se)
        C = (f.conj().T @ f) / n            # <f_k^* f_l> at equal times
        se2 = 1 / dt / math.sqrt(n)
        assert np.allclose(np.diag(C).real, 1 / dt, atol=3 * se2)
        off = C[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) < 3 * se2 * math.sqrt(2))
        lag = (f[:-1].conj() * f[1:]).mean(0)   # different times
        assert np.all(np.abs(lag) < 3 * se2 * math.sqrt(2))
        assert np.all(np.abs((f * f).mean(0)) < 3 * se2 * math.sqrt(2))   # circular

    def test_streams_independent_of_each_other(self):
        a = st.draw_noise(st.trajectory_rng(5, 0), 10, 0.01)
        b = st.draw_noise(st.trajectory_rng(5, 1), 10, 0.01)
        c = st.draw_noise(st.trajectory_rng(5, 0), 10, 0.01)
        assert not np.allclose(a, b) and np.array_equal(a, c)

    def test_factorization(self, ref_params):
        # amplitudes entering a step are independent of that step's noise
        cfg = st.NoiseConfig(seed=11, dt=0.02, n_trajectories=1000)
        k = 150
        amp = np.empty(cfg.n_trajectories, dtype=complex)
        fp = np.empty(cfg.n_trajectories, dtype=complex)
        for j in range(cfg.n_trajectories):
            tr = st.simulate_trajectory(ref_params, k * cfg.dt, cfg, index=j)
            amp[j] = tr.amplitudes[k, 3]
            fp[j] = st.draw_noise(st.trajectory_rng(cfg.seed, j), k + 1, cfg.dt)[k, 2]
        prod = np.conj(amp) * fp * math.sqrt(cfg.dt)
        se = math.sqrt(np.var(prod) / len(prod))
        assert abs(prod.mean()) < 5 * se


class TestConfig:
    def test_validation_collects_problems(self):
        with pytest.raises(ConfigError) as e:
            st.NoiseConfig(seed=-1, dt=0, n_trajectories=50)
        assert len(e.value.problems) == 3

    def test_dt_rate_bound(self, ref_params):
        st.NoiseConfig(dt=0.033).check(ref_params)
        with pytest.raises(ConfigError, match="dt"):
            st.NoiseConfig(dt=0.034).check(ref_params)

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="noise.foo"):
            st.NoiseConfig.from_dict({"foo": 1})

    def test_missing_coupling(self):
        p = SystemParams(omega_e=120.0, omega=100.0, omega_v=20.0, rabi2=0.1)
        with pytest.raises(ConfigError):
            st.effective_hamiltonian(p)


class TestEnsemble:
    def test_lossless_zero_variance(self):
        p = lossless()
        cfg = st.NoiseConfig(seed=3, dt=0.01, n_trajectories=100)
        res = st.run_ensemble(p, 3.0, cfg)
        c110, se = res.population("110")
        assert np.abs(c110 - np.sin(res.t) ** 2).max() < 1e-12
        # zero variance up to round-off
        assert se.max() < 1e-9 and res.norm_stderr.max() < 1e-9

    def test_seed_determinism(self, ref_params):
        cfg = st.NoiseConfig(seed=99, dt=0.02, n_trajectories=300, batch_size=128)
        a = st.run_ensemble(ref_params, 4.0, cfg)
        b = st.run_ensemble(ref_params, 4.0, cfg)
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.stderr, b.stderr)
        c = st.run_ensemble(ref_params, 4.0, st.NoiseConfig(seed=100, dt=0.02, n_trajectories=300))
        assert not np.array_equal(a.mean, c.mean)

    def test_batch_independence(self, ref_params):
        cfgs = [st.NoiseConfig(seed=4, dt=0.02, n_trajectories=300, batch_size=b) for b in (1, 37, 300)]
        res = [st.run_ensemble(ref_params, 2.0, c) for c in cfgs]
        for r in res[1:]:
            assert np.allclose(r.mean, res[0].mean, rtol=1e-12, atol=1e-15)

    def test_checkpoints(self, ref_params):
        cfg = st.NoiseConfig(seed=4, dt=0.02, n_trajectories=100)
        r = st.run_ensemble(ref_params, 1.0, cfg, checkpoints=[0.0, 0.5, 1.0])
        assert r.mean.shape == (3, 5) and np.allclose(r.t, [0, 0.5, 1.0])
        with pytest.raises(ValueError, match="multiples"):
            st.run_ensemble(ref_params, 1.0, cfg, checkpoints=[0.011])

    @pytest.mark.slow
    def test_matches_oracle(self, ref_params, small_space):
        basis, ops = small_space
        cfg = st.NoiseConfig(seed=2024, dt=0.02, n_trajectories=2000)
        ck = np.linspace(0, 20, 11)
        res = st.run_ensemble(ref_params, 20.0, cfg, checkpoints=ck)
        ev = evolve_density(start_state(basis), rotating_parametric(ref_params, ops),
                            ref_params, ops, ck)
        idx = {"000": (0, 0, 0), "010": (0, 1, 0), "100": (1, 0, 0), "110": (1, 1, 0), "001": (0, 0, 1)}
        for lab, (a, n, i) in idx.items():
            m, se = res.population(lab)
            assert np.all(zscore(m - ev.population(basis.index(a, n, i)), se) < 4), lab
        assert np.all(zscore(res.norm_mean - 1, res.norm_stderr) < 4)

    def test_abort_reported(self, ref_params, monkeypatch):
        monkeypatch.setattr(st, "ABORT_LIMIT", 1e-3)
        cfg = st.NoiseConfig(seed=1, dt=0.02, n_trajectories=100)
        with pytest.raises(st.EnsembleError, match="aborted"):
            st.run_ensemble(ref_params, 0.2, cfg)

    def test_small_abort_fraction_tolerated(self, ref_params, monkeypatch):
        real_bad = st._bad
        monkeypatch.setattr(st, "_bad", lambda psi: real_bad(psi) | (np.arange(len(psi)) == 0))
        cfg = st.NoiseConfig(seed=1, dt=0.02, n_trajectories=200, batch_size=200)
        r = st.run_ensemble(ref_params, 0.2, cfg)
        assert r.n_aborted == 1 and r.n_trajectories == 199


class TestNoiseCorrelators:
    def test_requires_tracking(self, ref_params):
        r = st.run_ensemble(ref_params, 0.2, st.NoiseConfig(dt=0.02, n_trajectories=100))
        with pytest.raises(ValueError, match="track_noise"):
            st.empirical_noise_correlators(r)

    def test_requires_size(self, ref_params):
        r = st.run_ensemble(ref_params, 0.2, st.NoiseConfig(dt=0.02, n_trajectories=100),
                            track_noise=True)
        with pytest.raises(ValueError, match="1000"):
            st.empirical_noise_correlators(r)

    def test_estimates(self, ref_params):
        cfg = st.NoiseConfig(seed=8, dt=0.02, n_trajectories=1000)
        r = st.run_ensemble(ref_params, 10.0, cfg, checkpoints=[10.0], track_noise=True)
        est = st.empirical_noise_correlators(r)
        for key in ("100,100", "010,010", "000,000", "000,100", "000,010"):
            assert est[key].z_score < 3, key
        for key in ("110,110", "001,001"):
            assert est[key].observed == 0 and est[key].predicted == 0
        assert est["100,010"].predicted == 0 and est["100,010"].z_score < 3
        e = est["100,100"]
        assert abs(e.ratio - ref_params.mu_omega) < 3 * e.ratio_stderr


class TestCorrelatorMC:
    def test_zero_at_start(self, ref_params):
        cfg = st.NoiseConfig(seed=1, dt=0.02, n_trajectories=100)
        K = st.correlator_mc(ref_params, cfg, [0.0], [0.0, 0.5, 1.0])
        assert np.all(K.values == 0)

    def test_lossless(self):
        p = lossless()
        cfg = st.NoiseConfig(seed=1, dt=0.01, n_trajectories=100)
        t = np.array([0.0, 0.5, 1.3])
        tau = np.array([0.0, 0.4, 2.0])
        K = st.correlator_mc(p, cfg, t, tau)
        ref = np.sin(t)[:, None] * np.sin(t[:, None] + tau[None, :])
        assert np.allclose(K.values, ref, atol=1e-12)
        assert np.allclose(K.lab_values, ref * np.exp(-1j * p.omega * tau), atol=1e-12)

    def test_phonon_field(self):
        p = lossless()
        cfg = st.NoiseConfig(seed=1, dt=0.01, n_trajectories=100)
        K = st.correlator_mc(p, cfg, [1.0], [0.0], field="phonon")
        assert K.carrier == p.omega_v and K.values[0, 0] == pytest.approx(math.sin(1.0) ** 2)

    @pytest.mark.slow
    def test_vs_qrt(self, ref_params, small_space):
        basis, ops = small_space
        cfg = st.NoiseConfig(seed=7, dt=0.02, n_trajectories=2000)
        t = np.arange(10) * 1.0
        tau = np.arange(10) * 1.0
        mc = st.correlator_mc(ref_params, cfg, t, tau)
        q = correlator_qrt(start_state(basis), rotating_parametric(ref_params, ops), ref_params,
                           ops, "c", t, tau)
        d = mc.values - q.values
        assert np.all(zscore(d.real, mc.stderr.real) < 3)
        assert np.all(zscore(d.imag, mc.stderr.imag) < 3)
