import numpy as np
import pytest

from polaron1d import meanfield as mf
from polaron1d.errors import ConfigurationError, UsageError
from polaron1d.observables import (
    dominant_frequency,
    general_weights_contrast,
    virial_check,
)

TF_MU_CLOSED_FORM = (3 * 100 * 0.5 / (4 * np.sqrt(2))) ** (2.0 / 3.0)  # 8.8923


class TestThomasFermi:
    def test_mu_matches_closed_form(self, default_system):
        tf = mf.thomas_fermi(default_system)
        assert tf.mu == pytest.approx(TF_MU_CLOSED_FORM, rel=1e-12)
        assert tf.radius == pytest.approx(np.sqrt(2 * tf.mu), rel=1e-12)

    def test_density_at_origin(self, default_system):
        tf = mf.thomas_fermi(default_system)
        assert tf.density_values(np.array([0.0]))[0] == pytest.approx(tf.mu / 0.5, rel=1e-12)

    def test_normalization(self, grid, default_system):
        tf = mf.thomas_fermi(default_system)
        total = np.sum(tf.density_values(grid.x)) * grid.dx
        # grid quadrature of the analytic profile; edge kink costs O(dx^2)
        assert total == pytest.approx(100.0, rel=1e-4)
        # analytic integral is exact by construction of mu
        r = tf.radius
        exact = (2 * tf.mu * r - r**3 / 3.0) / 0.5
        assert exact == pytest.approx(100.0, rel=1e-12)

    def test_undefined_without_repulsion(self):
        with pytest.raises(ConfigurationError):
            mf.thomas_fermi(mf.MeanFieldSystem(n_bath=10, g_bb=0.0, g_bi=0.0))


class TestRelax:
    def test_chemical_potential_near_tf(self, relaxed_default):
        _, res = relaxed_default
        assert res.mu_bath == pytest.approx(TF_MU_CLOSED_FORM, rel=0.02)

    def test_impurity_decoupled_ground_state(self, relaxed_default):
        _, res = relaxed_default
        assert res.mu_impurity == pytest.approx(0.5, abs=1e-8)

    def test_noninteracting_energies(self, grid):
        sys0 = mf.MeanFieldSystem(n_bath=100, g_bb=0.0, g_bi=0.0)
        _, res = mf.relax_ground_state(sys0, grid)
        bd = res.breakdown
        assert bd.kinetic_b + bd.potential_b == pytest.approx(50.0, abs=1e-7)
        assert bd.kinetic_i + bd.potential_i == pytest.approx(0.5, abs=1e-9)

    def test_drop_radius_near_tf(self, relaxed_density):
        radius = mf.density_drop_radius(relaxed_density)
        assert radius == pytest.approx(4.2, rel=0.05)

    def test_virial(self, relaxed_default):
        _, res = relaxed_default
        assert abs(virial_check(res.breakdown)) / abs(res.energy) < 1e-5

    def test_energy_trace_monotone_at_weak_coupling(self, grid):
        sys_weak = mf.MeanFieldSystem(n_bath=100, g_bb=0.5, g_bi=0.25)
        _, res = mf.relax_ground_state(sys_weak, grid)
        tr = res.energy_trace
        assert np.all(np.diff(tr) <= 1e-9 * np.abs(tr[:-1]))

    def test_bulk_density_matches_tf(self, relaxed_density, default_system):
        tf = mf.thomas_fermi(default_system)
        grid = relaxed_density.grid
        bulk = np.abs(grid.x) < 0.8 * tf.radius
        rho = np.real(relaxed_density.values)[bulk]
        rho_tf = tf.density_values(grid.x[bulk])
        l2_dev = np.sqrt(np.sum((rho - rho_tf) ** 2) / np.sum(rho_tf**2))
        assert l2_dev < 0.03

    def test_rejects_bad_tolerance(self, grid, default_system):
        with pytest.raises(ConfigurationError):
            mf.relax_ground_state(default_system, grid, tol=0.0)


class TestPropagate:
    def test_stationary_state(self, relaxed_default, default_system):
        state, _ = relaxed_default
        traj, series = mf.propagate(
            state, default_system, dt=5e-4, t_max=2.0, record_every=400
        )
        rho0 = np.abs(traj[0].bath.values) ** 2
        rho_t = np.abs(traj[-1].bath.values) ** 2
        assert np.max(np.abs(rho_t - rho0)) < 1e-7
        for key in ("norm_bath", "norm_up", "norm_down"):
            assert np.max(np.abs(np.asarray(series[key].values) - 1.0)) < 1e-10

    def test_unquenched_contrast_stays_unity(self, relaxed_default, default_system):
        state, _ = relaxed_default
        traj, _ = mf.propagate(
            state, default_system, dt=5e-4, t_max=2.0, record_every=400
        )
        bundle = mf.mean_field_contrast(traj, state, default_system)
        assert bundle.s.values[0] == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(np.abs(bundle.s.values) - 1.0)) < 1e-8

    def test_quench_variance_frequency(self, relaxed_default):
        state, _ = relaxed_default
        sys_post = mf.MeanFieldSystem(n_bath=100, g_bb=0.5, g_bi=0.25)
        _, series = mf.propagate(state, sys_post, dt=5e-4, t_max=30.0, record_every=100)
        omega, _ = dominant_frequency(series["x2_up"])
        assert omega == pytest.approx(2.0 * np.sqrt(1.0 - 0.25 / 0.5), rel=0.05)

    def test_energy_conserved(self, relaxed_default):
        state, _ = relaxed_default
        sys_post = mf.MeanFieldSystem(n_bath=100, g_bb=0.5, g_bi=0.25)
        _, series = mf.propagate(state, sys_post, dt=5e-4, t_max=5.0, record_every=500)
        e = np.asarray(series["energy_total"].values)
        assert np.max(np.abs(e - e[0])) < 1e-6 * abs(e[0])

    def test_contrast_monotone_in_coupling(self, relaxed_default):
        state, _ = relaxed_default
        mags = {}
        for g in (0.1, 1.0):
            sys_post = mf.MeanFieldSystem(n_bath=100, g_bb=0.5, g_bi=g)
            traj, _ = mf.propagate(state, sys_post, dt=5e-4, t_max=5.0, record_every=500)
            bundle = mf.mean_field_contrast(traj, state, sys_post)
            mags[g] = abs(bundle.s.values[-1])
        assert mags[1.0] <= mags[0.1]

    def test_weights_identity_on_run(self, relaxed_default):
        state, _ = relaxed_default
        sys_post = mf.MeanFieldSystem(n_bath=100, g_bb=0.5, g_bi=0.5)
        traj, _ = mf.propagate(state, sys_post, dt=5e-4, t_max=3.0, record_every=500)
        bundle = mf.mean_field_contrast(traj, state, sys_post)
        a, b = 0.6, 0.8
        out = general_weights_contrast(bundle.s, a, b)
        svals = bundle.s.values
        direct = np.sqrt(
            (2 * a * b * svals.real) ** 2
            + (2 * a * b * svals.imag) ** 2
            + (a**2 - b**2) ** 2
        )
        assert np.max(np.abs(out.values - direct)) < 1e-12

    def test_bad_steps_rejected(self, relaxed_default, default_system):
        state, _ = relaxed_default
        with pytest.raises(ConfigurationError):
            mf.propagate(state, default_system, dt=-1.0, t_max=1.0)


class TestSoundHorizon:
    def test_speed_at_center(self, relaxed_density, default_system):
        rho0 = float(np.interp(0.0, relaxed_density.grid.x, np.real(relaxed_density.values)))
        c0 = np.sqrt(0.5 * rho0)
        assert c0 == pytest.approx(np.sqrt(TF_MU_CLOSED_FORM), rel=0.02)

    def test_monotone_in_x_b(self, relaxed_density, default_system):
        times = [
            mf.sound_horizon(default_system, relaxed_density, xb)
            for xb in (1.0, 2.0, 4.0, 5.0, 6.0)
        ]
        assert np.all(np.diff(times) > 0)

    def test_cutoff_reported(self, relaxed_density, default_system):
        t, info = mf.sound_horizon(
            default_system, relaxed_density, 6.0, density_floor_frac=1e-3, return_info=True
        )
        assert info["cutoff_x"] < 6.0
        assert t < mf.sound_horizon(default_system, relaxed_density, 6.0)

    def test_beyond_grid_rejected(self, relaxed_density, default_system):
        with pytest.raises(UsageError):
            mf.sound_horizon(default_system, relaxed_density, 41.0)
