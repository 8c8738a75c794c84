"""Coupled Gross-Pitaevskii tier: imaginary-time ground-state relaxation,
real-time quench propagation, Thomas-Fermi closed forms, the mean-field
Ramsey contrast and the sound-horizon diagnostic.

Conventions: the bath orbital phi_B is normalized to 1 and carries density
N_B |phi_B|^2. The bath nonlinearity uses the product-ansatz coefficient
g_BB (N_B - 1) |phi_B|^2 (variationally exact for N bosons in one orbital and
consistent with the exact-diagonalization tier at small N; at N_B = 100 it is
indistinguishable from the large-N convention). The spin-down impurity branch
never couples to the bath (the interaction involves the spin-up field only),
so the energy bookkeeping refers to the spin-up branch.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import dst, idst

from .errors import ConfigurationError, ConvergenceError, StepSizeError, UsageError
from .grid import (
    Field,
    SpinorImpurityState,
    expectation_p2,
    expectation_x,
    expectation_x2,
    inner,
    kinetic_apply,
    kinetic_expectation,
    kinetic_phase_factors,
)
from .observables import EnergyBreakdown, TimeSeries


@dataclass(frozen=True)
class MeanFieldSystem:
    n_bath: int
    g_bb: float
    g_bi: float
    omega_b: float = 1.0
    omega_i: float = 1.0
    mass_b: float = 1.0
    mass_i: float = 1.0

    def __post_init__(self):
        if self.g_bb < 0 or self.g_bi < 0:
            raise ConfigurationError("couplings must be >= 0 (repulsive model)")
        if self.n_bath < 1:
            raise ConfigurationError("n_bath must be >= 1")
        if self.omega_b <= 0 or self.omega_i <= 0:
            raise ConfigurationError("trap frequencies must be > 0")


@dataclass(frozen=True)
class MeanFieldState:
    bath: Field
    impurity: SpinorImpurityState
    time: float
    energy_reference: float


def _trap(grid, mass, omega):
    return 0.5 * mass * omega**2 * grid.x**2


def _quartic(values, dx):
    return float(np.sum(np.abs(values) ** 4) * dx)


def _cross_density(a, b, dx):
    return float(np.sum(np.abs(a) ** 2 * np.abs(b) ** 2) * dx)


def energy_breakdown(state, sys):
    """Six-term decomposition of the spin-up branch energy."""
    grid = state.bath.grid
    dx = grid.dx
    n = sys.n_bath
    b, u = state.bath, state.impurity.up
    kin_b = n * kinetic_expectation(b, mass=sys.mass_b)
    pot_b = n * float(
        np.sum(_trap(grid, sys.mass_b, sys.omega_b) * np.abs(b.values) ** 2) * dx
    )
    kin_i = kinetic_expectation(u, mass=sys.mass_i)
    pot_i = float(
        np.sum(_trap(grid, sys.mass_i, sys.omega_i) * np.abs(u.values) ** 2) * dx
    )
    e_bb = 0.5 * sys.g_bb * n * (n - 1) * _quartic(b.values, dx)
    e_bi = sys.g_bi * n * _cross_density(b.values, u.values, dx)
    return EnergyBreakdown(kin_b, pot_b, kin_i, pot_i, e_bb, e_bi)


def total_energy(state, sys):
    return energy_breakdown(state, sys).total


def chemical_potentials(state, sys):
    """GP eigenvalues (mu_bath, mu_impurity) of the current orbitals."""
    grid = state.bath.grid
    dx = grid.dx
    n = sys.n_bath
    b, u = state.bath.values, state.impurity.up.values
    h_b = kinetic_apply(state.bath, mass=sys.mass_b).values + (
        _trap(grid, sys.mass_b, sys.omega_b)
        + sys.g_bb * (n - 1) * np.abs(b) ** 2
        + sys.g_bi * np.abs(u) ** 2
    ) * b
    h_u = kinetic_apply(state.impurity.up, mass=sys.mass_i).values + (
        _trap(grid, sys.mass_i, sys.omega_i) + sys.g_bi * n * np.abs(b) ** 2
    ) * u
    mu_b = float(np.real(np.sum(np.conj(b) * h_b)) * dx)
    mu_i = float(np.real(np.sum(np.conj(u) * h_u)) * dx)
    return mu_b, mu_i


def _stationarity_residual(state, sys):
    """L2 norm of (h_eff - mu) phi for each component."""
    grid = state.bath.grid
    dx = grid.dx
    n = sys.n_bath
    b, u = state.bath.values, state.impurity.up.values
    mu_b, mu_i = chemical_potentials(state, sys)
    r_b = kinetic_apply(state.bath, mass=sys.mass_b).values + (
        _trap(grid, sys.mass_b, sys.omega_b)
        + sys.g_bb * (n - 1) * np.abs(b) ** 2
        + sys.g_bi * np.abs(u) ** 2
        - mu_b
    ) * b
    r_u = kinetic_apply(state.impurity.up, mass=sys.mass_i).values + (
        _trap(grid, sys.mass_i, sys.omega_i) + sys.g_bi * n * np.abs(b) ** 2 - mu_i
    ) * u
    return (
        float(np.sqrt(np.sum(np.abs(r_b) ** 2) * dx)),
        float(np.sqrt(np.sum(np.abs(r_u) ** 2) * dx)),
    )


@dataclass(frozen=True)
class ThomasFermiProfile:
    mu: float
    radius: float
    n_bath: int
    g_bb: float
    omega_b: float = 1.0
    mass_b: float = 1.0

    def density_values(self, x):
        rho = (self.mu - 0.5 * self.mass_b * self.omega_b**2 * x**2) / self.g_bb
        return np.clip(rho, 0.0, None)

    def density(self, grid):
        return Field(grid, self.density_values(grid.x))


def thomas_fermi(sys):
    """Closed-form Thomas-Fermi chemical potential, radius and density."""
    if sys.g_bb <= 0:
        raise ConfigurationError("Thomas-Fermi limit undefined for g_bb = 0")
    mu = 0.5 * (1.5 * sys.n_bath * sys.g_bb * sys.omega_b * np.sqrt(sys.mass_b)) ** (
        2.0 / 3.0
    )
    radius = np.sqrt(2.0 * mu / (sys.mass_b * sys.omega_b**2))
    return ThomasFermiProfile(
        mu=float(mu),
        radius=float(radius),
        n_bath=sys.n_bath,
        g_bb=sys.g_bb,
        omega_b=sys.omega_b,
        mass_b=sys.mass_b,
    )


def density_drop_radius(density):
    """Radius where the bulk (inverted-parabola) fit of the density drops to
    zero; measures the Thomas-Fermi radius of a relaxed cloud."""
    x = density.grid.x
    rho = np.real(density.values)
    rho0 = float(np.max(rho))
    if rho0 <= 0:
        raise UsageError("empty density")
    above = np.abs(x)[rho > 0.5 * rho0]
    r_est = np.sqrt(2.0) * float(np.max(above))
    bulk = np.abs(x) <= 0.7 * r_est
    coeffs = np.polyfit(x[bulk] ** 2, rho[bulk], 1)
    if coeffs[0] >= 0:
        raise UsageError("density has no parabolic bulk")
    return float(np.sqrt(-coeffs[1] / coeffs[0]))


def sound_horizon(sys, bath_density, x_b, density_floor_frac=1e-12, return_info=False):
    """Time for sound to travel from the trap center to x_b:
    T = int_0^{x_b} dx / c(x) with c = sqrt(g_bb rho / m).

    Trapezoid rule over the grid samples of 1/c. Points with rho below
    density_floor_frac * rho(0) are excluded (1/c diverges where the density
    vanishes) and the cutoff position is reported.
    """
    grid = bath_density.grid
    if x_b <= 0:
        raise UsageError("x_b must be > 0")
    if x_b > grid.x_max:
        raise UsageError(f"x_b = {x_b} beyond the grid half-width {grid.x_max}")
    rho = np.clip(np.real(bath_density.values), 0.0, None)
    if np.min(np.real(bath_density.values)) < -1e-10:
        raise UsageError("density must be non-negative")
    rho0 = float(np.interp(0.0, grid.x, rho))
    floor = density_floor_frac * rho0
    # positive-x grid samples up to x_b, endpoint included by interpolation
    xs = grid.x[(grid.x >= 0.0) & (grid.x < x_b)]
    xs = np.append(xs, x_b)
    vals = np.interp(xs, grid.x, rho)
    keep = vals > floor
    if np.count_nonzero(keep) < 2:
        raise UsageError("density below the floor everywhere on [0, x_b]")
    cutoff_x = float(xs[keep][-1])
    xs, vals = xs[keep], vals[keep]
    c = np.sqrt(sys.g_bb * vals / sys.mass_b)
    t_total = float(np.trapezoid(1.0 / c, xs))
    if return_info:
        return t_total, {"cutoff_x": cutoff_x, "floor": floor}
    return t_total


@dataclass(frozen=True)
class RelaxResult:
    energy: float
    mu_bath: float
    mu_impurity: float
    breakdown: EnergyBreakdown
    iterations: int
    residual_bath: float
    residual_impurity: float
    energy_trace: np.ndarray = field(repr=False)


def _initial_guess(sys, grid):
    gauss_b = (sys.mass_b * sys.omega_b / np.pi) ** 0.25 * np.exp(
        -0.5 * sys.mass_b * sys.omega_b * grid.x**2
    )
    if sys.g_bb > 0 and sys.n_bath * sys.g_bb > 5.0:
        tf = thomas_fermi(sys)
        prof = np.sqrt(tf.density_values(grid.x) / sys.n_bath)
        bath = Field(grid, (prof + 1e-3 * gauss_b).astype(np.complex128)).normalized()
    else:
        bath = Field(grid, gauss_b.astype(np.complex128)).normalized()
    gauss_i = (sys.mass_i * sys.omega_i / np.pi) ** 0.25 * np.exp(
        -0.5 * sys.mass_i * sys.omega_i * grid.x**2
    )
    imp = Field(grid, gauss_i.astype(np.complex128)).normalized()
    return bath, imp


# imaginary-step ladder for the split-step relaxation; a Newton polish of the
# coupled stationarity equations removes the residual O(tau^2) splitting bias
# afterwards (energy criteria alone are quadratically blind to state error)
RELAX_SCHEDULE = (2e-2, 4e-3, 1e-3)


def _kinetic_dense_real(grid, mass):
    m = grid.n_points - 2
    k = np.arange(1, m + 1) * np.pi / (2.0 * grid.x_max)
    s = dst(np.eye(m), type=1, norm="ortho", axis=0)
    return s.T @ (k[:, None] ** 2 / (2.0 * mass) * s)


def _newton_polish(sys, grid, b, u, max_iters=10, target=1e-10):
    """Newton iteration on the coupled stationarity equations for real,
    positive orbitals (interior points), with the norm constraints and the
    chemical potentials as unknowns. Returns improved (b, u) or the inputs
    when Newton does not reduce the residual (e.g. near-singular Jacobian)."""
    dx = grid.dx
    n = sys.n_bath
    ni = grid.n_points - 2
    t_b = _kinetic_dense_real(grid, sys.mass_b)
    t_i = _kinetic_dense_real(grid, sys.mass_i) if sys.mass_i != sys.mass_b else t_b
    trap_b = _trap(grid, sys.mass_b, sys.omega_b)[1:-1]
    trap_i = _trap(grid, sys.mass_i, sys.omega_i)[1:-1]

    def split(vec):
        return vec[:ni], vec[ni : 2 * ni], vec[2 * ni], vec[2 * ni + 1]

    def residual(pb, pu, mu_b, mu_i):
        hb = t_b @ pb + (trap_b + sys.g_bb * (n - 1) * pb**2 + sys.g_bi * pu**2 - mu_b) * pb
        hu = t_i @ pu + (trap_i + sys.g_bi * n * pb**2 - mu_i) * pu
        cb = 0.5 * (np.sum(pb**2) * dx - 1.0)
        cu = 0.5 * (np.sum(pu**2) * dx - 1.0)
        return np.concatenate([hb, hu, [cb, cu]])

    pb = np.real(b[1:-1]).copy()
    pu = np.real(u[1:-1]).copy()
    mu_b = float(
        pb @ (t_b @ pb) * dx
        + np.sum((trap_b + sys.g_bb * (n - 1) * pb**2 + sys.g_bi * pu**2) * pb**2) * dx
    )
    mu_i = float(
        pu @ (t_i @ pu) * dx + np.sum((trap_i + sys.g_bi * n * pb**2) * pu**2) * dx
    )
    best = (pb.copy(), pu.copy(), np.linalg.norm(residual(pb, pu, mu_b, mu_i)[: 2 * ni]) * np.sqrt(dx))
    size = 2 * ni + 2
    jac = np.zeros((size, size))
    for _ in range(max_iters):
        res = residual(pb, pu, mu_b, mu_i)
        rnorm = float(np.linalg.norm(res[: 2 * ni]) * np.sqrt(dx))
        if rnorm < best[2]:
            best = (pb.copy(), pu.copy(), rnorm)
        if rnorm < target:
            break
        jac[:ni, :ni] = t_b + np.diag(
            trap_b + 3.0 * sys.g_bb * (n - 1) * pb**2 + sys.g_bi * pu**2 - mu_b
        )
        jac[:ni, ni : 2 * ni] = np.diag(2.0 * sys.g_bi * pb * pu)
        jac[:ni, 2 * ni] = -pb
        jac[ni : 2 * ni, :ni] = np.diag(2.0 * sys.g_bi * n * pb * pu)
        jac[ni : 2 * ni, ni : 2 * ni] = t_i + np.diag(
            trap_i + sys.g_bi * n * pb**2 - mu_i
        )
        jac[ni : 2 * ni, 2 * ni + 1] = -pu
        jac[2 * ni, :ni] = pb * dx
        jac[2 * ni + 1, ni : 2 * ni] = pu * dx
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            break
        db, du, dmu_b, dmu_i = split(delta)
        new_pb, new_pu = pb + db, pu + du
        new_mu_b, new_mu_i = mu_b + dmu_b, mu_i + dmu_i
        new_rnorm = float(
            np.linalg.norm(residual(new_pb, new_pu, new_mu_b, new_mu_i)[: 2 * ni])
            * np.sqrt(dx)
        )
        if not np.isfinite(new_rnorm) or new_rnorm > 0.9 * rnorm:
            break
        pb, pu, mu_b, mu_i = new_pb, new_pu, new_mu_b, new_mu_i
    pb, pu, _ = best
    b_out = np.zeros_like(b)
    u_out = np.zeros_like(u)
    b_out[1:-1] = pb
    u_out[1:-1] = pu
    b_out /= np.sqrt(np.sum(np.abs(b_out) ** 2) * dx)
    u_out /= np.sqrt(np.sum(np.abs(u_out) ** 2) * dx)
    return b_out, u_out


def relax_ground_state(
    sys,
    grid,
    tol=1e-10,
    alpha=1.0 / np.sqrt(2.0),
    beta=1.0 / np.sqrt(2.0),
    max_iterations=400_000,
    check_every=100,
):
    """Imaginary-time relaxation of the coupled bath + spin-up equations.

    Converged when the per-step relative energy change is below tol, the
    chemical-potential drift below 10*tol, and the GP stationarity residual
    has stopped improving on the finest imaginary step. The spin-down orbital
    is the bare trap ground state. Returns (MeanFieldState, RelaxResult).
    """
    if tol <= 0:
        raise ConfigurationError("tol must be > 0")
    bath, imp = _initial_guess(sys, grid)
    b = bath.values.copy()
    u = imp.values.copy()
    dx = grid.dx
    n = sys.n_bath
    trap_b = _trap(grid, sys.mass_b, sys.omega_b)
    trap_i = _trap(grid, sys.mass_i, sys.omega_i)
    k2 = (np.pi * np.arange(1, grid.n_points - 1) / (2 * grid.x_max)) ** 2

    def current_state():
        fb = Field(grid, b)
        fu = Field(grid, u)
        spinor = SpinorImpurityState(up=fu, down=fu, alpha=alpha, beta=beta)
        return MeanFieldState(bath=fb, impurity=spinor, time=0.0, energy_reference=0.0)

    trace = []
    iterations = 0
    last_stage = len(RELAX_SCHEDULE) - 1
    for stage, tau in enumerate(RELAX_SCHEDULE):
        kin_half = np.empty((grid.n_points - 2, 2))
        kin_half[:, 0] = np.exp(-0.5 * tau * k2 / (2.0 * sys.mass_b))
        kin_half[:, 1] = np.exp(-0.5 * tau * k2 / (2.0 * sys.mass_i))
        # one check per ~0.6 units of imaginary time so the slowest O(1) mode
        # decays noticeably between residual checks at any tau
        stage_check = max(check_every, int(round(0.6 / tau)))
        e_prev = None
        mu_prev = None
        r_prev = None
        while True:
            cols = np.empty((grid.n_points, 2), dtype=b.dtype)
            for _ in range(stage_check):
                cols[:, 0] = b
                cols[:, 1] = u
                interior = dst(cols[1:-1], type=1, norm="ortho", axis=0)
                interior *= kin_half
                cols[1:-1] = idst(interior, type=1, norm="ortho", axis=0)
                b, u = cols[:, 0], cols[:, 1]
                pot_b = trap_b + sys.g_bb * (n - 1) * np.abs(b) ** 2 + sys.g_bi * np.abs(u) ** 2
                pot_i = trap_i + sys.g_bi * n * np.abs(b) ** 2
                cols[:, 0] = b * np.exp(-tau * pot_b)
                cols[:, 1] = u * np.exp(-tau * pot_i)
                interior = dst(cols[1:-1], type=1, norm="ortho", axis=0)
                interior *= kin_half
                cols[1:-1] = idst(interior, type=1, norm="ortho", axis=0)
                b = cols[:, 0] / np.sqrt(np.sum(np.abs(cols[:, 0]) ** 2) * dx)
                u = cols[:, 1] / np.sqrt(np.sum(np.abs(cols[:, 1]) ** 2) * dx)
            iterations += stage_check
            state = current_state()
            e = total_energy(state, sys)
            mu_b, mu_i = chemical_potentials(state, sys)
            r_b, r_u = _stationarity_residual(state, sys)
            resid = max(r_b, r_u)
            trace.append(e)
            scale = max(abs(e), 1e-12)
            if e_prev is not None:
                de = abs(e - e_prev) / (stage_check * scale)
                dmu = abs(mu_b - mu_prev) / (stage_check * max(abs(mu_b), 1e-12))
                # the residual stalls at the O(tau^2) splitting bias; move on
                plateau = resid > 0.7 * r_prev
                if stage < last_stage:
                    if plateau:
                        break
                elif de < tol and dmu < 10.0 * tol and plateau:
                    break
            e_prev, mu_prev, r_prev = e, mu_b, resid
            if iterations >= max_iterations:
                raise ConvergenceError(
                    f"imaginary-time relaxation did not converge in {iterations} steps",
                    trace=np.asarray(trace),
                )

    b, u = _newton_polish(sys, grid, b, u)
    state = current_state()
    breakdown = energy_breakdown(state, sys)
    mu_b, mu_i = chemical_potentials(state, sys)
    r_b, r_u = _stationarity_residual(state, sys)
    trace.append(breakdown.total)
    state = replace(state, energy_reference=breakdown.total)
    result = RelaxResult(
        energy=breakdown.total,
        mu_bath=mu_b,
        mu_impurity=mu_i,
        breakdown=breakdown,
        iterations=iterations,
        residual_bath=r_b,
        residual_impurity=r_u,
        energy_trace=np.asarray(trace),
    )
    return state, result


def propagate(state, sys_post, dt, t_max, record_every=100):
    """Strang split-step real-time propagation of the coupled equations.

    The spin-down orbital evolves under the bare impurity trap only. Records
    every record_every steps (t_max is trimmed to a whole number of record
    intervals). Aborts with a step-size advisory when the norm drifts by more
    than 1e-6 or the energy by more than 1e-6 relative.

    Returns (trajectory, series) where trajectory is a list of MeanFieldState
    and series a dict of TimeSeries.
    """
    if dt <= 0 or t_max <= 0:
        raise ConfigurationError("dt and t_max must be > 0")
    record_every = max(int(record_every), 1)
    n_steps = int(round(t_max / dt))
    n_records = max(n_steps // record_every, 1)
    grid = state.bath.grid
    n = sys_post.n_bath
    trap_b = _trap(grid, sys_post.mass_b, sys_post.omega_b)
    trap_i = _trap(grid, sys_post.mass_i, sys_post.omega_i)
    kin_half = np.empty((grid.n_points - 2, 3), dtype=np.complex128)
    kin_half[:, 0] = kinetic_phase_factors(grid, 0.5 * dt, mass=sys_post.mass_b)
    kin_half[:, 1] = kinetic_phase_factors(grid, 0.5 * dt, mass=sys_post.mass_i)
    kin_half[:, 2] = kin_half[:, 1]
    kin_full = kin_half**2

    cols = np.empty((grid.n_points, 3), dtype=np.complex128)
    cols[:, 0] = state.bath.values
    cols[:, 1] = state.impurity.up.values
    cols[:, 2] = state.impurity.down.values
    alpha, beta = state.impurity.alpha, state.impurity.beta
    e_ref = state.energy_reference

    def kin_apply(factors):
        interior = dst(cols[1:-1], type=1, norm="ortho", axis=0)
        interior *= factors
        cols[1:-1] = idst(interior, type=1, norm="ortho", axis=0)
        cols[0] = 0.0
        cols[-1] = 0.0

    def make_state(t):
        spinor = SpinorImpurityState(
            up=Field(grid, cols[:, 1]), down=Field(grid, cols[:, 2]), alpha=alpha, beta=beta
        )
        return MeanFieldState(
            bath=Field(grid, cols[:, 0]), impurity=spinor, time=t, energy_reference=e_ref
        )

    records = {
        key: []
        for key in (
            "norm_bath",
            "norm_up",
            "norm_down",
            "energy_total",
            "kinetic_b",
            "potential_b",
            "kinetic_i",
            "potential_i",
            "intra_bb",
            "inter_bi",
            "x_mean_bath",
            "x_mean_up",
            "x_mean_down",
            "x2_bath",
            "x2_up",
            "x2_down",
            "p2_bath",
            "p2_up",
            "p2_down",
        )
    }
    trajectory = []

    def record(t):
        st = make_state(t)
        trajectory.append(st)
        bd = energy_breakdown(st, sys_post)
        records["norm_bath"].append(st.bath.norm2())
        records["norm_up"].append(st.impurity.up.norm2())
        records["norm_down"].append(st.impurity.down.norm2())
        records["energy_total"].append(bd.total)
        records["kinetic_b"].append(bd.kinetic_b)
        records["potential_b"].append(bd.potential_b)
        records["kinetic_i"].append(bd.kinetic_i)
        records["potential_i"].append(bd.potential_i)
        records["intra_bb"].append(bd.intra_bb)
        records["inter_bi"].append(bd.inter_bi)
        for tag, f in (("bath", st.bath), ("up", st.impurity.up), ("down", st.impurity.down)):
            mass = sys_post.mass_b if tag == "bath" else sys_post.mass_i
            records[f"x_mean_{tag}"].append(expectation_x(f))
            records[f"x2_{tag}"].append(expectation_x2(f))
            records[f"p2_{tag}"].append(expectation_p2(f, mass=mass))
        return bd.total

    e0 = record(state.time)
    t = state.time
    phase = np.empty_like(cols)
    for _ in range(n_records):
        # merged Strang block: K/2 (V K)^{m-1} V K/2
        kin_apply(kin_half)
        for sub in range(record_every):
            dens_b = np.abs(cols[:, 0]) ** 2
            phase[:, 0] = np.exp(
                -1j
                * dt
                * (trap_b + sys_post.g_bb * (n - 1) * dens_b + sys_post.g_bi * np.abs(cols[:, 1]) ** 2)
            )
            phase[:, 1] = np.exp(-1j * dt * (trap_i + sys_post.g_bi * n * dens_b))
            phase[:, 2] = np.exp(-1j * dt * trap_i)
            cols *= phase
            if sub < record_every - 1:
                kin_apply(kin_full)
        kin_apply(kin_half)
        t += record_every * dt
        e_now = record(t)
        norm_drift = max(
            abs(records["norm_bath"][-1] - 1.0),
            abs(records["norm_up"][-1] - 1.0),
            abs(records["norm_down"][-1] - 1.0),
        )
        if norm_drift > 1e-6:
            raise StepSizeError(
                f"norm drift {norm_drift:.2e} at t={t:.3f}; reduce dt",
                suggested_dt=dt / 2,
            )
        if abs(e_now - e0) > 1e-6 * max(abs(e0), 1e-12):
            raise StepSizeError(
                f"energy drift {abs(e_now - e0):.2e} at t={t:.3f}; reduce dt",
                suggested_dt=dt / 2,
            )

    dt_sample = record_every * dt
    series = {
        key: TimeSeries(state.time, dt_sample, np.asarray(vals), label=key)
        for key, vals in records.items()
    }
    return trajectory, series


@dataclass(frozen=True)
class ContrastBundle:
    s: TimeSeries
    magnitude: TimeSeries
    phase: TimeSeries


def mean_field_contrast(trajectory, initial, sys):
    """Ramsey contrast S(t) = e^{i E0 t} <phi_B^0|phi_B(t)>^{N_B} <phi_up^0|phi_up(t)>
    from a propagated trajectory; E0 is the pre-quench energy carried by `initial`
    and N_B comes from the system. The alpha, beta reweighting is a separate exact
    identity (observables.general_weights_contrast)."""
    if not trajectory:
        raise UsageError("empty trajectory")
    initial.bath.grid.require_same(trajectory[0].bath.grid)
    times = np.array([st.time for st in trajectory])
    dts = np.diff(times)
    if times.size < 2 or not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
        raise UsageError("trajectory must be uniformly recorded")
    e0 = initial.energy_reference
    s_vals = np.empty(times.size, dtype=np.complex128)
    for k, st in enumerate(trajectory):
        ov_b = inner(initial.bath, st.bath)
        ov_u = inner(initial.impurity.up, st.impurity.up)
        s_vals[k] = np.exp(1j * e0 * st.time) * ov_u * ov_b**sys.n_bath
    s = TimeSeries(float(times[0]), float(dts[0]), s_vals, label="S(t)")
    magnitude = TimeSeries(s.t0, s.dt_sample, np.abs(s_vals), label="|S|")
    phase = TimeSeries(
        s.t0, s.dt_sample, np.unwrap(np.angle(s_vals)), label="phase"
    )
    return ContrastBundle(s=s, magnitude=magnitude, phase=phase)
