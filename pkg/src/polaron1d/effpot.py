"""Effective-potential tier: the impurity moves in the static potential
V_eff(x) = (1/2) m omega^2 x^2 + g_bi * rho_bath(x) built from a frozen bath
density (Thomas-Fermi closed form, a relaxed mean-field profile, or an
externally supplied sample). Eigensolve, quench/breathing dynamics, contrast
and effective-mass extraction all live here.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst
from scipy.linalg import eigh
from scipy.optimize import least_squares

from .errors import (
    AnalysisError,
    ConfigurationError,
    FitQualityError,
    UsageError,
)
from .grid import Field, box_wavenumbers, inner
from .meanfield import ThomasFermiProfile
from .observables import TimeSeries, dominant_frequency


@dataclass(frozen=True)
class EffectivePotential:
    grid: object
    values: np.ndarray = field(repr=False, compare=False)
    source: str = "externally-supplied"
    g_bi: float = 0.0
    mass: float = 1.0
    omega_trap: float = 1.0

    def curvature_at_origin(self):
        """Discrete second derivative of V_eff at x = 0."""
        x, v = self.grid.x, self.values
        i = int(np.argmin(np.abs(x)))
        if i == 0 or i >= x.size - 1:
            raise UsageError("origin not interior to the grid")
        if abs(x[i]) < 1e-12:
            return float((v[i + 1] - 2.0 * v[i] + v[i - 1]) / self.grid.dx**2)
        # even grid: nodes straddle 0 at +-dx/2; use the symmetric 4-point form
        j = i if x[i] > 0 else i + 1
        return float(
            (v[j + 1] - v[j] - v[j - 1] + v[j - 2]) / (2.0 * self.grid.dx**2)
        )

    def well_minima(self):
        """Locations of interior local minima (double-well reporting)."""
        v = self.values
        interior = (v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:])
        return self.grid.x[1:-1][interior]


def build_effective_potential(bath_density, g_bi, grid=None, mass=1.0, omega_trap=1.0):
    """V_eff = trap + g_bi * rho. `bath_density` is a Field (density normalized
    to the particle number) or a ThomasFermiProfile."""
    if g_bi < 0:
        raise ConfigurationError("g_bi must be >= 0")
    if isinstance(bath_density, ThomasFermiProfile):
        if grid is None:
            raise UsageError("a grid is required with a Thomas-Fermi source")
        rho = bath_density.density_values(grid.x)
        source = "TF-analytic"
    else:
        grid = bath_density.grid
        rho = np.real(bath_density.values)
        source = "relaxed-MF-density"
        if np.min(rho) < -1e-10:
            raise UsageError("density has negative values")
        rho = np.clip(rho, 0.0, None)
    values = 0.5 * mass * omega_trap**2 * grid.x**2 + g_bi * rho
    return EffectivePotential(
        grid=grid,
        values=values,
        source=source,
        g_bi=g_bi,
        mass=mass,
        omega_trap=omega_trap,
    )


def load_density_file(path, grid):
    """Two-column (x, rho) text sample interpolated onto the grid."""
    data = np.loadtxt(path)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ConfigurationError(f"{path}: expected two columns (x, rho)")
    x, rho = data[:, 0], data[:, 1]
    order = np.argsort(x)
    x, rho = x[order], rho[order]
    if np.min(rho) < -1e-10:
        raise ConfigurationError(f"{path}: density has negative values")
    vals = np.interp(grid.x, x, np.clip(rho, 0.0, None), left=0.0, right=0.0)
    return Field(grid, vals)


@dataclass(frozen=True)
class PotentialSpectrum:
    energies: np.ndarray = field(repr=False, compare=False)
    states: tuple
    n_eig: int
    box_contaminated: np.ndarray = field(repr=False, compare=False)
    potential: EffectivePotential = None


def _kinetic_dense(grid, mass):
    m = grid.n_points - 2
    k = box_wavenumbers(grid)
    s = dst(np.eye(m), type=1, norm="ortho", axis=0)
    return s.T @ (k[:, None] ** 2 / (2.0 * mass) * s)


def eigensolve(pot, n_eig=40):
    """Lowest n_eig eigenpairs of -(1/2m) d^2/dx^2 + V_eff under hard walls.
    States whose energy exceeds V_eff(+-0.9 x_max) are flagged as
    contaminated by box (wall) states."""
    if n_eig > 60:
        raise ConfigurationError("n_eig must be <= 60")
    grid = pot.grid
    h = _kinetic_dense(grid, pot.mass)
    h = h + np.diag(pot.values[1:-1])
    energies, vecs = eigh(h, subset_by_index=[0, n_eig - 1])
    states = []
    for j in range(n_eig):
        v = np.zeros(grid.n_points)
        v[1:-1] = vecs[:, j] / np.sqrt(grid.dx)
        # deterministic sign: first sizable component positive
        lead = np.flatnonzero(np.abs(v) > 1e-8 * np.max(np.abs(v)))
        if lead.size and v[lead[0]] < 0:
            v = -v
        states.append(Field(grid, v.astype(np.complex128)))
    wall = 0.9 * grid.x_max
    v_wall = min(
        float(np.interp(-wall, grid.x, pot.values)),
        float(np.interp(wall, grid.x, pot.values)),
    )
    contaminated = energies > v_wall
    return PotentialSpectrum(
        energies=energies,
        states=tuple(states),
        n_eig=n_eig,
        box_contaminated=contaminated,
        potential=pot,
    )


def bare_ground_state(grid, mass=1.0, omega=1.0):
    """Gaussian ground state of the bare trap (the pre-quench impurity)."""
    vals = (mass * omega / np.pi) ** 0.25 * np.exp(-0.5 * mass * omega * grid.x**2)
    return Field(grid, vals.astype(np.complex128)).normalized()


@dataclass(frozen=True)
class EffpotContrast:
    series: TimeSeries
    weights: np.ndarray = field(repr=False, compare=False)
    energies: np.ndarray = field(repr=False, compare=False)


def effpot_contrast(spec, initial=None, t_max=100.0, dt=0.05, e_reference=None):
    """Contrast from the stationary-state expansion:
    S(t) = sum_n |<psi_n|initial>|^2 exp(-i (E_n - E_ho) t), with E_ho the
    pre-quench impurity energy (omega/2 by default)."""
    grid = spec.states[0].grid
    if initial is None:
        initial = bare_ground_state(grid, mass=spec.potential.mass)
    grid.require_same(initial.grid)
    if e_reference is None:
        e_reference = 0.5 * spec.potential.omega_trap
    overlaps = np.array([inner(st, initial) for st in spec.states])
    weights = np.abs(overlaps) ** 2
    total = float(np.sum(weights))
    if total < 0.999:
        raise AnalysisError(
            f"stationary-state expansion incomplete: sum of weights {total:.6f} "
            f"< 0.999; increase n_eig"
        )
    n = int(round(t_max / dt)) + 1
    t = dt * np.arange(n)
    phases = np.exp(-1j * np.outer(t, spec.energies - e_reference))
    s_vals = phases @ weights
    series = TimeSeries(0.0, dt, s_vals, label="S(t)")
    return EffpotContrast(series=series, weights=weights, energies=spec.energies)


def _moment_matrix(spec, values_on_grid):
    """Matrix elements <psi_m| f(x) |psi_n> for a grid-sampled f."""
    grid = spec.states[0].grid
    mat = np.array(
        [
            [
                float(
                    np.real(
                        np.sum(
                            np.conj(a.values) * values_on_grid * b.values
                        )
                        * grid.dx
                    )
                )
                for b in spec.states
            ]
            for a in spec.states
        ]
    )
    return mat


def _kinetic_matrix(spec):
    from .grid import kinetic_apply

    mass = spec.potential.mass
    applied = [kinetic_apply(st, mass=mass) for st in spec.states]
    return np.array(
        [[float(np.real(inner(a, tb))) for tb in applied] for a in spec.states]
    )


@dataclass(frozen=True)
class BreathingResult:
    series: dict
    omega_br: float
    weights: np.ndarray = field(repr=False, compare=False)


def breathing_run(pot_builder, omega_i_initial, omega_i_final, t_max=80.0, dt=0.02, n_eig=40):
    """Trap-frequency quench of a single particle in the effective potential.

    pot_builder(omega) must return the EffectivePotential whose trap part uses
    that frequency. The particle starts in the ground state of
    pot_builder(omega_i_initial) and evolves in pot_builder(omega_i_final);
    the breathing frequency is the dominant line of the position variance
    (the center-of-mass record is kept alongside).
    """
    if omega_i_initial <= 0 or omega_i_final <= 0:
        raise ConfigurationError("trap frequencies must be > 0")
    spec0 = eigensolve(pot_builder(omega_i_initial), n_eig=n_eig)
    initial = spec0.states[0]
    spec1 = eigensolve(pot_builder(omega_i_final), n_eig=n_eig)
    coeffs = np.array([inner(st, initial) for st in spec1.states])
    total = float(np.sum(np.abs(coeffs) ** 2))
    if total < 0.999:
        raise AnalysisError(
            f"post-quench expansion incomplete ({total:.6f}); increase n_eig"
        )
    grid = initial.grid
    x_mat = _moment_matrix(spec1, grid.x)
    x2_mat = _moment_matrix(spec1, grid.x**2)
    p2_mat = 2.0 * spec1.potential.mass * _kinetic_matrix(spec1)
    n = int(round(t_max / dt)) + 1
    t = dt * np.arange(n)
    phases = np.exp(-1j * np.outer(t, spec1.energies)) * coeffs
    x_t = np.real(np.einsum("tm,mn,tn->t", np.conj(phases), x_mat, phases))
    x2_t = np.real(np.einsum("tm,mn,tn->t", np.conj(phases), x2_mat, phases))
    p2_t = np.real(np.einsum("tm,mn,tn->t", np.conj(phases), p2_mat, phases))
    series = {
        "x_mean": TimeSeries(0.0, dt, x_t, label="<x>"),
        "x2": TimeSeries(0.0, dt, x2_t, label="<x^2>"),
        "p2": TimeSeries(0.0, dt, p2_t, label="<p^2>"),
    }
    variance = TimeSeries(0.0, dt, x2_t - x_t**2, label="var(x)")
    omega_br, _ = dominant_frequency(variance)
    return BreathingResult(series=series, omega_br=float(omega_br), weights=np.abs(coeffs) ** 2)


@dataclass(frozen=True)
class EffectiveMassFit:
    m_eff: float
    omega_eff: float
    residual: float


def fit_effective_mass(x2_series, p2_series, initial_moments, mass=1.0):
    """Joint least-squares fit of the harmonic-evolution closed forms

        <x^2>(t) = (p2_0 / (m w)^2) sin^2(wt) + x2_0 cos^2(wt)
        <p^2>(t) = p2_0 cos^2(wt) + (m w)^2 x2_0 sin^2(wt)

    for the effective mass and trap frequency of the dressed impurity. The
    polaron self-energy is a constant offset and is not extractable from
    these series. Raises FitQualityError when the residual exceeds 5% of the
    signal amplitude (model invalid, e.g. outside the miscible regime).
    """
    x2_0 = float(initial_moments["x2_0"])
    p2_0 = float(initial_moments["p2_0"])
    if x2_series.dt_sample != p2_series.dt_sample or x2_series.values.size != p2_series.values.size:
        raise UsageError("x2 and p2 series must share a sampling grid")
    t = x2_series.times - x2_series.t0
    x2 = np.asarray(x2_series.values, dtype=float)
    p2 = np.asarray(p2_series.values, dtype=float)

    # rough frequency seed: variance oscillates at 2 w
    om_seed, _ = dominant_frequency(x2_series)
    om_seed = max(om_seed / 2.0, 1e-3)
    if x2_series.t_max - x2_series.t0 < 3.0 * (2.0 * np.pi / om_seed) / 2.0:
        raise UsageError("series must cover at least 3 oscillation periods")

    def residuals(p):
        m_eff, om = p
        mw2 = (m_eff * om) ** 2
        rx = (p2_0 / mw2) * np.sin(om * t) ** 2 + x2_0 * np.cos(om * t) ** 2 - x2
        rp = p2_0 * np.cos(om * t) ** 2 + mw2 * x2_0 * np.sin(om * t) ** 2 - p2
        return np.concatenate([rx, rp])

    best = None
    for om0 in (om_seed, om_seed * 0.5, om_seed * 2.0):
        try:
            res = least_squares(
                residuals,
                x0=[mass, om0],
                bounds=([1e-6, 1e-6], [np.inf, np.inf]),
            )
        except ValueError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise AnalysisError("effective-mass fit failed to start")
    m_eff, omega_eff = best.x
    amp = 0.5 * (np.max(x2) - np.min(x2)) + 0.5 * (np.max(p2) - np.min(p2))
    rms = float(np.sqrt(np.mean(residuals(best.x) ** 2)))
    rel = rms / max(amp, 1e-300)
    if rel > 0.05:
        raise FitQualityError(
            f"harmonic model residual {rel:.1%} of the signal amplitude "
            f"(> 5%); fit invalid",
            residual=rel,
        )
    return EffectiveMassFit(m_eff=float(m_eff), omega_eff=float(omega_eff), residual=rel)
