"""Grids, flux functions, problem instances, time integrators, and
fine-grid reference solutions for 1D periodic scalar conservation laws

    u_t + f(u)_x = eta * u_xx + F(x, t).

Everything here is plain float64 numpy; all randomness flows through
explicit ``numpy.random.Generator`` seeds.
"""

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class BlowUpError(RuntimeError):
    """A solution value became non-finite (the run 'blew up')."""


class CflViolationError(RuntimeError):
    """The CFL number exceeds the configured limit; the run is rejected."""

    def __init__(self, cfl: float, limit: float):
        super().__init__(f"CFL number {cfl:.4g} exceeds limit {limit:.4g}")
        self.cfl = cfl
        self.limit = limit


class ConfigurationError(ValueError):
    """Inconsistent or invalid problem / run configuration."""


CFL_LIMIT = 1.0

# Fine reference resolution, expressed per unit of half-domain-length so the
# [-1, 1] setting gets (0.002, 0.0002) and [0, 2pi] gets (0.002pi, 0.0002pi).
REFERENCE_DX_FACTOR = 0.002
REFERENCE_DT_FACTOR = 0.0002


def _check_integer_ratio(num: float, den: float, what: str, rtol: float = 1e-9) -> int:
    ratio = num / den
    nearest = round(ratio)
    if nearest < 1 or abs(ratio - nearest) > rtol * max(1.0, abs(ratio)):
        raise ConfigurationError(
            f"{what}: {num!r} / {den!r} = {ratio!r} is not a positive integer"
        )
    return int(nearest)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic space-time mesh.

    ``J`` cells of width ``dx`` tile ``[x_lo, x_hi)``; index arithmetic wraps
    modulo ``J``.  ``n_steps`` steps of size ``dt`` cover the run.
    """

    x_lo: float
    x_hi: float
    dx: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0:
            raise ConfigurationError("dx and dt must be positive")
        if self.x_hi <= self.x_lo:
            raise ConfigurationError("x_hi must exceed x_lo")
        if self.n_steps < 0:
            raise ConfigurationError("n_steps must be nonnegative")
        j = _check_integer_ratio(self.x_hi - self.x_lo, self.dx, "domain/dx")
        if j < 7:
            raise ConfigurationError(f"J = {j} < 7: a WENO window must fit")

    @property
    def J(self) -> int:
        return round((self.x_hi - self.x_lo) / self.dx)

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    def nodes(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.J)

    @staticmethod
    def for_time(x_lo: float, x_hi: float, dx: float, dt: float, T: float) -> "Grid":
        n = _check_integer_ratio(T, dt, "T/dt")
        return Grid(x_lo, x_hi, dx, dt, n)


@dataclass(frozen=True)
class FluxFunction:
    """Flux f(u) with its exact analytic derivative (the wave speed)."""

    tag: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]


FLUXES = {
    "burgers_half_u2": FluxFunction(
        "burgers_half_u2", lambda u: 0.5 * u * u, lambda u: np.asarray(u, dtype=float)
    ),
    "u4_over_16": FluxFunction(
        "u4_over_16", lambda u: u**4 / 16.0, lambda u: u**3 / 4.0
    ),
    "linear_u": FluxFunction(
        "linear_u",
        lambda u: np.asarray(u, dtype=float),
        lambda u: np.ones_like(np.asarray(u, dtype=float)),
    ),
    "u2": FluxFunction("u2", lambda u: u * u, lambda u: 2.0 * u),
}


def flux_by_tag(tag: str) -> FluxFunction:
    try:
        return FLUXES[tag]
    except KeyError:
        raise ConfigurationError(f"unknown flux tag {tag!r}") from None


@dataclass(frozen=True)
class IcParams:
    a: float
    b: float
    c: int
    d: float
    e: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.a + self.b * np.sin(self.c * np.pi * x) + self.d * np.cos(self.e * np.pi * x)


def sample_initial_condition(rng_seed, c_choices: Sequence[int]) -> IcParams:
    """Draw u0(x) = a + b sin(c pi x) + d cos(e pi x) with
    |a| <= 1.2, |b| <= 3 - |a|, |a| + |b| + |d| = 4.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    choices = sorted(set(int(c) for c in c_choices))
    if not choices:
        raise ConfigurationError("c_choices must be nonempty")
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    a = rng.uniform(-1.2, 1.2)
    b = rng.uniform(-(3.0 - abs(a)), 3.0 - abs(a))
    d = (4.0 - abs(a) - abs(b)) * (1.0 if rng.uniform() < 0.5 else -1.0)
    c = choices[rng.integers(len(choices))]
    e = choices[rng.integers(len(choices))]
    return IcParams(a=a, b=b, c=c, d=d, e=e)


@dataclass(frozen=True)
class ForcingParams:
    """F(x, t) = sum_i A_i sin(omega_i t + 2 pi l_i x / L + psi_i)."""

    amplitudes: tuple
    omegas: tuple
    wavenumbers: tuple
    phases: tuple
    domain_length: float

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        A = np.asarray(self.amplitudes)[:, None]
        w = np.asarray(self.omegas)[:, None]
        l = np.asarray(self.wavenumbers)[:, None]
        p = np.asarray(self.phases)[:, None]
        phase = w * t + (2.0 * np.pi / self.domain_length) * l * x[None, :] + p
        return (A * np.sin(phase)).sum(axis=0)


FORCING_TERMS = 20


def sample_forcing(rng_seed, L: float) -> ForcingParams:
    """Draw a 20-term random sinusoidal forcing, L-periodic in x."""
    if L <= 0:
        raise ConfigurationError("domain length must be positive")
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    A = rng.uniform(-0.5, 0.5, FORCING_TERMS)
    w = rng.uniform(-0.4, 0.4, FORCING_TERMS)
    l = rng.integers(3, 7, FORCING_TERMS)
    psi = rng.uniform(0.0, 2.0 * np.pi, FORCING_TERMS)
    return ForcingParams(tuple(A), tuple(w), tuple(l), tuple(psi), L)


@dataclass(frozen=True)
class ProblemInstance:
    """One conservation-law run: grid, flux, initial condition, physics."""

    grid: Grid
    flux: FluxFunction
    u0: Callable[[np.ndarray], np.ndarray]
    eta: float = 0.0
    forcing: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigurationError("eta must be nonnegative")

    @property
    def T(self) -> float:
        return self.grid.T

    def initial_field(self) -> "SolutionField":
        return SolutionField(np.asarray(self.u0(self.grid.nodes()), dtype=float), 0)


@dataclass
class SolutionField:
    """One time slice of approximations U^n_j."""

    values: np.ndarray
    time_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise BlowUpError(f"non-finite values at time index {self.time_index}")


@dataclass
class Trajectory:
    """Solution fields for n = 0..N, indices increasing by one."""

    fields: list = field(default_factory=list)

    def append(self, f: SolutionField):
        if self.fields and f.time_index != self.fields[-1].time_index + 1:
            raise ConfigurationError("time indices must increase by 1")
        self.fields.append(f)

    def values(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, n: int) -> SolutionField:
        return self.fields[n]


def rhs_conservative(interface_fluxes: np.ndarray, dx: float) -> np.ndarray:
    """Tendency -(fhat_{j+1/2} - fhat_{j-1/2}) / dx; entry j of the input is
    the flux at interface j+1/2, wrapped periodically."""
    fhat = np.asarray(interface_fluxes, dtype=float)
    if not np.all(np.isfinite(fhat)):
        raise BlowUpError("non-finite interface fluxes")
    return -(fhat - np.roll(fhat, 1)) / dx


def viscous_term(values: np.ndarray, eta: float, dx: float) -> np.ndarray:
    """Second-order central difference of eta * u_xx, periodic."""
    if eta == 0.0:
        return np.zeros_like(values)
    u = np.asarray(values, dtype=float)
    return eta * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / (dx * dx)


def step_euler(f: SolutionField, rhs: Callable[[np.ndarray, float], np.ndarray],
               dt: float, t: float = 0.0) -> SolutionField:
    """Forward Euler step; raises BlowUpError if the result is non-finite."""
    new = f.values + dt * rhs(f.values, t)
    return SolutionField(new, f.time_index + 1)


def step_rk4(f: SolutionField, rhs: Callable[[np.ndarray, float], np.ndarray],
             dt: float, t: float = 0.0) -> SolutionField:
    """Classical four-stage RK4 step with stage times t, t+dt/2, t+dt/2, t+dt."""
    u = f.values
    k1 = rhs(u, t)
    k2 = rhs(u + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(u + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(u + dt * k3, t + dt)
    new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return SolutionField(new, f.time_index + 1)


STEPPERS = {"euler": step_euler, "rk4": step_rk4}


def cfl_number(values: np.ndarray, flux: FluxFunction, dx: float, dt: float) -> float:
    """dt/dx times the maximum wave speed on the field."""
    u = np.asarray(values, dtype=float)
    return dt / dx * float(np.max(np.abs(flux.derivative(u))))


def total_mass(values: np.ndarray, dx: float) -> float:
    return dx * float(np.asarray(values, dtype=float).sum())


def evolve(problem: ProblemInstance,
           interface_flux_fn: Callable[[np.ndarray], np.ndarray],
           integrator: str = "rk4",
           check_cfl: bool = True) -> Trajectory:
    """Advance the problem over its full grid horizon.

    ``interface_flux_fn(values) -> fhat`` supplies the J interface fluxes
    (entry j is interface j+1/2).  Viscous and forcing tendencies are added
    inside every stage.
    """
    step = STEPPERS[integrator]
    grid = problem.grid
    x = grid.nodes()
    f = problem.initial_field()
    if check_cfl:
        cfl = cfl_number(f.values, problem.flux, grid.dx, grid.dt)
        if cfl > CFL_LIMIT:
            raise CflViolationError(cfl, CFL_LIMIT)

    def rhs(values, t):
        dudt = rhs_conservative(interface_flux_fn(values), grid.dx)
        if problem.eta:
            dudt = dudt + viscous_term(values, problem.eta, grid.dx)
        if problem.forcing is not None:
            dudt = dudt + problem.forcing(x, t)
        return dudt

    traj = Trajectory()
    traj.append(f)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(grid.n_steps):
            f = step(f, rhs, grid.dt, n * grid.dt)
            traj.append(f)
    return traj


# ---------------------------------------------------------------------------
# Reference solutions


@dataclass
class ReferenceSolution:
    """Fine-grid trajectory treated as ground truth, with exact restriction
    (pure subsampling) onto compatible coarser grids."""

    grid: Grid
    values: np.ndarray  # (n_steps + 1, J)
    meta: dict = field(default_factory=dict)

    def restrict(self, coarse: Grid) -> np.ndarray:
        if abs(coarse.x_lo - self.grid.x_lo) > 1e-12 or abs(coarse.x_hi - self.grid.x_hi) > 1e-12:
            raise ConfigurationError("coarse grid domain differs from reference domain")
        sr = _check_integer_ratio(coarse.dx, self.grid.dx, "coarse dx / fine dx")
        tr = _check_integer_ratio(coarse.dt, self.grid.dt, "coarse dt / fine dt")
        if coarse.n_steps * tr > self.grid.n_steps:
            raise ConfigurationError("reference horizon shorter than coarse horizon")
        return self.values[: coarse.n_steps * tr + 1 : tr, ::sr]


def reference_grid_for(x_lo: float, x_hi: float, T: float) -> Grid:
    """Fine grid at (0.002, 0.0002) per unit half-length of the domain."""
    half = (x_hi - x_lo) / 2.0
    return Grid.for_time(x_lo, x_hi, REFERENCE_DX_FACTOR * half, REFERENCE_DT_FACTOR * half, T)


def generate_reference(problem: ProblemInstance,
                       interface_flux_fn_factory: Callable[[FluxFunction], Callable] = None,
                       ) -> ReferenceSolution:
    """Solve the problem with WENO-5 + RK4 on the fine reference grid."""
    # import here: weno builds on top of this module
    from . import weno

    grid = problem.grid
    fine = reference_grid_for(grid.x_lo, grid.x_hi, grid.T)
    _check_integer_ratio(grid.dx, fine.dx, "coarse dx / fine dx")
    _check_integer_ratio(grid.dt, fine.dt, "coarse dt / fine dt")
    fine_problem = ProblemInstance(fine, problem.flux, problem.u0, problem.eta, problem.forcing)
    if interface_flux_fn_factory is None:
        flux_fn = lambda values: weno.interface_fluxes(values, problem.flux)
    else:
        flux_fn = interface_flux_fn_factory(problem.flux)
    traj = evolve(fine_problem, flux_fn, integrator="rk4", check_cfl=False)
    return ReferenceSolution(fine, traj.values())


def save_reference(ref: ReferenceSolution, path_stem: str) -> None:
    """Persist as <stem>.json sidecar + <stem>.f64 little-endian float64,
    row-major [time][space]."""
    sidecar = {
        "format_version": 1,
        "grid": {
            "x_lo": ref.grid.x_lo, "x_hi": ref.grid.x_hi,
            "dx": ref.grid.dx, "dt": ref.grid.dt, "n_steps": ref.grid.n_steps,
        },
        "shape": list(ref.values.shape),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    sidecar.update(ref.meta)
    with open(path_stem + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, default=float)
    ref.values.astype("<f8").tofile(path_stem + ".f64")


def load_reference(path_stem: str) -> ReferenceSolution:
    with open(path_stem + ".json") as fh:
        sidecar = json.load(fh)
    g = sidecar["grid"]
    grid = Grid(g["x_lo"], g["x_hi"], g["dx"], g["dt"], g["n_steps"])
    values = np.fromfile(path_stem + ".f64", dtype="<f8").reshape(sidecar["shape"])
    meta = {k: v for k, v in sidecar.items() if k not in ("grid", "shape", "format_version")}
    return ReferenceSolution(grid, values, meta)
