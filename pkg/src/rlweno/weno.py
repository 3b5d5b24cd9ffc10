"""Fifth-order finite-difference WENO reconstruction with Roe-sign upwinding.

For the interface j+1/2 the six flux values (f_{j-2}, ..., f_{j+3}) yield four
third-order candidate fluxes, one per 3-point stencil.  Classical WENO picks
the upwind three of them and blends with smoothness-adaptive weights; the
learned policy replaces the blend weights while keeping the candidates.

Scalar entry points operate on a single 6-value window; the ``*_batch``
functions evaluate all J interfaces of a periodic field at once and are the
paths used by the solvers.
"""

import numpy as np

from .core import FluxFunction, ProblemInstance, Trajectory, evolve

EPS = 1e-6

# Candidate reconstruction coefficients, one row per stencil
#   {j-2,j-1,j}, {j-1,j,j+1}, {j,j+1,j+2}, {j+1,j+2,j+3},
# applied to the window (f_{j-2}, ..., f_{j+3}).
CANDIDATE_COEFFS = np.array([
    [2.0, -7.0, 11.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 5.0, 2.0, 0.0, 0.0],
    [0.0, 0.0, 2.0, 5.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 11.0, -7.0, 2.0],
]) / 6.0

# Optimal linear weights ordered from the most-upwind to the most-downwind
# of the three admissible stencils.
OPTIMAL_WEIGHTS = np.array([0.1, 0.6, 0.3])


def roe_speed(u_left: float, u_right: float, flux: FluxFunction) -> float:
    """Secant slope of the flux; falls back to f'(u_left) when degenerate."""
    du = u_right - u_left
    if abs(du) > 1e-12 * (1.0 + abs(u_left)):
        return float((flux.value(u_right) - flux.value(u_left)) / du)
    return float(flux.derivative(u_left))


def roe_speeds_batch(values: np.ndarray, flux: FluxFunction) -> np.ndarray:
    """Roe speed at every interface j+1/2 from (u_j, u_{j+1}), periodic."""
    u = np.asarray(values, dtype=float)
    ur = np.roll(u, -1)
    du = ur - u
    degenerate = np.abs(du) <= 1e-12 * (1.0 + np.abs(u))
    safe = np.where(degenerate, 1.0, du)
    secant = (flux.value(ur) - flux.value(u)) / safe
    return np.where(degenerate, flux.derivative(u), secant)


def candidate_fluxes(window: np.ndarray) -> np.ndarray:
    """Four 3rd-order interface interpolants from a 6-value flux window."""
    w = np.asarray(window, dtype=float)
    return CANDIDATE_COEFFS @ w


def _beta(a, b, c):
    # Jiang-Shu indicator for one stencil traversed upwind-to-downwind.
    return 13.0 / 12.0 * (a - 2.0 * b + c) ** 2 + 0.25 * (a - 4.0 * b + 3.0 * c) ** 2


def _beta_mid(a, b, c):
    return 13.0 / 12.0 * (a - 2.0 * b + c) ** 2 + 0.25 * (a - c) ** 2


def smoothness_indicators(window: np.ndarray, upwind_positive: bool) -> np.ndarray:
    """Three Jiang-Shu indicators, most-upwind stencil first."""
    f = np.asarray(window, dtype=float)
    if upwind_positive:
        return np.array([
            _beta(f[0], f[1], f[2]),
            _beta_mid(f[1], f[2], f[3]),
            _beta(f[4], f[3], f[2]),
        ])
    return np.array([
        _beta(f[5], f[4], f[3]),
        _beta_mid(f[4], f[3], f[2]),
        _beta(f[1], f[2], f[3]),
    ])


def weno_weights(betas: np.ndarray, upwind_positive: bool) -> np.ndarray:
    """Nonlinear weights in slot order (w^-2, w^-1, w^0, w^1); the slot on
    the excluded (downwind) side is exactly 0."""
    b = np.asarray(betas, dtype=float)
    alpha = OPTIMAL_WEIGHTS / (EPS + b) ** 2
    w = alpha / alpha.sum()
    out = np.zeros(4)
    if upwind_positive:
        out[0], out[1], out[2] = w[0], w[1], w[2]
    else:
        out[3], out[2], out[1] = w[0], w[1], w[2]
    return out


def weno_interface_flux(u_window: np.ndarray, flux: FluxFunction) -> float:
    """Classical WENO-5 flux at the interface of a 6-value u window."""
    u = np.asarray(u_window, dtype=float)
    f = flux.value(u)
    positive = roe_speed(u[2], u[3], flux) >= 0.0
    w = weno_weights(smoothness_indicators(f, positive), positive)
    c = candidate_fluxes(f)
    return float(w[0] * c[0] + w[1] * c[1] + w[2] * c[2] + w[3] * c[3])


# ---------------------------------------------------------------------------
# Vectorized interface evaluation over a periodic field


def flux_windows(f: np.ndarray) -> np.ndarray:
    """(J, 6) array: row j holds (f_{j-2}, ..., f_{j+3}) for interface j+1/2."""
    fpad = np.concatenate([f[-2:], f, f[:3]])
    return np.lib.stride_tricks.sliding_window_view(fpad, 6)


def candidate_fluxes_batch(windows: np.ndarray) -> np.ndarray:
    """(J, 4) candidates from (J, 6) windows."""
    return windows @ CANDIDATE_COEFFS.T


def weno_weights_batch(windows: np.ndarray, positive: np.ndarray) -> np.ndarray:
    """(J, 4) classical WENO weights from (J, 6) flux windows and the
    per-interface upwind flags."""
    f0, f1, f2, f3, f4, f5 = windows.T
    # second differences shared between the two wind directions
    s1 = f0 - 2.0 * f1 + f2
    s2 = f1 - 2.0 * f2 + f3
    s3 = f2 - 2.0 * f3 + f4
    s4 = f3 - 2.0 * f4 + f5
    c1, c2 = 13.0 / 12.0, 0.25
    b_up = np.where(positive, c1 * s1 * s1 + c2 * (f0 - 4.0 * f1 + 3.0 * f2) ** 2,
                    c1 * s4 * s4 + c2 * (f5 - 4.0 * f4 + 3.0 * f3) ** 2)
    b_mid = np.where(positive, c1 * s2 * s2 + c2 * (f1 - f3) ** 2,
                     c1 * s3 * s3 + c2 * (f4 - f2) ** 2)
    b_dn = np.where(positive, c1 * s3 * s3 + c2 * (3.0 * f2 - 4.0 * f3 + f4) ** 2,
                    c1 * s2 * s2 + c2 * (f1 - 4.0 * f2 + 3.0 * f3) ** 2)
    a_up = OPTIMAL_WEIGHTS[0] / (EPS + b_up) ** 2
    a_mid = OPTIMAL_WEIGHTS[1] / (EPS + b_mid) ** 2
    a_dn = OPTIMAL_WEIGHTS[2] / (EPS + b_dn) ** 2
    norm = a_up + a_mid + a_dn
    w_up, w_mid, w_dn = a_up / norm, a_mid / norm, a_dn / norm
    zero = np.zeros_like(w_up)
    out = np.empty((windows.shape[0], 4))
    out[:, 0] = np.where(positive, w_up, zero)
    out[:, 1] = np.where(positive, w_mid, w_dn)
    out[:, 2] = np.where(positive, w_dn, w_mid)
    out[:, 3] = np.where(positive, zero, w_up)
    return out


def combine_candidates(weights: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Row-wise convex combination; the single flux-assembly expression shared
    by the classical scheme and the learned policy."""
    return (weights[..., 0] * candidates[..., 0] + weights[..., 1] * candidates[..., 1]
            + weights[..., 2] * candidates[..., 2] + weights[..., 3] * candidates[..., 3])


def _roe_positive_from_windows(values: np.ndarray, windows: np.ndarray,
                               flux: FluxFunction) -> np.ndarray:
    """Upwind flags reusing the already-evaluated flux window columns
    (window cols 2 and 3 are f_j and f_{j+1})."""
    u = np.asarray(values, dtype=float)
    du = np.roll(u, -1) - u
    degenerate = np.abs(du) <= 1e-12 * (1.0 + np.abs(u))
    secant = (windows[:, 3] - windows[:, 2]) / np.where(degenerate, 1.0, du)
    return np.where(degenerate, flux.derivative(u), secant) >= 0.0


def interface_fluxes(values: np.ndarray, flux: FluxFunction) -> np.ndarray:
    """Classical WENO-5 fluxes at all J interfaces of a periodic field."""
    f = flux.value(np.asarray(values, dtype=float))
    windows = flux_windows(f)
    positive = _roe_positive_from_windows(values, windows, flux)
    w = weno_weights_batch(windows, positive)
    return combine_candidates(w, candidate_fluxes_batch(windows))


def weno_solve(problem: ProblemInstance, integrator: str = "rk4") -> Trajectory:
    """Full WENO-5 trajectory (Roe upwinding, conservative form)."""
    return evolve(problem, lambda u: interface_fluxes(u, problem.flux),
                  integrator=integrator)
