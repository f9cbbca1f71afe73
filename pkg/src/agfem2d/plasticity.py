"""J2 Von Mises isotropic elasto-plasticity under plane strain.

Full 3x3 symmetric tensors are carried in Voigt form (xx, yy, zz, xy) with
engineering shear for strains (gamma = 2*eps_xy) and plain shear for
stresses. Plane strain enters only through eps_zz = 0 on the total strain;
sigma_zz emerges from the model.

The yield function is
    phi = 0.5*sqrt(s:s) - sqrt(2/3)*(sigma_y - q(alpha)),
    q(alpha) = -theta*H*alpha - (K_inf - K_0)*(1 - exp(-delta*alpha)),
and the radial return uses the standard kinematics: d(eps_p) = dgamma * n_hat,
d(alpha) = sqrt(2/3) * dgamma, with the plastic multiplier solving the yield
consistency at the returned state. Note the 0.5 prefactor: the yield surface
radius in deviatoric-stress norm is 2*sqrt(2/3)*(sigma_y - q), twice the
classical Von Mises radius for the same sigma_y parameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["MaterialParams", "PointHistory", "StressResult", "q_hardening",
           "yield_function", "stress_update", "stress_update_batch",
           "elastic_tangent", "tangent_vs_fd", "dev_norm", "VOIGT_I"]

SQ23 = np.sqrt(2.0 / 3.0)
VOIGT_I = np.array([1.0, 1.0, 1.0, 0.0])      # identity tensor in Voigt form
# symmetric identity / deviatoric projector acting on engineering-strain Voigt vectors
_I_SYM = np.diag([1.0, 1.0, 1.0, 0.5])
_I_DEV = _I_SYM - np.outer(VOIGT_I, VOIGT_I) / 3.0


@dataclass(frozen=True)
class MaterialParams:
    youngs_modulus: float
    poisson_ratio: float
    yield_stress: float
    hardening_modulus: float = 0.0
    theta_iso: float = 1.0              # {0, 1} switch for linear isotropic hardening
    saturation_inf: float = 0.0         # K_inf
    saturation_0: float = 0.0           # K_0
    saturation_rate: float = 0.0        # delta

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("Young modulus must be positive")
        if not (0.0 <= self.poisson_ratio < 0.5):
            raise ValueError("Poisson ratio must lie in [0, 0.5)")
        if self.yield_stress <= 0:
            raise ValueError("yield stress must be positive")
        if self.hardening_modulus < 0 or self.saturation_rate < 0:
            raise ValueError("hardening parameters must be non-negative")

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def bulk_modulus(self) -> float:
        return self.youngs_modulus / (3.0 * (1.0 - 2.0 * self.poisson_ratio))


@dataclass
class PointHistory:
    """Plastic history at one point: equivalent plastic strain and plastic
    strain tensor (engineering Voigt)."""

    alpha: float = 0.0
    eps_p: np.ndarray = field(default_factory=lambda: np.zeros(4))


@dataclass
class StressResult:
    sigma: np.ndarray                  # Cauchy stress, Voigt (Pa)
    new_history: PointHistory
    tangent: np.ndarray                # consistent modulus, (4, 4) Voigt
    plastic: bool
    phi_trial: float


def q_hardening(alpha, params: MaterialParams):
    """Stress-like thermodynamic force of the exponential-saturation hardening law."""
    a = np.asarray(alpha, float)
    return (-params.theta_iso * params.hardening_modulus * a
            - (params.saturation_inf - params.saturation_0)
            * (1.0 - np.exp(-params.saturation_rate * a)))


def _radius(alpha, params: MaterialParams):
    """sigma_y - q(alpha), the current yield radius scale."""
    return params.yield_stress - q_hardening(alpha, params)


def _radius_deriv(alpha, params: MaterialParams):
    a = np.asarray(alpha, float)
    return (params.theta_iso * params.hardening_modulus
            + (params.saturation_inf - params.saturation_0)
            * params.saturation_rate * np.exp(-params.saturation_rate * a))


def dev_norm(s_voigt) -> np.ndarray:
    """Frobenius norm of a symmetric deviatoric tensor given in stress Voigt form."""
    s = np.asarray(s_voigt, float)
    return np.sqrt(s[..., 0] ** 2 + s[..., 1] ** 2 + s[..., 2] ** 2 + 2.0 * s[..., 3] ** 2)


def yield_function(s_dev, alpha, params: MaterialParams):
    """phi = 0.5*||s|| - sqrt(2/3)*(sigma_y - q(alpha)); phi < 0 is elastic."""
    return 0.5 * dev_norm(s_dev) - SQ23 * _radius(alpha, params)


def elastic_tangent(params: MaterialParams) -> np.ndarray:
    kappa, g = params.bulk_modulus, params.shear_modulus
    return kappa * np.outer(VOIGT_I, VOIGT_I) + 2.0 * g * _I_DEV


def stress_update_batch(eps: np.ndarray, alpha: np.ndarray, eps_p: np.ndarray,
                        params: MaterialParams, newton_tol_factor: float = 1e-12,
                        newton_max_iters: int = 50):
    """Radial-return stress update at many points simultaneously.

    Parameters
    ----------
    eps : (n, 4) total strain, engineering Voigt
    alpha, eps_p : (n,), (n, 4) previous history
    Returns (sigma, tangent, alpha_new, eps_p_new, phi_trial) with shapes
    (n,4), (n,4,4), (n,), (n,4), (n,).
    """
    eps = np.atleast_2d(np.asarray(eps, float))
    eps_p = np.atleast_2d(np.asarray(eps_p, float))
    alpha = np.atleast_1d(np.asarray(alpha, float))
    n = eps.shape[0]
    g, kappa = params.shear_modulus, params.bulk_modulus

    e_el = eps - eps_p
    tr = e_el[:, 0] + e_el[:, 1] + e_el[:, 2]
    mean = tr / 3.0
    s_tr = np.empty_like(e_el)
    s_tr[:, :3] = 2.0 * g * (e_el[:, :3] - mean[:, None])
    s_tr[:, 3] = g * e_el[:, 3]                      # 2G * eps_xy with eps_xy = gamma/2
    p = kappa * (eps[:, 0] + eps[:, 1] + eps[:, 2])  # tr(eps_p) = 0: volumetric response is elastic

    norm_s = dev_norm(s_tr)
    phi_tr = 0.5 * norm_s - SQ23 * _radius(alpha, params)
    plastic = phi_tr > 0.0

    dgamma = np.zeros(n)
    if np.any(plastic):
        idx = np.flatnonzero(plastic)
        if params.saturation_rate == 0.0 or params.saturation_inf == params.saturation_0:
            hprime = params.theta_iso * params.hardening_modulus
            dgamma[idx] = phi_tr[idx] / (g + (2.0 / 3.0) * hprime)
        else:
            dg = phi_tr[idx] / (g + (2.0 / 3.0) * _radius_deriv(alpha[idx], params))
            tol = newton_tol_factor * params.yield_stress
            for it in range(newton_max_iters):
                a_new = alpha[idx] + SQ23 * dg
                r = 0.5 * (norm_s[idx] - 2.0 * g * dg) - SQ23 * _radius(a_new, params)
                if np.all(np.abs(r) <= tol):
                    break
                rp = -g - (2.0 / 3.0) * _radius_deriv(a_new, params)
                dg = dg - r / rp
            else:
                worst = idx[int(np.argmax(np.abs(r)))]
                raise RuntimeError(
                    "radial return did not converge in "
                    f"{newton_max_iters} iterations; trial ||s||={norm_s[worst]:.6e}, "
                    f"alpha={alpha[worst]:.6e}, phi_trial={phi_tr[worst]:.6e}")
            dgamma[idx] = dg

    safe_norm = np.where(norm_s > 0.0, norm_s, 1.0)
    n_hat = s_tr / safe_norm[:, None]
    factor = np.where(plastic, 1.0 - 2.0 * g * dgamma / safe_norm, 1.0)
    s_new = factor[:, None] * s_tr
    sigma = s_new.copy()
    sigma[:, :3] += p[:, None]

    alpha_new = alpha + SQ23 * dgamma
    eps_p_new = eps_p.copy()
    if np.any(plastic):
        idx = np.flatnonzero(plastic)
        eps_p_new[idx, :3] += dgamma[idx, None] * n_hat[idx, :3]
        eps_p_new[idx, 3] += 2.0 * dgamma[idx] * n_hat[idx, 3]

    tangent = np.empty((n, 4, 4))
    c_el = elastic_tangent(params)
    tangent[:] = c_el
    if np.any(plastic):
        idx = np.flatnonzero(plastic)
        kp = _radius_deriv(alpha_new[idx], params)
        a_coef = 1.0 - 2.0 * g * dgamma[idx] / norm_s[idx]
        b_coef = g / (g + (2.0 / 3.0) * kp) - 2.0 * g * dgamma[idx] / norm_s[idx]
        nn = np.einsum("pi,pj->pij", n_hat[idx], n_hat[idx])
        tangent[idx] = (kappa * np.outer(VOIGT_I, VOIGT_I)[None, :, :]
                        + 2.0 * g * a_coef[:, None, None] * _I_DEV[None, :, :]
                        - 2.0 * g * b_coef[:, None, None] * nn)

    return sigma, tangent, alpha_new, eps_p_new, phi_tr


def stress_update(eps_total: np.ndarray, history: PointHistory,
                  params: MaterialParams) -> StressResult:
    """Single-point stress update via the batched kernel."""
    sigma, tangent, a_new, ep_new, phi_tr = stress_update_batch(
        eps_total[None, :], np.array([history.alpha]), history.eps_p[None, :], params)
    return StressResult(sigma=sigma[0], new_history=PointHistory(float(a_new[0]), ep_new[0]),
                        tangent=tangent[0], plastic=bool(phi_tr[0] > 0.0),
                        phi_trial=float(phi_tr[0]))


def tangent_vs_fd(eps: np.ndarray, history: PointHistory, params: MaterialParams,
                  step: float = 1e-7) -> float:
    """Max relative deviation of the consistent tangent against central finite
    differences of the stress update, over all strain directions.

    Not meaningful within ~2G*step of the yield-surface kink.
    """
    res = stress_update(eps, history, params)
    c_fd = np.empty((4, 4))
    for k in range(4):
        dp = eps.copy()
        dm = eps.copy()
        dp[k] += step
        dm[k] -= step
        sp = stress_update(dp, history, params).sigma
        sm = stress_update(dm, history, params).sigma
        c_fd[:, k] = (sp - sm) / (2.0 * step)
    scale = np.max(np.abs(res.tangent))
    return float(np.max(np.abs(c_fd - res.tangent)) / scale)
