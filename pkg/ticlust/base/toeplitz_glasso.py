"""M-step: Gaussian likelihoods and the Toeplitz graphical lasso solved by ADMM.

Each cluster's precision matrix solves

    minimize  -log det(Theta) + tr(S Theta) + (1/|C|) * ||lambda o Theta||_1
    subject to Theta symmetric block-Toeplitz (w x w grid of n x n blocks)

The ADMM splitting keeps the log-det term on Theta and the l1 term plus the
Toeplitz constraint on Z. The log-det prox has a closed form through one
eigendecomposition; the l1/Toeplitz prox is a soft threshold per equivalence class.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ticlust.base.config import ADMM_CONFIG
from ticlust.base.errors import ConvergenceWarning, DataError
from ticlust.base.assignment import NllMatrix
from ticlust.protocol import (
    ClusterModel,
    FeatureSequence,
    TicConfig,
    expand_lambda,
    toeplitz_class_index,
    toeplitz_projection,
)
from ticlust.utils.logging import log_event

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class EmpiricalStats:
    """Member count, mean and biased (1/|C|) covariance of one cluster."""

    count: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float, copy=True)
        mean = np.array(self.mean, dtype=float, copy=True).reshape(-1)
        d = mean.shape[0]
        if self.count < 0:
            raise DataError("member count must be non-negative")
        if cov.shape != (d, d):
            raise DataError(f"covariance must be {d} x {d}, got {cov.shape}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise DataError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10 * scale:
            raise DataError("covariance is not positive semidefinite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass
class AdmmState:
    """Iterates and residuals of one ADMM run."""

    theta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    iterations: int = 0
    converged: bool = False


def _rows(features: Union[FeatureSequence, np.ndarray]) -> np.ndarray:
    data = features.data if isinstance(features, FeatureSequence) else np.asarray(features, dtype=float)
    return np.atleast_2d(data)


def gaussian_nll(x: np.ndarray, model: ClusterModel) -> float:
    """
    Negative log-likelihood of one vector:
    0.5 (x-mu)' Theta (x-mu) - 0.5 log det Theta + (d/2) log(2 pi).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.dim:
        raise DataError(f"vector of dimension {x.shape[0]} does not match model dimension {model.dim}")
    diff = x - model.mean
    return float(0.5 * diff @ model.theta @ diff - 0.5 * model.logdet_theta + 0.5 * model.dim * _LOG_2PI)


def nll_matrix(features: Union[FeatureSequence, np.ndarray], models: Sequence[ClusterModel]) -> NllMatrix:
    """NLL of every row under every model (T x K)."""
    data = _rows(features)
    values = np.empty((data.shape[0], len(models)))
    for j, model in enumerate(models):
        if data.shape[1] != model.dim:
            raise DataError(f"features of dimension {data.shape[1]} do not match model dimension {model.dim}")
        diff = data - model.mean
        quad = np.einsum("ij,jk,ik->i", diff, model.theta, diff)
        values[:, j] = 0.5 * quad - 0.5 * model.logdet_theta + 0.5 * model.dim * _LOG_2PI
    return NllMatrix(values=values)


def empirical_stats(features: Union[FeatureSequence, np.ndarray], members: Sequence[int]) -> EmpiricalStats:
    """Mean and 1/|C| covariance of the member rows."""
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise DataError("cannot estimate statistics of an empty cluster")
    rows = _rows(features)[members]
    mean = rows.mean(axis=0)
    diff = rows - mean
    cov = diff.T @ diff / rows.shape[0]
    return EmpiricalStats(count=int(rows.shape[0]), mean=mean, cov=0.5 * (cov + cov.T))


def regularize_covariance(
    cov: np.ndarray,
    min_eig: float = ADMM_CONFIG['cov_min_eig'],
    ridge: float = ADMM_CONFIG['cov_ridge'],
) -> np.ndarray:
    """Add ridge * trace(S)/d * I when S is (near) singular; an all-zero S gets ridge * I."""
    cov = np.asarray(cov, dtype=float)
    if np.linalg.eigvalsh(cov).min() >= min_eig:
        return cov
    d = cov.shape[0]
    trace = float(np.trace(cov))
    shift = ridge * trace / d if trace > 0 else ridge
    return cov + shift * np.eye(d)


def glasso_objective(theta: np.ndarray, s: np.ndarray, lam: np.ndarray, count: int) -> float:
    """-log det(Theta) + tr(S Theta) + (1/|C|) ||lambda o Theta||_1; +inf outside the SPD cone."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return math.inf
    return float(-logdet + np.sum(s * theta) + np.sum(np.abs(lam * theta)) / count)


def admm_theta_update(z: np.ndarray, u: np.ndarray, s: np.ndarray, rho_eff: float) -> np.ndarray:
    """
    Unique SPD minimizer of -log det(Theta) + tr(S Theta) + (rho/2) ||Theta - Z + U||_F^2.

    With Q D Q' = rho (Z - U) - S, Theta = Q diag((d + sqrt(d^2 + 4 rho)) / (2 rho)) Q'.
    """
    a = rho_eff * (z - u) - s
    try:
        eigvals, eigvecs = np.linalg.eigh(0.5 * (a + a.T))
    except np.linalg.LinAlgError as e:
        raise DataError(f"eigendecomposition failed in theta update: {e}") from e
    scaled = (eigvals + np.sqrt(eigvals**2 + 4.0 * rho_eff)) / (2.0 * rho_eff)
    theta = (eigvecs * scaled) @ eigvecs.T
    return 0.5 * (theta + theta.T)


def soft_threshold(a: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)


def admm_z_update(theta_plus_u: np.ndarray, lam: np.ndarray, rho_eff: float, w: int) -> np.ndarray:
    """
    Prox of ||lam o Z||_1 restricted to symmetric block-Toeplitz Z.

    Every equivalence class E (m tied entries, mean input a, summed penalty lam_E) takes
    the value soft_threshold(a, lam_E / (rho * m)).
    """
    theta_plus_u = np.asarray(theta_plus_u, dtype=float)
    d = theta_plus_u.shape[0]
    if d % w:
        raise DataError(f"dimension {d} is not a multiple of window length {w}")
    ids = toeplitz_class_index(d // w, w).ravel()
    counts = np.bincount(ids)
    means = np.bincount(ids, weights=theta_plus_u.ravel()) / counts
    penalty = np.bincount(ids, weights=np.asarray(lam, dtype=float).ravel())
    values = soft_threshold(means, penalty / (rho_eff * counts))
    return values[ids].reshape(d, d)


def _is_spd(matrix: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(matrix)
        return True
    except np.linalg.LinAlgError:
        return False


class ADMMSolver:
    """
    ADMM for one Toeplitz graphical lasso problem, normalized by |C|.

    The normalized problem carries lambda/|C| and the penalty rho/|C|, so tolerances do not
    depend on the cluster size. The penalty is rebalanced while primal and dual residuals
    differ by more than `mu` (at most `adapt_iters` times).
    """

    def __init__(
        self,
        s: np.ndarray,
        lam: np.ndarray,
        w: int,
        count: int,
        rho: float = ADMM_CONFIG['rho'],
        tol_abs: float = ADMM_CONFIG['tol_abs'],
        tol_rel: float = ADMM_CONFIG['tol_rel'],
        max_iter: int = ADMM_CONFIG['max_iter'],
        mu: float = 10.0,
        tau: float = 2.0,
        adapt_iters: int = 50,
    ):
        self.s = np.asarray(s, dtype=float)
        self.dim = self.s.shape[0]
        self.w = w
        self.count = count
        self.lam = np.asarray(lam, dtype=float) / count
        self.rho = float(rho) / count
        self.tol_abs = tol_abs
        self.tol_rel = tol_rel
        self.max_iter = max_iter
        self.mu = mu
        self.tau = tau
        self.adapt_iters = adapt_iters

    def _rebalance(self, state: AdmmState) -> None:
        if state.primal_residual > self.mu * state.dual_residual:
            factor = self.tau
        elif state.dual_residual > self.mu * state.primal_residual:
            factor = 1.0 / self.tau
        else:
            return
        self.rho *= factor
        state.u = state.u / factor
        self.adapt_iters -= 1

    def __call__(self) -> AdmmState:
        d = self.dim
        zeros = np.zeros((d, d))
        state = AdmmState(theta=zeros, z=zeros.copy(), u=zeros.copy())
        norm = np.linalg.norm
        for it in range(1, self.max_iter + 1):
            state.theta = admm_theta_update(state.z, state.u, self.s, self.rho)
            z_old = state.z
            state.z = admm_z_update(state.theta + state.u, self.lam, self.rho, self.w)
            state.u = state.u + state.theta - state.z

            state.primal_residual = float(norm(state.theta - state.z))
            state.dual_residual = float(self.rho * norm(state.z - z_old))
            eps_pri = d * self.tol_abs + self.tol_rel * max(norm(state.theta), norm(state.z))
            eps_dual = d * self.tol_abs + self.tol_rel * self.rho * norm(state.u)
            state.iterations = it
            if state.primal_residual <= eps_pri and state.dual_residual <= eps_dual:
                state.converged = True
                break
            if self.adapt_iters > 0:
                self._rebalance(state)
        return state


def _feasible_precision(state: AdmmState, n: int, w: int) -> np.ndarray:
    """An SPD block-Toeplitz matrix from the final iterates (Z first, then the projected Theta)."""
    if state.converged and _is_spd(state.z):
        return state.z
    candidate = toeplitz_projection(state.theta, n, w)
    if _is_spd(candidate):
        return candidate
    d = candidate.shape[0]
    floor = 1e-8 * max(1.0, float(np.trace(candidate)) / d)
    shift = floor - float(np.linalg.eigvalsh(candidate).min())
    logger.warning(f"Shifting projected precision by {shift:.3e} to restore positive definiteness")
    return candidate + shift * np.eye(d)


def solve_toeplitz_glasso(
    stats: EmpiricalStats,
    lam: Union[float, np.ndarray],
    w: int,
    cfg: Optional[TicConfig] = None,
    return_state: bool = False,
):
    """
    Estimate one cluster's SPD block-Toeplitz precision matrix.

    Args:
        stats: Empirical statistics of the cluster (count >= 1).
        lam: Penalty matrix (symmetric, non-negative) or scalar off-diagonal shorthand.
        w: Window length of the block-Toeplitz structure.
        cfg: Solver settings (rho, tolerances, iteration cap); library defaults when None.
        return_state: Also return the final AdmmState.

    Returns:
        ClusterModel with the cluster mean; `converged` is False (and a ConvergenceWarning is
        issued) when ADMM stopped at its iteration cap.
    """
    if stats.count < 1:
        raise DataError("cannot solve for an empty cluster")
    d = stats.mean.shape[0]
    if d % w:
        raise DataError(f"dimension {d} is not a multiple of window length {w}")
    lam = expand_lambda(lam, d)

    cfg_kwargs = {}
    if cfg is not None:
        cfg_kwargs = dict(
            rho=cfg.rho, tol_abs=cfg.admm_tol_abs, tol_rel=cfg.admm_tol_rel, max_iter=cfg.admm_max_iter
        )
    solver = ADMMSolver(regularize_covariance(stats.cov), lam, w, stats.count, **cfg_kwargs)
    state = solver()

    if not state.converged:
        message = (
            f"ADMM stopped after {state.iterations} iterations "
            f"(primal {state.primal_residual:.3e}, dual {state.dual_residual:.3e})"
        )
        warnings.warn(message, ConvergenceWarning, stacklevel=2)
        logger.warning(message)
        log_event(f"admm_not_converged dim={d} count={stats.count} iterations={state.iterations}")
    else:
        logger.debug(f"ADMM converged in {state.iterations} iterations (dim={d}, count={stats.count})")

    theta = _feasible_precision(state, d // w, w)
    model = ClusterModel(mean=stats.mean, theta=theta, w=w, converged=state.converged)
    return (model, state) if return_state else model


def cluster_objective(
    features: Union[FeatureSequence, np.ndarray],
    members: Sequence[int],
    model: ClusterModel,
    lam: np.ndarray,
) -> float:
    """Sum of member NLLs plus 0.5 ||lambda o Theta||_1, the per-cluster share of the EM objective."""
    rows = _rows(features)[np.asarray(members, dtype=np.int64)]
    nll = nll_matrix(rows, [model]).values[:, 0].sum()
    return float(nll + 0.5 * np.sum(np.abs(lam * model.theta)))
