"""Collaborative low-rank approximation with joint optimization (CLRA-JO).

Every effective channel factors as ``H_eff[k, l] = S T[k, l]`` where ``S``
spans the column space of the BS-RIS channel, shared by all users, and
``T[k, l] = T[1, 1] D[k, l]`` with ``D[k, l]`` diagonal. The estimator

1. picks the column-space dimension with the MDL criterion,
2. takes the leading eigenvectors of ``M_col M_col^H`` as ``S_hat``,
3. solves per-(user, antenna) least squares for ``T_LS[k, l]``, and
4. alternates closed-form updates of the diagonals ``d[k, l]`` and the
   shared coefficient matrix ``T`` to fit ``T_LS[k, l] ~ T diag(d[k, l])``.

CLRA-LS stops after step 3.

Indexing: the K*L (user, antenna) pairs are flattened user-major, so pair
``(k, l)`` is row ``k*L + l`` and pair ``(1, 1)`` of the math is row 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    ZERO_EIG_REL,
    DimensionError,
    ParameterError,
    hermitian_eig_desc,
    pseudo_inverse,
)

log = logging.getLogger(__name__)

DEFAULT_T_MAX = 10
EIG_FLOOR = 1e-300


class RankConditionError(ValueError):
    """The second-part combiner cannot resolve the estimated column space."""


@dataclass
class EstimatorOutput:
    rank_hat: int
    S_hat: np.ndarray
    T_hat: np.ndarray
    D_hat: np.ndarray
    H_eff_hat: np.ndarray
    loss_trajectory: np.ndarray
    rank_mdl: int = 0
    rank_clamped: bool = False
    degenerate_columns: int = 0
    flags: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ComplexityReport:
    delta_ls: int
    delta_d: int
    delta_t: int
    total: int


@dataclass(frozen=True)
class MDLResult:
    rank: int
    objective: np.ndarray
    degenerate: bool = False


def mdl_objective(eigvals, sample_count: int, dim: int | None = None) -> np.ndarray:
    """MDL cost for every candidate order ``n = 1 .. dim-1``.

    ``cost(n) = -(dim-n) S log(geo/arith of tail) + n (2 dim - n) log(S) / 2``.
    Only the ``dim`` leading eigenvalues enter; values are floored at
    ``ZERO_EIG_REL * lambda_max`` so numerically-zero tails compare as equal.
    """
    lam = np.asarray(eigvals, dtype=float)
    M = lam.size if dim is None else int(dim)
    lam = lam[:M]
    S = float(sample_count)
    floor = max(EIG_FLOOR, ZERO_EIG_REL * max(lam[0], 0.0))
    lam = np.maximum(lam, floor)
    log_lam = np.log(lam)
    n = np.arange(1, M)
    cost = np.empty(M - 1)
    for idx, order in enumerate(n):
        tail = lam[order:]
        log_ratio = log_lam[order:].mean() - np.log(tail.mean())
        cost[idx] = -(M - order) * S * log_ratio + 0.5 * order * (2 * M - order) * np.log(S)
    return cost


def mdl_rank(eigvals, sample_count: int, M: int | None = None) -> MDLResult:
    """Model order minimizing the MDL cost (smallest order on ties).

    When fewer samples than dimensions are available the sample covariance has
    at most ``sample_count`` nonzero eigenvalues, so the search runs over the
    ``min(M, sample_count)`` leading ones.
    """
    lam = np.asarray(eigvals, dtype=float)
    if M is None:
        M = lam.size
    if lam.size != M:
        raise DimensionError(f"expected {M} eigenvalues, got {lam.size}")
    if sample_count < 2:
        raise ParameterError("MDL needs at least two samples")
    if np.any(np.diff(lam) > 1e-12 * max(abs(lam[0]), 1.0)):
        raise ParameterError("eigenvalues must be sorted in descending order")
    if M < 2 or lam[0] <= 0:
        return MDLResult(rank=1, objective=np.zeros(0), degenerate=True)
    dim = min(M, int(sample_count))
    if dim < 2:
        return MDLResult(rank=1, objective=np.zeros(0), degenerate=True)
    cost = mdl_objective(lam, sample_count, dim)
    return MDLResult(rank=int(np.argmin(cost)) + 1, objective=cost)


def estimate_column_space(M_col: np.ndarray, rank_hat: int) -> np.ndarray:
    """Leading ``rank_hat`` eigenvectors of ``M_col M_col^H``."""
    M = M_col.shape[0]
    if not 1 <= rank_hat <= M:
        raise ParameterError(f"rank_hat={rank_hat} must lie in [1, {M}]")
    eig = hermitian_eig_desc(M_col @ M_col.conj().T)
    return eig.vectors[:, :rank_hat]


def combiner_projection(S_hat: np.ndarray, combiner: np.ndarray) -> np.ndarray:
    """``P = W^H S_hat`` for the stacked part-two combiner ``W`` (M x N_RF B_r)."""
    if combiner.shape[0] != S_hat.shape[0]:
        raise DimensionError(f"combiner has {combiner.shape[0]} rows, S_hat has {S_hat.shape[0]}")
    return combiner.conj().T @ S_hat


def ls_coefficients(S_hat: np.ndarray, M_row: np.ndarray, combiner: np.ndarray,
                    rel_tol: float = 1e-12) -> np.ndarray:
    """Individual LS coefficients ``P^+ M_row``.

    ``M_row`` may be a single ``(N_RF B_r) x N`` matrix or a stack with that
    trailing shape; the result has the same leading shape with trailing
    ``rank_hat x N``.
    """
    r = S_hat.shape[1]
    n_obs = combiner.shape[1]
    if n_obs < r:
        raise RankConditionError(
            f"N_RF*B_r={n_obs} < rank_hat={r}: increase B_r so the LS system is solvable")
    if M_row.shape[-2] != n_obs:
        raise DimensionError(f"M_row has {M_row.shape[-2]} rows, combiner has {n_obs} columns")
    P = combiner_projection(S_hat, combiner)
    s = np.linalg.svd(P, compute_uv=False)
    if s[-1] <= rel_tol * s[0]:
        raise RankConditionError("P = Phi^H S_hat is rank deficient; increase B_r")
    return pseudo_inverse(P, rel_tol) @ M_row


def update_D(T_prev: np.ndarray, T_ls: np.ndarray):
    """Per-column LS fit of ``T_ls ~ T_prev diag(d)``.

    Accepts a single ``r x N`` target or a stack ``(..., r, N)``. Returns
    ``(d, n_degenerate)``; columns of ``T_prev`` with zero norm give ``d = 0``.
    """
    if T_prev.shape != T_ls.shape[-2:]:
        raise DimensionError(f"T_prev {T_prev.shape} and T_ls {T_ls.shape} differ")
    norms = np.sum(np.abs(T_prev) ** 2, axis=0)
    num = np.sum(T_prev.conj() * T_ls, axis=-2)
    zero = norms == 0.0
    d = np.where(zero, 0.0, num / np.where(zero, 1.0, norms))
    return d, int(np.count_nonzero(zero))


def update_T(T_ls: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Shared coefficient matrix minimizing ``sum ||T_ls[i] - T diag(D[i])||_F^2``.

    ``T_ls`` is ``(P, r, N)`` and ``D`` is ``(P, N)``. The normal equations are
    diagonal in the column index, so the inverse is applied entrywise.
    """
    num = np.sum(T_ls * D.conj()[:, None, :], axis=0)
    den = np.sum(np.abs(D) ** 2, axis=0)
    if np.any(den <= 0):
        raise ParameterError("sum of D D^H has a zero diagonal entry")
    return num / den[None, :]


def joint_loss(T_ls: np.ndarray, T: np.ndarray, D: np.ndarray) -> float:
    """``sum_i ||T_ls[i] - T diag(D[i])||_F^2``."""
    resid = T_ls - T[None, :, :] * D[:, None, :]
    return float(np.sum(np.abs(resid) ** 2))


def joint_optimization(T_ls: np.ndarray, t_max: int = DEFAULT_T_MAX):
    """Alternate ``update_D`` and ``update_T`` starting from ``T_ls[0]``.

    ``D[0]`` is pinned to all-ones. Returns ``(T, D, losses, n_degenerate)``
    where ``losses[0]`` is the cost at the initial T with its best-fitting D
    and ``losses[t]`` the cost after iteration t.
    """
    if t_max < 0:
        raise ParameterError("t_max must be nonnegative")
    T = T_ls[0].copy()
    D, n_deg = update_D(T, T_ls)
    D[0] = 1.0
    losses = [joint_loss(T_ls, T, D)]
    for _ in range(t_max):
        D, n_deg = update_D(T, T_ls)
        D[0] = 1.0
        T = update_T(T_ls, D)
        losses.append(joint_loss(T_ls, T, D))
    return T, D, np.asarray(losses), n_deg


def _first_part(M_col, M_row, combiner, rank_hat=None, S_hat=None):
    flags = []
    n_obs = combiner.shape[1]
    rank_mdl = rank_hat
    clamped = False
    if S_hat is None:
        if rank_hat is None:
            eig = hermitian_eig_desc(M_col @ M_col.conj().T)
            res = mdl_rank(eig.values, M_col.shape[1], M_col.shape[0])
            rank_mdl = res.rank
            if res.degenerate:
                flags.append("mdl-degenerate")
        rank_hat = rank_mdl
        if rank_hat > n_obs:
            log.info("rank %d clamped to N_RF*B_r=%d", rank_hat, n_obs)
            rank_hat = n_obs
            clamped = True
            flags.append("rank-clamped")
        S_hat = estimate_column_space(M_col, rank_hat)
    else:
        rank_hat = rank_mdl = S_hat.shape[1]
    K, L = M_row.shape[:2]
    T_ls = ls_coefficients(S_hat, M_row.reshape(K * L, *M_row.shape[2:]), combiner)
    return S_hat, rank_hat, rank_mdl, clamped, T_ls, flags


def clra_ls(M_col: np.ndarray | None, M_row: np.ndarray, combiner: np.ndarray,
            S_hat: np.ndarray | None = None, rank_hat: int | None = None) -> EstimatorOutput:
    """Column-space estimate followed by per-(user, antenna) least squares.

    ``combiner`` is the ``M x (N_RF B_r)`` matrix used in part two. Pass
    ``S_hat`` to skip the column-space step (``M_col`` is then unused).
    """
    S_hat, r, r_mdl, clamped, T_ls, flags = _first_part(M_col, M_row, combiner, rank_hat, S_hat)
    K, L = M_row.shape[:2]
    H_hat = (S_hat[None] @ T_ls).reshape(K, L, S_hat.shape[0], -1)
    return EstimatorOutput(rank_hat=r, S_hat=S_hat, T_hat=T_ls[0], D_hat=np.ones((K * L, T_ls.shape[-1]),
                           dtype=np.complex128), H_eff_hat=H_hat, loss_trajectory=np.zeros(0),
                           rank_mdl=r_mdl, rank_clamped=clamped, flags=flags)


def clra_jo(M_col: np.ndarray | None, M_row: np.ndarray, combiner: np.ndarray,
            t_max: int = DEFAULT_T_MAX, S_hat: np.ndarray | None = None,
            rank_hat: int | None = None) -> EstimatorOutput:
    """Full CLRA-JO estimate.

    With ``t_max = 0`` the reconstruction falls back to the LS path
    (``S_hat T_LS[k, l]``) since no joint iteration has run.
    """
    S_hat, r, r_mdl, clamped, T_ls, flags = _first_part(M_col, M_row, combiner, rank_hat, S_hat)
    K, L = M_row.shape[:2]
    T, D, losses, n_deg = joint_optimization(T_ls, t_max)
    if n_deg:
        flags.append("degenerate-columns")
    if t_max == 0:
        D = np.ones_like(D)
        H_hat = (S_hat[None] @ T_ls).reshape(K, L, S_hat.shape[0], -1)
    else:
        H_hat = ((S_hat @ T)[None] * D[:, None, :]).reshape(K, L, S_hat.shape[0], -1)
    return EstimatorOutput(rank_hat=r, S_hat=S_hat, T_hat=T, D_hat=D, H_eff_hat=H_hat,
                           loss_trajectory=losses, rank_mdl=r_mdl, rank_clamped=clamped,
                           degenerate_columns=n_deg, flags=flags)


ESTIMATORS = {"clra_jo": clra_jo, "clra_ls": clra_ls}


def complexity_estimate(M: int, N: int, K: int, L: int, rank_hat: int, t_max: int) -> ComplexityReport:
    """Complex-multiplication counts of the LS step, one D update and one T
    update, and the overall total including the M^3 eigendecomposition."""
    if min(M, N, K, L, rank_hat) < 1 or t_max < 0:
        raise ParameterError("arguments must be positive (t_max nonnegative)")
    kl = K * L
    d_ls = N * rank_hat**2 * kl
    d_d = N * (3 * rank_hat + 1) * kl
    d_t = N * (rank_hat + 2) * kl
    return ComplexityReport(delta_ls=d_ls, delta_d=d_d, delta_t=d_t,
                            total=M**3 + d_ls + t_max * (d_d + d_t))
