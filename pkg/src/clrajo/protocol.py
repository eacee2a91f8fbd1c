"""Two-part uplink training protocol.

Part one (``M_RF * B_c`` subframes) sweeps the BS through all M antenna
directions, N_RF at a time, while the RIS holds one reflection vector per
block; its observations are assembled into ``M_col``. Part two (``N * B_r``
subframes) holds one RF combiner per block while the RIS cycles through N
orthogonal reflection vectors; its observations are assembled into one
``M_row`` per (user, antenna).

Subframe ``j`` of the whole schedule is 0-based here. In part two, block
``b`` and subframe ``i`` map to ``j = n0 + N*b + i`` with ``n0 = M_RF * B_c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SystemConfig
from .numerics import DimensionError, ParameterError, complex_gaussian, dft_matrix

COMBINERS = ("scrambled-dft", "dft")
DEFAULT_COMBINER_SEED = 20240


@dataclass
class ProtocolSchedule:
    """Per-subframe combiners ``(J, M, N_RF)``, reflection vectors ``(J, N)``
    and the pilot matrices ``(K, L, T)`` (identical in every subframe).

    ``row_combiner`` is the ``M x (N_RF B_r)`` matrix whose column blocks are
    the part-two combiners.
    """

    B_c: int
    B_r: int
    combiners: np.ndarray
    reflections: np.ndarray
    pilots: np.ndarray
    n0: int
    row_combiner: np.ndarray

    @property
    def J(self) -> int:
        return self.combiners.shape[0]

    @property
    def T(self) -> int:
        return self.pilots.shape[2]

    def first_part(self) -> slice:
        return slice(0, self.n0)

    def second_part(self) -> slice:
        return slice(self.n0, self.J)


@dataclass
class ObservationSet:
    """Assembled observations.

    ``M_col`` is ``M x (B_c*K*L)`` (``None`` when only part two was run);
    ``M_row`` has shape ``(K, L, N_RF*B_r, N)``.
    """

    M_col: np.ndarray | None
    M_row: np.ndarray
    B_c: int
    B_r: int
    row_combiner: np.ndarray

    @property
    def sample_count(self) -> int:
        return 0 if self.M_col is None else self.M_col.shape[1]


def training_overhead(cfg: SystemConfig, B_c: int, B_r: int) -> int:
    """Total number of subframes J = M_RF * B_c + N * B_r."""
    return cfg.M_RF * B_c + cfg.N * B_r


def build_pilots(K: int, L: int, T: int | None = None, P: float = 1.0) -> np.ndarray:
    """Orthogonal pilots of shape ``(K, L, T)`` with ``X_k X_k^H = P T I``
    and ``X_k X_k'^H = 0`` for ``k != k'``.

    Rows are taken from the T-point DFT matrix and scaled by ``sqrt(P T)``.
    """
    if T is None:
        T = K * L
    if T < K * L:
        raise ParameterError(f"pilot length T={T} is shorter than K*L={K * L}")
    if P <= 0:
        raise ParameterError("transmit power must be positive")
    rows = dft_matrix(T, T)[: K * L, :] * np.sqrt(P * T)
    return rows.reshape(K, L, T)


def unit_modulus(columns: np.ndarray) -> np.ndarray:
    """Rescale DFT columns (modulus 1/sqrt(N)) to unit-modulus RIS phases."""
    return columns * np.sqrt(columns.shape[0])


def schedule_first_phase(cfg: SystemConfig, B_c: int):
    """Combiners ``(M_RF*B_c, M, N_RF)`` and reflections ``(M_RF*B_c, N)``.

    Subframe ``i`` of every block uses columns ``[N_RF*i, N_RF*(i+1))`` of the
    M x M DFT; block ``b`` holds reflection ``sqrt(N) * Phi_[N,B_c][:, b]``.
    """
    if B_c < 1:
        raise ParameterError("B_c must be at least 1")
    if B_c > cfg.N:
        raise ParameterError(f"B_c={B_c} exceeds the number of RIS elements N={cfg.N}")
    nrf, mrf = cfg.rf_chains, cfg.M_RF
    phi_m = dft_matrix(cfg.M, cfg.M)
    blocks = [phi_m[:, nrf * i: nrf * (i + 1)] for i in range(mrf)]
    combiners = np.stack(blocks * B_c)
    v = unit_modulus(dft_matrix(cfg.N, B_c))
    reflections = np.repeat(v.T, mrf, axis=0)
    return combiners, reflections


def row_combiner(M: int, cols: int, kind: str = "scrambled-dft", seed: int = DEFAULT_COMBINER_SEED) -> np.ndarray:
    """Orthonormal ``M x cols`` matrix feeding the part-two RF combiners.

    ``"dft"`` takes the leading DFT columns. ``"scrambled-dft"`` multiplies
    them by a fixed pseudo-random unit-modulus phase per antenna, which keeps
    entries constant-modulus and columns orthonormal but stops a steering
    vector from falling into the sidelobe nulls of every selected beam.
    """
    if cols > M:
        raise ParameterError(f"combiner needs cols <= M, got {cols} > {M}")
    phi = dft_matrix(M, cols)
    if kind == "dft":
        return phi
    if kind == "scrambled-dft":
        phases = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=M)
        return np.exp(1j * phases)[:, None] * phi
    raise ParameterError(f"unknown combiner {kind!r}; choose from {COMBINERS}")


def schedule_second_phase(cfg: SystemConfig, B_r: int, phi: np.ndarray | None = None):
    """Combiners ``(N*B_r, M, N_RF)`` and reflections ``(N*B_r, N)``.

    Block ``b`` uses columns ``[N_RF*b, N_RF*(b+1))`` of ``phi`` (default: the
    leading ``N_RF*B_r`` DFT columns); subframe ``i`` of every block uses
    reflection ``sqrt(N) * Phi_[N,N][:, i]``.
    """
    if B_r < 1:
        raise ParameterError("B_r must be at least 1")
    nrf = cfg.rf_chains
    if nrf * B_r > cfg.M:
        raise ParameterError(f"N_RF*B_r={nrf * B_r} exceeds M={cfg.M}")
    if phi is None:
        phi = dft_matrix(cfg.M, nrf * B_r)
    if phi.shape != (cfg.M, nrf * B_r):
        raise DimensionError(f"part-two combiner must be {cfg.M} x {nrf * B_r}, got {phi.shape}")
    combiners = np.concatenate([
        np.broadcast_to(phi[:, nrf * b: nrf * (b + 1)], (cfg.N, cfg.M, nrf)) for b in range(B_r)
    ])
    v = unit_modulus(dft_matrix(cfg.N, cfg.N))
    reflections = np.tile(v.T, (B_r, 1))
    return np.ascontiguousarray(combiners), reflections


def build_schedule(cfg: SystemConfig, B_c: int, B_r: int, T: int | None = None,
                   include_first: bool = True, combiner: str = "scrambled-dft",
                   combiner_seed: int = DEFAULT_COMBINER_SEED) -> ProtocolSchedule:
    """Full schedule; with ``include_first=False`` only part two is built
    (used when a stored column-space estimate is reused)."""
    pilots = build_pilots(cfg.K, cfg.L, T, cfg.transmit_power)
    if cfg.rf_chains * B_r > cfg.M:
        raise ParameterError(f"N_RF*B_r={cfg.rf_chains * B_r} exceeds M={cfg.M}")
    phi = row_combiner(cfg.M, cfg.rf_chains * B_r, combiner, combiner_seed)
    c2, v2 = schedule_second_phase(cfg, B_r, phi)
    if include_first:
        c1, v1 = schedule_first_phase(cfg, B_c)
        combiners = np.concatenate([c1, c2])
        reflections = np.concatenate([v1, v2])
        n0 = c1.shape[0]
    else:
        combiners, reflections, n0 = c2, v2, 0
    return ProtocolSchedule(B_c=B_c if include_first else 0, B_r=B_r, combiners=combiners,
                            reflections=reflections, pilots=pilots, n0=n0, row_combiner=phi)


def simulate_subframe(real: ChannelRealization, C: np.ndarray, v: np.ndarray, pilots: np.ndarray,
                      noise_variance: float, rng: np.random.Generator) -> np.ndarray:
    """Receive one subframe and despread it per user.

    Returns ``Z`` of shape ``(K, N_RF, L)`` with
    ``Z[k] = (1/PT) * C^H (sum_k F diag(v) H_k X_k + U) X_k^H``.
    """
    F, H = real.F, real.H
    K, L, T = pilots.shape
    M, N = F.shape
    if H.shape != (K, N, L) or C.shape[0] != M or v.shape != (N,):
        raise DimensionError(
            f"inconsistent shapes: F {F.shape}, H {H.shape}, C {C.shape}, v {v.shape}, pilots {pilots.shape}")
    X = pilots.reshape(K * L, T)
    H_cat = np.concatenate(list(H), axis=1)                 # N x KL
    received = ((F * v[None, :]) @ H_cat) @ X                # M x T
    if noise_variance > 0:
        received = received + complex_gaussian(rng, M, T, noise_variance)
    Y = C.conj().T @ received                               # N_RF x T
    energy = np.real(np.vdot(X[0], X[0]))                   # P*T
    Z = (Y @ X.conj().T) / energy                           # N_RF x KL
    return Z.reshape(C.shape[1], K, L).transpose(1, 0, 2)


def simulate_schedule(real: ChannelRealization, schedule: ProtocolSchedule, noise_variance: float,
                      rng: np.random.Generator) -> np.ndarray:
    """All subframes in order; returns ``(J, K, N_RF, L)``."""
    return np.stack([
        simulate_subframe(real, schedule.combiners[j], schedule.reflections[j], schedule.pilots,
                          noise_variance, rng)
        for j in range(schedule.J)
    ])


def _check_count(Z, expected, part):
    if Z is None or len(Z) != expected or any(z is None for z in Z):
        got = 0 if Z is None else len(Z)
        raise DimensionError(f"{part}: expected {expected} subframes, got {got}")


def assemble_col_observations(Z_first, cfg: SystemConfig, B_c: int) -> np.ndarray:
    """Build ``M_col`` (M x B_c*K*L) from the part-one observations
    ``(M_RF*B_c, K, N_RF, L)``."""
    _check_count(Z_first, cfg.M_RF * B_c, "part one")
    Z_first = np.asarray(Z_first)
    mrf = cfg.M_RF
    K, nrf, L = Z_first.shape[1:]
    phi_m = dft_matrix(cfg.M, cfg.M)
    blocks = []
    for b in range(B_c):
        # Z_j = [Z_j1 ... Z_jK] is N_RF x KL; stack the M_RF subframes vertically
        z = Z_first[mrf * b: mrf * (b + 1)].transpose(0, 2, 1, 3).reshape(mrf * nrf, K * L)
        blocks.append(phi_m @ z)
    return np.concatenate(blocks, axis=1)


def assemble_row_observations(Z_second, cfg: SystemConfig, B_r: int) -> np.ndarray:
    """Build ``M_row`` with shape ``(K, L, N_RF*B_r, N)`` from the part-two
    observations ``(N*B_r, K, N_RF, L)``.

    The RIS sweep matrix ``V = sqrt(N) Phi_[N,N]`` satisfies ``V V^H = N I``, so
    it is undone by right-multiplying with ``V^H / N``.
    """
    N = cfg.N
    _check_count(Z_second, N * B_r, "part two")
    Z_second = np.asarray(Z_second)
    v_inv = unit_modulus(dft_matrix(N, N)).conj().T / N
    rows = []
    for b in range(B_r):
        z = Z_second[N * b: N * (b + 1)]                    # N x K x N_RF x L
        cols = z.transpose(1, 3, 2, 0)                      # K x L x N_RF x N
        rows.append(cols @ v_inv)
    return np.concatenate(rows, axis=2)


def observe(real: ChannelRealization, schedule: ProtocolSchedule, cfg: SystemConfig,
            rng: np.random.Generator) -> ObservationSet:
    """Simulate every subframe of ``schedule`` and assemble both observation
    types."""
    Z = simulate_schedule(real, schedule, cfg.noise_variance, rng)
    M_col = None
    if schedule.n0:
        M_col = assemble_col_observations(Z[schedule.first_part()], cfg, schedule.B_c)
    M_row = assemble_row_observations(Z[schedule.second_part()], cfg, schedule.B_r)
    return ObservationSet(M_col=M_col, M_row=M_row, B_c=schedule.B_c, B_r=schedule.B_r,
                          row_combiner=schedule.row_combiner)
