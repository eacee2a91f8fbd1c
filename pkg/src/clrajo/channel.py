"""Ground-truth channel synthesis for an RIS-assisted multi-user uplink.

The BS-RIS channel ``F`` (M x N) and the RIS-user channels ``H_k`` (N x L) are
sums of rank-one path contributions built from uniform-planar-array (UPA)
response vectors. Each link is modeled as near-field (spherical wavefront,
second-order Fresnel expansion) or far-field (planar wavefront) according to
its distance relative to the Rayleigh distance, unless a regime is forced.

Vector indexing convention: the UPA element ``(e_h, e_v)`` is stored at
position ``e_h * E_v + e_v``, i.e. the vertical index runs fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .numerics import ParameterError

NEAR = "near"
FAR = "far"
AUTO = "auto"
LINK_BS_RIS = "bs-ris"
LINK_RIS_USER = "ris-user"

GAIN_MODELS = ("normalized", "powerlaw", "lognormal")

# (alpha, beta, nu) of the lognormal path-loss model, in dB
LOGNORMAL_LOS = (61.4, 2.0, 5.8)
LOGNORMAL_NLOS = (72.0, 2.92, 8.7)

# relative threshold below which an entry of H_1(:, 1) counts as degenerate
REF_COLUMN_TOL = 1e-9


@dataclass(frozen=True)
class SystemConfig:
    """Array geometry, path counts, distances and power levels of one system.

    Array shapes are ``(E_h, E_v)`` element counts. ``z_h`` is the interval
    from which each user's RIS distance is drawn uniformly.
    """

    bs_shape: tuple[int, int] = (8, 4)
    ris_shape: tuple[int, int] = (8, 4)
    ue_shape: tuple[int, int] = (2, 2)
    users: int = 4
    rf_chains: int = 4
    wavelength: float = 0.006
    paths_bsris: int = 3
    paths_risuser: int = 3
    z_f: float = 9.375
    z_h: tuple[float, float] = (1.25, 1.875)
    transmit_power: float = 1.0
    noise_variance: float = 1.0
    regime_bsris: str = AUTO
    regime_risuser: str = AUTO
    gain_model: str = "normalized"
    # reference distances for the power-law gain model (gains are scaled by
    # sqrt(PL(z) / PL(z_ref)), so links at the reference distance are unchanged)
    z_ref_bsris: float = 9.375
    z_ref_risuser: float = 1.5625

    def __post_init__(self):
        for name in ("bs_shape", "ris_shape", "ue_shape", "z_h"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("bs_shape", "ris_shape", "ue_shape"):
            shape = getattr(self, name)
            if len(shape) != 2 or min(shape) < 1 or any(int(s) != s for s in shape):
                raise ParameterError(f"{name} must be two positive integers, got {shape}")
        for name in ("users", "rf_chains", "paths_bsris", "paths_risuser"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.rf_chains > self.M:
            raise ParameterError(f"rf_chains={self.rf_chains} exceeds BS antennas M={self.M}")
        if self.M % self.rf_chains:
            raise ParameterError(f"M={self.M} must be divisible by rf_chains={self.rf_chains}")
        if self.wavelength <= 0:
            raise ParameterError("wavelength must be positive")
        if self.z_f <= 0 or len(self.z_h) != 2 or min(self.z_h) <= 0 or self.z_h[0] > self.z_h[1]:
            raise ParameterError("distances must be positive and z_h must be an ordered pair")
        if self.transmit_power <= 0 or self.noise_variance < 0:
            raise ParameterError("transmit_power must be positive and noise_variance nonnegative")
        for name in ("regime_bsris", "regime_risuser"):
            if getattr(self, name) not in (AUTO, NEAR, FAR):
                raise ParameterError(f"{name} must be one of auto/near/far")
        if self.gain_model not in GAIN_MODELS:
            raise ParameterError(f"gain_model must be one of {GAIN_MODELS}")

    @property
    def M(self) -> int:
        return self.bs_shape[0] * self.bs_shape[1]

    @property
    def N(self) -> int:
        return self.ris_shape[0] * self.ris_shape[1]

    @property
    def L(self) -> int:
        return self.ue_shape[0] * self.ue_shape[1]

    @property
    def K(self) -> int:
        return self.users

    @property
    def M_RF(self) -> int:
        return self.M // self.rf_chains

    @property
    def z_rd(self) -> float:
        return rayleigh_distance(self.N, self.wavelength)

    @property
    def z_mrd(self) -> float:
        return mimo_rayleigh_distance(self.M, self.N, self.wavelength)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class PathParams:
    """One propagation path. Distances are only meaningful for near-field
    sides; ``None`` otherwise."""

    gain: complex
    theta_rx: float
    phi_rx: float
    theta_tx: float
    phi_tx: float
    d_rx: float | None = None
    d_tx: float | None = None


@dataclass
class ChannelRealization:
    """Ground truth for one trial.

    ``H`` has shape ``(K, N, L)``; ``H_eff`` has shape ``(K, L, M, N)`` with
    ``H_eff[k, l] = F @ diag(H[k][:, l])``.
    """

    F: np.ndarray
    H: np.ndarray
    regime_bsris: str
    regime_risuser: list[str]
    z_f: float
    z_h: np.ndarray
    H_eff: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=np.complex128)
        self.F = np.asarray(self.F, dtype=np.complex128)
        self.H_eff = np.stack([effective_channel(self.F, h) for h in self.H])

    @property
    def K(self) -> int:
        return self.H.shape[0]

    def stacked_effective(self, k: int) -> np.ndarray:
        """The M x NL effective channel of user ``k`` (antenna blocks side by side)."""
        return np.concatenate(list(self.H_eff[k]), axis=1)


def rayleigh_distance(n_elements: int, wavelength: float) -> float:
    """2 D^2 / lambda with aperture D = (lambda/2) * n_elements."""
    aperture = 0.5 * wavelength * n_elements
    return 2.0 * aperture**2 / wavelength


def mimo_rayleigh_distance(m_elements: int, n_elements: int, wavelength: float) -> float:
    """2 (D_RIS + D_BS)^2 / lambda."""
    aperture = 0.5 * wavelength * (m_elements + n_elements)
    return 2.0 * aperture**2 / wavelength


def _element_offsets(size: int, wavelength: float) -> np.ndarray:
    e = np.arange(1, size + 1)
    return 0.5 * wavelength * (e - (size + 1) / 2.0)


def near_field_response(shape: Sequence[int], d: float, theta: float, phi: float, wavelength: float) -> np.ndarray:
    """Spherical-wavefront UPA response under the second-order distance
    expansion, normalized to unit norm."""
    eh, ev = int(shape[0]), int(shape[1])
    if eh < 1 or ev < 1:
        raise ParameterError("array dimensions must be positive")
    if d <= 0:
        raise ParameterError(f"scatter distance must be positive, got {d}")
    x = _element_offsets(eh, wavelength)[:, None]
    y = _element_offsets(ev, wavelength)[None, :]
    st, cp, sp = np.sin(theta), np.cos(phi), np.sin(phi)
    delta = (
        -st * cp * x
        - st * sp * y
        + (1.0 - st**2 * cp**2) / (2.0 * d) * x**2
        + (1.0 - st**2 * sp**2) / (2.0 * d) * y**2
        - st**2 * cp * sp / d * x * y
    )
    return np.exp(-2j * np.pi / wavelength * delta).ravel() / np.sqrt(eh * ev)


def far_field_response(shape: Sequence[int], theta: float, phi: float) -> np.ndarray:
    """Planar-wavefront UPA response with half-wavelength spacing."""
    eh, ev = int(shape[0]), int(shape[1])
    if eh < 1 or ev < 1:
        raise ParameterError("array dimensions must be positive")
    st = np.sin(theta)
    ah = np.exp(1j * np.pi * np.arange(eh) * st * np.cos(phi))
    av = np.exp(1j * np.pi * np.arange(ev) * st * np.sin(phi))
    return np.kron(ah, av) / np.sqrt(eh * ev)


def classify_regime(link: str, distance: float, cfg: SystemConfig) -> str:
    """Near/far decision against the (MIMO) Rayleigh distance."""
    if distance <= 0:
        raise ParameterError("distance must be positive")
    if link == LINK_RIS_USER:
        return NEAR if distance <= cfg.z_rd else FAR
    if link == LINK_BS_RIS:
        return NEAR if distance <= cfg.z_mrd else FAR
    raise ParameterError(f"unknown link {link!r}")


def resolve_regime(link: str, distance: float, cfg: SystemConfig) -> str:
    policy = cfg.regime_bsris if link == LINK_BS_RIS else cfg.regime_risuser
    if policy == AUTO:
        return classify_regime(link, distance, cfg)
    return policy


def gain_scale(n_rx: int, n_tx: int, n_paths: int) -> float:
    """Per-path amplitude normalization sqrt(n_rx * n_tx / n_paths)."""
    return float(np.sqrt(n_rx * n_tx / n_paths))


def path_loss_powerlaw(z: float) -> float:
    """Linear large-scale gain 1e-2 * z^-2.2."""
    if np.any(np.asarray(z) <= 0):
        raise ParameterError("distance must be positive")
    return 1e-2 * np.power(z, -2.2)


def path_loss_lognormal(z: float, los: bool, rng: np.random.Generator | None = None, shadowing: float | None = None) -> float:
    """Path loss in dB: alpha + 10 beta log10(z) + eps, eps ~ N(0, nu^2).

    Pass ``shadowing`` to fix eps (e.g. 0.0); otherwise it is drawn from ``rng``.
    """
    if z <= 0:
        raise ParameterError("distance must be positive")
    alpha, beta, nu = LOGNORMAL_LOS if los else LOGNORMAL_NLOS
    if shadowing is None:
        if rng is None:
            raise ParameterError("either rng or shadowing must be given")
        shadowing = nu * rng.standard_normal()
    return alpha + 10.0 * beta * np.log10(z) + shadowing


def _draw_gain(rng, scale, cfg, link, distance, path_index):
    if cfg.gain_model == "lognormal":
        pl_db = path_loss_lognormal(distance, los=(path_index == 0), rng=rng)
        var = scale**2 * 10.0 ** (-0.1 * pl_db)
        return complex(np.sqrt(var / 2.0) * (rng.standard_normal() + 1j * rng.standard_normal()))
    psi = rng.uniform(0.0, np.pi)
    gain = scale * psi * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
    if cfg.gain_model == "powerlaw":
        z_ref = cfg.z_ref_bsris if link == LINK_BS_RIS else cfg.z_ref_risuser
        gain *= np.sqrt(path_loss_powerlaw(distance) / path_loss_powerlaw(z_ref))
    return complex(gain)


def draw_paths(rng: np.random.Generator, cfg: SystemConfig, link: str, distance: float | None = None) -> list[PathParams]:
    """Random path parameters for one link.

    Angles are uniform on [0, pi]. Near-field scatter distances are uniform on
    [0.5 z, 1.5 z] where ``z`` is the link distance (``cfg.z_f`` for the BS-RIS
    link; must be passed for a RIS-user link).
    """
    if link == LINK_BS_RIS:
        n_paths, n_rx, n_tx = cfg.paths_bsris, cfg.M, cfg.N
        z = cfg.z_f if distance is None else distance
    elif link == LINK_RIS_USER:
        n_paths, n_rx, n_tx = cfg.paths_risuser, cfg.N, cfg.L
        if distance is None:
            raise ParameterError("a RIS-user link needs its distance")
        z = distance
    else:
        raise ParameterError(f"unknown link {link!r}")
    scale = gain_scale(n_rx, n_tx, n_paths)
    paths = []
    for i in range(n_paths):
        gain = _draw_gain(rng, scale, cfg, link, z, i)
        th_r, ph_r, th_t, ph_t = rng.uniform(0.0, np.pi, size=4)
        d_rx, d_tx = rng.uniform(0.5 * z, 1.5 * z, size=2)
        paths.append(PathParams(gain, th_r, ph_r, th_t, ph_t, d_rx=d_rx, d_tx=d_tx))
    return paths


def gen_ris_user_channel(paths: Sequence[PathParams], regime: str, cfg: SystemConfig) -> np.ndarray:
    """N x L channel. The RIS side follows ``regime``; the user side is
    always far-field."""
    if not paths:
        raise ParameterError("need at least one path")
    H = np.zeros((cfg.N, cfg.L), dtype=np.complex128)
    for p in paths:
        if regime == NEAR:
            rx = near_field_response(cfg.ris_shape, p.d_rx, p.theta_rx, p.phi_rx, cfg.wavelength)
        else:
            rx = far_field_response(cfg.ris_shape, p.theta_rx, p.phi_rx)
        tx = far_field_response(cfg.ue_shape, p.theta_tx, p.phi_tx)
        H += p.gain * np.outer(rx, tx.conj())
    return H


def gen_bs_ris_channel(paths: Sequence[PathParams], regime: str, cfg: SystemConfig) -> np.ndarray:
    """M x N channel; both sides near-field or both far-field."""
    if not paths:
        raise ParameterError("need at least one path")
    F = np.zeros((cfg.M, cfg.N), dtype=np.complex128)
    for p in paths:
        if regime == NEAR:
            rx = near_field_response(cfg.bs_shape, p.d_rx, p.theta_rx, p.phi_rx, cfg.wavelength)
            tx = near_field_response(cfg.ris_shape, p.d_tx, p.theta_tx, p.phi_tx, cfg.wavelength)
        else:
            rx = far_field_response(cfg.bs_shape, p.theta_rx, p.phi_rx)
            tx = far_field_response(cfg.ris_shape, p.theta_tx, p.phi_tx)
        F += p.gain * np.outer(rx, tx.conj())
    return F


def effective_channel(F: np.ndarray, H_k: np.ndarray) -> np.ndarray:
    """Per-antenna cascades ``F @ diag(H_k[:, l])``, shape ``(L, M, N)``."""
    F = np.asarray(F)
    H_k = np.asarray(H_k)
    if H_k.ndim == 1:
        H_k = H_k[:, None]
    if F.shape[1] != H_k.shape[0]:
        raise ParameterError(f"F has {F.shape[1]} columns but H_k has {H_k.shape[0]} rows")
    return F[None, :, :] * H_k.T[:, None, :]


def draw_user_channels(rng: np.random.Generator, cfg: SystemConfig):
    """Distances, regimes and N x L channels for all K users."""
    z_h = rng.uniform(cfg.z_h[0], cfg.z_h[1], size=cfg.K)
    regimes = [resolve_regime(LINK_RIS_USER, z, cfg) for z in z_h]
    H = np.stack([
        gen_ris_user_channel(draw_paths(rng, cfg, LINK_RIS_USER, distance=z), reg, cfg)
        for z, reg in zip(z_h, regimes)
    ])
    return z_h, regimes, H


def reference_column_ok(H: np.ndarray) -> bool:
    ref = np.abs(H[0][:, 0])
    return bool(ref.max() > 0 and np.all(ref >= REF_COLUMN_TOL * ref.max()))


def draw_realization(rng: np.random.Generator, cfg: SystemConfig, F: np.ndarray | None = None,
                     regime_bsris: str | None = None, max_retries: int = 20) -> ChannelRealization:
    """Draw ``F`` (unless given) and all user channels.

    User channels are redrawn while any entry of ``H_1(:, 1)`` is degenerate;
    after ``max_retries`` failures a ``RuntimeError`` is raised.
    """
    if F is None:
        regime_bsris = resolve_regime(LINK_BS_RIS, cfg.z_f, cfg)
        F = gen_bs_ris_channel(draw_paths(rng, cfg, LINK_BS_RIS), regime_bsris, cfg)
    elif regime_bsris is None:
        regime_bsris = resolve_regime(LINK_BS_RIS, cfg.z_f, cfg)
    for _ in range(max_retries + 1):
        z_h, regimes, H = draw_user_channels(rng, cfg)
        if reference_column_ok(H):
            return ChannelRealization(F=F, H=H, regime_bsris=regime_bsris,
                                      regime_risuser=regimes, z_f=cfg.z_f, z_h=z_h)
    raise RuntimeError(f"reference column H_1(:,1) degenerate after {max_retries} redraws")
