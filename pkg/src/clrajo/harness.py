"""Monte Carlo evaluation of the estimators over a parameter sweep."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import SystemConfig, draw_realization, path_loss_lognormal
from .config import ExperimentConfig, category_system
from .estimator import ESTIMATORS
from .numerics import ParameterError
from .protocol import build_schedule, observe, training_overhead
from .report import EstimatorStats, NMSEReport, PointResult

log = logging.getLogger(__name__)


@dataclass
class TrialRecord:
    seed: int
    nmse: dict = field(default_factory=dict)
    rank_hat: dict = field(default_factory=dict)
    loss: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def nmse(H_hat, H_true) -> float:
    """Per-user normalized squared error averaged over users.

    Inputs are ``(K, L, M, N)`` stacks of effective channels (or any arrays
    whose first axis indexes users); each user's channel is the concatenation
    of its trailing axes.
    """
    H_hat = np.asarray(H_hat)
    H_true = np.asarray(H_true)
    if H_hat.shape != H_true.shape:
        raise ParameterError(f"shape mismatch {H_hat.shape} vs {H_true.shape}")
    if H_true.shape[0] < 1:
        raise ParameterError("need at least one user")
    K = H_true.shape[0]
    err = np.sum(np.abs(H_hat - H_true).reshape(K, -1) ** 2, axis=1)
    ref = np.sum(np.abs(H_true).reshape(K, -1) ** 2, axis=1)
    if np.any(ref == 0):
        raise ParameterError("true channel of some user has zero norm")
    return float(np.mean(err / ref))


def trial_seed(master: int, point: int, trial: int) -> int:
    """Per-trial seed from numpy's SeedSequence hash of (master, point, trial)."""
    ss = np.random.SeedSequence([int(master), int(point), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def point_system(cfg: ExperimentConfig) -> SystemConfig:
    """System parameters for one sweep point (category placement and the
    fixed-noise SNR convention applied). ``snr_db = inf`` means noiseless."""
    system = category_system(cfg.system, cfg.category)
    if np.isposinf(cfg.snr_db):
        return system.with_(noise_variance=0.0, transmit_power=1.0)
    if cfg.snr_mode == "fixed-noise":
        system = system.with_(noise_variance=1.0, transmit_power=10.0 ** (cfg.snr_db / 10.0))
    return system


def pathloss_noise_variance(real) -> float:
    """Noise level of the path-loss SNR convention: the two-hop LOS path loss
    (no shadowing) converted to linear scale and averaged over users."""
    pl_f = path_loss_lognormal(real.z_f, los=True, shadowing=0.0)
    levels = [10.0 ** (-0.1 * (path_loss_lognormal(z, los=True, shadowing=0.0) + pl_f)) for z in real.z_h]
    return float(np.mean(levels))


def _apply_snr(cfg: ExperimentConfig, system: SystemConfig, real) -> SystemConfig:
    if cfg.snr_mode == "pathloss" and not np.isposinf(cfg.snr_db):
        sigma2 = pathloss_noise_variance(real)
        return system.with_(noise_variance=sigma2, transmit_power=sigma2 * 10.0 ** (cfg.snr_db / 10.0))
    return system


def _run_estimators(cfg: ExperimentConfig, system: SystemConfig, obs, real, record: TrialRecord,
                    S_hat=None):
    outputs = {}
    for name in cfg.estimators:
        kwargs = {"S_hat": S_hat}
        if name == "clra_jo":
            kwargs["t_max"] = cfg.t_max
        out = ESTIMATORS[name](obs.M_col, obs.M_row, obs.row_combiner, **kwargs)
        record.nmse[name] = nmse(out.H_eff_hat, real.H_eff)
        record.rank_hat[name] = out.rank_hat
        record.loss[name] = out.loss_trajectory.tolist()
        outputs[name] = out
    return outputs


def run_trial(cfg: ExperimentConfig, seed: int) -> TrialRecord:
    """One independent trial: channels, schedule, observations, estimates.

    Errors are captured in the record instead of propagating.
    """
    record = TrialRecord(seed=seed)
    try:
        rng = np.random.default_rng(seed)
        system = point_system(cfg)
        real = draw_realization(rng, system)
        system = _apply_snr(cfg, system, real)
        schedule = build_schedule(system, cfg.B_c, cfg.B_r, cfg.pilot_length,
                                  combiner=cfg.combiner, combiner_seed=cfg.combiner_seed)
        obs = observe(real, schedule, system, rng)
        _run_estimators(cfg, system, obs, real, record)
    except Exception as exc:  # recorded, counted as failed
        log.warning("trial seed=%d failed: %s", seed, exc)
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def run_two_phase_window(cfg: ExperimentConfig, seed: int) -> list[TrialRecord]:
    """One BS-RIS coherence window: the first slot runs the full protocol,
    later slots reuse its column-space estimate and run only part two."""
    records = []
    rng = np.random.default_rng(seed)
    system = point_system(cfg)
    S_hat = None
    F = regime = None
    for slot in range(cfg.two_phase.slots):
        record = TrialRecord(seed=seed)
        try:
            real = draw_realization(rng, system, F=F, regime_bsris=regime)
            F, regime = real.F, real.regime_bsris
            slot_sys = _apply_snr(cfg, system, real)
            schedule = build_schedule(slot_sys, cfg.B_c, cfg.B_r, cfg.pilot_length, include_first=S_hat is None,
                                      combiner=cfg.combiner, combiner_seed=cfg.combiner_seed)
            obs = observe(real, schedule, slot_sys, rng)
            outputs = _run_estimators(cfg, slot_sys, obs, real, record, S_hat=S_hat)
            if S_hat is None:
                S_hat = next(iter(outputs.values())).S_hat
        except Exception as exc:
            log.warning("two-phase seed=%d slot=%d failed: %s", seed, slot, exc)
            record.error = f"{type(exc).__name__}: {exc}"
        records.append(record)
    return records


def _aggregate(cfg: ExperimentConfig, records: list[TrialRecord], expected_rank: int) -> dict:
    stats = {}
    ok = [r for r in records if not r.failed]
    for name in cfg.estimators:
        values = np.array([r.nmse[name] for r in ok], dtype=float)
        n = values.size
        mean = float(np.sum(values) / n) if n else float("nan")
        stderr = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        ranks = np.array([r.rank_hat[name] for r in ok])
        losses = [r.loss[name] for r in ok if r.loss[name]]
        mean_loss = np.mean(np.array(losses), axis=0).tolist() if losses else []
        stats[name] = EstimatorStats(
            mean_nmse=mean, stderr=stderr, trials=len(records), failed=len(records) - n,
            rank_recovery_rate=float(np.mean(ranks == expected_rank)) if n else float("nan"),
            mean_loss=mean_loss, nmse=values.tolist(), rank_hat=ranks.tolist(),
        )
    return stats


def _map(fn, args, threads):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, *zip(*args), chunksize=max(1, len(args) // (4 * threads))))
    return [fn(*a) for a in args]


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> NMSEReport:
    """Run ``cfg.trials`` trials at every sweep point.

    Trial seeds derive from ``(cfg.seed, point index, trial index)`` and
    results are aggregated in trial order, so the report does not depend on
    ``threads``.
    """
    if cfg.two_phase is not None:
        return run_two_phase(cfg, threads)
    points = []
    for p, value in enumerate(cfg.sweep.values):
        pcfg = cfg.point(value)
        args = [(pcfg, trial_seed(cfg.seed, p, t)) for t in range(cfg.trials)]
        records = _map(run_trial, args, threads)
        system = pcfg.system
        points.append(PointResult(
            axis_value=value, overhead=training_overhead(system, pcfg.B_c, pcfg.B_r),
            estimators=_aggregate(pcfg, records, min(system.paths_bsris, system.M))))
    return NMSEReport(axis=cfg.sweep.axis, points=points, seed=cfg.seed,
                      config_hash=cfg.hash(), config=cfg.to_dict())


def run_two_phase(cfg: ExperimentConfig, threads: int = 1) -> NMSEReport:
    """Two-timescale protocol: per sweep point, report one entry per
    coherence slot of the BS-RIS window with its cumulative overhead."""
    if cfg.two_phase is None:
        raise ParameterError("config has no two_phase section")
    points = []
    for p, value in enumerate(cfg.sweep.values):
        pcfg = cfg.point(value)
        system = pcfg.system
        args = [(pcfg, trial_seed(cfg.seed, p, t)) for t in range(cfg.trials)]
        windows = _map(run_two_phase_window, args, threads)
        full = training_overhead(system, pcfg.B_c, pcfg.B_r)
        reduced = system.N * pcfg.B_r
        cumulative = 0
        for slot in range(pcfg.two_phase.slots):
            slot_overhead = full if slot == 0 else reduced
            cumulative += slot_overhead
            records = [w[slot] for w in windows]
            points.append(PointResult(
                axis_value=value, slot=slot + 1, overhead=slot_overhead,
                cumulative_overhead=cumulative,
                estimators=_aggregate(pcfg, records, min(system.paths_bsris, system.M))))
    return NMSEReport(axis=cfg.sweep.axis, points=points, seed=cfg.seed,
                      config_hash=cfg.hash(), config=cfg.to_dict())


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, seed=seed)
