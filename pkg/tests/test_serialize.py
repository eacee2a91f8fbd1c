import json

import numpy as np
import pytest

from clrajo.channel import draw_realization
from clrajo.estimator import clra_jo
from clrajo.protocol import build_schedule, observe
from clrajo.serialize import (
    load_estimate,
    load_observations,
    load_realization,
    read_loss_csv,
    save_estimate,
    save_observations,
    save_realization,
    write_loss_csv,
)


@pytest.fixture
def bundle(desk):
    rng = np.random.default_rng(21)
    real = draw_realization(rng, desk)
    obs = observe(real, build_schedule(desk, 6, 1), desk, rng)
    return real, obs, clra_jo(obs.M_col, obs.M_row, obs.row_combiner)


def test_realization_round_trip(bundle, tmp_path):
    real = bundle[0]
    back = load_realization(save_realization(real, tmp_path / "c.npz"))
    np.testing.assert_array_equal(back.F, real.F)
    np.testing.assert_array_equal(back.H_eff, real.H_eff)
    assert back.regime_risuser == list(real.regime_risuser) and back.z_f == real.z_f


def test_interleaved_layout(bundle, tmp_path):
    real = bundle[0]
    path = save_realization(real, tmp_path / "c.npz")
    with np.load(path) as data:
        raw = data["F"]
        meta = json.loads(bytes(data["__meta__"]).decode())
    assert raw.dtype == np.float64 and raw.shape == real.F.shape + (2,)
    np.testing.assert_array_equal(raw.ravel()[:2], [real.F[0, 0].real, real.F[0, 0].imag])
    assert meta["arrays"]["F"] == list(real.F.shape) and meta["kind"] == "channel"


def test_observations_round_trip(bundle, tmp_path):
    obs = bundle[1]
    back = load_observations(save_observations(obs, tmp_path / "o.npz"))
    np.testing.assert_array_equal(back.M_col, obs.M_col)
    np.testing.assert_array_equal(back.M_row, obs.M_row)
    np.testing.assert_array_equal(back.row_combiner, obs.row_combiner)
    assert (back.B_c, back.B_r) == (obs.B_c, obs.B_r)


def test_observations_without_first_part(bundle, tmp_path):
    obs = bundle[1]
    obs.M_col = None
    assert load_observations(save_observations(obs, tmp_path / "o.npz")).M_col is None


def test_estimate_round_trip(bundle, tmp_path):
    est = bundle[2]
    back = load_estimate(save_estimate(est, tmp_path / "e.npz"))
    for name in ("S_hat", "T_hat", "D_hat", "H_eff_hat"):
        np.testing.assert_array_equal(getattr(back, name), getattr(est, name))
    np.testing.assert_array_equal(back.loss_trajectory, est.loss_trajectory)
    assert back.rank_hat == est.rank_hat and back.flags == est.flags


def test_kind_checked(bundle, tmp_path):
    path = save_realization(bundle[0], tmp_path / "c.npz")
    with pytest.raises(ValueError):
        load_estimate(path)


def test_loss_csv(bundle, tmp_path):
    losses = bundle[2].loss_trajectory
    path = write_loss_csv(losses, tmp_path / "loss.csv")
    assert path.read_text().splitlines()[0] == "iteration,loss"
    np.testing.assert_array_equal(read_loss_csv(path), losses)
