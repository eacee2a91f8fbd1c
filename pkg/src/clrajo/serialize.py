"""Binary save/load for channel realizations, observations and estimates.

Files are numpy ``.npz`` archives. Complex arrays are stored as float64 with a
trailing axis of length 2 (real, imaginary interleaved in memory) and a JSON
header entry ``__meta__`` records the object kind, scalar fields and the
complex shape of every array, so a file can be inspected without this package.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .channel import ChannelRealization
from .estimator import EstimatorOutput
from .protocol import ObservationSet

FORMAT_VERSION = 1


def _pack(arr) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    return arr.view(np.float64).reshape(*arr.shape, 2)


def _unpack(arr: np.ndarray) -> np.ndarray:
    if arr.shape[-1] != 2 or arr.dtype != np.float64:
        raise ValueError(f"expected float64 array with trailing axis 2, got {arr.dtype} {arr.shape}")
    return np.ascontiguousarray(arr).view(np.complex128).reshape(arr.shape[:-1])


def _write(path, kind: str, scalars: dict, arrays: dict) -> Path:
    path = Path(path)
    meta = {
        "kind": kind, "version": FORMAT_VERSION, "scalars": scalars,
        "arrays": {k: list(np.shape(v)) for k, v in arrays.items() if v is not None},
    }
    payload = {k: _pack(v) for k, v in arrays.items() if v is not None}
    payload["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with path.open("wb") as fh:
        np.savez(fh, **payload)
    return path


def _read(path, kind: str):
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("kind") != kind:
            raise ValueError(f"{path} holds a {meta.get('kind')!r}, expected {kind!r}")
        arrays = {k: _unpack(data[k]) for k in meta["arrays"]}
    for k, shape in meta["arrays"].items():
        if list(arrays[k].shape) != shape:
            raise ValueError(f"{path}: array {k} has shape {arrays[k].shape}, header says {shape}")
    return meta["scalars"], arrays


def save_realization(real: ChannelRealization, path) -> Path:
    scalars = {"regime_bsris": real.regime_bsris, "regime_risuser": list(real.regime_risuser),
               "z_f": real.z_f, "z_h": list(real.z_h)}
    return _write(path, "channel", scalars, {"F": real.F, "H": real.H})


def load_realization(path) -> ChannelRealization:
    s, a = _read(path, "channel")
    return ChannelRealization(F=a["F"], H=a["H"], regime_bsris=s["regime_bsris"],
                              regime_risuser=s["regime_risuser"], z_f=s["z_f"], z_h=np.asarray(s["z_h"]))


def save_observations(obs: ObservationSet, path) -> Path:
    arrays = {"M_col": obs.M_col, "M_row": obs.M_row, "row_combiner": obs.row_combiner}
    return _write(path, "observations", {"B_c": obs.B_c, "B_r": obs.B_r}, arrays)


def load_observations(path) -> ObservationSet:
    s, a = _read(path, "observations")
    return ObservationSet(M_col=a.get("M_col"), M_row=a["M_row"], B_c=s["B_c"], B_r=s["B_r"],
                          row_combiner=a["row_combiner"])


_OUTPUT_ARRAYS = ("S_hat", "T_hat", "D_hat", "H_eff_hat", "loss_trajectory")


def save_estimate(out: EstimatorOutput, path) -> Path:
    scalars = {"rank_hat": out.rank_hat, "rank_mdl": out.rank_mdl, "rank_clamped": out.rank_clamped,
               "degenerate_columns": out.degenerate_columns, "flags": list(out.flags)}
    return _write(path, "estimate", scalars, {k: getattr(out, k) for k in _OUTPUT_ARRAYS})


def load_estimate(path) -> EstimatorOutput:
    s, a = _read(path, "estimate")
    a["loss_trajectory"] = a["loss_trajectory"].real.copy()
    return EstimatorOutput(**a, **s)


def write_loss_csv(losses, path) -> Path:
    """One row per iteration: ``iteration, loss`` (iteration 0 is the start)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(np.asarray(losses, dtype=float)):
            w.writerow([i, repr(float(v))])
    return path


def read_loss_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["loss"]) for r in rows])
