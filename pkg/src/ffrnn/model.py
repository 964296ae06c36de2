"""Discrete-time vanilla recurrent network.

State update (alpha = dt/tau):

    h' = (1 - alpha) * h + alpha * tanh(W_rec h + W_in x + b_rec)

which reduces to h' = tanh(W_rec h + W_in x) for dt = tau and zero bias.
Readout is linear: z = W_out h + b_out. The recurrent matrix starts as a
random orthogonal matrix; input/output weights are Gaussian with variance
1/fan_in.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .linalg import SeededRng, orthogonal_init, random_normal
from .tensorio import ensure_dir, read_tensor, write_tensor


@dataclass(frozen=True)
class ModelConfig:
    n_units: int
    n_in: int = 3
    n_out: int = 3
    tau: float = 1.0
    dt: float = 1.0
    activation: str = "tanh"
    use_bias: bool = False

    def __post_init__(self):
        if self.n_units < 1:
            raise ValueError("n_units must be >= 1")
        if self.tau <= 0 or self.dt <= 0:
            raise ValueError("tau and dt must be > 0")
        if self.dt > self.tau:
            raise ValueError("dt must be <= tau for a stable Euler step")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def alpha(self) -> float:
        return self.dt / self.tau


@dataclass
class RnnParams:
    w_in: np.ndarray   # n_units x n_in
    w_rec: np.ndarray  # n_units x n_units
    w_out: np.ndarray  # n_out x n_units
    b_rec: np.ndarray  # n_units
    b_out: np.ndarray  # n_out

    def as_dict(self) -> dict:
        return {"w_in": self.w_in, "w_rec": self.w_rec, "w_out": self.w_out,
                "b_rec": self.b_rec, "b_out": self.b_out}

    def copy(self) -> "RnnParams":
        return RnnParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def map(self, fn) -> "RnnParams":
        return RnnParams(**{k: fn(k, v) for k, v in self.as_dict().items()})


@dataclass
class ActivityTrace:
    h: np.ndarray   # t_steps x n_units, h0 excluded
    h0: np.ndarray  # n_units
    z: np.ndarray   # t_steps x n_out


def init_params(config: ModelConfig, rng: SeededRng) -> RnnParams:
    """Orthogonal recurrent matrix, Gaussian(0, 1/fan_in) in/out, zero biases."""
    w_rec = orthogonal_init(rng.derive("w_rec"), config.n_units)
    w_in = random_normal(rng.derive("w_in"), config.n_units, config.n_in,
                         0.0, 1.0 / np.sqrt(config.n_in))
    w_out = random_normal(rng.derive("w_out"), config.n_out, config.n_units,
                          0.0, 1.0 / np.sqrt(config.n_units))
    return RnnParams(w_in, w_rec, w_out,
                     np.zeros(config.n_units), np.zeros(config.n_out))


def _check_shapes(params: RnnParams, config: ModelConfig) -> None:
    n, i, o = config.n_units, config.n_in, config.n_out
    expected = {"w_in": (n, i), "w_rec": (n, n), "w_out": (o, n),
                "b_rec": (n,), "b_out": (o,)}
    for name, shape in expected.items():
        actual = getattr(params, name).shape
        if actual != shape:
            raise ValueError(f"{name} has shape {actual}, expected {shape}")


def step(params: RnnParams, config: ModelConfig, h: np.ndarray,
         x: np.ndarray) -> np.ndarray:
    """Single Euler update of the hidden state."""
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_shapes(params, config)
    if h.shape != (config.n_units,):
        raise ValueError(f"state has shape {h.shape}, expected ({config.n_units},)")
    if x.shape != (config.n_in,):
        raise ValueError(f"input has shape {x.shape}, expected ({config.n_in},)")
    a = params.w_rec @ h + params.w_in @ x + params.b_rec
    alpha = config.alpha
    return (1.0 - alpha) * h + alpha * np.tanh(a)


def forward(params: RnnParams, config: ModelConfig, inputs: np.ndarray,
            h0: np.ndarray | None = None) -> ActivityTrace:
    """Run the full sequence, recording every hidden state and readout."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != config.n_in:
        raise ValueError(f"inputs must be t_steps x {config.n_in}, got {inputs.shape}")
    h, z = batch_forward(params, config, inputs[None],
                         None if h0 is None else np.asarray(h0, dtype=float))
    h0_arr = np.zeros(config.n_units) if h0 is None else np.asarray(h0, dtype=float)
    return ActivityTrace(h[0], h0_arr, z[0])


def batch_forward(params: RnnParams, config: ModelConfig, x: np.ndarray,
                  h0: np.ndarray | None = None):
    """Forward over a [batch, t_steps, n_in] tensor.

    Returns (h, z) with shapes [batch, t_steps, n_units] and
    [batch, t_steps, n_out]. Batch elements are independent.
    """
    _check_shapes(params, config)
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != config.n_in:
        raise ValueError(f"x must be [batch, t, {config.n_in}], got {x.shape}")
    batch, t_steps, _ = x.shape
    if h0 is None:
        h0 = np.zeros(config.n_units)
    h0 = np.asarray(h0, dtype=float)
    if h0.shape != (config.n_units,):
        raise ValueError(f"h0 has shape {h0.shape}, expected ({config.n_units},)")

    alpha = config.alpha
    hs = np.empty((batch, t_steps, config.n_units))
    drive = x.reshape(-1, config.n_in) @ params.w_in.T + params.b_rec
    drive = drive.reshape(batch, t_steps, config.n_units)
    h = np.broadcast_to(h0, (batch, config.n_units)).copy()
    for t in range(t_steps):
        a = h @ params.w_rec.T + drive[:, t]
        h = (1.0 - alpha) * h + alpha * np.tanh(a)
        hs[:, t] = h
    zs = hs.reshape(-1, config.n_units) @ params.w_out.T + params.b_out
    return hs, zs.reshape(batch, t_steps, config.n_out)


def save_checkpoint(out_dir, params: RnnParams, config: ModelConfig,
                    metadata: dict | None = None) -> None:
    """Write manifest.json plus one tensor file per weight matrix."""
    ensure_dir(out_dir)
    write_tensor(os.path.join(out_dir, "w_in.rnt"), params.w_in)
    write_tensor(os.path.join(out_dir, "w_rec.rnt"), params.w_rec)
    write_tensor(os.path.join(out_dir, "w_out.rnt"), params.w_out)
    if config.use_bias:
        write_tensor(os.path.join(out_dir, "b_rec.rnt"), params.b_rec)
        write_tensor(os.path.join(out_dir, "b_out.rnt"), params.b_out)
    manifest = {"model": dataclasses.asdict(config)}
    manifest.update(metadata or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(in_dir):
    """Read a checkpoint directory; returns (params, config, manifest)."""
    manifest_path = os.path.join(in_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise FileNotFoundError(f"no manifest.json under {in_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if "model" not in manifest:
        raise ValueError(f"{manifest_path}: missing 'model' section")
    config = ModelConfig(**manifest["model"])
    w_in = read_tensor(os.path.join(in_dir, "w_in.rnt"))
    w_rec = read_tensor(os.path.join(in_dir, "w_rec.rnt"))
    w_out = read_tensor(os.path.join(in_dir, "w_out.rnt"))
    if config.use_bias:
        b_rec = read_tensor(os.path.join(in_dir, "b_rec.rnt")).reshape(-1)
        b_out = read_tensor(os.path.join(in_dir, "b_out.rnt")).reshape(-1)
    else:
        b_rec = np.zeros(config.n_units)
        b_out = np.zeros(config.n_out)
    params = RnnParams(w_in, w_rec, w_out, b_rec, b_out)
    _check_shapes(params, config)
    return params, config, manifest
