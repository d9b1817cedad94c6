"""Stacked bidirectional LSTM mapping NCP sequences to drift-corrected pulses.

The network is trained end to end through the simulator: the loss of a
predicted pulse sequence is its fidelity error in the drifted system, and the
pulse gradient from :func:`pulsecorr.grape.value_and_grad` is fed into
backpropagation through time.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dynamics import SystemSpec, evolve, fidelity
from .grape import value_and_grad
from .quantum import RngSeed

logger = logging.getLogger(__name__)

GATES = ("input", "forget", "output", "candidate")
N_LAYERS = 3
N_CONTROLS = 2
OUTLIER_THRESHOLD = 0.9


class TrainingDiverged(RuntimeError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmGateParams:
    v: np.ndarray
    w: np.ndarray
    b: np.ndarray


@dataclass
class LstmDirectionParams:
    """One LSTM direction; gate blocks are stored side by side in ``GATES`` order.

    ``v`` is ``(input_dim, 4H)``, ``w`` is ``(H, 4H)`` and ``b`` is ``(4H,)``.
    """

    v: np.ndarray
    w: np.ndarray
    b: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w.shape[0]

    def gate(self, name: str) -> LstmGateParams:
        k = GATES.index(name)
        h = self.hidden_dim
        sl = slice(k * h, (k + 1) * h)
        return LstmGateParams(self.v[:, sl], self.w[:, sl], self.b[sl])

    @classmethod
    def from_gates(cls, gates: dict[str, LstmGateParams]) -> "LstmDirectionParams":
        return cls(
            np.concatenate([gates[g].v for g in GATES], axis=1),
            np.concatenate([gates[g].w for g in GATES], axis=1),
            np.concatenate([gates[g].b for g in GATES]),
        )

    def arrays(self) -> list[np.ndarray]:
        return [self.v, self.w, self.b]


def param_names(n_layers: int) -> list[str]:
    out = []
    for k in range(n_layers):
        for d in ("forward", "backward"):
            out += [f"layer{k}.{d}.{a}" for a in ("v", "w", "b")]
    return out + ["dense.w", "dense.b"]


@dataclass
class ModelParams:
    layers: list[dict[str, LstmDirectionParams]]
    dense_w: np.ndarray
    dense_b: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.layers[0]["forward"].hidden_dim

    def arrays(self) -> list[np.ndarray]:
        """All tensors in a fixed order (shared by gradients and checkpoints)."""
        out = []
        for layer in self.layers:
            out += layer["forward"].arrays() + layer["backward"].arrays()
        return out + [self.dense_w, self.dense_b]

    def names(self) -> list[str]:
        return param_names(len(self.layers))

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.hidden_dim, [a.copy() for a in self.arrays()], len(self.layers))

    @classmethod
    def from_arrays(cls, hidden_dim: int, arrays: Sequence[np.ndarray], n_layers: int = N_LAYERS) -> "ModelParams":
        arrays = list(arrays)
        layers = []
        for _ in range(n_layers):
            fwd = LstmDirectionParams(*arrays[:3])
            bwd = LstmDirectionParams(*arrays[3:6])
            arrays = arrays[6:]
            layers.append({"forward": fwd, "backward": bwd})
        dense_w, dense_b = arrays
        params = cls(layers, dense_w, dense_b)
        if params.hidden_dim != hidden_dim:
            raise ValueError("hidden_dim does not match the tensors")
        return params


def init_direction(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> LstmDirectionParams:
    k = 1.0 / np.sqrt(input_dim + hidden_dim)
    v = rng.uniform(-k, k, size=(input_dim, 4 * hidden_dim))
    w = rng.uniform(-k, k, size=(hidden_dim, 4 * hidden_dim))
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim : 2 * hidden_dim] = 1.0  # forget gate
    return LstmDirectionParams(v, w, b)


def init_params(seed: RngSeed, hidden_dim: int = 64, n_layers: int = N_LAYERS) -> ModelParams:
    rng = seed.generator()
    layers = []
    for k in range(n_layers):
        input_dim = N_CONTROLS if k == 0 else 2 * hidden_dim
        layers.append(
            {
                "forward": init_direction(rng, input_dim, hidden_dim),
                "backward": init_direction(rng, input_dim, hidden_dim),
            }
        )
    kd = 1.0 / np.sqrt(2 * hidden_dim)
    dense_w = rng.uniform(-kd, kd, size=(2 * hidden_dim, N_CONTROLS))
    dense_b = np.zeros(N_CONTROLS)
    return ModelParams(layers, dense_w, dense_b)


def zero_params(hidden_dim: int, n_layers: int = N_LAYERS) -> ModelParams:
    params = init_params(RngSeed(0), hidden_dim, n_layers)
    for a in params.arrays():
        a[...] = 0.0
    return params


def cell_step(x_t, s_prev, c_prev, p: LstmDirectionParams):
    """Advance one LSTM cell by one time step.

    Works on single vectors or on batches stacked along the leading axis.
    Returns ``(s_t, c_t)``.
    """
    s_t, c_t, _ = _cell_step(np.asarray(x_t, float), np.asarray(s_prev, float), np.asarray(c_prev, float), p)
    return s_t, c_t


def _cell_step(x_t, s_prev, c_prev, p: LstmDirectionParams):
    if x_t.shape[-1] != p.v.shape[0] or s_prev.shape[-1] != p.hidden_dim:
        raise ValueError("input/state dimensions do not match the cell parameters")
    h = p.hidden_dim
    z = x_t @ p.v + s_prev @ p.w + p.b
    i = sigmoid(z[..., :h])
    f = sigmoid(z[..., h : 2 * h])
    o = sigmoid(z[..., 2 * h : 3 * h])
    cand = np.tanh(z[..., 3 * h :])
    c_t = c_prev * f + cand * i
    tc = np.tanh(c_t)
    s_t = tc * o
    return s_t, c_t, (i, f, o, cand, tc)


def _run_direction(x, p: LstmDirectionParams, reverse: bool):
    """Unroll one direction over ``x`` of shape (B, n, in); returns states and cache."""
    batch, n, _ = x.shape
    h = p.hidden_dim
    s = np.zeros((batch, h))
    c = np.zeros((batch, h))
    out = np.empty((batch, n, h))
    cache = [None] * n
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        s_prev, c_prev = s, c
        s, c, gates = _cell_step(x[:, t], s_prev, c_prev, p)
        out[:, t] = s
        cache[t] = (s_prev, c_prev, gates)
    return out, cache


def _backprop_direction(x, p: LstmDirectionParams, cache, d_out, reverse: bool):
    """BPTT for one direction; returns (dx, [dv, dw, db])."""
    batch, n, _ = x.shape
    h = p.hidden_dim
    dv = np.zeros_like(p.v)
    dw = np.zeros_like(p.w)
    db = np.zeros_like(p.b)
    dx = np.empty_like(x)
    ds_next = np.zeros((batch, h))
    dc_next = np.zeros((batch, h))
    dz = np.empty((batch, 4 * h))
    order = range(n) if reverse else range(n - 1, -1, -1)
    for t in order:
        s_prev, c_prev, (i, f, o, cand, tc) = cache[t]
        ds = d_out[:, t] + ds_next
        dc = dc_next + ds * o * (1.0 - tc * tc)
        dz[:, :h] = dc * cand * i * (1.0 - i)
        dz[:, h : 2 * h] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * h : 3 * h] = ds * tc * o * (1.0 - o)
        dz[:, 3 * h :] = dc * i * (1.0 - cand * cand)
        dv += x[:, t].T @ dz
        dw += s_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ p.v.T
        ds_next = dz @ p.w.T
        dc_next = dc * f
    return dx, [dv, dw, db]


def _forward(x, params: ModelParams):
    caches = []
    inp = x
    for layer in params.layers:
        fwd, fcache = _run_direction(inp, layer["forward"], reverse=False)
        bwd, bcache = _run_direction(inp, layer["backward"], reverse=True)
        caches.append((inp, fcache, bcache))
        inp = np.concatenate([fwd, bwd], axis=-1)
    hidden = inp
    out = np.tanh(hidden @ params.dense_w + params.dense_b)
    return out, hidden, caches


def hidden_sequence(ncp: np.ndarray, params: ModelParams) -> np.ndarray:
    """Output of the last bidirectional layer, shape (n, 2H) or (B, n, 2H)."""
    x = np.asarray(ncp, float)
    single = x.ndim == 2
    _, hidden, _ = _forward(x[None] if single else x, params)
    return hidden[0] if single else hidden


def model_forward(ncp: np.ndarray, params: ModelParams) -> np.ndarray:
    """nnDCP for one ``(n, 2)`` NCP or a batch ``(B, n, 2)``; values in (-1, 1)."""
    x = np.asarray(ncp, float)
    single = x.ndim == 2
    out, _, _ = _forward(x[None] if single else x, params)
    return out[0] if single else out


def model_backward(params: ModelParams, out, hidden, caches, d_out) -> list[np.ndarray]:
    """Parameter gradients given dLoss/d(output), in ``params.arrays()`` order."""
    d_pre = d_out * (1.0 - out * out)
    batch, n, _ = hidden.shape
    d_dense_w = hidden.reshape(-1, hidden.shape[-1]).T @ d_pre.reshape(-1, N_CONTROLS)
    d_dense_b = d_pre.sum(axis=(0, 1))
    d_hidden = d_pre @ params.dense_w.T
    grads_per_layer = []
    h = params.hidden_dim
    for layer, (inp, fcache, bcache) in zip(reversed(params.layers), reversed(caches)):
        dx_f, g_f = _backprop_direction(inp, layer["forward"], fcache, d_hidden[..., :h], reverse=False)
        dx_b, g_b = _backprop_direction(inp, layer["backward"], bcache, d_hidden[..., h:], reverse=True)
        grads_per_layer.append(g_f + g_b)
        d_hidden = dx_f + dx_b
    grads = []
    for g in reversed(grads_per_layer):
        grads += g
    return grads + [d_dense_w, d_dense_b]


def loss_and_grad(batch: Sequence[tuple[np.ndarray, np.ndarray]], params: ModelParams, sys: SystemSpec):
    """Mean fidelity error of the network's pulses over a batch, and its gradient.

    ``batch`` holds ``(ncp, y_target)`` pairs.
    """
    if not batch:
        raise ValueError("empty batch")
    x = np.stack([np.asarray(ncp, float) for ncp, _ in batch])
    out, hidden, caches = _forward(x, params)
    if not np.all(np.isfinite(out)):
        raise TrainingDiverged("network produced non-finite pulses")
    d_out = np.empty_like(out)
    total = 0.0
    for b, (_, y) in enumerate(batch):
        err, g = value_and_grad(sys, out[b], y)
        total += err
        d_out[b] = g / len(batch)
    grads = model_backward(params, out, hidden, caches, d_out)
    return total / len(batch), grads


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place update of ``params``."""
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainConfig:
    batch_size: int = 5
    epochs: int = 50
    learning_rate: float = 1e-3
    hidden_dim: int = 64
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))
    system: SystemSpec = field(default_factory=SystemSpec)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainHistory:
    train_error: list[float] = field(default_factory=list)
    test_fidelity: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate(self.train_error)) if self.train_error else []

    def __len__(self):
        return len(self.train_error)


def _pairs(records) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(r.ncp, r.target_superop()) for r in records]


def train(trainset, testset, cfg: TrainConfig, init_seed: RngSeed | None = None, callback=None):
    """Mini-batch Adam training.

    Returns the parameters of the epoch with the lowest mean training error
    (the test set is only monitored, never used for selection) and the history.

    ``trainset``/``testset`` are sequences of dataset records. ``init_seed``
    seeds the weights, ``cfg.seed`` the mini-batch shuffling.
    """
    if not trainset or not testset:
        raise ValueError("training and test sets must be nonempty")
    params = init_params(init_seed or cfg.seed.child(1), cfg.hidden_dim)
    train_pairs = _pairs(trainset)
    opt = Adam(params.arrays(), lr=cfg.learning_rate)
    shuffle_rng = cfg.seed.generator()
    history = TrainHistory()
    best = params.copy()
    best_err = np.inf
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        order = shuffle_rng.permutation(len(train_pairs))
        errs = []
        for k in range(0, len(order), cfg.batch_size):
            batch = [train_pairs[i] for i in order[k : k + cfg.batch_size]]
            loss, grads = loss_and_grad(batch, params, cfg.system)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(f"non-finite loss/gradient at epoch {epoch}, batch {k // cfg.batch_size}")
            opt.step(params.arrays(), grads)
            errs.append(loss * len(batch))
        test_fid = evaluate(params, testset, cfg.system).mean_fidelity
        history.train_error.append(float(np.sum(errs) / len(train_pairs)))
        history.test_fidelity.append(test_fid)
        history.wall_time.append(time.perf_counter() - start)
        if history.train_error[-1] < best_err:
            best_err = history.train_error[-1]
            best = params.copy()
            history.best_epoch = epoch
        logger.info(
            "epoch %d: train F_err %.5f, test F %.5f (%.1fs)",
            epoch, history.train_error[-1], test_fid, history.wall_time[-1],
        )
        if callback is not None:
            callback(epoch, params, history)
    return best, history


@dataclass
class EvalResult:
    mean_fidelity: float
    fidelities: np.ndarray
    outliers: int


def evaluate_pulses(pulse_sets: Iterable[np.ndarray], testset, sys: SystemSpec) -> EvalResult:
    fids = np.array([fidelity(r.target_superop(), evolve(sys, p)) for p, r in zip(pulse_sets, testset)])
    return EvalResult(float(fids.mean()), fids, int(np.sum(fids < OUTLIER_THRESHOLD)))


def evaluate(model: ModelParams, testset, sys: SystemSpec) -> EvalResult:
    """Fidelity of the network's pulses on every test record (outliers included in the mean)."""
    if not testset:
        raise ValueError("empty test set")
    out = model_forward(np.stack([r.ncp for r in testset]), model)
    return evaluate_pulses(out, testset, sys)
