"""Configurable policy network with hand-written backpropagation.

Topology: window of symbols -> one-hot "binary" encoding (unpaired / paired /
padding) or a learned embedding -> optional same-padded 1-D convolutions ->
optional LSTM scan over window positions (last hidden state kept) -> dense
tanh layers -> 4 action logits. A scalar baseline head shares the trunk.

All weights live in one flat float64 vector; named views index into it in
declaration order, which is also the checkpoint order.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .env import CLOSE, DOT, OPEN, PAD

N_ACTIONS = 4
N_SYMBOLS = 4
BINARY_CHANNELS = 3
# binary channel per window symbol: unpaired, paired, padding
_BINARY_CHANNEL = np.zeros(N_SYMBOLS, dtype=np.int64)
_BINARY_CHANNEL[[DOT, OPEN, CLOSE, PAD]] = [0, 1, 1, 2]

CHECKPOINT_MAGIC = b"RNAPOLCY"
CHECKPOINT_VERSION = 1


class InvalidConfig(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    state_radius: int = 5
    input_mode: str = "embedding"
    embedding_dim: int = 3
    conv_layers: tuple = ()  # (filters, kernel_size) per layer
    recurrent_layers: tuple = ()  # units per LSTM layer
    dense_layers: tuple = (32,)
    learning_rate: float = 1e-3
    batch_size: int = 32
    entropy_coeff: float = 1e-3
    reward_exponent: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(tuple(int(v) for v in c) for c in self.conv_layers))
        object.__setattr__(self, "recurrent_layers", tuple(int(u) for u in self.recurrent_layers))
        object.__setattr__(self, "dense_layers", tuple(int(u) for u in self.dense_layers))
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.state_radius < 0:
            problems.append("state_radius must be >= 0")
        if self.input_mode not in ("binary", "embedding"):
            problems.append(f"input_mode must be binary or embedding, got {self.input_mode!r}")
        if self.input_mode == "embedding" and self.embedding_dim < 1:
            problems.append("embedding_dim must be >= 1")
        if len(self.conv_layers) > 2:
            problems.append("at most two conv layers")
        for f, k in self.conv_layers:
            if f < 1 or k < 1 or k % 2 == 0:
                problems.append(f"conv layer ({f}, {k}) needs filters >= 1 and odd kernel >= 1")
        if len(self.recurrent_layers) > 2 or any(u < 1 for u in self.recurrent_layers):
            problems.append("0-2 recurrent layers with units >= 1")
        if not 1 <= len(self.dense_layers) <= 2 or any(u < 1 for u in self.dense_layers):
            problems.append("1-2 dense layers with units >= 1")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.entropy_coeff < 0:
            problems.append("entropy_coeff must be >= 0")
        if not self.reward_exponent > 1:
            problems.append("reward_exponent must be > 1")
        if problems:
            raise InvalidConfig("; ".join(problems))

    @property
    def window(self) -> int:
        return 2 * self.state_radius + 1

    @property
    def input_channels(self) -> int:
        return BINARY_CHANNELS if self.input_mode == "binary" else self.embedding_dim

    def architecture(self) -> dict:
        """Fields that determine the parameter layout."""
        d = asdict(self)
        for k in ("learning_rate", "batch_size", "entropy_coeff", "reward_exponent"):
            d.pop(k)
        if self.input_mode == "binary":
            d.pop("embedding_dim")
        return d

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(**d)

    def architecture_hash(self) -> bytes:
        blob = json.dumps(self.architecture(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


def _layout(cfg: PolicyConfig) -> list[tuple[str, tuple]]:
    """(name, shape) for every weight block, in declaration order."""
    blocks = []
    ch = cfg.input_channels
    if cfg.input_mode == "embedding":
        blocks.append(("embedding", (N_SYMBOLS, cfg.embedding_dim)))
    for li, (f, k) in enumerate(cfg.conv_layers):
        blocks += [(f"conv{li}.kernel", (k * ch, f)), (f"conv{li}.bias", (f,))]
        ch = f
    for li, u in enumerate(cfg.recurrent_layers):
        blocks += [(f"lstm{li}.wx", (ch, 4 * u)), (f"lstm{li}.wh", (u, 4 * u)), (f"lstm{li}.bias", (4 * u,))]
        ch = u
    width = ch if cfg.recurrent_layers else ch * cfg.window
    for li, u in enumerate(cfg.dense_layers):
        blocks += [(f"dense{li}.w", (width, u)), (f"dense{li}.b", (u,))]
        width = u
    blocks += [("logits.w", (width, N_ACTIONS)), ("logits.b", (N_ACTIONS,))]
    return blocks


def _value_layout(cfg: PolicyConfig) -> list[tuple[str, tuple]]:
    width = cfg.dense_layers[-1]
    return [("value.w", (width, 1)), ("value.b", (1,))]


def param_count(cfg: PolicyConfig) -> int:
    """Number of policy weights (excluding the baseline head)."""
    return sum(int(np.prod(s)) for _, s in _layout(cfg))


def value_head_count(cfg: PolicyConfig) -> int:
    return cfg.dense_layers[-1] + 1


def total_param_count(cfg: PolicyConfig) -> int:
    return param_count(cfg) + value_head_count(cfg)


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


@dataclass
class PolicyParams:
    config: PolicyConfig
    theta: np.ndarray
    seed: Optional[int] = None
    _views: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (total_param_count(self.config),):
            raise ShapeMismatch(f"expected {total_param_count(self.config)} parameters, got {self.theta.shape}")
        self._views = _make_views(self.config, self.theta)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    @property
    def n_params(self) -> int:
        return param_count(self.config)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.config, self.theta.copy(), self.seed)

    def with_theta(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.config, theta, self.seed)


def _make_views(cfg, theta) -> dict:
    views = {}
    off = 0
    for name, shape in _layout(cfg) + _value_layout(cfg):
        n = int(np.prod(shape))
        views[name] = theta[off : off + n].reshape(shape)
        off += n
    return views


def build(config: PolicyConfig, seed: int) -> PolicyParams:
    """Fresh weights, deterministic in (config, seed)."""
    config.validate()
    rng = np.random.default_rng(seed)
    theta = np.zeros(total_param_count(config))
    views = _make_views(config, theta)
    for name, shape in _layout(config) + _value_layout(config):
        v = views[name]
        if name == "embedding":
            v[...] = rng.uniform(-0.1, 0.1, size=shape)
        elif name.endswith(".kernel"):
            f = shape[1]
            k = shape[0] // _conv_in_channels(config, name)
            v[...] = _glorot(rng, shape, shape[0], k * f)
        elif name.endswith(".wx") or name.endswith(".wh") or name.endswith(".w"):
            v[...] = _glorot(rng, shape, shape[0], shape[1])
        elif name.startswith("lstm") and name.endswith(".bias"):
            u = shape[0] // 4
            v[u : 2 * u] = 1.0  # forget gate
    return PolicyParams(config, theta, seed)


def _conv_in_channels(cfg, name) -> int:
    li = int(name[4])
    ch = cfg.input_channels
    for f, _ in cfg.conv_layers[:li]:
        ch = f
    return ch


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Forward(NamedTuple):
    logits: np.ndarray
    value: np.ndarray
    cache: list


def forward(params: PolicyParams, states: np.ndarray) -> Forward:
    cfg = params.config
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[None, :]
    if states.ndim != 2 or states.shape[1] != cfg.window:
        raise ShapeMismatch(f"expected windows of length {cfg.window}, got shape {states.shape}")
    n, w = states.shape
    cache = []
    if cfg.input_mode == "binary":
        x = np.zeros((n, w, BINARY_CHANNELS))
        np.put_along_axis(x, _BINARY_CHANNEL[states][..., None], 1.0, axis=2)
    else:
        x = params["embedding"][states]
    cache.append(("input", states))
    for li, (f, k) in enumerate(cfg.conv_layers):
        half = k // 2
        xp = np.pad(x, ((0, 0), (half, half), (0, 0)))
        cols = np.concatenate([xp[:, j : j + w, :] for j in range(k)], axis=2)
        y = np.tanh(cols @ params[f"conv{li}.kernel"] + params[f"conv{li}.bias"])
        cache.append(("conv", li, k, x.shape[2], cols, y))
        x = y
    for li, u in enumerate(cfg.recurrent_layers):
        wx, wh, b = params[f"lstm{li}.wx"], params[f"lstm{li}.wh"], params[f"lstm{li}.bias"]
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        hs, steps = [], []
        xw = x @ wx + b
        for t in range(w):
            z = xw[:, t, :] + h @ wh
            i, fg, g, o = _sigmoid(z[:, :u]), _sigmoid(z[:, u : 2 * u]), np.tanh(z[:, 2 * u : 3 * u]), _sigmoid(z[:, 3 * u :])
            c_prev, h_prev = c, h
            c = fg * c + i * g
            tc = np.tanh(c)
            h = o * tc
            steps.append((i, fg, g, o, c_prev, h_prev, tc))
            hs.append(h)
        cache.append(("lstm", li, x, steps))
        x = np.stack(hs, axis=1)
    if cfg.recurrent_layers:
        feat = x[:, -1, :]
        cache.append(("last", x.shape))
    else:
        feat = x.reshape(n, -1)
        cache.append(("flatten", x.shape))
    for li, _ in enumerate(cfg.dense_layers):
        a = np.tanh(feat @ params[f"dense{li}.w"] + params[f"dense{li}.b"])
        cache.append(("dense", li, feat, a))
        feat = a
    logits = feat @ params["logits.w"] + params["logits.b"]
    value = (feat @ params["value.w"] + params["value.b"])[:, 0]
    cache.append(("heads", feat))
    return Forward(logits, value, cache)


def backward(params: PolicyParams, fwd: Forward, dlogits: np.ndarray, dvalue: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. theta, given dL/dlogits and dL/dvalue."""
    cfg = params.config
    grad = np.zeros_like(params.theta)
    g = _make_views(cfg, grad)
    cache = list(fwd.cache)
    _, feat = cache.pop()
    g["logits.w"][...] = feat.T @ dlogits
    g["logits.b"][...] = dlogits.sum(axis=0)
    dfeat = dlogits @ params["logits.w"].T
    if dvalue is not None:
        g["value.w"][...] = feat.T @ dvalue[:, None]
        g["value.b"][...] = dvalue.sum()
        dfeat = dfeat + dvalue[:, None] @ params["value.w"].T
    for li in reversed(range(len(cfg.dense_layers))):
        _, _, x_in, a = cache.pop()
        dz = dfeat * (1.0 - a * a)
        g[f"dense{li}.w"][...] = x_in.T @ dz
        g[f"dense{li}.b"][...] = dz.sum(axis=0)
        dfeat = dz @ params[f"dense{li}.w"].T
    kind, shape = cache.pop()
    if kind == "last":
        dx = np.zeros(shape)
        dx[:, -1, :] = dfeat
    else:
        dx = dfeat.reshape(shape)
    for li in reversed(range(len(cfg.recurrent_layers))):
        _, _, x_in, steps = cache.pop()
        u = cfg.recurrent_layers[li]
        wx, wh = params[f"lstm{li}.wx"], params[f"lstm{li}.wh"]
        w = x_in.shape[1]
        dz_all = np.zeros((x_in.shape[0], w, 4 * u))
        dh_next = np.zeros((x_in.shape[0], u))
        dc_next = np.zeros_like(dh_next)
        for t in reversed(range(w)):
            i, fg, gg, o, c_prev, h_prev, tc = steps[t]
            dh = dx[:, t, :] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di, df, dgg = dc * gg, dc * c_prev, dc * i
            dz = np.concatenate(
                [di * i * (1 - i), df * fg * (1 - fg), dgg * (1 - gg * gg), do * o * (1 - o)], axis=1
            )
            dz_all[:, t, :] = dz
            g[f"lstm{li}.wh"] += h_prev.T @ dz
            dh_next = dz @ wh.T
            dc_next = dc * fg
        g[f"lstm{li}.wx"][...] = np.einsum("ntc,ntg->cg", x_in, dz_all)
        g[f"lstm{li}.bias"][...] = dz_all.sum(axis=(0, 1))
        dx = dz_all @ wx.T
    for li in reversed(range(len(cfg.conv_layers))):
        _, _, k, ch_in, cols, y = cache.pop()
        dz = dx * (1.0 - y * y)
        g[f"conv{li}.kernel"][...] = np.einsum("nwc,nwf->cf", cols, dz)
        g[f"conv{li}.bias"][...] = dz.sum(axis=(0, 1))
        dcols = dz @ params[f"conv{li}.kernel"].T
        n, w, _ = dz.shape
        half = k // 2
        dxp = np.zeros((n, w + 2 * half, ch_in))
        for j in range(k):
            dxp[:, j : j + w, :] += dcols[:, :, j * ch_in : (j + 1) * ch_in]
        dx = dxp[:, half : half + w, :]
    _, states = cache.pop()
    if cfg.input_mode == "embedding":
        np.add.at(g["embedding"], states.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    return grad


def action_distribution(params: PolicyParams, states) -> np.ndarray:
    return _softmax(forward(params, states).logits)


def entropy(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(probs > 0, probs * np.log(probs), 0.0).sum(axis=-1)


def choose(probs: np.ndarray, mode: str, rng: np.random.Generator) -> int:
    if mode == "greedy":
        return int(np.argmax(probs))  # first maximum wins ties
    if mode == "sample":
        return int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), N_ACTIONS - 1))
    raise ValueError(f"mode must be 'sample' or 'greedy', got {mode!r}")


def act(params: PolicyParams, state, mode: str = "sample", rng_seed=None) -> tuple[int, float, float]:
    """Pick one action; returns (action, log-probability, entropy)."""
    state = np.asarray(state)
    if state.ndim != 1:
        raise ShapeMismatch("act expects a single window")
    probs = action_distribution(params, state)[0]
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    a = choose(probs, mode, rng)
    return a, float(np.log(probs[a])), float(entropy(probs))


def sample_actions(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` independent action rows from per-step distributions (T x 4)."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random((n, probs.shape[0], 1))
    return np.minimum((u > cum[None, :, :]).sum(axis=2), N_ACTIONS - 1)


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def save(params: PolicyParams, path) -> None:
    cfg_blob = json.dumps(params.config.to_dict(), sort_keys=True).encode()
    seed = -1 if params.seed is None else int(params.seed)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(params.config.architecture_hash())
        fh.write(struct.pack("<qQ", seed, params.theta.size))
        fh.write(params.theta.astype("<f8").tobytes())


def load(path, expect: Optional[PolicyConfig] = None) -> PolicyParams:
    with open(path, "rb") as fh:
        if fh.read(8) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a policy checkpoint")
        version, n_cfg = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        cfg = PolicyConfig.from_dict(json.loads(fh.read(n_cfg)))
        digest = fh.read(32)
        if digest != cfg.architecture_hash():
            raise ValueError(f"{path}: config hash does not match stored config")
        seed, size = struct.unpack("<qQ", fh.read(16))
        theta = np.frombuffer(fh.read(8 * size), dtype="<f8").astype(np.float64)
    if expect is not None and expect.architecture_hash() != cfg.architecture_hash():
        raise ConfigMismatch("checkpoint architecture differs from the requested config")
    return PolicyParams(cfg, theta, None if seed < 0 else seed)
