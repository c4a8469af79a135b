"""Masked L1 objective, a small convolutional noise predictor with
hand-written backpropagation, AdamW, and the training loop.
"""
import csv
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .diffusion import forward_sample
from .evaluation import bicubic_resize
from .masking import MaskSchedule, mask_at
from .rng import RngStream
from .schedule import make_linear_schedule
from .types import check_finite

log = logging.getLogger(__name__)

EMBED_DIM = 16
HIDDEN = 32
MODEL_MAGIC = b"YMDL"
MODEL_VERSION = 1


# -- loss ----------------------------------------------------------------------

def masked_loss(eps_true, eps_pred, m, normalize="active"):
    """L1 distance restricted to mask-active pixels, averaged over the batch.

    ``normalize="active"`` divides each sample's sum by its number of active
    elements (active pixels x channels); ``"sum"`` keeps the plain sum.
    A sample with an empty mask contributes zero loss and zero gradient.
    Returns ``(loss, d loss / d eps_pred)``.
    """
    eps_true = np.asarray(eps_true, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if eps_true.shape != eps_pred.shape:
        raise ValueError(f"shape mismatch: {eps_true.shape} vs {eps_pred.shape}")
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != eps_true.shape[-3:-1]:
        raise ValueError(f"mask {m.shape} does not match {eps_true.shape}")
    single = eps_true.ndim == 3
    if single:
        eps_true, eps_pred = eps_true[None], eps_pred[None]
    m = np.broadcast_to(m, eps_true.shape[:-1])[..., None]
    resid = eps_true - eps_pred
    per_sample = np.abs(m * resid).sum(axis=(1, 2, 3))
    if normalize == "active":
        n = m.sum(axis=(1, 2, 3)) * eps_true.shape[-1]
    elif normalize == "sum":
        n = np.ones(eps_true.shape[0])
    else:
        raise ValueError(f"unknown normalization {normalize!r}")
    n = np.where(n > 0, n, 1.0)
    batch = eps_true.shape[0]
    loss = float(np.sum(per_sample / n) / batch)
    grad = -m * np.sign(resid) / (n[:, None, None, None] * batch)
    return loss, grad[0] if single else grad


# -- layers ----------------------------------------------------------------------

def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def _im2col(x):
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (b, h, w, c, 3, 3)
    return cols.reshape(b * h * w, c * 9)


def conv3x3(x, weight, bias):
    """'same' 3x3 cross-correlation on channels-last input; returns (out, cols)."""
    b, h, w, _ = x.shape
    cols = _im2col(x)
    out = cols @ weight.reshape(weight.shape[0], -1).T + bias
    return out.reshape(b, h, w, -1), cols


def conv3x3_backward(dout, cols, weight, in_shape):
    b, h, w, c = in_shape
    cout = weight.shape[0]
    d2 = dout.reshape(-1, cout)
    dweight = (d2.T @ cols).reshape(weight.shape)
    dbias = d2.sum(axis=0)
    dcols = (d2 @ weight.reshape(cout, -1)).reshape(b, h, w, c, 3, 3)
    dxp = np.zeros((b, h + 2, w + 2, c))
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + w, :] += dcols[..., i, j]
    return dxp[:, 1:-1, 1:-1, :], dweight, dbias


def gamma_embedding(gamma):
    """Sinusoidal features of the noise level, shape (batch, 16)."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    half = EMBED_DIM // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    arg = 1000.0 * gamma[:, None] * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


# -- model -----------------------------------------------------------------------

class TinyDenoiser:
    """Four 3x3 conv layers predicting the noise from [z_t, x_up, gamma plane].

    The noise level additionally enters as a learned projection of a
    sinusoidal embedding, added as a per-channel bias after the first layer.
    Parameter order (also the on-disk order): w1 b1 w_emb w2 b2 w3 b3 w4 b4.
    """

    PARAM_ORDER = ("w1", "b1", "w_emb", "w2", "b2", "w3", "b3", "w4", "b4")

    def __init__(self, channels=3, hidden=HIDDEN, seed=0):
        self.channels = channels
        self.hidden = hidden
        self.version = 0
        cin = 2 * channels + 1
        shapes = {
            "w1": (hidden, cin, 3, 3), "b1": (hidden,),
            "w_emb": (hidden, EMBED_DIM),
            "w2": (hidden, hidden, 3, 3), "b2": (hidden,),
            "w3": (hidden, hidden, 3, 3), "b3": (hidden,),
            "w4": (channels, hidden, 3, 3), "b4": (channels,),
        }
        rng = RngStream(seed, stream=0x1417)
        self.params = {}
        for name in self.PARAM_ORDER:
            shape = shapes[name]
            if name.startswith("b"):
                self.params[name] = np.zeros(shape)
                continue
            fan_out = shape[0] * int(np.prod(shape[2:]))
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.params[name] = bound * (2.0 * rng.uniform(shape) - 1.0)

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def touch(self):
        """Mark parameters as modified; invalidates existing forward caches."""
        self.version += 1

    def forward(self, x_up, z_t, gamma_t):
        x_up = np.asarray(x_up, dtype=np.float64)
        z_t = np.asarray(z_t, dtype=np.float64)
        single = z_t.ndim == 3
        if single:
            z_t = z_t[None]
        x_up = np.broadcast_to(x_up, z_t.shape)
        if z_t.shape[-1] != self.channels:
            raise ValueError(f"model expects {self.channels} channels, got {z_t.shape[-1]}")
        b = z_t.shape[0]
        gamma = np.broadcast_to(np.asarray(gamma_t, dtype=np.float64), (b,))
        plane = np.broadcast_to(gamma[:, None, None, None], z_t.shape[:-1] + (1,))
        inp = np.concatenate([z_t, x_up, plane], axis=-1)
        p = self.params
        emb = gamma_embedding(gamma)
        h1, c1 = conv3x3(inp, p["w1"], p["b1"])
        h1 = h1 + (emb @ p["w_emb"].T)[:, None, None, :]
        a1 = silu(h1)
        h2, c2 = conv3x3(a1, p["w2"], p["b2"])
        a2 = silu(h2)
        h3, c3 = conv3x3(a2, p["w3"], p["b3"])
        a3 = silu(h3)
        out, c4 = conv3x3(a3, p["w4"], p["b4"])
        cache = dict(version=self.version, single=single, emb=emb,
                     shapes=(inp.shape, a1.shape, a2.shape, a3.shape),
                     pre=(h1, h2, h3), cols=(c1, c2, c3, c4))
        return (out[0] if single else out), cache

    def predict(self, x_cond, z_t, gamma_t):
        return self.forward(x_cond, z_t, gamma_t)[0]

    def backward(self, cache, grad_out):
        if cache["version"] != self.version:
            raise RuntimeError("stale forward cache: parameters changed since forward()")
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if cache["single"]:
            grad_out = grad_out[None]
        p = self.params
        s_in, s1, s2, s3 = cache["shapes"]
        h1, h2, h3 = cache["pre"]
        c1, c2, c3, c4 = cache["cols"]
        g = {}
        da3, g["w4"], g["b4"] = conv3x3_backward(grad_out, c4, p["w4"], s3)
        dh3 = da3 * silu_grad(h3)
        da2, g["w3"], g["b3"] = conv3x3_backward(dh3, c3, p["w3"], s2)
        dh2 = da2 * silu_grad(h2)
        da1, g["w2"], g["b2"] = conv3x3_backward(dh2, c2, p["w2"], s1)
        dh1 = da1 * silu_grad(h1)
        g["w_emb"] = dh1.sum(axis=(1, 2)).T @ cache["emb"]
        _, g["w1"], g["b1"] = conv3x3_backward(dh1, c1, p["w1"], s_in)
        return {name: g[name] for name in self.PARAM_ORDER}

    def flat_params(self):
        return np.concatenate([self.params[n].ravel() for n in self.PARAM_ORDER])

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        i = 0
        for name in self.PARAM_ORDER:
            p = self.params[name]
            self.params[name] = flat[i:i + p.size].reshape(p.shape).copy()
            i += p.size
        self.touch()


def save_model(model, path):
    """YMDL file: magic, u32 version, u32 channels, u32 hidden, float32 LE parameters."""
    header = MODEL_MAGIC + struct.pack("<III", MODEL_VERSION, model.channels, model.hidden)
    Path(path).write_bytes(header + model.flat_params().astype("<f4").tobytes())


def load_model(path):
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a YMDL model file")
    if len(data) < 16:
        raise ValueError(f"{path}: truncated header")
    version, channels, hidden = struct.unpack_from("<III", data, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    model = TinyDenoiser(channels, hidden)
    blob = np.frombuffer(data, dtype="<f4", offset=16)
    if blob.size != model.n_params:
        raise ValueError(f"{path}: expected {model.n_params} parameters, found {blob.size}")
    model.set_flat_params(blob.astype(np.float64))
    return model


# -- optimiser -------------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)."""

    def __init__(self, lr=5e-5, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, model, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = model.params[name]
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            model.params[name] = p - self.lr * (update + self.weight_decay * p)
        model.touch()


# -- training loop ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    weight_decay: float = 1e-4
    batch_size: int = 2
    iterations: int = 200
    T: int = 100
    l: float = 0.2
    seed: int = 0
    loss_mode: str = "yoda"
    beta_start: float = 1e-4
    beta_end: float = 0.02
    mask_input: bool = False

    def __post_init__(self):
        if self.loss_mode not in ("yoda", "full"):
            raise ValueError(f"loss_mode must be 'yoda' or 'full', got {self.loss_mode!r}")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be > 0 and weight_decay >= 0")
        if self.batch_size < 1 or self.iterations < 1 or self.T < 1:
            raise ValueError("batch_size, iterations and T must be >= 1")
        if not 0.0 < self.l < 1.0:
            raise ValueError("l must lie in (0, 1)")

    def schedule(self):
        return make_linear_schedule(self.T, self.beta_start, self.beta_end)


def train(cfg, dataset, attention=None, model=None):
    """Train a :class:`TinyDenoiser`; returns ``(model, losses)``.

    ``dataset`` is a sequence of ``(lr, hr, id)`` triples. ``attention`` holds
    one HR-resolution map per item and is required for ``loss_mode="yoda"``.

    Per iteration the RNG stream is consumed in a fixed order: batch indices,
    step indices, then the noise for each batch item.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    schedule = cfg.schedule()
    hrs = [np.asarray(hr, dtype=np.float64) for _, hr, _ in dataset]
    x_ups = [bicubic_resize(lr, *hr.shape[:2]) for (lr, _, _), hr in zip(dataset, hrs)]
    if cfg.loss_mode == "yoda":
        if attention is None or len(attention) != len(dataset):
            raise ValueError("yoda mode needs one attention map per dataset item")
        masks = [MaskSchedule(a, cfg.T, cfg.l) for a in attention]
    else:
        masks = None
    if model is None:
        model = TinyDenoiser(channels=hrs[0].shape[-1], seed=cfg.seed)
    opt = AdamW(cfg.lr, cfg.weight_decay)
    rng = RngStream(cfg.seed)
    losses = []
    for it in range(cfg.iterations):
        idx = rng.integers(len(dataset), cfg.batch_size)
        ts = rng.integers(cfg.T, cfg.batch_size) + 1
        z_ts, eps, ms = [], [], []
        for i, t in zip(idx, ts):
            z_t, e = forward_sample(hrs[i], schedule.gamma(t), rng)
            z_ts.append(z_t)
            eps.append(e)
            if masks is None:
                ms.append(np.ones(hrs[i].shape[:2], dtype=bool))
            else:
                ms.append(mask_at(masks[i], int(t)))
        z_t = np.stack(z_ts)
        m = np.stack(ms)
        if cfg.mask_input:
            z_t = z_t * m[..., None]
        gammas = schedule.gammas[ts - 1]
        pred, cache = model.forward(np.stack([x_ups[i] for i in idx]), z_t, gammas)
        loss, dpred = masked_loss(np.stack(eps), pred, m)
        check_finite(np.asarray(loss), f"loss at iteration {it}")
        losses.append(loss)
        opt.step(model, model.backward(cache, dpred))
    return model, losses


def write_loss_log(losses, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(float(loss))])
