"""Small differentiable substrate with hand-derived backward passes.

Every layer is a pair of functions: ``*_forward`` returns the output and a
cache, ``*_backward`` takes the upstream gradient and the cache and returns
input gradients, accumulating parameter gradients into a dict. All arrays
are float64 and batched along the leading axis.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "NonFiniteError",
    "ParameterStore",
    "AdamW",
    "sigmoid",
    "softmax",
    "log_softmax",
    "gru_forward",
    "gru_backward",
    "attention_forward",
    "attention_backward",
    "softmax_xent",
    "save_checkpoint",
    "load_checkpoint",
    "numerical_gradient",
]

DTYPE = np.float64
NEG_INF = -1e30


class NonFiniteError(FloatingPointError):
    pass


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {name}")
    return arr


class ParameterStore:
    """Named parameters with gradient buffers, optimizer moments and groups."""

    def __init__(self):
        self.params: dict = {}
        self.grads: dict = {}
        self.groups: dict = {}
        self.m: dict = {}
        self.v: dict = {}
        self.step_count = 0
        self.version = 0  # bumped on every update; used for caching

    def add(self, name: str, value: np.ndarray, group: str = "default") -> np.ndarray:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already exists")
        value = np.ascontiguousarray(value, dtype=DTYPE)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        self.groups[name] = group
        return value

    def append_rows(self, name: str, rows: np.ndarray) -> None:
        """Grow a 2-d parameter by ``rows``; new moments start at zero."""
        rows = np.asarray(rows, dtype=DTYPE)
        old = self.params[name]
        if rows.ndim != 2 or rows.shape[1] != old.shape[1]:
            raise ValueError(f"cannot append rows of shape {rows.shape} to {name} {old.shape}")
        self.params[name] = np.concatenate([old, rows], axis=0)
        pad = np.zeros_like(rows)
        for buf in (self.grads, self.m, self.v):
            buf[name] = np.concatenate([buf[name], pad], axis=0)
        self.version += 1

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def accumulate(self, grads: dict, scale: float = 1.0) -> None:
        for name, g in grads.items():
            if g.shape != self.params[name].shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape for {name}")
            self.grads[name] += scale * g

    def load_state(self, tensors: dict) -> None:
        for name, value in tensors.items():
            if name not in self.params:
                raise KeyError(f"unexpected tensor {name!r} in checkpoint")
            if value.shape != self.params[name].shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {self.params[name].shape}")
            self.params[name][...] = value
        missing = set(self.params) - set(tensors)
        if missing:
            raise KeyError(f"checkpoint lacks {sorted(missing)}")
        self.version += 1

    def copy(self) -> "ParameterStore":
        other = ParameterStore()
        for name in self.params:
            other.add(name, self.params[name].copy(), self.groups[name])
        return other

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(p * p) for p in self.params.values())))


class AdamW:
    """Adam with decoupled weight decay and per-group learning rates."""

    def __init__(self, lr: dict | float = 1e-3, weight_decay: float = 1e-5,
                 betas: tuple = (0.9, 0.999), eps: float = 1e-8, clip_norm: float | None = None):
        self.lr = lr if isinstance(lr, dict) else {"default": lr}
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm

    def lr_for(self, group: str) -> float:
        return self.lr.get(group, self.lr.get("default", 0.0))

    def step(self, store: ParameterStore) -> None:
        scale = 1.0
        if self.clip_norm is not None:
            total = np.sqrt(sum(np.sum(g * g) for g in store.grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
        store.step_count += 1
        t = store.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name in store.names():
            p, g = store.params[name], store.grads[name] * scale
            check_finite(f"gradient of {name}", g)
            lr = self.lr_for(store.groups[name])
            m, v = store.m[name], store.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p *= 1.0 - lr * self.weight_decay
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            check_finite(name, p)
        store.zero_grad()
        store.version += 1


# ---------------------------------------------------------------------------
# Elementwise helpers
# ---------------------------------------------------------------------------


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, mask: np.ndarray | None = None, axis: int = -1) -> np.ndarray:
    if mask is not None:
        x = np.where(mask, x, NEG_INF)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    if mask is not None:
        e = e * mask
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, mask: np.ndarray | None = None, axis: int = -1) -> np.ndarray:
    if mask is not None:
        x = np.where(mask, x, NEG_INF)
    z = x - x.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    if mask is not None:
        out = np.where(mask, out, -np.inf)
    return out


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------
# z = sigmoid(x Wz + h Uz + bz)
# r = sigmoid(x Wr + h Ur + br)
# n = tanh(x Wn + (r * h) Un + bn)
# h' = (1 - z) * n + z * h
# Wx = [Wz Wr Wn] (in, 3H), Uh = [Uz Ur Un] (H, 3H), b (3H,)


def gru_forward(x: np.ndarray, h: np.ndarray, Wx: np.ndarray, Uh: np.ndarray, b: np.ndarray):
    H = h.shape[-1]
    if Wx.shape[1] != 3 * H or Uh.shape != (H, 3 * H) or x.shape[-1] != Wx.shape[0]:
        raise ValueError(f"GRU shape mismatch: x {x.shape}, h {h.shape}, Wx {Wx.shape}, Uh {Uh.shape}")
    xw = x @ Wx + b
    hu = h @ Uh[:, :2 * H]
    z = sigmoid(xw[..., :H] + hu[..., :H])
    r = sigmoid(xw[..., H:2 * H] + hu[..., H:])
    rh = r * h
    n = np.tanh(xw[..., 2 * H:] + rh @ Uh[:, 2 * H:])
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, z, r, rh, n)


def gru_backward(dh_new: np.ndarray, cache, Wx: np.ndarray, Uh: np.ndarray, grads: dict, prefix: str):
    """Returns (dx, dh). Parameter gradients go to ``grads[prefix + 'Wx' ...]``."""
    x, h, z, r, rh, n = cache
    H = h.shape[-1]
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    da_n = dn * (1.0 - n * n)
    drh = da_n @ Uh[:, 2 * H:].T
    dr = drh * h
    dh += drh * r
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    da = np.concatenate([da_z, da_r, da_n], axis=-1)
    dzr = da[..., :2 * H]
    dh += dzr @ Uh[:, :2 * H].T
    dx = da @ Wx.T
    x2 = x.reshape(-1, x.shape[-1])
    grads[prefix + "Wx"] += x2.T @ da.reshape(-1, 3 * H)
    grads[prefix + "Uh"][:, :2 * H] += h.reshape(-1, H).T @ dzr.reshape(-1, 2 * H)
    grads[prefix + "Uh"][:, 2 * H:] += rh.reshape(-1, H).T @ da_n.reshape(-1, H)
    grads[prefix + "b"] += da.reshape(-1, 3 * H).sum(axis=0)
    return dx, dh


# ---------------------------------------------------------------------------
# Dot-product attention
# ---------------------------------------------------------------------------


def attention_forward(key: np.ndarray, memories: np.ndarray, mask: np.ndarray | None = None):
    """``alpha = softmax(memories @ key)``, ``context = alpha @ memories``.

    key (B, D), memories (B, T, D), mask (B, T) of bools.
    """
    if memories.shape[-1] != key.shape[-1]:
        raise ValueError(f"attention shape mismatch: key {key.shape}, memories {memories.shape}")
    scores = np.einsum("btd,bd->bt", memories, key)
    alpha = softmax(scores, mask)
    context = np.einsum("bt,btd->bd", alpha, memories)
    return alpha, context, (key, memories, alpha)


def attention_backward(dcontext: np.ndarray, cache, dalpha: np.ndarray | None = None):
    key, memories, alpha = cache
    da = np.einsum("bd,btd->bt", dcontext, memories)
    if dalpha is not None:
        da = da + dalpha
    dscores = alpha * (da - np.sum(alpha * da, axis=-1, keepdims=True))
    dkey = np.einsum("bt,btd->bd", dscores, memories)
    dmem = alpha[..., None] * dcontext[:, None, :] + dscores[..., None] * key[:, None, :]
    return dkey, dmem


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def softmax_xent(logits: np.ndarray, gold: np.ndarray, mask: np.ndarray | None = None,
                 weights: np.ndarray | None = None):
    """Summed cross-entropy over rows and its gradient w.r.t. ``logits``.

    logits (N, K), gold (N,) ints, optional class mask (N, K) and row
    weights (N,). Returns (loss, dlogits, probs).
    """
    logits = np.atleast_2d(logits)
    gold = np.atleast_1d(np.asarray(gold))
    logp = log_softmax(logits, mask)
    rows = np.arange(len(gold))
    picked = logp[rows, gold]
    if not np.all(np.isfinite(picked)):
        raise ValueError("gold class is masked out")
    w = np.ones(len(gold)) if weights is None else np.asarray(weights, dtype=DTYPE)
    loss = float(-(w * picked).sum())
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[rows, gold] -= 1.0
    dlogits *= w[:, None]
    return loss, dlogits, probs


# ---------------------------------------------------------------------------
# Checkpoints: b"PTCK" | version u8 | count u32 | per tensor:
#   name_len u16 | name utf-8 | ndim u8 | dims u32[ndim] | float64 LE data
# ---------------------------------------------------------------------------

_MAGIC = b"PTCK"
_VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict) -> None:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<BI", _VERSION, len(tensors)))
    for name in sorted(tensors):
        arr = np.array(tensors[name], dtype="<f8", order="C")  # keeps 0-d shapes
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 9
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + n].decode("utf-8")
        off += n
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(DTYPE)
        off += 8 * size
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return out


def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * eps)
    return grad
