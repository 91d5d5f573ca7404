"""Tiny reverse-mode autodiff over a closed set of numpy primitives.

Every value is a :class:`Tensor` wrapping a float64 array. Operations record
their parents and a vector-Jacobian product; :func:`backward` walks the graph
in reverse topological order. Sparse operands (incidence matrices, normalized
adjacencies, pooling/selection matrices) are constants held as scipy CSR
matrices and never receive gradients.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NotScalarOutput(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "parents", "vjp", "name")

    def __init__(self, data, parents: tuple = (), vjp: Optional[Callable] = None, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    def numpy(self) -> np.ndarray:
        return self.data


def const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue(f"{op} produced a non-finite value")
    return out


def _node(out: np.ndarray, op: str, parents: tuple, vjp: Callable) -> Tensor:
    return Tensor(_check_finite(out, op), parents, vjp)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return _node(A @ B, "matmul", (a, b), lambda g: (g @ B.T, A.T @ g))


def spmm(m: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    if x.data.ndim != 2 or m.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"spmm: {m.shape} @ {x.shape}")
    m = sp.csr_matrix(m)
    mt = m.T.tocsr()
    return _node(np.asarray(m @ x.data), "spmm", (x,), lambda g: (np.asarray(mt @ g),))


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _node(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _node(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    A, B = a.data, b.data
    return _node(A * B, "mul", (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, "scale", (a,), lambda g: (g * c,))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack along axis 0 (row-wise concatenation)."""
    widths = {p.shape[1] for p in parts}
    if len(widths) != 1:
        raise ShapeMismatch(f"concat_rows: column counts {sorted(widths)}")
    cuts = np.cumsum([p.shape[0] for p in parts])[:-1]
    return _node(np.vstack([p.data for p in parts]), "concat_rows", tuple(parts),
                 lambda g: tuple(np.split(g, cuts, axis=0)))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    heights = {p.shape[0] for p in parts}
    if len(heights) != 1:
        raise ShapeMismatch(f"concat_cols: row counts {sorted(heights)}")
    cuts = np.cumsum([p.shape[1] for p in parts])[:-1]
    return _node(np.hstack([p.data for p in parts]), "concat_cols", tuple(parts),
                 lambda g: tuple(np.split(g, cuts, axis=1)))


def row_mean(a: Tensor) -> Tensor:
    """Mean of each row: (n, m) -> (n,)."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"row_mean expects a matrix, got {a.shape}")
    n, m = a.shape
    return _node(a.data.mean(axis=1), "row_mean", (a,),
                 lambda g: (np.repeat(g[:, None] / m, m, axis=1),))


def sigmoid(a: Tensor) -> Tensor:
    # tanh form is overflow-free and exact at 0
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _node(t, "tanh", (a,), lambda g: (g * (1.0 - t * t),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def cos_affine(freq: Tensor, phase: Tensor, t: float) -> Tensor:
    """cos(2*pi*freq*t + phase) with freq in cycles per time unit.

    The cycle count is range-reduced before scaling by 2*pi, so shifting t by
    a whole number of periods gives bit-identical output whenever freq*t is
    exactly representable.
    """
    _same_shape(freq, phase, "cos_affine")
    t = float(t)
    cycles = freq.data * t
    arg = 2.0 * np.pi * (cycles - np.floor(cycles)) + phase.data
    s = np.sin(arg)
    return _node(np.cos(arg), "cos_affine", (freq, phase),
                 lambda g: (-g * s * 2.0 * np.pi * t, -g * s))


def row_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of matching rows, (n, d) x (n, d) -> (n,). Zero rows give 0."""
    _same_shape(a, b, "row_cosine")
    A, B = a.data, b.data
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    ok = (na > 0) & (nb > 0)
    denom = np.where(ok, na * nb, 1.0)
    c = np.where(ok, np.einsum("ij,ij->i", A, B) / denom, 0.0)

    def vjp(g):
        sa = np.where(ok, 1.0 / np.where(ok, na, 1.0) ** 2, 0.0)
        sb = np.where(ok, 1.0 / np.where(ok, nb, 1.0) ** 2, 0.0)
        inv = np.where(ok, 1.0 / denom, 0.0)
        ga = g[:, None] * (B * inv[:, None] - (c * sa)[:, None] * A)
        gb = g[:, None] * (A * inv[:, None] - (c * sb)[:, None] * B)
        return ga, gb

    return _node(c, "row_cosine", (a, b), vjp)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NonFiniteValue("log of a non-positive value")
    A = a.data
    return _node(np.log(A), "log", (a,), lambda g: (g / A,))


def clamp_below(a: Tensor, eps: float = 1e-7) -> Tensor:
    mask = a.data > eps
    return _node(np.where(mask, a.data, eps), "clamp_below", (a,), lambda g: (g * mask,))


def broadcast_row(a: Tensor, n: int) -> Tensor:
    """Repeat a (1, d) row n times -> (n, d)."""
    if a.data.ndim != 2 or a.shape[0] != 1:
        raise ShapeMismatch(f"broadcast_row expects (1, d), got {a.shape}")
    return _node(np.repeat(a.data, n, axis=0), "broadcast_row", (a,),
                 lambda g: (g.sum(axis=0, keepdims=True),))


# ---------------------------------------------------------------------------
# small compositions used throughout the model

def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), broadcast_row(b, x.shape[0]))


def mean_all(v: Tensor) -> Tensor:
    """Mean of a vector (n,) as a (1,) tensor."""
    return row_mean(reshape_row(v))


def reshape_row(v: Tensor) -> Tensor:
    """(n,) -> (1, n). Pure view change; gradient reshaped back."""
    shape = v.shape
    return _node(v.data.reshape(1, -1), "reshape", (v,), lambda g: (g.reshape(shape),))


def reshape_col(v: Tensor) -> Tensor:
    shape = v.shape
    return _node(v.data.reshape(-1, 1), "reshape", (v,), lambda g: (g.reshape(shape),))


# ---------------------------------------------------------------------------
# parameters, backward, gradient checking, Adam

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray


@dataclass
class ParamStore:
    params: Dict[str, Tensor] = field(default_factory=dict)
    state: Dict[str, AdamState] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=np.float64), name=name)
        self.params[name] = t
        self.state[name] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self):
        return list(self.params)

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copy of all parameter values (for best-epoch restoration)."""
        return {k: p.data.copy() for k, p in self.params.items()}

    def restore(self, values: Dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            if self.params[k].data.shape != v.shape:
                raise ShapeMismatch(f"{k}: {self.params[k].data.shape} vs {v.shape}")
            self.params[k].data[...] = v

    def count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _topo(out: Tensor):
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out: Tensor, store: ParamStore) -> Dict[str, np.ndarray]:
    """Gradient of a scalar output w.r.t. every registered parameter."""
    if out.data.size != 1:
        raise NotScalarOutput(f"backward needs a scalar output, got shape {out.shape}")
    grads = {id(out): np.ones_like(out.data)}
    for node in reversed(_topo(out)):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    return {
        name: grads.get(id(p), np.zeros_like(p.data)).reshape(p.data.shape).copy()
        for name, p in store.params.items()
    }


def grad_check(fn: Callable[[], Tensor], store: ParamStore, epsilon: float = 1e-5,
               names: Optional[Iterable[str]] = None,
               analytic: Optional[Dict[str, np.ndarray]] = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Relative error per entry is |a - n| / max(1, |a|, |n|).
    """
    if not 0 < epsilon <= 1e-3:
        raise ValueError("epsilon must lie in (0, 1e-3]")
    if analytic is None:
        analytic = backward(fn(), store)
    worst = 0.0
    for name in (names if names is not None else store.names()):
        p = store.params[name].data
        flat = p.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = float(fn().data.reshape(-1)[0])
            flat[i] = orig - epsilon
            fm = float(fn().data.reshape(-1)[0])
            flat[i] = orig
            num = (fp - fm) / (2.0 * epsilon)
            err = abs(ga[i] - num) / max(1.0, abs(ga[i]), abs(num))
            worst = max(worst, err)
    return worst


def adam_step(store: ParamStore, grads: Dict[str, np.ndarray], lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place."""
    for name, g in grads.items():
        if store.params[name].data.shape != g.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {store.params[name].data.shape}")
    store.step += 1
    t = store.step
    for name, g in grads.items():
        st = store.state[name]
        st.m = beta1 * st.m + (1 - beta1) * g
        st.v = beta2 * st.v + (1 - beta2) * g * g
        mhat = st.m / (1 - beta1 ** t)
        vhat = st.v / (1 - beta2 ** t)
        store.params[name].data -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# checkpoint file: magic, version, JSON header, raw little-endian float64 blocks

MAGIC = b"LNCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, store: ParamStore, extra: Optional[Dict[str, np.ndarray]] = None,
                    meta: Optional[dict] = None) -> None:
    blocks, entries = [], []

    def put(kind, name, arr):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"kind": kind, "name": name, "shape": list(arr.shape)})
        blocks.append(arr.tobytes())

    for name, p in store.params.items():
        put("param", name, p.data)
        put("adam_m", name, store.state[name].m)
        put("adam_v", name, store.state[name].v)
    for name, arr in (extra or {}).items():
        put("extra", name, arr)
    header = json.dumps({"step": store.step, "tensors": entries, "meta": meta or {}},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for b in blocks:
            fh.write(b)


def load_checkpoint(path):
    """Returns (ParamStore, extra tensors, meta)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen))
        store, extra = ParamStore(step=header["step"]), {}
        for e in header["tensors"]:
            n = int(np.prod(e["shape"])) if e["shape"] else 1
            arr = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(e["shape"]).copy()
            if e["kind"] == "param":
                store.add(e["name"], arr)
            elif e["kind"] == "adam_m":
                store.state[e["name"]].m = arr
            elif e["kind"] == "adam_v":
                store.state[e["name"]].v = arr
            else:
                extra[e["name"]] = arr
    return store, extra, header["meta"]
