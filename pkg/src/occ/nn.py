"""Small dense network with hand-written reverse-mode gradients.

The model is a stack of tanh layers (the encoder) whose last activation is
the backbone feature Z, followed by two linear heads: a representation head
producing M-dimensional embeddings used raw (cosine similarity normalizes
internally) and an assignment head whose row-softmax gives per-cluster
probabilities. Everything is float64; the reduction order is fixed so runs
are bit-reproducible for a given seed.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .errors import InputError, NumericError

CHECKPOINT_MAGIC = b"OCC1"


@dataclass
class ModelParams:
    """Weights of encoder + heads. W matrices are (fan_in, fan_out)."""

    encoder_w: list  # list of (fan_in, fan_out) arrays
    encoder_b: list  # list of (fan_out,) arrays
    rep_w: np.ndarray
    rep_b: np.ndarray
    assign_w: np.ndarray
    assign_b: np.ndarray

    @property
    def input_dim(self):
        return self.encoder_w[0].shape[0]

    @property
    def rep_dim(self):
        return self.rep_w.shape[1]

    @property
    def n_clusters(self):
        return self.assign_w.shape[1]

    def arrays(self):
        """Yield (name, array) pairs in a fixed order."""
        for i, (w, b) in enumerate(zip(self.encoder_w, self.encoder_b)):
            yield f"encoder{i}.w", w
            yield f"encoder{i}.b", b
        yield "rep.w", self.rep_w
        yield "rep.b", self.rep_b
        yield "assign.w", self.assign_w
        yield "assign.b", self.assign_b

    def copy(self):
        return ModelParams(
            encoder_w=[w.copy() for w in self.encoder_w],
            encoder_b=[b.copy() for b in self.encoder_b],
            rep_w=self.rep_w.copy(),
            rep_b=self.rep_b.copy(),
            assign_w=self.assign_w.copy(),
            assign_b=self.assign_b.copy(),
        )

    def all_finite(self):
        return all(np.all(np.isfinite(a)) for _, a in self.arrays())


def init_params(rng, input_dim, hidden_dims, rep_dim, n_clusters):
    """Glorot-uniform init of all layers, drawn from `rng` in a fixed order."""
    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    dims = [input_dim] + list(hidden_dims)
    enc_w, enc_b = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        enc_w.append(glorot(fan_in, fan_out))
        enc_b.append(np.zeros(fan_out))
    z_dim = dims[-1]
    return ModelParams(
        encoder_w=enc_w,
        encoder_b=enc_b,
        rep_w=glorot(z_dim, rep_dim),
        rep_b=np.zeros(rep_dim),
        assign_w=glorot(z_dim, n_clusters),
        assign_b=np.zeros(n_clusters),
    )


def zeros_like_params(params):
    return ModelParams(
        encoder_w=[np.zeros_like(w) for w in params.encoder_w],
        encoder_b=[np.zeros_like(b) for b in params.encoder_b],
        rep_w=np.zeros_like(params.rep_w),
        rep_b=np.zeros_like(params.rep_b),
        assign_w=np.zeros_like(params.assign_w),
        assign_b=np.zeros_like(params.assign_b),
    )


def softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardCache:
    """Activations kept for the backward pass."""

    x: np.ndarray
    hiddens: list  # tanh outputs per encoder layer; hiddens[-1] is Z
    z: np.ndarray
    zhat: np.ndarray
    logits: np.ndarray
    yhat: np.ndarray


def forward(params, batch):
    """Run the encoder and both heads on a (rows, input_dim) batch.

    Returns a ForwardCache whose z / zhat / yhat fields are the backbone
    features, representation embeddings and assignment probabilities.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise InputError(
            f"batch shape {batch.shape} does not match encoder input dim "
            f"{params.input_dim}"
        )
    if not params.all_finite():
        raise NumericError("model parameters contain non-finite values")
    if not np.all(np.isfinite(batch)):
        raise NumericError("batch contains non-finite values")

    h = batch
    hiddens = []
    for w, b in zip(params.encoder_w, params.encoder_b):
        h = np.tanh(h @ w + b)
        hiddens.append(h)
    z = hiddens[-1]
    zhat = z @ params.rep_w + params.rep_b
    logits = z @ params.assign_w + params.assign_b
    yhat = softmax_rows(logits)
    return ForwardCache(x=batch, hiddens=hiddens, z=z, zhat=zhat,
                        logits=logits, yhat=yhat)


def backward(params, cache, d_zhat, d_yhat):
    """Backpropagate loss gradients w.r.t. zhat and yhat into the parameters.

    d_yhat is the gradient w.r.t. the softmax output; the softmax Jacobian
    is applied here. Returns a ModelParams-shaped container of gradients.
    """
    grads = zeros_like_params(params)
    y = cache.yhat
    # softmax rows: dlogits = y * (dy - sum(dy * y))
    d_logits = y * (d_yhat - (d_yhat * y).sum(axis=1, keepdims=True))

    z = cache.z
    grads.rep_w = z.T @ d_zhat
    grads.rep_b = d_zhat.sum(axis=0)
    grads.assign_w = z.T @ d_logits
    grads.assign_b = d_logits.sum(axis=0)

    d_h = d_zhat @ params.rep_w.T + d_logits @ params.assign_w.T
    for i in range(len(params.encoder_w) - 1, -1, -1):
        a = cache.hiddens[i]
        d_pre = d_h * (1.0 - a * a)
        prev = cache.x if i == 0 else cache.hiddens[i - 1]
        grads.encoder_w[i] = prev.T @ d_pre
        grads.encoder_b[i] = d_pre.sum(axis=0)
        d_h = d_pre @ params.encoder_w[i].T

    for name, g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return grads


@dataclass
class AdamState:
    t: int
    m: ModelParams
    v: ModelParams


def adam_init(params):
    return AdamState(t=0, m=zeros_like_params(params), v=zeros_like_params(params))


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update, in place. Deterministic given identical inputs."""
    if lr <= 0:
        raise InputError("learning rate must be > 0")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for (_, p), (_, g), (_, m), (_, v) in zip(
        params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()
    ):
        if p.shape != g.shape:
            raise InputError(f"gradient shape {g.shape} != param shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


def save_params(params, path):
    """Versioned little-endian binary checkpoint.

    Layout: magic "OCC1", uint32 layer count, per-layer (fan_in, fan_out),
    uint32 rep_dim, uint32 n_clusters, then the raw float64 arrays in the
    fixed arrays() order.
    """
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(params.encoder_w)))
        for w in params.encoder_w:
            f.write(struct.pack("<II", w.shape[0], w.shape[1]))
        f.write(struct.pack("<II", params.rep_dim, params.n_clusters))
        for _, a in params.arrays():
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise InputError(f"bad checkpoint magic {magic!r}")
        (n_layers,) = struct.unpack("<I", f.read(4))
        shapes = [struct.unpack("<II", f.read(8)) for _ in range(n_layers)]
        rep_dim, n_clusters = struct.unpack("<II", f.read(8))

        def read_array(shape):
            count = int(np.prod(shape))
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise InputError("truncated checkpoint")
            return np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)

        enc_w, enc_b = [], []
        for fan_in, fan_out in shapes:
            enc_w.append(read_array((fan_in, fan_out)))
            enc_b.append(read_array((fan_out,)))
        z_dim = shapes[-1][1]
        rep_w = read_array((z_dim, rep_dim))
        rep_b = read_array((rep_dim,))
        assign_w = read_array((z_dim, n_clusters))
        assign_b = read_array((n_clusters,))
    return ModelParams(encoder_w=enc_w, encoder_b=enc_b, rep_w=rep_w,
                       rep_b=rep_b, assign_w=assign_w, assign_b=assign_b)
