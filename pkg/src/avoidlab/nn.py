"""Minimal dense feed-forward networks with hand-rolled reverse-mode gradients.

Hidden layers use tanh.  Parameters live in one flat float64 array so that
Adam updates, finite-difference checks, and checkpointing stay trivial.
Four output heads are supported:

- ``linear``: identity output.
- ``categorical``: identity output, interpreted as logits (see
  :func:`categorical_probs`).
- ``sigmoid``: elementwise sigmoid, output in (0, 1).
- ``gaussian``: identity output interpreted as the mean of a diagonal
  Gaussian; a state-independent learnable log-std vector is appended to the
  flat parameter array (clamped to ``[LOG_STD_MIN, LOG_STD_MAX]``).

Checkpoint format (versioned): an ``.npz`` archive with keys ``version``
(int), ``sizes`` (int array of layer widths), ``head`` (str), ``flat``
(float64 parameter array).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from avoidlab.errors import ContractViolation

HEADS = ("linear", "categorical", "sigmoid", "gaussian")
CHECKPOINT_VERSION = 1
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
EPS = 1e-8


@dataclass
class MlpParams:
    """Flat parameter record for a dense network.

    ``sizes`` lists layer widths input-first, e.g. ``(3, 64, 64, 2)``.
    ``flat`` holds, per layer, the weight matrix (fan_in x fan_out,
    row-major) followed by the bias, and for the gaussian head a trailing
    log-std block of length ``sizes[-1]``.
    """

    sizes: tuple
    head: str
    flat: np.ndarray

    def __post_init__(self):
        if self.head not in HEADS:
            raise ContractViolation(f"unknown head {self.head!r}")
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2:
            raise ContractViolation("need at least input and output sizes")
        if self.flat.shape != (n_params(self.sizes, self.head),):
            raise ContractViolation(
                f"flat has {self.flat.shape}, expected ({n_params(self.sizes, self.head)},)"
            )

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def layers(self):
        """Yield (W, b) views into the flat array, one pair per layer."""
        off = 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = self.flat[off : off + n_in * n_out].reshape(n_in, n_out)
            off += n_in * n_out
            b = self.flat[off : off + n_out]
            off += n_out
            yield w, b

    def log_std(self):
        """View of the trailing log-std block (gaussian head only)."""
        if self.head != "gaussian":
            raise ContractViolation("log_std only exists for the gaussian head")
        return self.flat[-self.out_dim :]

    def copy(self):
        return MlpParams(self.sizes, self.head, self.flat.copy())


def n_params(sizes, head):
    n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if head == "gaussian":
        n += sizes[-1]
    return n


def init_mlp(sizes, head, rng, init_log_std=-0.5):
    """Uniform fan-in-scaled weight init, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    flat = np.zeros(n_params(sizes, head))
    params = MlpParams(sizes, head, flat)
    for w, _ in params.layers():
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    if head == "gaussian":
        params.log_std()[...] = init_log_std
    return params


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def categorical_probs(logits):
    """Softmax of a categorical head's logits; rows sum to 1."""
    return np.exp(log_softmax(logits))


def _check_input(params, x):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ContractViolation(
            f"input has shape {x.shape}, expected (*, {params.in_dim})"
        )
    return x, squeeze


def forward(params, x):
    """Evaluate the network; accepts a single vector or a batch of rows."""
    x, squeeze = _check_input(params, x)
    h = x
    layer_list = list(params.layers())
    for w, b in layer_list[:-1]:
        h = np.tanh(h @ w + b)
    w, b = layer_list[-1]
    out = h @ w + b
    if params.head == "sigmoid":
        out = sigmoid(out)
    return out[0] if squeeze else out


def backward(params, x, upstream):
    """Gradient of ``sum(upstream * forward(params, x))``.

    ``upstream`` is the gradient with respect to the head output (post head
    transform); returns ``(flat_grad, input_grad)``.  For the gaussian head
    the log-std slots are zero (the mean does not depend on them).
    """
    x, squeeze = _check_input(params, x)
    upstream = np.asarray(upstream, dtype=float)
    if squeeze:
        upstream = upstream[None, :]
    if upstream.shape != (x.shape[0], params.out_dim):
        raise ContractViolation(
            f"upstream has shape {upstream.shape}, expected {(x.shape[0], params.out_dim)}"
        )
    if not np.all(np.isfinite(upstream)):
        raise ContractViolation("non-finite upstream gradient")

    layer_list = list(params.layers())
    acts = [x]
    h = x
    for w, b in layer_list[:-1]:
        h = np.tanh(h @ w + b)
        acts.append(h)
    w, b = layer_list[-1]
    pre_out = acts[-1] @ w + b

    if params.head == "sigmoid":
        s = sigmoid(pre_out)
        delta = upstream * s * (1.0 - s)
    else:
        delta = upstream

    flat_grad = np.zeros_like(params.flat)
    grads = _grad_views(params, flat_grad)
    for i in range(len(layer_list) - 1, -1, -1):
        w, _ = layer_list[i]
        gw, gb = grads[i]
        gw += acts[i].T @ delta
        gb += delta.sum(axis=0)
        delta = delta @ w.T
        if i > 0:
            delta = delta * (1.0 - acts[i] ** 2)
    input_grad = delta
    return flat_grad, (input_grad[0] if squeeze else input_grad)


def _grad_views(params, flat_grad):
    shadow = MlpParams(params.sizes, params.head, flat_grad)
    return list(shadow.layers())


@dataclass
class OptimState:
    """Adam accumulators; ``m``/``v`` shape-match the flat parameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = EPS
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)


def optim_state(params, lr):
    return OptimState(
        lr=lr, m=np.zeros_like(params.flat), v=np.zeros_like(params.flat)
    )


def optim_step(state, params, grad):
    """Bias-corrected Adam update, applied in place; returns ``params``.

    Non-finite gradients raise and leave both state and params untouched.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.flat.shape:
        raise ContractViolation(
            f"grad has shape {grad.shape}, expected {params.flat.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise ContractViolation("non-finite gradient")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    params.flat -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def clamp_log_std(params):
    if params.head == "gaussian":
        np.clip(params.log_std(), LOG_STD_MIN, LOG_STD_MAX, out=params.log_std())


def save_params(params, path):
    np.savez(
        path,
        version=CHECKPOINT_VERSION,
        sizes=np.asarray(params.sizes, dtype=np.int64),
        head=np.asarray(params.head),
        flat=params.flat,
    )


def load_params(path):
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ContractViolation(f"unsupported checkpoint version {version}")
        return MlpParams(
            tuple(int(s) for s in data["sizes"]), str(data["head"]), data["flat"].copy()
        )
