"""Hand-rolled neural networks for beam classification and precoder
regression.

Two architectures share the same trunk (hidden rectifier layer of size T
feeding the output layer): an RFF network whose input embedding is
[cos(2*pi*B*z); sin(2*pi*B*z)] with a learned frequency matrix B, and an MLP
baseline whose input layer is a plain rectifier of width 2F so both variants
have nearly the same parameter count.

Everything is float64 numpy with exact analytic gradients; there is no
autodiff. Losses: multiclass cross-entropy in bits for the classification
head, negated normalized correlation for the regression head (the gradient
passes through the output normalization via the quotient rule).
"""

import struct
from dataclasses import dataclass, field

import numpy as np

_LN2 = float(np.log(2.0))
_PROB_FLOOR = 1e-12

_MAGIC = b"CBNN"
_VERSION = 1
_HEADER = struct.Struct("<4sH2B4Id")

_KIND_CODE = {"rff": 0, "dense": 1}
_HEAD_CODE = {"classification": 0, "regression": 1}


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the loss history up to the abort."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass
class RffLayer:
    freq_matrix: np.ndarray  # (F, d)
    sigma: float

    @property
    def output_dim(self):
        return 2 * self.freq_matrix.shape[0]


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str  # 'relu' | 'identity'


@dataclass
class Network:
    input_kind: str  # 'rff' | 'dense'
    head: str  # 'classification' | 'regression'
    input_layer: object  # RffLayer or DenseLayer
    hidden: DenseLayer
    output: DenseLayer
    # fixed affine input preprocessing set by the estimator wrappers;
    # not trained, defaults to the identity
    input_offset: np.ndarray = field(default=None)
    input_scale: np.ndarray = field(default=None)

    @property
    def input_dim(self):
        if self.input_kind == "rff":
            return self.input_layer.freq_matrix.shape[1]
        return self.input_layer.weights.shape[1]

    @property
    def n_frequencies(self):
        if self.input_kind == "rff":
            return self.input_layer.freq_matrix.shape[0]
        return self.input_layer.weights.shape[0] // 2

    @property
    def output_size(self):
        """N_b for classification, N_a for regression."""
        width = self.output.weights.shape[0]
        return width if self.head == "classification" else width // 2

    def parameters(self):
        """Ordered name -> array view of every trainable parameter."""
        params = {}
        if self.input_kind == "rff":
            params["input.freq"] = self.input_layer.freq_matrix
        else:
            params["input.weights"] = self.input_layer.weights
            params["input.biases"] = self.input_layer.biases
        params["hidden.weights"] = self.hidden.weights
        params["hidden.biases"] = self.hidden.biases
        params["output.weights"] = self.output.weights
        params["output.biases"] = self.output.biases
        return params


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def init_network(input_kind, head, input_dim, n_frequencies, hidden_size, output_size,
                 sigma=1.0, seed=0):
    """Freshly initialized network.

    B is Gaussian with scale sigma; dense weights are fan-in-scaled uniform
    with zero biases. Deterministic given the seed. ``output_size`` is the
    number of beams (classification) or antennas (regression).
    """
    if input_kind not in _KIND_CODE:
        raise ValueError(f"input_kind must be 'rff' or 'dense', got {input_kind!r}")
    if head not in _HEAD_CODE:
        raise ValueError(f"head must be 'classification' or 'regression', got {head!r}")
    rng = np.random.default_rng(seed)
    width = 2 * n_frequencies

    def dense(out_dim, in_dim, activation):
        # fan-in-scaled uniform for weights and biases; a non-zero bias
        # draw keeps the regression head away from the zero-output
        # singularity of the normalization
        bound = 1.0 / np.sqrt(in_dim)
        return DenseLayer(
            weights=rng.uniform(-bound, bound, size=(out_dim, in_dim)),
            biases=rng.uniform(-bound, bound, size=out_dim),
            activation=activation,
        )

    if input_kind == "rff":
        input_layer = RffLayer(
            freq_matrix=rng.normal(0.0, sigma, size=(n_frequencies, input_dim)), sigma=sigma
        )
    else:
        input_layer = dense(width, input_dim, "relu")
    hidden = dense(hidden_size, width, "relu")
    out_width = output_size if head == "classification" else 2 * output_size
    output = dense(out_width, hidden_size, "identity")
    return Network(
        input_kind=input_kind,
        head=head,
        input_layer=input_layer,
        hidden=hidden,
        output=output,
        input_offset=np.zeros(input_dim),
        input_scale=np.ones(input_dim),
    )


def count_parameters(net):
    return sum(p.size for p in net.parameters().values())


def rff_forward(layer, z):
    """Random-Fourier-feature embedding [cos(2*pi*B*z); sin(2*pi*B*z)]."""
    a = 2.0 * np.pi * (layer.freq_matrix @ np.asarray(z, dtype=np.float64))
    return np.concatenate([np.cos(a), np.sin(a)])


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite_params(net):
    for name, p in net.parameters().items():
        if not np.all(np.isfinite(p)):
            raise ValueError(f"non-finite values in parameter {name!r}")


def _trunk_forward(net, z_batch):
    """Shared forward pass up to the raw output layer, with cache."""
    z = np.asarray(z_batch, dtype=np.float64)
    zt = (z - net.input_offset) / net.input_scale
    cache = {"zt": zt}
    if net.input_kind == "rff":
        a = 2.0 * np.pi * (zt @ net.input_layer.freq_matrix.T)
        r = np.concatenate([np.cos(a), np.sin(a)], axis=1)
        cache["a"] = a
    else:
        u0 = zt @ net.input_layer.weights.T + net.input_layer.biases
        r = np.maximum(u0, 0.0)
        cache["u0"] = u0
    u1 = r @ net.hidden.weights.T + net.hidden.biases
    h = np.maximum(u1, 0.0)
    o = h @ net.output.weights.T + net.output.biases
    cache.update(r=r, u1=u1, h=h, o=o)
    return cache


def _apply_head(net, o):
    if net.head == "classification":
        return _softmax(o)
    n_a = net.output_size
    w = o[:, :n_a] + 1j * o[:, n_a:]
    norms = np.linalg.norm(o, axis=1, keepdims=True)
    return w / norms


def forward_batch(net, z_batch):
    """Probabilities (n, N_b) or unit-norm complex precoders (n, N_a)."""
    _check_finite_params(net)
    return _apply_head(net, _trunk_forward(net, z_batch)["o"])


def forward(net, z):
    """Single-input forward pass; see forward_batch."""
    return forward_batch(net, np.asarray(z, dtype=np.float64)[None, :])[0]


def cross_entropy(probabilities, true_index):
    """Cross-entropy in bits, -log2 p[true], clamped below at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    return float(-np.log2(max(p[true_index], _PROB_FLOOR)))


def correlation_loss(precoder, downlink_central):
    """Negated normalized correlation; -1 when collinear, 0 when orthogonal."""
    w = np.asarray(precoder, dtype=np.complex128)
    g = np.asarray(downlink_central, dtype=np.complex128)
    energy = np.vdot(g, g).real
    if energy == 0.0:
        raise ValueError("downlink channel has zero norm")
    return float(-np.abs(np.vdot(w, g)) ** 2 / energy)


def _batch_loss_classification(o, labels):
    p = _softmax(o)
    picked = p[np.arange(p.shape[0]), labels]
    loss = float(np.mean(-np.log2(np.maximum(picked, _PROB_FLOOR))))
    grad_o = p.copy()
    grad_o[np.arange(p.shape[0]), labels] -= 1.0
    grad_o /= p.shape[0] * _LN2
    return loss, grad_o


def _batch_loss_regression(o, channels):
    n, n_a = o.shape[0], o.shape[1] // 2
    g = np.asarray(channels, dtype=np.complex128)
    w = o[:, :n_a] + 1j * o[:, n_a:]
    n2 = np.sum(o**2, axis=1)  # ||w||^2 before normalization
    ge = np.einsum("ia,ia->i", g.conj(), g).real
    s = np.einsum("ia,ia->i", w.conj(), g)
    eta = np.abs(s) ** 2 / (n2 * ge)
    loss = float(np.mean(-eta))
    # Wirtinger gradient wrt conj(w); real/imag parts are twice its components
    gw = (s.conj()[:, None] * g) / (n2 * ge)[:, None] - (eta / n2)[:, None] * w
    grad_o = np.concatenate([2.0 * gw.real, 2.0 * gw.imag], axis=1)
    grad_o *= -1.0 / n
    return loss, grad_o


def loss_and_gradients(net, z_batch, targets):
    """Batch loss and exact analytic gradients for every parameter."""
    _check_finite_params(net)
    cache = _trunk_forward(net, z_batch)
    if net.head == "classification":
        labels = np.asarray(targets, dtype=np.int64).ravel()
        loss, grad_o = _batch_loss_classification(cache["o"], labels)
    else:
        loss, grad_o = _batch_loss_regression(cache["o"], targets)

    grads = {}
    grads["output.weights"] = grad_o.T @ cache["h"]
    grads["output.biases"] = grad_o.sum(axis=0)
    grad_h = grad_o @ net.output.weights
    grad_u1 = grad_h * (cache["u1"] > 0.0)
    grads["hidden.weights"] = grad_u1.T @ cache["r"]
    grads["hidden.biases"] = grad_u1.sum(axis=0)
    grad_r = grad_u1 @ net.hidden.weights

    if net.input_kind == "rff":
        f = net.n_frequencies
        grad_a = -np.sin(cache["a"]) * grad_r[:, :f] + np.cos(cache["a"]) * grad_r[:, f:]
        grads["input.freq"] = 2.0 * np.pi * (grad_a.T @ cache["zt"])
    else:
        grad_u0 = grad_r * (cache["u0"] > 0.0)
        grads["input.weights"] = grad_u0.T @ cache["zt"]
        grads["input.biases"] = grad_u0.sum(axis=0)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient in {name!r}", [])
    return loss, grads


def backward(net, z_batch, targets):
    """Analytic gradients of the batch loss (see loss_and_gradients)."""
    return loss_and_gradients(net, z_batch, targets)[1]


def train(net, inputs, targets, config):
    """Mini-batch Adam training with seeded shuffling.

    Updates ``net`` in place and returns (net, per-epoch mean loss history).
    Raises TrainingDivergedError (with partial history) if the loss leaves
    the finite range.
    """
    z = np.asarray(inputs, dtype=np.float64)
    n = z.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    targets = np.asarray(targets)
    rng = np.random.default_rng(config.rng_seed)
    params = net.parameters()
    m = {k: np.zeros_like(p) for k, p in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            try:
                loss, grads = loss_and_gradients(net, z[idx], targets[idx])
            except TrainingDivergedError as err:
                raise TrainingDivergedError(str(err), history) from None
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss diverged to {loss}", history)
            step += 1
            bc1 = 1.0 - config.beta1**step
            bc2 = 1.0 - config.beta2**step
            for k, p in params.items():
                g = grads[k]
                m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g
                v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g
                p -= config.learning_rate * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + config.adam_eps)
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / n)
    return net, history


def save_network(net, path):
    """CBNN checkpoint: architecture descriptor then f32 parameter blocks."""
    sigma = net.input_layer.sigma if net.input_kind == "rff" else 0.0
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                _KIND_CODE[net.input_kind],
                _HEAD_CODE[net.head],
                net.input_dim,
                net.n_frequencies,
                net.hidden.weights.shape[0],
                net.output_size,
                sigma,
            )
        )
        fh.write(net.input_offset.astype("<f8").tobytes())
        fh.write(net.input_scale.astype("<f8").tobytes())
        for p in net.parameters().values():
            fh.write(p.astype("<f4").tobytes())


def load_network(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise ValueError("not a CBNN checkpoint")
    _, version, kind_code, head_code, d, f, t, out_size, sigma = _HEADER.unpack_from(raw, 0)
    if version != _VERSION:
        raise ValueError(f"unsupported CBNN version {version}")
    kind = {v: k for k, v in _KIND_CODE.items()}[kind_code]
    head = {v: k for k, v in _HEAD_CODE.items()}[head_code]
    net = init_network(kind, head, d, f, t, out_size, sigma=sigma if kind == "rff" else 1.0)
    off = _HEADER.size
    net.input_offset = np.frombuffer(raw, dtype="<f8", count=d, offset=off).astype(np.float64)
    off += 8 * d
    net.input_scale = np.frombuffer(raw, dtype="<f8", count=d, offset=off).astype(np.float64)
    off += 8 * d
    for name, p in net.parameters().items():
        block = np.frombuffer(raw, dtype="<f4", count=p.size, offset=off)
        if block.size != p.size:
            raise ValueError(f"truncated parameter block {name!r}")
        p[...] = block.reshape(p.shape).astype(np.float64)
        off += 4 * p.size
    if off != len(raw):
        raise ValueError("trailing bytes after CBNN parameter blocks")
    return net
