"""Training engine for dense networks with binary weights and activations.

Each dense layer keeps latent continuous weights w_c in [-1, 1]; the forward
pass uses their signs w_b = theta(w_c).  Activations pass through batch norm
and are binarized with theta.  Backpropagation uses the straight-through
estimator: the activation binarizer backpropagates the hard-tanh derivative
1{|pre| <= 1}, and the weight binarizer passes gradients to w_c unchanged.
SGD steps clip w_c back into [-1, 1].

Checkpoint format (little-endian):

    magic b"BGNC" | version u32 | meta length u32 | meta JSON
    then one block per layer: tag u8 + payload

Real tensors serialize as [ndim u32][dims u64 each][float64 data]; packed sign
matrices use the bitcore wire format.  Binary dense blocks store both w_c and
the packed signs, and the loader verifies they agree.
"""

import copy
import csv
import json
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .bitcore import BitMatrix, binarize_matrix, binarize_signs, dot_bb_many, pack_signs
from .validation import as_real_matrix, check_positive_int

CHECKPOINT_MAGIC = b"BGNC"
CHECKPOINT_VERSION = 1


class ArchSpecError(ValueError):
    """Malformed architecture string."""


class StaleCacheError(RuntimeError):
    """backward called with a cache that no longer matches the network state."""


class TrainingDivergedError(RuntimeError):
    """Non-finite gradient encountered during an optimizer step."""


class CheckpointFormatError(ValueError):
    """Checkpoint bytes do not parse."""


class CheckpointVersionError(CheckpointFormatError):
    """Checkpoint written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointFormatError):
    """Checkpoint ends before the declared payload."""


@dataclass
class TrainConfig:
    """Hyperparameters for train(): exponential learning-rate decay per epoch."""

    arch: str
    epochs: int = 20
    batch_size: int = 100
    learning_rate: float = 0.05
    lr_decay: float = 0.97
    seed: int = 0
    first_layer_mode: str | None = None

    def __post_init__(self):
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.batch_size, "batch_size")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.first_layer_mode not in (None, "continuous", "binary"):
            raise ValueError("first_layer_mode must be 'continuous', 'binary', or None")


class ContinuousDense:
    """Dense layer with ordinary real weights, no bias (batch norm follows)."""

    kind = "continuous_dense"

    def __init__(self, in_dim, out_dim, rng=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            self.w = np.zeros((out_dim, in_dim))
        else:
            self.w = rng.uniform(-1.0, 1.0, size=(out_dim, in_dim)) / np.sqrt(in_dim)

    def forward(self, x, surrogate=False, continuous=False, packed=False):
        return x @ self.w.T, {"x": x, "w_eff": self.w}

    def backward(self, g, cache):
        return g @ cache["w_eff"], {"w": g.T @ cache["x"]}

    def param_names(self):
        return ("w",)


class BinaryDense:
    """Dense layer computing x . theta(w_c), with latent w_c in [-1, 1]."""

    kind = "binary_dense"

    def __init__(self, in_dim, out_dim, rng=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            self.w_c = np.zeros((out_dim, in_dim))
        else:
            self.w_c = rng.uniform(-1.0, 1.0, size=(out_dim, in_dim)) / np.sqrt(in_dim)
        self._w_b = None
        self._w_b_stale = True

    @property
    def w_b(self):
        """Packed theta(w_c), refreshed whenever w_c has changed."""
        if self._w_b_stale or self._w_b is None:
            self._w_b = binarize_matrix(self.w_c)
            self._w_b_stale = False
        return self._w_b

    def mark_dirty(self):
        self._w_b_stale = True

    def forward(self, x, surrogate=False, continuous=False, packed=False):
        if surrogate or continuous:
            w_eff = self.w_c
            return x @ w_eff.T, {"x": x, "w_eff": w_eff}
        if packed and x.size and np.all(np.abs(x) == 1.0):
            packed_x = BitMatrix(x.shape[0], x.shape[1], pack_signs(x))
            out = dot_bb_many(packed_x, self.w_b).astype(np.float64)
            return out, {"x": x, "w_eff": self.w_b.to_signs()}
        w_eff = binarize_signs(self.w_c)
        return x @ w_eff.T, {"x": x, "w_eff": w_eff}

    def backward(self, g, cache):
        # identity STE: the gradient w.r.t. w_b lands on w_c unchanged
        return g @ cache["w_eff"], {"w_c": g.T @ cache["x"]}

    def param_names(self):
        return ("w_c",)


class BatchNorm:
    """Per-feature batch normalization with running statistics for eval."""

    kind = "batchnorm"

    def __init__(self, dim, momentum=0.1, eps=1e-5):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def forward(self, x, train):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        return self.gamma * x_hat + self.beta, {"x_hat": x_hat, "inv_std": inv_std}

    def backward(self, g, cache):
        x_hat, inv_std = cache["x_hat"], cache["inv_std"]
        n = x_hat.shape[0]
        dgamma = (g * x_hat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dx_hat = g * self.gamma
        dx = (inv_std / n) * (
            n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0)
        )
        return dx, {"gamma": dgamma, "beta": dbeta}

    def param_names(self):
        return ("gamma", "beta")


class BinarizeActivation:
    """theta on activations; backward is the hard-tanh derivative 1{|pre| <= 1}."""

    kind = "binarize_activation"

    def forward(self, x, surrogate=False):
        if surrogate:
            return np.clip(x, -1.0, 1.0), {"pre": x}
        return binarize_signs(x), {"pre": x}

    def backward(self, g, cache):
        return g * (np.abs(cache["pre"]) <= 1.0), {}

    def param_names(self):
        return ()


class SoftmaxOutput:
    """Row-wise softmax; pairs with cross-entropy in backward."""

    kind = "softmax_output"

    def forward(self, x):
        shifted = x - x.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        return probs, {"probs": probs}

    def backward(self, labels, cache):
        probs = cache["probs"]
        n = probs.shape[0]
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return grad / n, {}

    def param_names(self):
        return ()


def parse_arch(arch):
    """Parse an architecture string like "784c-1024b-1024b-10s".

    Token i (for i before the last) is <width><kind> where kind 'c' or 'b'
    selects a continuous or binary dense layer from width i to width i+1; the
    final token must carry 's' for the softmax output width.
    """
    if not isinstance(arch, str):
        raise ArchSpecError(f"arch must be a string, got {type(arch).__name__}")
    tokens = arch.split("-")
    if len(tokens) < 2:
        raise ArchSpecError(f"arch {arch!r} needs at least an input and an output token")
    sizes = []
    kinds = []
    for i, token in enumerate(tokens):
        m = re.fullmatch(r"(\d+)([cbs])", token)
        if not m:
            raise ArchSpecError(
                f"bad token {token!r} at position {i} in {arch!r}: expected <width><c|b|s>"
            )
        width = int(m.group(1))
        if width < 1:
            raise ArchSpecError(f"token {token!r} at position {i}: width must be >= 1")
        letter = m.group(2)
        last = i == len(tokens) - 1
        if last and letter != "s":
            raise ArchSpecError(f"final token {token!r} must use kind 's' (softmax output)")
        if not last and letter == "s":
            raise ArchSpecError(f"token {token!r} at position {i}: 's' is only valid last")
        sizes.append(width)
        if not last:
            kinds.append(letter)
    return sizes, kinds


def build_network(arch, seed=0, first_layer_mode=None):
    """Construct a Network from an architecture string, seeded init."""
    sizes, kinds = parse_arch(arch)
    if first_layer_mode is not None:
        if first_layer_mode not in ("continuous", "binary"):
            raise ValueError("first_layer_mode must be 'continuous' or 'binary'")
        kinds = ["c" if first_layer_mode == "continuous" else "b"] + kinds[1:]
        sizes_str = [f"{s}{k}" for s, k in zip(sizes[:-1], kinds)] + [f"{sizes[-1]}s"]
        arch = "-".join(sizes_str)
    rng = np.random.Generator(np.random.Philox(key=seed))
    layers = []
    n_dense = len(kinds)
    for i in range(n_dense):
        in_dim, out_dim = sizes[i], sizes[i + 1]
        cls = ContinuousDense if kinds[i] == "c" else BinaryDense
        layers.append(cls(in_dim, out_dim, rng=rng))
        layers.append(BatchNorm(out_dim))
        if i < n_dense - 1:
            layers.append(BinarizeActivation())
        else:
            layers.append(SoftmaxOutput())
    return Network(arch=arch, layers=layers)


@dataclass(frozen=True)
class ForwardCache:
    """Per-layer caches from one forward pass, consumed by backward."""

    version: int
    mode: str
    surrogate: bool
    batch_size: int
    layer_caches: list
    probs: np.ndarray


class Network:
    """Ordered layer stack with a softmax output layer last."""

    def __init__(self, arch, layers):
        self.arch = arch
        self.layers = layers
        self._version = 0
        dims = [l.in_dim for l in layers if hasattr(l, "in_dim")]
        self.in_dim = dims[0] if dims else 0
        self.out_dim = next(
            (l.out_dim for l in reversed(layers) if hasattr(l, "out_dim")), 0
        )

    def binary_dense_layers(self):
        """(layer index, ordinal, layer) for every BinaryDense in the stack."""
        out = []
        ordinal = 0
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, BinaryDense):
                out.append((idx, ordinal, layer))
                ordinal += 1
        return out

    def dense_layers(self):
        return [l for l in self.layers if isinstance(l, (ContinuousDense, BinaryDense))]


def forward(net, batch, mode="train", surrogate=False, kernel="float", continuous_weights=frozenset()):
    """Run the network on a batch and return the activation cache.

    mode "train" uses batch statistics in batch norm (and updates running
    stats); "eval" uses running statistics.  surrogate=True replaces both
    binarizers with their smooth versions (w_c for weights, hard-tanh for
    activations), which is the differentiable object the gradient check
    targets.  kernel "packed" routes eval-mode binary-dense products through
    the bit-packed path when the incoming activations are exactly ±1.
    continuous_weights holds ordinals of BinaryDense layers evaluated with
    w_c instead of theta(w_c).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if kernel not in ("float", "packed"):
        raise ValueError(f"kernel must be 'float' or 'packed', got {kernel!r}")
    if kernel == "packed" and mode == "train":
        raise ValueError("packed kernel is an eval-time path")
    x = as_real_matrix(batch, "batch")
    if x.shape[1] != net.in_dim:
        raise ValueError(f"batch has width {x.shape[1]}, network expects {net.in_dim}")
    train = mode == "train"
    if train:
        net._version += 1
    caches = []
    ordinal = 0
    for layer in net.layers:
        if isinstance(layer, (ContinuousDense, BinaryDense)):
            continuous = isinstance(layer, BinaryDense) and ordinal in continuous_weights
            x, cache = layer.forward(
                x, surrogate=surrogate, continuous=continuous, packed=kernel == "packed"
            )
            if isinstance(layer, BinaryDense):
                ordinal += 1
        elif isinstance(layer, BatchNorm):
            x, cache = layer.forward(x, train=train)
        elif isinstance(layer, BinarizeActivation):
            x, cache = layer.forward(x, surrogate=surrogate)
        else:
            x, cache = layer.forward(x)
        caches.append(cache)
    return ForwardCache(
        version=net._version,
        mode=mode,
        surrogate=surrogate,
        batch_size=batch.shape[0],
        layer_caches=caches,
        probs=x,
    )


def backward(net, cache, labels):
    """Backpropagate cross-entropy gradients; returns one dict per layer."""
    if cache.mode != "train":
        raise StaleCacheError("backward requires a train-mode cache")
    if cache.version != net._version:
        raise StaleCacheError("cache is stale: network state changed since forward")
    labels = np.asarray(labels)
    if labels.shape != (cache.batch_size,):
        raise ValueError(f"labels must have shape ({cache.batch_size},), got {labels.shape}")
    grads = [None] * len(net.layers)
    out_layer = net.layers[-1]
    g, _ = out_layer.backward(labels, cache.layer_caches[-1])
    grads[-1] = {}
    for idx in range(len(net.layers) - 2, -1, -1):
        g, layer_grads = net.layers[idx].backward(g, cache.layer_caches[idx])
        grads[idx] = layer_grads
    return grads


def sgd_step(net, grads, lr):
    """Apply one SGD step: w_c clipped to [-1, 1], everything else unclipped."""
    if not lr > 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if len(grads) != len(net.layers):
        raise ValueError("gradient list does not match the layer stack")
    for layer, layer_grads in zip(net.layers, grads):
        for name in layer.param_names():
            g = layer_grads.get(name)
            if g is None:
                raise ValueError(f"missing gradient for {layer.kind}.{name}")
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(f"non-finite gradient in {layer.kind}.{name}")
    for layer, layer_grads in zip(net.layers, grads):
        if isinstance(layer, BinaryDense):
            layer.w_c = np.clip(layer.w_c - lr * layer_grads["w_c"], -1.0, 1.0)
            layer.mark_dirty()
        elif isinstance(layer, ContinuousDense):
            layer.w = layer.w - lr * layer_grads["w"]
        elif isinstance(layer, BatchNorm):
            layer.gamma = layer.gamma - lr * layer_grads["gamma"]
            layer.beta = layer.beta - lr * layer_grads["beta"]
    net._version += 1
    return net


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of the true labels."""
    n = probs.shape[0]
    picked = probs[np.arange(n), np.asarray(labels)]
    return float(-np.log(np.clip(picked, 1e-12, None)).mean())


def predict_proba(net, images, batch_size=512, kernel="float", continuous_weights=frozenset()):
    """Eval-mode class probabilities, computed in batches."""
    images = as_real_matrix(images, "images")
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        cache = forward(
            net,
            images[start:start + batch_size],
            mode="eval",
            kernel=kernel,
            continuous_weights=continuous_weights,
        )
        chunks.append(cache.probs)
    return np.concatenate(chunks, axis=0)


def recalibrate_batch_norm(net, images, batch_size=512, continuous_weights=frozenset()):
    """Recompute batch-norm running stats for the given weight mode, in place.

    Streams the images through the network in train-style normalization
    (without touching weights) and replaces each running mean/variance with
    the aggregate statistics of that layer's inputs.
    """
    images = as_real_matrix(images, "images")
    if images.shape[0] < 2:
        raise ValueError("recalibration needs at least two samples")
    bn_layers = [l for l in net.layers if isinstance(l, BatchNorm)]
    count = 0
    sums = [np.zeros(l.dim) for l in bn_layers]
    sumsqs = [np.zeros(l.dim) for l in bn_layers]
    for start in range(0, images.shape[0], batch_size):
        x = images[start:start + batch_size]
        count += x.shape[0]
        bn_idx = 0
        ordinal = 0
        for layer in net.layers:
            if isinstance(layer, (ContinuousDense, BinaryDense)):
                continuous = isinstance(layer, BinaryDense) and ordinal in continuous_weights
                x, _ = layer.forward(x, continuous=continuous)
                if isinstance(layer, BinaryDense):
                    ordinal += 1
            elif isinstance(layer, BatchNorm):
                sums[bn_idx] += x.sum(axis=0)
                sumsqs[bn_idx] += (x * x).sum(axis=0)
                bn_idx += 1
                mean = x.mean(axis=0)
                var = x.var(axis=0)
                x = layer.gamma * (x - mean) / np.sqrt(var + layer.eps) + layer.beta
            elif isinstance(layer, BinarizeActivation):
                x, _ = layer.forward(x)
            else:
                break
    for layer, total, total_sq in zip(bn_layers, sums, sumsqs):
        mean = total / count
        var = np.maximum(total_sq / count - mean * mean, 0.0)
        layer.running_mean = mean
        layer.running_var = var
    net._version += 1
    return net


def evaluate(
    net,
    dataset,
    weight_mode="binary",
    kernel="float",
    batch_size=512,
    continuous_layers=None,
    recalibrate=None,
    recalibration_images=None,
):
    """Fraction of dataset samples classified correctly.

    weight_mode "continuous" swaps w_c for theta(w_c) in every BinaryDense
    layer (or just the ordinals in continuous_layers); because batch-norm
    running statistics were collected under binary weights, swapped modes
    re-estimate them first, on recalibration_images when given (training
    images make the steadiest estimates) and on the evaluation images
    otherwise (recalibrate=False keeps the stored statistics).
    """
    if weight_mode not in ("binary", "continuous"):
        raise ValueError(f"weight_mode must be 'binary' or 'continuous', got {weight_mode!r}")
    if dataset.num_samples == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if weight_mode == "binary":
        swapped = frozenset()
    elif continuous_layers is None:
        swapped = frozenset(range(len(net.binary_dense_layers())))
    else:
        swapped = frozenset(int(i) for i in continuous_layers)
    target = net
    if swapped:
        if recalibrate is None:
            recalibrate = True
        if recalibrate:
            source = dataset.images if recalibration_images is None else recalibration_images
            target = copy.deepcopy(net)
            recalibrate_batch_norm(target, source, batch_size=batch_size, continuous_weights=swapped)
    probs = predict_proba(target, dataset.images, batch_size=batch_size, kernel=kernel, continuous_weights=swapped)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels))


def train(net, train_dataset, config, eval_dataset=None, log_path=None):
    """SGD training loop; returns one history dict per epoch.

    Per-epoch columns: epoch, lr, train_loss, train_acc, test_acc (nan when
    no eval_dataset).  The same rows stream to log_path as CSV when given.
    """
    from .data_io import batches

    master = np.random.Generator(np.random.Philox(key=config.seed))
    epoch_seeds = master.integers(0, 2**63 - 1, size=config.epochs)
    history = []
    writer = None
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="")
        writer = csv.DictWriter(log_file, fieldnames=["epoch", "lr", "train_loss", "train_acc", "test_acc"])
        writer.writeheader()
    try:
        for epoch in range(config.epochs):
            lr = config.learning_rate * config.lr_decay**epoch
            loss_sum = 0.0
            hit_sum = 0
            seen = 0
            for x, y in batches(train_dataset, config.batch_size, seed=int(epoch_seeds[epoch])):
                cache = forward(net, x, mode="train")
                loss_sum += cross_entropy(cache.probs, y) * x.shape[0]
                hit_sum += int((cache.probs.argmax(axis=1) == y).sum())
                seen += x.shape[0]
                grads = backward(net, cache, y)
                sgd_step(net, grads, lr)
            row = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": loss_sum / seen,
                "train_acc": hit_sum / seen,
                "test_acc": evaluate(net, eval_dataset) if eval_dataset is not None else float("nan"),
            }
            history.append(row)
            if writer is not None:
                writer.writerow(row)
                log_file.flush()
    finally:
        if log_file is not None:
            log_file.close()
    return history


def _tensor_bytes(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    header = struct.pack("<I", arr.ndim) + b"".join(struct.pack("<Q", s) for s in arr.shape)
    return header + arr.tobytes()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint ends at byte {len(self.data)}, needed {self.pos + n}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def tensor(self):
        ndim = struct.unpack("<I", self.take(4))[0]
        if ndim > 8:
            raise CheckpointFormatError(f"implausible tensor rank {ndim}")
        shape = tuple(struct.unpack("<Q", self.take(8))[0] for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        flat = np.frombuffer(self.take(8 * count), dtype="<f8")
        return flat.reshape(shape).astype(np.float64)

    def done(self):
        return self.pos == len(self.data)


_LAYER_TAGS = {
    "continuous_dense": 1,
    "binary_dense": 2,
    "batchnorm": 3,
    "binarize_activation": 4,
    "softmax_output": 5,
}


def save_checkpoint(net, path):
    """Serialize the network losslessly; save-load-save is byte-identical."""
    meta = json.dumps({"arch": net.arch, "layer_count": len(net.layers)}, sort_keys=True, separators=(",", ":")).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), struct.pack("<I", len(meta)), meta]
    for layer in net.layers:
        parts.append(struct.pack("B", _LAYER_TAGS[layer.kind]))
        if isinstance(layer, ContinuousDense):
            parts.append(_tensor_bytes(layer.w))
        elif isinstance(layer, BinaryDense):
            parts.append(_tensor_bytes(layer.w_c))
            parts.append(layer.w_b.to_bytes())
        elif isinstance(layer, BatchNorm):
            for name in ("gamma", "beta", "running_mean", "running_var"):
                parts.append(_tensor_bytes(getattr(layer, name)))
            parts.append(struct.pack("<dd", layer.momentum, layer.eps))
    blob = b"".join(parts)
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path):
    """Rebuild a Network from a checkpoint file."""
    with open(path, "rb") as f:
        data = f.read()
    reader = _Reader(data)
    magic = reader.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    version = struct.unpack("<I", reader.take(4))[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    meta_len = struct.unpack("<I", reader.take(4))[0]
    try:
        meta = json.loads(reader.take(meta_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable metadata block: {exc}") from exc
    net = build_network(meta["arch"], seed=0)
    if len(net.layers) != meta.get("layer_count"):
        raise CheckpointFormatError("layer count does not match architecture")
    for layer in net.layers:
        tag = struct.unpack("B", reader.take(1))[0]
        if tag != _LAYER_TAGS[layer.kind]:
            raise CheckpointFormatError(
                f"layer tag {tag} does not match expected {layer.kind}"
            )
        if isinstance(layer, ContinuousDense):
            w = reader.tensor()
            if w.shape != (layer.out_dim, layer.in_dim):
                raise CheckpointFormatError(f"weight shape {w.shape} mismatches layer")
            layer.w = w
        elif isinstance(layer, BinaryDense):
            w_c = reader.tensor()
            if w_c.shape != (layer.out_dim, layer.in_dim):
                raise CheckpointFormatError(f"weight shape {w_c.shape} mismatches layer")
            if np.abs(w_c).max() > 1.0:
                raise CheckpointFormatError("w_c entries outside [-1, 1]")
            word_count = ((layer.in_dim + 63) // 64) * layer.out_dim
            try:
                packed = BitMatrix.from_bytes(reader.take(16 + 8 * word_count))
            except CheckpointFormatError:
                raise
            except ValueError as exc:
                raise CheckpointFormatError(f"bad packed weight block: {exc}") from exc
            layer.w_c = w_c
            layer.mark_dirty()
            if packed != layer.w_b:
                raise CheckpointFormatError("stored binary weights disagree with theta(w_c)")
        elif isinstance(layer, BatchNorm):
            for name in ("gamma", "beta", "running_mean", "running_var"):
                value = reader.tensor()
                if value.shape != (layer.dim,):
                    raise CheckpointFormatError(f"{name} shape {value.shape} mismatches layer")
                setattr(layer, name, value)
            layer.momentum, layer.eps = struct.unpack("<dd", reader.take(16))
            if layer.running_var.min() < 0:
                raise CheckpointFormatError("negative running variance")
    if not reader.done():
        raise CheckpointFormatError(f"trailing bytes after final layer ({len(data) - reader.pos})")
    return net
