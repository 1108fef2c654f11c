"""Dense autoencoder baseline and its derivatives (LAMP, Q-LAMP, RND).

The topology is fixed (320-64-32-16 encoder, mirrored decoder), so
gradients are computed by hand-rolled reverse mode over the layer list
rather than a general autodiff. Leaky-ReLU slope is 0.2 everywhere;
the decoder's final layer is linear.

Training is deterministic for a given seed: weight init, shuffling and
batch order all come from one seeded generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError

LEAKY_ALPHA = 0.2
ENCODER_DIMS = (320, 64, 32, 16)
DECODER_DIMS = (16, 32, 64, 320)
QUANTILES = (0.1, 0.5, 0.9)


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 50
    learning_rate: float = 0.002
    l2: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.epochs) < 1 or self.learning_rate <= 0 or self.l2 < 0:
            raise InvalidInputError(f"invalid training config: {self}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # out x in
    bias: np.ndarray
    activation: str  # "leaky_relu" | "identity"

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """x is (batch, in); returns (pre-activation, activation)."""
        z = x @ self.weights.T + self.bias
        return z, _activate(z, self.activation)


def _activate(z, kind):
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_ALPHA * z)
    if kind == "identity":
        return z
    raise InvalidInputError(f"unknown activation {kind!r}")


def _activation_grad(z, kind):
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_ALPHA)
    if kind == "identity":
        return np.ones_like(z)
    raise InvalidInputError(f"unknown activation {kind!r}")


def _glorot(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


class Mlp:
    """A stack of dense layers with cached-forward / manual-backward."""

    def __init__(self, layers: list[DenseLayer]):
        self.layers = layers

    @classmethod
    def create(cls, dims, activations, rng: np.random.Generator) -> "Mlp":
        layers = [
            DenseLayer(
                weights=_glorot(rng, dims[i + 1], dims[i]),
                bias=np.zeros(dims[i + 1]),
                activation=activations[i],
            )
            for i in range(len(dims) - 1)
        ]
        return cls(layers)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    def forward(self, x: np.ndarray):
        """Returns (output, cache) where cache holds inputs and pre-activations."""
        acts, preacts = [x], []
        for layer in self.layers:
            z, a = layer.forward(acts[-1])
            preacts.append(z)
            acts.append(a)
        return acts[-1], (acts, preacts)

    def backward(self, cache, grad_out: np.ndarray):
        """Propagate dL/d(output); returns (per-layer (dW, db), dL/d(input))."""
        acts, preacts = cache
        grads = [None] * len(self.layers)
        g = grad_out
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            dz = g * _activation_grad(preacts[i], layer.activation)
            grads[i] = (dz.T @ acts[i], dz.sum(axis=0))
            g = dz @ layer.weights
        return grads, g

    def params(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out


@dataclass
class AutoEncoder:
    encoder: Mlp
    decoder: Mlp

    @classmethod
    def create(cls, seed: int = 0) -> "AutoEncoder":
        rng = np.random.default_rng(seed)
        encoder = Mlp.create(ENCODER_DIMS, ["leaky_relu"] * 3, rng)
        decoder = Mlp.create(DECODER_DIMS, ["leaky_relu", "leaky_relu", "identity"], rng)
        return cls(encoder, decoder)


@dataclass
class QuantileHeads:
    """Shared encoder with one decoder head per predicted quantile."""

    encoder: Mlp
    heads: dict[float, Mlp]

    @classmethod
    def create(cls, seed: int = 0, quantiles=QUANTILES) -> "QuantileHeads":
        rng = np.random.default_rng(seed)
        encoder = Mlp.create(ENCODER_DIMS, ["leaky_relu"] * 3, rng)
        heads = {
            q: Mlp.create(DECODER_DIMS, ["leaky_relu", "leaky_relu", "identity"], rng)
            for q in quantiles
        }
        return cls(encoder, heads)


@dataclass
class RndPair:
    """Frozen random target network and a trainable predictor of it."""

    target: Mlp
    predictor: Mlp

    @classmethod
    def create(cls, seed: int = 0) -> "RndPair":
        # Distinct seed streams so the predictor never starts at the target.
        target = Mlp.create(ENCODER_DIMS, ["leaky_relu"] * 3, np.random.default_rng((seed, 0)))
        predictor = Mlp.create(ENCODER_DIMS, ["leaky_relu"] * 3, np.random.default_rng((seed, 1)))
        return cls(target, predictor)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input contains non-finite values")
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def ae_forward(ae: AutoEncoder, x):
    """Returns (reconstruction, encoder activations as a list [64, 32, 16])."""
    batch, squeeze = _as_batch(x)
    if batch.shape[1] != ae.encoder.dims[0]:
        raise InvalidInputError(
            f"expected {ae.encoder.dims[0]}-dim input, got {batch.shape[1]}"
        )
    code, (enc_acts, _) = ae.encoder.forward(batch)
    recon, _ = ae.decoder.forward(code)
    activations = enc_acts[1:]
    if squeeze:
        return recon[0], [a[0] for a in activations]
    return recon, activations


def mse_score(ae: AutoEncoder, x) -> float:
    """Mean squared reconstruction error; the AE baseline's anomaly score."""
    batch, squeeze = _as_batch(x)
    recon, _ = ae_forward(ae, batch)
    scores = np.mean((batch - recon) ** 2, axis=1)
    return float(scores[0]) if squeeze else scores


def pinball_loss(q: float, y, y_hat):
    """max(q*(y - y_hat), (q - 1)*(y - y_hat)), elementwise."""
    if not 0 < q < 1:
        raise InvalidInputError(f"quantile must be in (0, 1), got {q}")
    diff = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return np.maximum(q * diff, (q - 1) * diff)


def lamp_features(ae: AutoEncoder, x, mode: str = "lamp"):
    """Encoder-activation features: bottleneck (16) or full concat (112)."""
    _, activations = ae_forward(ae, x)
    if mode == "one_lamp":
        return activations[-1]
    if mode == "lamp":
        return np.concatenate(activations, axis=-1)
    raise InvalidInputError(f"unknown LAMP mode {mode!r}")


def rnd_score(pair: RndPair, x):
    """Mean squared predictor-vs-target error over the 16 output dims."""
    batch, squeeze = _as_batch(x)
    t, _ = pair.target.forward(batch)
    p, _ = pair.predictor.forward(batch)
    scores = np.mean((t - p) ** 2, axis=1)
    return float(scores[0]) if squeeze else scores


# ---------------------------------------------------------------------------
# Training


def _trainable(model) -> list[Mlp]:
    if isinstance(model, AutoEncoder):
        return [model.encoder, model.decoder]
    if isinstance(model, QuantileHeads):
        return [model.encoder] + [model.heads[q] for q in sorted(model.heads)]
    if isinstance(model, RndPair):
        return [model.predictor]
    raise InvalidInputError(f"cannot train {type(model).__name__}")


def loss_and_grads(model, batch: np.ndarray, l2: float = 0.0):
    """Training loss on a batch plus gradients for every trainable parameter.

    The data term is averaged over batch and output dimensions; L2 applies
    to weights only. Gradient order matches _trainable/params order.
    """
    batch = np.asarray(batch, dtype=np.float64)
    n, d = batch.shape
    if isinstance(model, AutoEncoder):
        code, enc_cache = model.encoder.forward(batch)
        recon, dec_cache = model.decoder.forward(code)
        loss = float(np.mean((recon - batch) ** 2))
        g = 2.0 * (recon - batch) / (n * d)
        dec_grads, g_code = model.decoder.backward(dec_cache, g)
        enc_grads, _ = model.encoder.backward(enc_cache, g_code)
        grads = enc_grads + dec_grads
    elif isinstance(model, QuantileHeads):
        code, enc_cache = model.encoder.forward(batch)
        loss = 0.0
        head_grads, g_code = [], np.zeros_like(code)
        for q in sorted(model.heads):
            pred, cache = model.heads[q].forward(code)
            loss += float(np.mean(pinball_loss(q, batch, pred)))
            # d pinball / d y_hat: -q where y > y_hat, (1 - q) where y < y_hat
            diff = batch - pred
            g = np.where(diff > 0, -q, np.where(diff < 0, 1.0 - q, 0.0)) / (n * d)
            hg, gc = model.heads[q].backward(cache, g)
            head_grads.extend(hg)
            g_code += gc
        enc_grads, _ = model.encoder.backward(enc_cache, g_code)
        grads = enc_grads + head_grads
    elif isinstance(model, RndPair):
        target, _ = model.target.forward(batch)
        pred, cache = model.predictor.forward(batch)
        loss = float(np.mean((pred - target) ** 2))
        g = 2.0 * (pred - target) / pred.size
        grads, _ = model.predictor.backward(cache, g)
    else:
        raise InvalidInputError(f"cannot train {type(model).__name__}")

    flat = []
    for (dw, db), layer in zip(
        grads, [l for mlp in _trainable(model) for l in mlp.layers]
    ):
        if l2:
            loss += 0.5 * l2 * float(np.sum(layer.weights**2))
            dw = dw + l2 * layer.weights
        flat.extend([dw, db])
    return loss, flat


class Adam:
    """Adam with the usual defaults; operates in-place on a parameter list."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(model, data, cfg: TrainConfig) -> list[float]:
    """Mini-batch Adam training; returns the per-epoch mean loss curve.

    Batch size is clamped to the dataset size. Raises
    TrainingDivergedError on the first non-finite loss.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InvalidInputError(f"expected a non-empty N x D data matrix, got {data.shape}")
    params = [p for mlp in _trainable(model) for p in mlp.params()]
    opt = Adam(params, lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    batch_size = min(cfg.batch_size, data.shape[0])
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(data.shape[0])
        losses = []
        for b, start in enumerate(range(0, data.shape[0], batch_size)):
            batch = data[order[start : start + batch_size]]
            loss, grads = loss_and_grads(model, batch, l2=cfg.l2)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, b, loss)
            opt.step(grads)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
    return curve


# ---------------------------------------------------------------------------
# Persistence


def _mlp_to_json(mlp: Mlp) -> dict:
    return {
        "dims": mlp.dims,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in mlp.layers
        ],
    }


def _mlp_from_json(doc: dict) -> Mlp:
    layers = []
    for spec in doc["layers"]:
        layers.append(
            DenseLayer(
                weights=np.asarray(spec["weights"], dtype=np.float64),
                bias=np.asarray(spec["bias"], dtype=np.float64),
                activation=spec["activation"],
            )
        )
    mlp = Mlp(layers)
    if mlp.dims != list(doc["dims"]):
        raise InvalidInputError(f"layer shapes {mlp.dims} do not match topology {doc['dims']}")
    return mlp


def save_model(path, model, train_config: TrainConfig | None = None, seed: int | None = None):
    doc = {"alpha": LEAKY_ALPHA, "seed": seed}
    if train_config is not None:
        doc["train_config"] = asdict(train_config)
    if isinstance(model, AutoEncoder):
        doc["kind"] = "autoencoder"
        doc["encoder"] = _mlp_to_json(model.encoder)
        doc["decoder"] = _mlp_to_json(model.decoder)
    elif isinstance(model, QuantileHeads):
        doc["kind"] = "quantile_heads"
        doc["encoder"] = _mlp_to_json(model.encoder)
        doc["heads"] = {str(q): _mlp_to_json(h) for q, h in model.heads.items()}
    elif isinstance(model, RndPair):
        doc["kind"] = "rnd_pair"
        doc["target"] = _mlp_to_json(model.target)
        doc["predictor"] = _mlp_to_json(model.predictor)
    else:
        raise InvalidInputError(f"cannot persist {type(model).__name__}")
    Path(path).write_text(json.dumps(doc))


def load_model(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind == "autoencoder":
        return AutoEncoder(_mlp_from_json(doc["encoder"]), _mlp_from_json(doc["decoder"]))
    if kind == "quantile_heads":
        return QuantileHeads(
            _mlp_from_json(doc["encoder"]),
            {float(q): _mlp_from_json(h) for q, h in doc["heads"].items()},
        )
    if kind == "rnd_pair":
        return RndPair(_mlp_from_json(doc["target"]), _mlp_from_json(doc["predictor"]))
    raise InvalidInputError(f"unknown model kind {kind!r}")
