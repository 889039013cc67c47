"""Model training: target classifier, attribute discriminator, autoencoder.

All three ride on the dense-network engine and plain minibatch SGD. The
target classifier is the black box under explanation; after training it is
only ever queried forward, and its gradients are used solely through the
counterfactual loss. The discriminator maps instances to per-attribute
probabilities and stays frozen while the generative model trains: its
gradient signal flows into the decoder, its parameters never move.

The generative model is a deterministic autoencoder whose decoder consumes
the latent code concatenated with the attribute vector. Training minimizes
mean reconstruction distance plus a weighted attribute-consistency term
scored by the frozen discriminator on the reconstruction.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import ConfigurationError, DimensionError, TrainingError, TrainingQualityWarning
from .nn import (
    DenseNetwork,
    Layer,
    _backward_from_trace,
    _forward_trace,
    build_network,
    forward,
    mean_binary_cross_entropy,
    mean_cross_entropy,
    sgd_step,
)


@dataclass
class TrainConfig:
    """Shared knobs for classifier and discriminator training."""

    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-3
    hidden_dims: tuple = (32,)
    hidden_activation: str = "tanh"
    seed: int = 0
    accuracy_floor: float = 0.85

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0 <= self.accuracy_floor <= 1:
            raise ConfigurationError("accuracy_floor must lie in [0, 1]")


@dataclass
class GenerativeConfig:
    """Knobs for autoencoder training.

    disc_weight scales the attribute-consistency term; output_activation is
    identity for unbounded features and sigmoid for [0, 1] grids.
    """

    latent_dim: int
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-3
    hidden_dims: tuple = (32,)
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    disc_weight: float = 1.0
    seed: int = 0
    consistency_floor: float = 0.85

    def validate(self):
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be at least 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.disc_weight < 0:
            raise ConfigurationError("disc_weight must be non-negative")
        if self.output_activation not in ("identity", "sigmoid"):
            raise ConfigurationError("output_activation must be identity or sigmoid")


@dataclass
class TargetModel:
    """The classifier under explanation, with its training record."""

    network: DenseNetwork
    train_accuracy: float
    dev_accuracy: float
    test_accuracy: float
    loss_history: list = field(default_factory=list)

    def predict_proba(self, x):
        return forward(self.network, x)

    def predict(self, x):
        probs = self.predict_proba(x)
        return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)


@dataclass
class Discriminator:
    """Instance -> per-attribute probabilities, sigmoid outputs."""

    network: DenseNetwork
    attribute_accuracy: list = field(default_factory=list)

    def predict_proba(self, x):
        return forward(self.network, x)

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(np.float64)


@dataclass
class LatentPoint:
    """A position in the search space: latent code plus attribute vector."""

    code: np.ndarray
    attributes: np.ndarray

    def copy(self):
        return LatentPoint(self.code.copy(), self.attributes.copy())


@dataclass
class GenerativeModel:
    """Encoder/decoder pair trained against a frozen discriminator."""

    encoder: DenseNetwork
    decoder: DenseNetwork
    latent_dim: int
    attribute_dim: int
    final_recon_error: float
    attribute_consistency: float
    loss_history: list = field(default_factory=list)


def encode(model, x, attributes):
    """Project an instance into the search space, keeping its attributes."""
    x = np.asarray(x, dtype=np.float64)
    attributes = np.asarray(attributes, dtype=np.float64)
    if attributes.shape != (model.attribute_dim,):
        raise DimensionError(
            f"attributes have shape {attributes.shape}, expected ({model.attribute_dim},)"
        )
    return LatentPoint(forward(model.encoder, x), attributes.copy())


def decode(model, point):
    """Map a latent point back to instance space."""
    if point.code.shape != (model.latent_dim,):
        raise DimensionError(
            f"code has shape {point.code.shape}, expected ({model.latent_dim},)"
        )
    return forward(model.decoder, np.concatenate([point.code, point.attributes]))


def _minibatches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def _accuracy(network, x, onehot):
    preds = np.argmax(forward(network, x), axis=1)
    return float(np.mean(preds == np.argmax(onehot, axis=1)))


def train_target(dataset, config):
    """Fit the classifier on the train split; accuracies on all three splits.

    A non-finite epoch loss aborts with TrainingError. Dev accuracy below
    the configured floor emits TrainingQualityWarning but still returns the
    model, leaving the call site to decide whether it is usable.
    """
    config.validate()
    x_train, _, y_train = dataset.part("train")
    rng = np.random.default_rng(config.seed)
    net = build_network(
        [dataset.n_features, *config.hidden_dims, dataset.n_classes],
        [config.hidden_activation] * len(config.hidden_dims) + ["softmax"],
        rng,
    )
    history = []
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for idx in _minibatches(len(x_train), config.batch_size, rng):
            out, trace = _forward_trace(net, x_train[idx])
            loss, grad = mean_cross_entropy(out, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"classifier loss diverged at epoch {epoch}")
            param_grads, _ = _backward_from_trace(net, trace, grad)
            sgd_step(net, _Tape(param_grads), config.learning_rate)
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / len(x_train))
    x_dev, _, y_dev = dataset.part("dev")
    x_test, _, y_test = dataset.part("test")
    model = TargetModel(
        network=net,
        train_accuracy=_accuracy(net, x_train, y_train),
        dev_accuracy=_accuracy(net, x_dev, y_dev),
        test_accuracy=_accuracy(net, x_test, y_test),
        loss_history=history,
    )
    if model.dev_accuracy < config.accuracy_floor:
        warnings.warn(
            f"classifier dev accuracy {model.dev_accuracy:.3f} below floor "
            f"{config.accuracy_floor}",
            TrainingQualityWarning,
        )
    return model


class _Tape:
    # sgd_step only reads param_grads; this avoids building an input grad.
    def __init__(self, param_grads):
        self.param_grads = param_grads


def train_discriminator(dataset, config):
    """Fit per-attribute probes with a shared trunk and sigmoid heads."""
    config.validate()
    if dataset.n_attributes == 0:
        raise ConfigurationError("dataset has no attributes to discriminate")
    x_train, a_train, _ = dataset.part("train")
    for j in range(dataset.n_attributes):
        col = a_train[:, j]
        if col.min() == col.max():
            warnings.warn(
                f"attribute {j} is constant on the train split; its probe "
                "cannot learn anything",
                TrainingQualityWarning,
            )
    rng = np.random.default_rng(config.seed)
    net = build_network(
        [dataset.n_features, *config.hidden_dims, dataset.n_attributes],
        [config.hidden_activation] * len(config.hidden_dims) + ["sigmoid"],
        rng,
    )
    for epoch in range(config.epochs):
        for idx in _minibatches(len(x_train), config.batch_size, rng):
            out, trace = _forward_trace(net, x_train[idx])
            loss, grad = mean_binary_cross_entropy(out, a_train[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"discriminator loss diverged at epoch {epoch}")
            param_grads, _ = _backward_from_trace(net, trace, grad)
            sgd_step(net, _Tape(param_grads), config.learning_rate)
    x_dev, a_dev, _ = dataset.part("dev")
    preds = forward(net, x_dev) >= 0.5
    per_attr = [float(np.mean(preds[:, j] == (a_dev[:, j] == 1.0))) for j in range(dataset.n_attributes)]
    if float(np.mean(per_attr)) < config.accuracy_floor:
        warnings.warn(
            f"mean per-attribute dev accuracy {np.mean(per_attr):.3f} below "
            f"floor {config.accuracy_floor}",
            TrainingQualityWarning,
        )
    return Discriminator(network=net, attribute_accuracy=per_attr)


def _recon_grad(xhat, x):
    """Mean row-wise euclidean distance and its gradient w.r.t. xhat."""
    diff = xhat - x
    dists = np.sqrt((diff * diff).sum(axis=1))
    value = float(dists.mean())
    grad = np.zeros_like(diff)
    nz = dists > 0
    grad[nz] = diff[nz] / dists[nz, None] / len(dists)
    return value, grad


def train_generative(dataset, discriminator, config):
    """Fit the autoencoder against the frozen discriminator.

    Objective per batch: mean reconstruction distance plus disc_weight
    times the binary cross-entropy between discriminator outputs on the
    reconstruction and the true attributes. The discriminator contributes
    gradients through its input but is never updated here.
    """
    config.validate()
    x_train, a_train, _ = dataset.part("train")
    if discriminator.network.output_dim != dataset.n_attributes:
        raise DimensionError("discriminator output does not match dataset attributes")
    d = dataset.n_features
    t = dataset.n_attributes
    k = config.latent_dim
    rng = np.random.default_rng(config.seed)
    encoder = build_network(
        [d, *config.hidden_dims, k],
        [config.hidden_activation] * len(config.hidden_dims) + ["identity"],
        rng,
    )
    decoder = build_network(
        [k + t, *config.hidden_dims, d],
        [config.hidden_activation] * len(config.hidden_dims) + [config.output_activation],
        rng,
    )
    disc_net = discriminator.network
    history = []
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for idx in _minibatches(len(x_train), config.batch_size, rng):
            xb, ab = x_train[idx], a_train[idx]
            codes, enc_trace = _forward_trace(encoder, xb)
            u = np.concatenate([codes, ab], axis=1)
            xhat, dec_trace = _forward_trace(decoder, u)
            recon, g_xhat = _recon_grad(xhat, xb)
            loss = recon
            if config.disc_weight > 0:
                probs, disc_trace = _forward_trace(disc_net, xhat)
                bce, g_probs = mean_binary_cross_entropy(probs, ab)
                loss += config.disc_weight * bce
                _, g_disc_in = _backward_from_trace(disc_net, disc_trace, g_probs)
                g_xhat = g_xhat + config.disc_weight * g_disc_in
            if not np.isfinite(loss):
                raise TrainingError(f"autoencoder loss diverged at epoch {epoch}")
            dec_grads, g_u = _backward_from_trace(decoder, dec_trace, g_xhat)
            enc_grads, _ = _backward_from_trace(encoder, enc_trace, g_u[:, :k])
            sgd_step(decoder, _Tape(dec_grads), config.learning_rate)
            sgd_step(encoder, _Tape(enc_grads), config.learning_rate)
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / len(x_train))
    codes = forward(encoder, x_train)
    xhat = forward(decoder, np.concatenate([codes, a_train], axis=1))
    recon_final, _ = _recon_grad(xhat, x_train)
    if t > 0:
        consistency = float(np.mean((forward(disc_net, xhat) >= 0.5) == (a_train == 1.0)))
    else:
        consistency = 1.0
    model = GenerativeModel(
        encoder=encoder,
        decoder=decoder,
        latent_dim=k,
        attribute_dim=t,
        final_recon_error=recon_final,
        attribute_consistency=consistency,
        loss_history=history,
    )
    if consistency < config.consistency_floor:
        warnings.warn(
            f"attribute consistency {consistency:.3f} below floor "
            f"{config.consistency_floor}",
            TrainingQualityWarning,
        )
    return model


# --- checkpoint io ---------------------------------------------------------


def _network_arrays(net, prefix=""):
    arrays = {}
    for i, layer in enumerate(net.layers):
        arrays[f"{prefix}w{i}"] = layer.weights
        arrays[f"{prefix}b{i}"] = layer.bias
    return arrays


def _network_from(arrays, activations, prefix=""):
    return DenseNetwork(
        Layer(arrays[f"{prefix}w{i}"], arrays[f"{prefix}b{i}"], act)
        for i, act in enumerate(activations)
    )


def save_target(path, model):
    write_container(
        path,
        kind="target-model",
        meta={
            "activations": [l.activation for l in model.network.layers],
            "train_accuracy": model.train_accuracy,
            "dev_accuracy": model.dev_accuracy,
            "test_accuracy": model.test_accuracy,
            "loss_history": model.loss_history,
        },
        arrays=_network_arrays(model.network),
    )


def load_target(path):
    _, meta, arrays = read_container(path, expected_kind="target-model")
    return TargetModel(
        network=_network_from(arrays, meta["activations"]),
        train_accuracy=meta["train_accuracy"],
        dev_accuracy=meta["dev_accuracy"],
        test_accuracy=meta["test_accuracy"],
        loss_history=meta["loss_history"],
    )


def save_discriminator(path, model):
    write_container(
        path,
        kind="discriminator",
        meta={
            "activations": [l.activation for l in model.network.layers],
            "attribute_accuracy": model.attribute_accuracy,
        },
        arrays=_network_arrays(model.network),
    )


def load_discriminator(path):
    _, meta, arrays = read_container(path, expected_kind="discriminator")
    return Discriminator(
        network=_network_from(arrays, meta["activations"]),
        attribute_accuracy=meta["attribute_accuracy"],
    )


def save_generative(path, model):
    arrays = _network_arrays(model.encoder, "enc_")
    arrays.update(_network_arrays(model.decoder, "dec_"))
    write_container(
        path,
        kind="generative-model",
        meta={
            "encoder_activations": [l.activation for l in model.encoder.layers],
            "decoder_activations": [l.activation for l in model.decoder.layers],
            "latent_dim": model.latent_dim,
            "attribute_dim": model.attribute_dim,
            "final_recon_error": model.final_recon_error,
            "attribute_consistency": model.attribute_consistency,
            "loss_history": model.loss_history,
        },
        arrays=arrays,
    )


def load_generative(path):
    _, meta, arrays = read_container(path, expected_kind="generative-model")
    return GenerativeModel(
        encoder=_network_from(arrays, meta["encoder_activations"], "enc_"),
        decoder=_network_from(arrays, meta["decoder_activations"], "dec_"),
        latent_dim=meta["latent_dim"],
        attribute_dim=meta["attribute_dim"],
        final_recon_error=meta["final_recon_error"],
        attribute_consistency=meta["attribute_consistency"],
        loss_history=meta["loss_history"],
    )


def save_manifest(path, entries):
    """Write the artifact manifest tying a dataset to its trained models."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
