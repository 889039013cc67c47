"""Synthetic attributed datasets.

Two generator families, both emitting (instances, binary attributes, one-hot
labels) triples with a contiguous train/dev/test split:

* blobs: tabular vectors where each attribute shifts a dedicated canonical
  axis and a handful of continuous style factors spread structure over the
  remaining axes, so attribute effects are orthogonal and linearly
  decodable while the styles give an autoencoder something real to learn.
* glyphs: square grayscale grids built from a base patch plus per-attribute
  stroke masks, a small image stand-in with localized attribute footprints.

The class label is driven by designated attribute bits, so a classifier,
an attribute discriminator, and a counterfactual search all have signal to
find. Everything is deterministic in the spec seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isqrt

import numpy as np

from .container import read_container, write_container
from .errors import ConfigurationError, DimensionError

GENERATORS = ("blobs", "glyphs")

# Glyph stroke masks are drawn on the unit square; index i is attribute i.
# Order matters and is part of the data contract.
_STROKES = ("hbar", "frame", "dot", "diag", "vbar", "antidiag", "corner", "cross")


@dataclass
class SynthSpec:
    """Full recipe for one synthetic dataset.

    The split is by row index: the first train_frac of rows are train, the
    next dev_frac dev, the remainder test. Fractions are of n_samples and
    must leave at least one row per part. n_styles continuous factors (blobs
    only) are mixed into the non-attribute columns through a fixed random
    matrix.
    """

    generator: str
    n_features: int
    n_attributes: int
    n_samples: int
    seed: int
    n_classes: int = 2
    noise: float = 0.3
    shift: float = 2.0
    margin: float = 1.0
    n_styles: int = 4
    style_leak: float = 0.0
    label_echo: float = 0.0
    label_attributes: tuple = (0,)
    attribute_prob: float = 0.5
    train_frac: float = 0.9
    dev_frac: float = 0.05

    def validate(self):
        if self.generator not in GENERATORS:
            raise ConfigurationError(f"unknown generator {self.generator!r}")
        if self.n_features < 1 or self.n_attributes < 1:
            raise ConfigurationError("need n_features >= 1 and n_attributes >= 1")
        if self.n_classes < 2:
            raise ConfigurationError("need at least two classes")
        if self.n_samples < 3:
            raise ConfigurationError("need at least three samples for a three-way split")
        if not 0.0 < self.attribute_prob < 1.0:
            raise ConfigurationError("attribute_prob must lie strictly inside (0, 1)")
        if self.noise < 0 or self.shift <= 0 or self.margin <= 0:
            raise ConfigurationError("noise must be >= 0; shift and margin positive")
        if self.n_styles < 0:
            raise ConfigurationError("n_styles must be non-negative")
        if self.style_leak < 0:
            raise ConfigurationError("style_leak must be non-negative")
        if self.label_echo < 0:
            raise ConfigurationError("label_echo must be non-negative")
        if self.label_echo > 0 and (self.n_classes != 2 or self.generator != "blobs"):
            raise ConfigurationError("label_echo applies to two-class blobs only")
        if self.label_echo > 0 and self.n_features <= self.n_attributes:
            raise ConfigurationError("label_echo needs a non-attribute coordinate")
        if not self.label_attributes:
            raise ConfigurationError("at least one attribute must drive the label")
        for j in self.label_attributes:
            if not 0 <= j < self.n_attributes:
                raise ConfigurationError(f"label attribute {j} out of range")
        if 2 ** len(self.label_attributes) < self.n_classes:
            raise ConfigurationError(
                f"{len(self.label_attributes)} label attributes cannot address "
                f"{self.n_classes} classes"
            )
        if self.train_frac <= 0 or self.dev_frac <= 0 or self.train_frac + self.dev_frac >= 1:
            raise ConfigurationError("split fractions must be positive and sum below 1")
        n_train, n_dev, n_test = self.split_sizes()
        if min(n_train, n_dev, n_test) < 1:
            raise ConfigurationError("every split part needs at least one row")
        if self.generator == "glyphs":
            side = isqrt(self.n_features)
            if side * side != self.n_features:
                raise ConfigurationError(
                    f"glyphs need a square feature count, got {self.n_features}"
                )
            if self.n_attributes > len(_STROKES):
                raise ConfigurationError(
                    f"glyphs support at most {len(_STROKES)} attributes"
                )
        elif self.n_attributes > self.n_features:
            raise ConfigurationError("blobs need n_features >= n_attributes")

    def split_sizes(self):
        n_train = int(round(self.n_samples * self.train_frac))
        n_dev = int(round(self.n_samples * self.dev_frac))
        return n_train, n_dev, self.n_samples - n_train - n_dev


@dataclass
class AttributedDataset:
    """Instances with per-row binary attributes, one-hot labels, split tags.

    labels is [n, C] one-hot; split holds 0 (train), 1 (dev), or 2 (test)
    per row as int8. metadata carries the generating spec, where one
    exists, plus free-form notes.
    """

    instances: np.ndarray
    attributes: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    metadata: dict = field(default_factory=dict)

    def validate(self):
        n = self.instances.shape[0]
        if n == 0 or self.instances.ndim != 2:
            raise DimensionError("instances must be [n, d] with n > 0")
        if self.attributes.shape[0] != n or self.attributes.ndim != 2:
            raise DimensionError("attributes must be [n, t]")
        if self.labels.ndim != 2 or self.labels.shape[0] != n or self.labels.shape[1] < 2:
            raise DimensionError("labels must be one-hot [n, C] with C >= 2")
        if self.split.shape != (n,):
            raise DimensionError("split must be [n]")
        if not np.all(np.isin(np.unique(self.attributes), (0.0, 1.0))):
            raise ConfigurationError("attributes must be 0/1 valued")
        if not np.all(np.isin(np.unique(self.labels), (0.0, 1.0))) or not np.all(
            self.labels.sum(axis=1) == 1.0
        ):
            raise ConfigurationError("labels must be one-hot rows")
        if not np.all(np.isin(np.unique(self.split), (0, 1, 2))):
            raise ConfigurationError("split tags must be 0, 1, or 2")

    @property
    def n_features(self):
        return self.instances.shape[1]

    @property
    def n_attributes(self):
        return self.attributes.shape[1]

    @property
    def n_classes(self):
        return self.labels.shape[1]

    @property
    def class_indices(self):
        return np.argmax(self.labels, axis=1)

    def indices(self, part):
        tag = {"train": 0, "dev": 1, "test": 2}[part]
        return np.flatnonzero(self.split == tag)

    def part(self, part):
        idx = self.indices(part)
        return self.instances[idx], self.attributes[idx], self.labels[idx]


def _label_indices(attrs, spec, rng):
    """Class index from the designated attribute bits.

    Two classes: the conjunction of the designated bits gives a signed
    margin score, plus noise, thresholded at zero, so a thin noisy band
    straddles the boundary. With one designated bit this is just that bit;
    with several, flipping the label needs a coordinated change. More
    classes: the bit pattern read as a binary code, modulo n_classes,
    noise-free.
    """
    if spec.n_classes == 2:
        return (_two_class_scores(attrs, spec, rng) > 0).astype(np.int64)
    bits = attrs[:, list(spec.label_attributes)]
    code = (bits * (2 ** np.arange(len(spec.label_attributes)))).sum(axis=1)
    return (code % spec.n_classes).astype(np.int64)


def _two_class_scores(attrs, spec, rng):
    bits = attrs[:, list(spec.label_attributes)]
    base = bits.prod(axis=1)
    return spec.margin * (2.0 * base - 1.0) + rng.normal(0.0, spec.noise, size=len(base))


def _generate_blobs(spec, rng):
    attrs = (rng.random((spec.n_samples, spec.n_attributes)) < spec.attribute_prob).astype(
        np.float64
    )
    x = np.zeros((spec.n_samples, spec.n_features))
    x[:, : spec.n_attributes] += attrs * spec.shift
    n_free = spec.n_features - spec.n_attributes
    if spec.n_styles > 0 and n_free > 0:
        styles = rng.standard_normal((spec.n_samples, spec.n_styles))
        mixing = rng.standard_normal((spec.n_styles, n_free)) / np.sqrt(spec.n_styles)
        x[:, spec.n_attributes :] += styles @ mixing
        # Cross-talk: the first style factor bleeds into every attribute
        # coordinate, so those coordinates are not reconstructable from the
        # attribute bits alone.
        if spec.style_leak > 0:
            x[:, : spec.n_attributes] += spec.style_leak * styles[:, [0]]
    if spec.noise > 0:
        x += rng.normal(0.0, spec.noise, size=x.shape)
    labels = None
    if spec.n_classes == 2:
        score = _two_class_scores(attrs, spec, rng)
        labels = (score > 0).astype(np.int64)
        # Label echo: the realized margin score is written onto the first
        # non-attribute coordinate, so the instance carries label evidence
        # beyond what the attribute bits imply.
        if spec.label_echo > 0:
            x[:, spec.n_attributes] += spec.label_echo * score
    return x, attrs, labels


def _stroke_mask(name, side):
    mask = np.zeros((side, side))
    mid = side // 2
    q = max(side // 4, 1)
    if name == "hbar":
        mask[mid, :] = 1.0
    elif name == "frame":
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = 1.0
    elif name == "dot":
        mask[:q, :q] = 1.0
    elif name == "diag":
        np.fill_diagonal(mask, 1.0)
    elif name == "vbar":
        mask[:, mid] = 1.0
    elif name == "antidiag":
        np.fill_diagonal(np.fliplr(mask), 1.0)
    elif name == "corner":
        mask[-q:, -q:] = 1.0
    elif name == "cross":
        mask[mid, :] = mask[:, mid] = 1.0
    else:
        raise ConfigurationError(f"unknown stroke {name!r}")
    return mask


def glyph_strokes(n_features, n_attributes):
    """Flattened stroke masks [t, d] for the first n_attributes strokes."""
    side = isqrt(n_features)
    return np.stack(
        [_stroke_mask(_STROKES[i], side).ravel() for i in range(n_attributes)]
    )


def _generate_glyphs(spec, rng):
    side = isqrt(spec.n_features)
    attrs = (rng.random((spec.n_samples, spec.n_attributes)) < spec.attribute_prob).astype(
        np.float64
    )
    base = np.zeros((side, side))
    lo, hi = side // 3, side - side // 3
    base[lo:hi, lo:hi] = 0.35
    x = np.tile(base.ravel(), (spec.n_samples, 1))
    strokes = glyph_strokes(spec.n_features, spec.n_attributes)
    for i in range(spec.n_attributes):
        on = attrs[:, i] == 1.0
        x[on] = np.maximum(x[on], 0.95 * strokes[i])
    if spec.noise > 0:
        x += rng.normal(0.0, spec.noise, size=x.shape)
    return np.clip(x, 0.0, 1.0), attrs


def generate(spec):
    """Materialize the dataset a spec describes. Deterministic in spec.seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    label_idx = None
    if spec.generator == "blobs":
        x, attrs, label_idx = _generate_blobs(spec, rng)
    else:
        x, attrs = _generate_glyphs(spec, rng)
    if label_idx is None:
        label_idx = _label_indices(attrs, spec, rng)
    labels = np.eye(spec.n_classes)[label_idx]
    n_train, n_dev, _ = spec.split_sizes()
    split = np.full(spec.n_samples, 2, dtype=np.int8)
    split[:n_train] = 0
    split[n_train : n_train + n_dev] = 1
    ds = AttributedDataset(
        instances=x,
        attributes=attrs,
        labels=labels,
        split=split,
        metadata={
            "generator": spec.generator,
            "seed": spec.seed,
            "label_attributes": list(spec.label_attributes),
            "split_fractions": [spec.train_frac, spec.dev_frac],
            "spec": spec_to_dict(spec),
        },
    )
    ds.validate()
    return ds


def spec_to_dict(spec):
    return {
        "generator": spec.generator,
        "n_features": spec.n_features,
        "n_attributes": spec.n_attributes,
        "n_samples": spec.n_samples,
        "seed": spec.seed,
        "n_classes": spec.n_classes,
        "noise": spec.noise,
        "shift": spec.shift,
        "margin": spec.margin,
        "n_styles": spec.n_styles,
        "style_leak": spec.style_leak,
        "label_echo": spec.label_echo,
        "label_attributes": list(spec.label_attributes),
        "attribute_prob": spec.attribute_prob,
        "train_frac": spec.train_frac,
        "dev_frac": spec.dev_frac,
    }


def spec_from_dict(d):
    d = dict(d)
    d["label_attributes"] = tuple(d.get("label_attributes", (0,)))
    return SynthSpec(**d)


def save_dataset(path, ds):
    """Write the dataset as a single container file. Bit-exact round trip."""
    ds.validate()
    write_container(
        path,
        kind="dataset",
        meta=ds.metadata,
        arrays={
            "instances": ds.instances,
            "attributes": ds.attributes,
            "labels": ds.labels,
            "split": ds.split,
        },
    )


def load_dataset(path):
    _, meta, arrays = read_container(path, expected_kind="dataset")
    ds = AttributedDataset(
        instances=arrays["instances"],
        attributes=arrays["attributes"],
        labels=arrays["labels"],
        split=arrays["split"].astype(np.int8),
        metadata=meta,
    )
    ds.validate()
    return ds
