#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Text-embedding table and the point encoder.

Entity strings are embedded by a hash-seeded Gaussian stream, so an
embedding only depends on (string, dim, seed). The point encoder is a
small MLP (tanh hidden layers, linear output, L2 normalization) with an
exact hand-written backward pass.

Usage:
    table = embed_entities(['chair', 'table'], dim=16, seed=0)
    params = init_encoder((6, 32, 32, 16), seed=0)
    features, cache = encode_points(params, inputs)
    gradients = encoder_backward(params, cache, d_features)

Any object with the PointEncoder methods can replace the MLP (tests
inject lookup encoders that ignore the parameters).

"""
import dataclasses
import typing
import numpy as np
import pgov.errors
import pgov.helper

# lower bound of the norm used by normalize()
NORM_EPS = 1e-12


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Rows divided by max(norm, NORM_EPS)."""
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.maximum(norms, NORM_EPS)


def embed_entity(name: str, dim: int, seed: int) -> np.ndarray:
    """Unit vector of `name`; independent of any vocabulary."""
    if dim < 2:
        raise ValueError(f'embedding dim must be at least 2, got {dim}')
    entropy = pgov.helper.stable_hash(name) ^ (int(seed)
                                               & 0xFFFFFFFFFFFFFFFF)
    vector = np.random.default_rng(entropy).standard_normal(dim)
    return vector / max(np.linalg.norm(vector), NORM_EPS)


@dataclasses.dataclass(frozen=True)
class TextEmbeddingTable:
    """Unit-norm entity embeddings.

    Strings missing from `entries` are embedded on demand; the result is
    the same as if they had been part of the table.

    """
    dim: int
    seed: int
    entries: typing.Dict[str, np.ndarray] = dataclasses.field(
        default_factory=dict, compare=False)

    def vector(self, name: str) -> np.ndarray:
        if name in self.entries:
            return self.entries[name]
        return embed_entity(name, self.dim, self.seed)

    def matrix(self, names: typing.Sequence[str]) -> np.ndarray:
        """len(names) x dim matrix of embeddings."""
        if len(names) == 0:
            return np.zeros((0, self.dim))
        return np.stack([self.vector(name) for name in names])


def embed_entities(vocabulary: typing.Iterable[str], dim: int,
                   seed: int) -> TextEmbeddingTable:
    """Embed every entity of `vocabulary`.

    Args:
        vocabulary: entity strings (order does not matter)
        dim: embedding dimension, at least 2
        seed: table seed

    Returns:
        Embedding table

    """
    entries = {name: embed_entity(name, dim, seed)
               for name in dict.fromkeys(vocabulary)}
    return TextEmbeddingTable(dim, seed, entries)


@dataclasses.dataclass(frozen=True, eq=False)
class EncoderParams:
    """MLP parameters.

    Instance attributes:
        layer_sizes: (input, hidden..., output)
        weights: per layer a (fan_in, fan_out) matrix
        biases: per layer a fan_out vector
        seed: initialization seed
        step: optimizer steps applied so far

    """
    layer_sizes: typing.Tuple[int, ...]
    weights: typing.Tuple[np.ndarray, ...]
    biases: typing.Tuple[np.ndarray, ...]
    seed: int
    step: int = 0

    def __post_init__(self):
        sizes = self.layer_sizes
        if len(sizes) < 2 or len(self.weights) != len(sizes) - 1 \
                or len(self.biases) != len(sizes) - 1:
            raise pgov.errors.ShapeMismatchError(
                f'{len(self.weights)} weight matrices for layer sizes '
                f'{sizes}')
        for layer, (weight, bias) in enumerate(zip(self.weights,
                                                   self.biases)):
            if weight.shape != (sizes[layer], sizes[layer + 1]) \
                    or bias.shape != (sizes[layer + 1],):
                raise pgov.errors.ShapeMismatchError(
                    f'layer {layer}: weight {weight.shape}, bias '
                    f'{bias.shape} do not chain {sizes}')
            if not (np.all(np.isfinite(weight))
                    and np.all(np.isfinite(bias))):
                raise ValueError(f'layer {layer}: non-finite parameters')

    def arrays(self) -> typing.List[np.ndarray]:
        """Parameters in the order W0, b0, W1, b1, ..."""
        out = []
        for weight, bias in zip(self.weights, self.biases):
            out.extend((weight, bias))
        return out

    def with_arrays(self, arrays: typing.Sequence[np.ndarray],
                    step: typing.Optional[int] = None) -> 'EncoderParams':
        """Copy holding `arrays` (order of arrays())."""
        return dataclasses.replace(
            self, weights=tuple(arrays[0::2]), biases=tuple(arrays[1::2]),
            step=self.step if step is None else step)


def init_encoder(layer_sizes: typing.Sequence[int],
                 seed: int) -> EncoderParams:
    """Gaussian weights with std 1/sqrt(fan_in), zero biases."""
    sizes = tuple(int(size) for size in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f'invalid layer sizes: {sizes}')
    rng = np.random.default_rng(seed)
    weights = tuple(rng.standard_normal((fan_in, fan_out))
                    / np.sqrt(fan_in)
                    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))
    biases = tuple(np.zeros(fan_out) for fan_out in sizes[1:])
    return EncoderParams(sizes, weights, biases, int(seed))


@dataclasses.dataclass(frozen=True, eq=False)
class EncoderCache:
    """Activations of one forward pass."""
    layer_sizes: typing.Tuple[int, ...]
    activations: typing.Tuple[np.ndarray, ...]  # input, hidden outputs
    output: np.ndarray  # pre-normalization
    features: np.ndarray


def encode_points(params: EncoderParams, inputs: np.ndarray
                  ) -> typing.Tuple[np.ndarray, EncoderCache]:
    """Forward pass.

    Args:
        params: encoder parameters
        inputs: N x layer_sizes[0]

    Returns:
        N x D unit-norm features, cache for encoder_backward

    Raises:
        ShapeMismatchError: If the input width does not match.

    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.layer_sizes[0]:
        raise pgov.errors.ShapeMismatchError(
            f'inputs {inputs.shape} vs input size {params.layer_sizes[0]}')
    if not np.all(np.isfinite(inputs)):
        raise ValueError('encoder inputs must be finite')
    hidden = inputs
    activations = [hidden]
    last = len(params.weights) - 1
    for layer, (weight, bias) in enumerate(zip(params.weights,
                                               params.biases)):
        hidden = hidden @ weight + bias
        if layer < last:
            hidden = np.tanh(hidden)
            activations.append(hidden)
    features = normalize_rows(hidden)
    return features, EncoderCache(params.layer_sizes, tuple(activations),
                                  hidden, features)


def encoder_backward(params: EncoderParams, cache: EncoderCache,
                     d_features: np.ndarray) -> typing.List[np.ndarray]:
    """Reverse pass through normalization, affine layers and tanh.

    Args:
        params: parameters of the forward pass
        cache: cache of the forward pass
        d_features: N x D gradient of the loss w.r.t. the features

    Returns:
        Gradients in the order of EncoderParams.arrays()

    Raises:
        StaleCacheError: If cache, parameters and gradient disagree.

    """
    d_features = np.asarray(d_features, dtype=np.float64)
    if cache.layer_sizes != params.layer_sizes \
            or d_features.shape != cache.features.shape:
        raise pgov.errors.StaleCacheError(
            f'gradient {d_features.shape} / cache {cache.features.shape} '
            f'for layer sizes {params.layer_sizes}')
    norms = np.linalg.norm(cache.output, axis=1, keepdims=True)
    features = cache.features
    projected = d_features - features * np.sum(features * d_features,
                                               axis=1, keepdims=True)
    grad = np.where(norms > NORM_EPS, projected / np.maximum(norms, NORM_EPS),
                    d_features / NORM_EPS)
    gradients = []
    for layer in range(len(params.weights) - 1, -1, -1):
        below = cache.activations[layer]
        gradients.append(grad.sum(axis=0))
        gradients.append(below.T @ grad)
        if layer > 0:
            grad = (grad @ params.weights[layer].T) * (1.0 - below ** 2)
    return gradients[::-1]


class PointEncoder(typing.Protocol):
    """Maps N x 6 point inputs to N x D features."""

    def encode(self, params: EncoderParams, inputs: np.ndarray
               ) -> typing.Tuple[np.ndarray, typing.Any]:
        ...

    def backward(self, params: EncoderParams, cache: typing.Any,
                 d_features: np.ndarray) -> typing.List[np.ndarray]:
        ...


class MLPEncoder:
    """Default PointEncoder: encode_points / encoder_backward."""

    def encode(self, params: EncoderParams, inputs: np.ndarray
               ) -> typing.Tuple[np.ndarray, EncoderCache]:
        return encode_points(params, inputs)

    def backward(self, params: EncoderParams, cache: EncoderCache,
                 d_features: np.ndarray) -> typing.List[np.ndarray]:
        return encoder_backward(params, cache, d_features)


MLP_ENCODER = MLPEncoder()
