"""Two-layer perceptron head over concatenated anchor point features."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ShapeMismatch
from core.sampling import AnchorFeature
from core.schemas import HeadConfig

from .temporal import fusion_shapes, init_fusion_tensors

HEAD_TENSORS: tuple[str, ...] = ("W1", "b1", "Wc", "bc", "Wr", "br", "Wv", "bv")


@dataclass
class HeadParams:
    """Head weights plus optimizer moments.

    ``tensors`` may also hold temporal-fusion weights ("Fw" for weighted sum,
    "Fl"/"Fb" for linear fusion); ``fusion_strategy`` names which.
    """

    n_points: int
    channels: int
    hidden: int
    num_classes: int
    tensors: dict[str, np.ndarray]
    fusion_strategy: str | None = None
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self) -> None:
        expected = self.expected_shapes()
        for name, shape in expected.items():
            if name not in self.tensors:
                raise ShapeMismatch(f"HeadParams is missing tensor '{name}'")
            if self.tensors[name].shape != shape:
                raise ShapeMismatch(f"Tensor '{name}' has shape {self.tensors[name].shape}, expected {shape}")
        extra = set(self.tensors) - set(expected)
        if extra:
            raise ShapeMismatch(f"Unexpected tensors {sorted(extra)}")
        for name in expected:
            self.m.setdefault(name, np.zeros(expected[name]))
            self.v.setdefault(name, np.zeros(expected[name]))

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        n, c, h, k = self.n_points, self.channels, self.hidden, self.num_classes
        shapes: dict[str, tuple[int, ...]] = {
            "W1": (n * c, h),
            "b1": (h,),
            "Wc": (h, k),
            "bc": (k,),
            "Wr": (h, 2 * n),
            "br": (2 * n,),
            "Wv": (h, n),
            "bv": (n,),
        }
        if self.fusion_strategy is not None:
            shapes.update(fusion_shapes(self.fusion_strategy, n, c))
        return shapes

    @property
    def names(self) -> list[str]:
        return list(self.expected_shapes())

    @classmethod
    def init(
        cls,
        n_points: int,
        channels: int,
        cfg: HeadConfig,
        seed: int,
        fusion_strategy: str | None = None,
    ) -> HeadParams:
        """He-initialised hidden layer, small output layers, zero biases."""
        rng = np.random.default_rng(seed)
        n, c, h, k = n_points, channels, cfg.hidden_width, cfg.num_classes
        tensors = {
            "W1": rng.normal(0.0, np.sqrt(2.0 / (n * c)), size=(n * c, h)),
            "b1": np.zeros(h),
            "Wc": rng.normal(0.0, 0.1 / np.sqrt(h), size=(h, k)),
            "bc": np.zeros(k),
            "Wr": rng.normal(0.0, 0.1 / np.sqrt(h), size=(h, 2 * n)),
            "br": np.zeros(2 * n),
            "Wv": rng.normal(0.0, 0.1 / np.sqrt(h), size=(h, n)),
            "bv": np.zeros(n),
        }
        if fusion_strategy is not None:
            tensors.update(init_fusion_tensors(fusion_strategy, n, c))
        return cls(n, c, h, k, tensors, fusion_strategy=fusion_strategy)

    @classmethod
    def zeros(cls, n_points: int, channels: int, cfg: HeadConfig) -> HeadParams:
        template = cls.init(n_points, channels, cfg, seed=0)
        return cls(
            n_points,
            channels,
            cfg.hidden_width,
            cfg.num_classes,
            {name: np.zeros_like(t) for name, t in template.tensors.items()},
        )

    def copy(self) -> HeadParams:
        return HeadParams(
            self.n_points,
            self.channels,
            self.hidden,
            self.num_classes,
            {k: t.copy() for k, t in self.tensors.items()},
            fusion_strategy=self.fusion_strategy,
            m={k: t.copy() for k, t in self.m.items()},
            v={k: t.copy() for k, t in self.v.items()},
            step=self.step,
        )


@dataclass(frozen=True, eq=False)
class Prediction:
    class_probs: np.ndarray
    dx: np.ndarray
    dz: np.ndarray
    vis: np.ndarray


@dataclass(frozen=True, eq=False)
class ForwardCache:
    """Batched forward outputs (leading axis M) plus activations for backprop."""

    x: np.ndarray
    h_pre: np.ndarray
    h: np.ndarray
    probs: np.ndarray
    dx: np.ndarray
    dz: np.ndarray
    vis: np.ndarray

    def prediction(self, index: int) -> Prediction:
        return Prediction(self.probs[index], self.dx[index], self.dz[index], self.vis[index])


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Two branches keep exp() from overflowing.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward_batch(features: np.ndarray, params: HeadParams) -> ForwardCache:
    """features: (M, N, C) -> batched class probs, offsets and visibility."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[1:] != (params.n_points, params.channels):
        raise ShapeMismatch(
            f"Features {features.shape} do not match head (N={params.n_points}, C={params.channels})"
        )
    t = params.tensors
    n = params.n_points
    x = features.reshape(features.shape[0], -1)
    h_pre = x @ t["W1"] + t["b1"]
    h = np.maximum(h_pre, 0.0)
    probs = softmax(h @ t["Wc"] + t["bc"])
    reg = h @ t["Wr"] + t["br"]
    vis = sigmoid(h @ t["Wv"] + t["bv"])
    return ForwardCache(x=x, h_pre=h_pre, h=h, probs=probs, dx=reg[:, :n], dz=reg[:, n:], vis=vis)


def forward(feat: AnchorFeature, params: HeadParams) -> Prediction:
    if feat.per_point.shape != (params.n_points, params.channels):
        raise ShapeMismatch(
            f"AnchorFeature {feat.per_point.shape} does not match head (N={params.n_points}, C={params.channels})"
        )
    return forward_batch(feat.per_point[None], params).prediction(0)
