"""Online multinomial logistic regression trained with minibatch Adam.

One model class serves both the bandit policy scorer and the action-
posterior estimator. The score map is linear: either a single weight
matrix (``hidden_width=0``) or two stacked matrices with identity
activation, whose first layer is Cauchy-initialized. An optional gate
pairs two one-hot input blocks through small embedding tables; the scalar
product of the looked-up embeddings multiplies every class logit, letting
the model flip or damp a shared score profile per (block-a, block-b) pair.
Additive encodings cannot express that flip, so the gate is what makes
opposite communication conventions decodable.

Examples are weighted: the weight multiplies the example's cross-entropy
loss. Zero-weight examples are exact no-ops (no optimizer tick).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .core import FeatureVector

CHECKPOINT_MAGIC = b"IGLM0001"


class DimensionMismatch(Exception):
    """Input vector does not fit the model's declared input space."""


class NonFiniteGradient(Exception):
    """A gradient entry is NaN or infinite; feature scales are likely off."""


@dataclass(frozen=True)
class GateConfig:
    """Multiplicative pairing of two input blocks via a bilinear table.

    ``block_a`` and ``block_b`` are (start, size) index ranges of the model
    input. The active entries of the two blocks index a learned table whose
    looked-up value scales all class logits, so each (a, b) pair can flip
    or damp the shared score profile independently.
    """

    block_a: tuple[int, int]
    block_b: tuple[int, int]


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    n_classes: int
    learning_rate: float = 2.5e-3
    batch_size: int = 1
    hidden_width: int = 512
    init_scale: float = 0.2
    #: Weight init family: heavy-tailed "cauchy" or light-tailed "normal".
    init_dist: str = "cauchy"
    gate: GateConfig | None = None
    #: The gate table always initializes from a normal at this scale; its
    #: per-pair entries see little data each, so heavy tails would pin
    #: rarely-updated pairs at saturated values.
    gate_init_scale: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_dim <= 0 or self.n_classes < 2:
            raise ValueError("need input_dim >= 1 and n_classes >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.hidden_width < 0:
            raise ValueError("hidden_width must be >= 0")
        if self.init_dist not in ("cauchy", "normal"):
            raise ValueError(f"unknown init_dist {self.init_dist!r}")
        if self.gate is not None and self.init_scale == 0.0:
            raise ValueError("gated models need a nonzero init_scale")


@dataclass(frozen=True)
class WeightedExample:
    input: FeatureVector
    class_count: int
    label: int
    weight: float

    def __post_init__(self) -> None:
        if not 0 <= self.label < self.class_count:
            raise ValueError(f"label {self.label} outside [0, {self.class_count})")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError(f"weight must be finite and >= 0, got {self.weight}")


class OnlineSoftmaxModel:
    """Sparse-input softmax scorer with per-example weights and Adam steps.

    Single-writer: interleave predict/learn freely from one thread, but do
    not share an instance across concurrent writers.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c, d, h = config.n_classes, config.input_dim, config.hidden_width
        scale = config.init_scale

        def draw(shape: tuple[int, ...]) -> np.ndarray:
            if scale == 0.0:
                return np.zeros(shape)
            if config.init_dist == "normal":
                return rng.normal(size=shape) * scale
            return rng.standard_cauchy(shape) * scale

        # The first layer draws from the configured init distribution; a
        # second layer starts at zero so initial predictions are uniform.
        self.params: dict[str, np.ndarray] = {}
        if h > 0:
            self.params["w1"] = draw((h, d))
            self.params["w2"] = np.zeros((c, h))
        else:
            self.params["w1"] = draw((c, d))
        if config.gate is not None:
            self.params["gate"] = (
                rng.normal(size=(config.gate.block_a[1], config.gate.block_b[1]))
                * config.gate_init_scale
            )

        self._m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._grad = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._step_count = 0
        self._pending = 0

    # ------------------------------------------------------------------ #
    # forward                                                            #
    # ------------------------------------------------------------------ #

    def _check_input(self, x: FeatureVector) -> None:
        if x.dimension > self.config.input_dim:
            raise DimensionMismatch(
                f"input dimension {x.dimension} exceeds model's "
                f"{self.config.input_dim}"
            )

    def _gate_parts(
        self, idx: np.ndarray, val: np.ndarray
    ) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        gate = self.config.gate
        assert gate is not None
        a0, asz = gate.block_a
        b0, bsz = gate.block_b
        in_a = (idx >= a0) & (idx < a0 + asz)
        in_b = (idx >= b0) & (idx < b0 + bsz)
        ia, va = idx[in_a] - a0, val[in_a]
        ib, vb = idx[in_b] - b0, val[in_b]
        if ia.size and ib.size:
            g = float(va @ self.params["gate"][np.ix_(ia, ib)] @ vb)
        else:
            g = 0.0
        return g, ia, ib, va, vb

    def _logits(self, x: FeatureVector) -> tuple[np.ndarray, dict]:
        idx, val = x.arrays
        aux: dict = {"idx": idx, "val": val}
        w1 = self.params["w1"]
        base = w1[:, idx] @ val if idx.size else np.zeros(w1.shape[0])
        if "w2" in self.params:
            aux["hidden"] = base
            base = self.params["w2"] @ base
        if self.config.gate is not None:
            g, ia, ib, va, vb = self._gate_parts(idx, val)
            aux.update(gate=g, ia=ia, ib=ib, va=va, vb=vb, ungated=base)
            base = g * base
        return base, aux

    def predict(self, x: FeatureVector, class_count: int | None = None) -> np.ndarray:
        """Probability vector over the first ``class_count`` classes."""
        self._check_input(x)
        n = self.config.n_classes if class_count is None else class_count
        if not 2 <= n <= self.config.n_classes:
            raise ValueError(f"class_count {n} outside [2, {self.config.n_classes}]")
        logits, _ = self._logits(x)
        return _softmax(logits[:n])

    def margin_scores(self, idx2d: np.ndarray, val2d: np.ndarray) -> np.ndarray:
        """Batched class-1 minus class-0 logits for a two-class linear model.

        ``idx2d``/``val2d`` stack one row of (indices, values) per input;
        rows must have equal length. Only valid without hidden layer or
        gate (the bandit scorer's configuration).
        """
        if (
            self.config.n_classes != 2
            or "w2" in self.params
            or self.config.gate is not None
        ):
            raise ValueError("margin_scores requires a plain 2-class linear model")
        diff = self.params["w1"][1] - self.params["w1"][0]
        return (diff[idx2d] * val2d).sum(axis=1)

    # ------------------------------------------------------------------ #
    # learning                                                           #
    # ------------------------------------------------------------------ #

    def learn(self, example: WeightedExample) -> None:
        """Accumulate one weighted cross-entropy gradient; step when the
        batch is full. Zero-weight examples change nothing."""
        self._check_input(example.input)
        if example.class_count > self.config.n_classes:
            raise ValueError(
                f"class_count {example.class_count} exceeds model's "
                f"{self.config.n_classes}"
            )
        if example.weight == 0.0:
            return

        logits, aux = self._logits(example.input)
        n = example.class_count
        probs = _softmax(logits[:n])
        delta = probs * example.weight
        delta[example.label] -= example.weight
        if not np.all(np.isfinite(delta)):
            raise NonFiniteGradient("non-finite loss gradient; check feature scales")

        idx, val = aux["idx"], aux["val"]
        dlogits = np.zeros(self.config.n_classes)
        dlogits[:n] = delta

        if self.config.gate is not None:
            g = aux["gate"]
            dgate = float(dlogits @ aux["ungated"])
            dlogits = dlogits * g
            ia, ib = aux["ia"], aux["ib"]
            if ia.size and ib.size:
                self._grad["gate"][np.ix_(ia, ib)] += dgate * np.outer(
                    aux["va"], aux["vb"]
                )

        if "w2" in self.params:
            self._grad["w2"] += np.outer(dlogits, aux["hidden"])
            dhidden = self.params["w2"].T @ dlogits
            if idx.size:
                self._grad["w1"][:, idx] += dhidden[:, None] * val
        else:
            if idx.size:
                self._grad["w1"][:, idx] += dlogits[:, None] * val

        self._pending += 1
        if self._pending >= self.config.batch_size:
            self._apply_step()

    def _apply_step(self) -> None:
        cfg = self.config
        self._step_count += 1
        t = self._step_count
        bias1 = 1.0 - cfg.beta1**t
        bias2 = 1.0 - cfg.beta2**t
        scale = 1.0 / self._pending
        for key, w in self.params.items():
            g = self._grad[key]
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in {key}")
            if scale != 1.0:
                g *= scale
            m, v = self._m[key], self._v[key]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            w -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_epsilon)
            g.fill(0.0)
        self._pending = 0

    # ------------------------------------------------------------------ #
    # checkpointing                                                      #
    # ------------------------------------------------------------------ #

    def save(self, path_or_file) -> None:
        """Write a versioned binary checkpoint (bit-exact round trip)."""
        if hasattr(path_or_file, "write"):
            self._write(path_or_file)
        else:
            with open(path_or_file, "wb") as fh:
                self._write(fh)

    def _write(self, fh: BinaryIO) -> None:
        cfg = self.config
        header = {
            "config": {
                "input_dim": cfg.input_dim,
                "n_classes": cfg.n_classes,
                "learning_rate": cfg.learning_rate,
                "batch_size": cfg.batch_size,
                "hidden_width": cfg.hidden_width,
                "init_scale": cfg.init_scale,
                "init_dist": cfg.init_dist,
                "gate_init_scale": cfg.gate_init_scale,
                "gate": None
                if cfg.gate is None
                else {
                    "block_a": list(cfg.gate.block_a),
                    "block_b": list(cfg.gate.block_b),
                },
                "beta1": cfg.beta1,
                "beta2": cfg.beta2,
                "adam_epsilon": cfg.adam_epsilon,
                "seed": cfg.seed,
            },
            "step_count": self._step_count,
            "pending": self._pending,
            "arrays": list(self.params.keys()),
        }
        blob = json.dumps(header).encode("utf-8")
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for key in self.params:
            for group in (self.params, self._m, self._v, self._grad):
                np.lib.format.write_array(fh, group[key], allow_pickle=False)

    @classmethod
    def load(cls, path_or_file) -> "OnlineSoftmaxModel":
        if hasattr(path_or_file, "read"):
            return cls._read(path_or_file)
        with open(path_or_file, "rb") as fh:
            return cls._read(fh)

    @classmethod
    def _read(cls, fh: BinaryIO) -> "OnlineSoftmaxModel":
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a model checkpoint (magic {magic!r})")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
        raw = header["config"]
        gate = raw.pop("gate")
        config = ModelConfig(
            gate=None
            if gate is None
            else GateConfig(tuple(gate["block_a"]), tuple(gate["block_b"])),
            **raw,
        )
        model = cls(config)
        for key in header["arrays"]:
            for group in (model.params, model._m, model._v, model._grad):
                group[key] = np.lib.format.read_array(fh, allow_pickle=False)
        model._step_count = header["step_count"]
        model._pending = header["pending"]
        return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()
