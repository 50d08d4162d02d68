"""Shared domain types: contexts, action sets, feedback signals, latent and
pseudo rewards, and the interaction record that ties one round together.

All types are immutable values; anything mutable (models, environments)
lives in other modules. Construction canonicalizes cheap structural facts
(sorted sparse entries, enum ranges); cross-field invariants are checked by
:func:`validate_record` so that malformed records read from external files
can be represented and then rejected with a named error.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

#: Absolute tolerance for probability-vector normalization checks.
PROB_TOLERANCE = 1e-9


class ValidationError(Exception):
    """A record or one of its components violates a structural invariant."""


class DistributionNotNormalized(ValidationError):
    """Behavior probabilities do not form a probability distribution."""


class IndexOutOfRange(ValidationError):
    """An index (feature, action, or signal) exceeds its declared bound."""


class DuplicateActionId(ValidationError):
    """An action set contains the same action id twice."""


@dataclass(frozen=True)
class FeatureVector:
    """Sparse real vector over a declared global index space.

    Entries are stored sorted by index with zero values dropped, so equal
    vectors compare (and hash) equal regardless of how they were built.
    """

    indices: tuple[int, ...]
    values: tuple[float, ...]
    dimension: int

    def __post_init__(self) -> None:
        if self.dimension < 0:
            raise ValueError("dimension must be non-negative")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must have equal length")
        prev = -1
        for i, v in zip(self.indices, self.values):
            if i <= prev:
                raise ValueError("feature indices must be strictly increasing")
            prev = i
            if i >= self.dimension:
                raise IndexOutOfRange(
                    f"feature index {i} >= declared dimension {self.dimension}"
                )
            if v == 0.0:
                raise ValueError("zero-valued entries must be absent")
            if not np.isfinite(v):
                raise ValueError("feature values must be finite")

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[int, float]], dimension: int
    ) -> "FeatureVector":
        """Build a canonical vector from (index, value) pairs.

        Pairs are sorted; zero values are dropped; duplicate indices are an
        error.
        """
        items = sorted((int(i), float(v)) for i, v in pairs)
        idx: list[int] = []
        val: list[float] = []
        for i, v in items:
            if idx and i == idx[-1]:
                raise ValueError(f"duplicate feature index {i}")
            if v != 0.0:
                idx.append(i)
                val.append(v)
        return cls(tuple(idx), tuple(val), dimension)

    @classmethod
    def empty(cls, dimension: int) -> "FeatureVector":
        return cls((), (), dimension)

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(indices, values) as numpy arrays, cached for the hot paths."""
        return (
            np.asarray(self.indices, dtype=np.int64),
            np.asarray(self.values, dtype=np.float64),
        )

    def items(self) -> Iterator[tuple[int, float]]:
        return zip(self.indices, self.values)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension)
        dense[list(self.indices)] = self.values
        return dense

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Context:
    """One round's observable user side: a stable user id plus features."""

    user_id: int
    features: FeatureVector


@dataclass(frozen=True)
class ActionSet:
    """Ordered candidate actions for one round."""

    action_ids: tuple[int, ...]
    features: tuple[FeatureVector, ...]

    @property
    def size(self) -> int:
        return len(self.action_ids)


@dataclass(frozen=True)
class PolicyDistribution:
    """Probability vector aligned with an ActionSet's ordering."""

    probs: tuple[float, ...]

    @classmethod
    def from_array(cls, probs: Iterable[float]) -> "PolicyDistribution":
        return cls(tuple(float(p) for p in probs))

    @cached_property
    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Feedback:
    """One-hot feedback signal, stored as its index into the vocabulary."""

    signal_id: int

    def __post_init__(self) -> None:
        if self.signal_id < 0:
            raise IndexOutOfRange(f"signal_id {self.signal_id} < 0")


class LatentReward(IntEnum):
    """The unobserved per-interaction disposition."""

    NEG = -1
    ZERO = 0
    POS = 1


#: Extracted reward driving the bandit update; one of {0, 1, -1/alpha}.
PseudoReward = float


@dataclass(frozen=True)
class InteractionRecord:
    """One (x, A, a, P(.|x), y) tuple, with optional simulator ground truth."""

    context: Context
    action_set: ActionSet
    chosen_index: int
    behavior_probs: PolicyDistribution
    feedback: Feedback
    latent_reward: LatentReward | None = None


def validate_record(rec: InteractionRecord) -> None:
    """Check every cross-field invariant of an interaction record.

    Raises a :class:`ValidationError` subclass naming the violated
    invariant; returns None when the record is valid.
    """
    k = rec.action_set.size
    if k < 2:
        raise ValidationError(f"action set must contain at least 2 actions, got {k}")
    if len(set(rec.action_set.action_ids)) != k:
        raise DuplicateActionId(
            f"action ids are not distinct: {rec.action_set.action_ids}"
        )
    if len(rec.behavior_probs) != k:
        raise ValidationError(
            f"behavior_probs has {len(rec.behavior_probs)} entries for {k} actions"
        )
    total = 0.0
    for p in rec.behavior_probs.probs:
        if not np.isfinite(p) or p <= 0.0 or p > 1.0:
            raise DistributionNotNormalized(
                f"behavior probability {p} outside (0, 1]"
            )
        total += p
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise DistributionNotNormalized(
            f"behavior probabilities sum to {total!r}, not 1"
        )
    if not 0 <= rec.chosen_index < k:
        raise IndexOutOfRange(
            f"chosen_index {rec.chosen_index} outside [0, {k})"
        )
    dim = rec.context.features.dimension
    for fv in rec.action_set.features:
        if fv.dimension != dim:
            raise ValidationError(
                f"action feature dimension {fv.dimension} != context dimension {dim}"
            )
