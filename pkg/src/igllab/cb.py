"""Contextual-bandit policy learner: a shared binary scorer over
(context + action) features, an exploration scheme with a probability
floor, and inverse-propensity-weighted updates from scalar rewards.

The scorer scores each candidate action from one encoded input; positive
credit becomes a weighted positive example for the chosen action, negative
credit becomes weighted positive examples for every other action (split
equally), so cross-entropy machinery handles both signs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .core import ActionSet, Context, Feedback, PolicyDistribution
from .learners import OnlineSoftmaxModel, WeightedExample

#: Behavior probabilities below this are treated as degenerate.
PROPENSITY_FLOOR = 1e-6


class ZeroPropensity(Exception):
    """The logged probability of the chosen action is vanishingly small."""


@dataclass(frozen=True)
class EpsilonGreedy:
    """Argmax gets 1 - eps + eps/K, every action gets eps/K."""

    epsilon: float = 0.1

    def distribution(self, scores: np.ndarray) -> np.ndarray:
        k = scores.shape[0]
        probs = np.full(k, self.epsilon / k)
        probs[int(np.argmax(scores))] += 1.0 - self.epsilon
        return probs

    @property
    def floor(self) -> float:
        return self.epsilon  # divided by K at distribution time


@dataclass(frozen=True)
class SoftmaxExploration:
    """Temperature softmax over scores, mixed with a uniform floor."""

    temperature: float = 1.0
    epsilon_floor: float = 0.01

    def distribution(self, scores: np.ndarray) -> np.ndarray:
        k = scores.shape[0]
        z = scores / self.temperature
        z -= z.max()
        raw = np.exp(z)
        raw /= raw.sum()
        return (1.0 - k * self.epsilon_floor) * raw + self.epsilon_floor

    @property
    def floor(self) -> float:
        return self.epsilon_floor


class ActionEncoder(Protocol):
    """Builds scorer inputs from one round's context and action set."""

    def encode(self, context: Context, actions: ActionSet, index: int): ...

    def encode_all(
        self, context: Context, actions: ActionSet
    ) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (indices, values) rows, one per action, equal lengths."""
        ...


class CbPolicy:
    """Bandit policy: scorer + exploration, with IPS-weighted learning."""

    def __init__(
        self,
        scorer: OnlineSoftmaxModel,
        encoder: ActionEncoder,
        exploration: EpsilonGreedy | SoftmaxExploration | None = None,
    ):
        self.scorer = scorer
        self.encoder = encoder
        self.exploration = exploration or EpsilonGreedy()

    def scores(self, context: Context, actions: ActionSet) -> np.ndarray:
        cfg = self.scorer.config
        if cfg.n_classes == 2 and cfg.hidden_width == 0 and cfg.gate is None:
            idx2d, val2d = self.encoder.encode_all(context, actions)
            return self.scorer.margin_scores(idx2d, val2d)
        margins = np.empty(actions.size)
        for j in range(actions.size):
            p = self.scorer.predict(self.encoder.encode(context, actions, j), 2)
            margins[j] = np.log(p[1]) - np.log(p[0])
        return margins

    def predict(self, context: Context, actions: ActionSet) -> PolicyDistribution:
        probs = self.exploration.distribution(self.scores(context, actions))
        return PolicyDistribution.from_array(probs)

    def learn(
        self,
        context: Context,
        actions: ActionSet,
        chosen_index: int,
        pseudo_reward: float,
        behavior: PolicyDistribution,
    ) -> None:
        """Apply one IPS-weighted cost-sensitive update; reward 0 is a no-op."""
        if pseudo_reward == 0.0:
            return
        propensity = behavior.probs[chosen_index]
        if propensity < PROPENSITY_FLOOR:
            raise ZeroPropensity(
                f"behavior probability {propensity} below {PROPENSITY_FLOOR}"
            )
        credit = pseudo_reward / propensity
        k = actions.size
        if credit > 0:
            self.scorer.learn(
                WeightedExample(
                    self.encoder.encode(context, actions, chosen_index),
                    class_count=2,
                    label=1,
                    weight=credit,
                )
            )
        else:
            weight = -credit / (k - 1)
            for j in range(k):
                if j == chosen_index:
                    continue
                self.scorer.learn(
                    WeightedExample(
                        self.encoder.encode(context, actions, j),
                        class_count=2,
                        label=1,
                        weight=weight,
                    )
                )


def ctr_reward(feedback: Feedback, click_signal_id: int) -> float:
    """1 iff the feedback is the designated click signal, else 0."""
    return 1.0 if feedback.signal_id == click_signal_id else 0.0
