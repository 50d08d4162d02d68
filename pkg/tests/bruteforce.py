"""Fully enumerable finite world used as an independent oracle.

Every conditional distribution is materialized as a table, so exact
posteriors come from direct summation rather than the library's online
estimates. Kept deliberately separate from the package code: tests compare
the two paths against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ExactWorld:
    """Tables: contexts x, actions a, latent rewards r, feedback signals y.

    reward_given_ax[x, a, i] = P(r = reward_values[i] | a, x)
    feedback_given_rx[x, i, y] = P(y | x, r = reward_values[i])
    """

    context_probs: np.ndarray
    reward_given_ax: np.ndarray
    feedback_given_rx: np.ndarray
    reward_values: tuple[int, ...]

    @property
    def n_contexts(self) -> int:
        return self.context_probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward_given_ax.shape[1]

    @property
    def n_signals(self) -> int:
        return self.feedback_given_rx.shape[2]

    def uniform_policy(self) -> np.ndarray:
        return np.full((self.n_contexts, self.n_actions), 1.0 / self.n_actions)

    def feedback_given_ax(self) -> np.ndarray:
        """P(y | a, x) = sum_r P(y | x, r) P(r | a, x); shape (X, A, Y)."""
        return np.einsum("xar,xry->xay", self.reward_given_ax, self.feedback_given_rx)

    def posterior_bayes(self, policy: np.ndarray) -> np.ndarray:
        """P(a | y, x) by direct Bayes rule; shape (X, Y, A).

        Entries for signals with P(y | x) = 0 are NaN.
        """
        p_y_ax = self.feedback_given_ax()
        joint = policy[:, :, None] * p_y_ax  # (X, A, Y): P(a, y | x)
        p_y_x = joint.sum(axis=1)  # (X, Y)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = joint / p_y_x[:, None, :]
        return np.transpose(post, (0, 2, 1))

    def posterior_factored(self, policy: np.ndarray) -> np.ndarray:
        """P(a | y, x) as the decoder-predictor inner product; (X, Y, A).

        decoder[x, y, r] = P(r | y, x); predictor[x, r, a] = smoothed
        P(a | r, x) = P(r | a, x) P(a | x) / sum_a' P(r | a', x) P(a' | x).
        """
        p_r_x = np.einsum("xa,xar->xr", policy, self.reward_given_ax)
        p_y_x = np.einsum("xr,xry->xy", p_r_x, self.feedback_given_rx)
        with np.errstate(invalid="ignore", divide="ignore"):
            decoder = (
                self.feedback_given_rx * p_r_x[:, :, None]
            ) / p_y_x[:, None, :]  # (X, R, Y) -> P(r | y, x)
            weighted = self.reward_given_ax * policy[:, :, None]  # (X, A, R)
            predictor = weighted / weighted.sum(axis=1)[:, None, :]  # (X, A, R)
        # Latent states with zero mass in a context have decoder weight 0 and
        # an undefined predictor; they contribute nothing to the sum.
        predictor = np.nan_to_num(predictor, nan=0.0)
        return np.einsum("xry,xar->xya", decoder, predictor)

    def zero_reward_mass(self, policy: np.ndarray) -> np.ndarray:
        """Per-context P(r = 0) under the policy; shape (X,)."""
        zero_idx = self.reward_values.index(0)
        return np.einsum("xa,xa->x", policy, self.reward_given_ax[:, :, zero_idx])

    def sample(
        self, rng: np.random.Generator, policy: np.ndarray
    ) -> tuple[int, int, int, int]:
        """One (x, a, reward_value, y) draw."""
        x = int(rng.choice(self.n_contexts, p=self.context_probs))
        a = int(rng.choice(self.n_actions, p=policy[x]))
        r_idx = int(rng.choice(len(self.reward_values), p=self.reward_given_ax[x, a]))
        y = int(rng.choice(self.n_signals, p=self.feedback_given_rx[x, r_idx]))
        return x, a, self.reward_values[r_idx], y


def decodable_three_state_world() -> ExactWorld:
    """Three contexts, three actions, rewards {-1, 0, 1}, six signals.

    Rewards are deterministic per (context, action) with two of three
    actions neutral, so zero-reward mass under the uniform policy is 2/3.
    Feedback supports are disjoint per latent state and rotate across
    contexts, so the signal-to-state map is context-specific.
    """
    values = (-1, 0, 1)
    x_probs = np.array([0.5, 0.3, 0.2])

    reward = np.zeros((3, 3, 3))

    def set_reward(x, a, r):
        reward[x, a, values.index(r)] = 1.0

    set_reward(0, 0, 1)
    set_reward(0, 1, 0)
    set_reward(0, 2, 0)
    set_reward(1, 0, 0)
    set_reward(1, 1, -1)
    set_reward(1, 2, 0)
    set_reward(2, 0, 0)
    set_reward(2, 1, 0)
    set_reward(2, 2, 1)

    feedback = np.zeros((3, 3, 6))

    def set_feedback(x, r, pairs):
        for y, p in pairs:
            feedback[x, values.index(r), y] = p

    # Context 0: plain convention.
    set_feedback(0, 1, [(0, 0.7), (1, 0.3)])
    set_feedback(0, 0, [(2, 0.5), (3, 0.5)])
    set_feedback(0, -1, [(4, 0.9), (5, 0.1)])
    # Context 1: swapped convention (positive uses the "negative" signals).
    set_feedback(1, 1, [(4, 0.6), (5, 0.4)])
    set_feedback(1, 0, [(2, 0.8), (3, 0.2)])
    set_feedback(1, -1, [(0, 0.5), (1, 0.5)])
    # Context 2: its own mix.
    set_feedback(2, 1, [(1, 1.0)])
    set_feedback(2, 0, [(3, 0.3), (2, 0.7)])
    set_feedback(2, -1, [(5, 1.0)])

    return ExactWorld(x_probs, reward, feedback, values)


def nonuniform_test_policy(world: ExactWorld, seed: int = 7) -> np.ndarray:
    """A fixed, strictly positive, non-degenerate policy for oracle checks."""
    rng = np.random.default_rng(seed)
    raw = rng.random((world.n_contexts, world.n_actions)) + 0.2
    return raw / raw.sum(axis=1, keepdims=True)
