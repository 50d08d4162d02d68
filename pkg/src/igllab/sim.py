"""Simulation environments.

Two families are shipped:

* :class:`SupervisedToBanditEnv`: a multiclass dataset turned into a
  bandit problem (choosing the true class pays 1, anything else 0), with
  the reward hidden behind per-user word feedback. Half the users signal
  success with "good" words, the other half use the exact opposite
  convention.
* :class:`EmissionEnv`: users with fixed latent rewards per item emit one
  of five signals (like, dislike, click, skip, none) from a per-style
  emission table conditioned only on the latent reward.

Both emit feedback that depends solely on (user, latent reward), never on
the chosen item directly; :func:`conditional_independence_audit` checks
that property empirically on any environment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy import stats

from .core import (
    ActionSet,
    Context,
    Feedback,
    FeatureVector,
    InteractionRecord,
    LatentReward,
)
from .encoding import Block, FeatureLayout, build_vector, one_hot

EMISSION_SIGNALS = ("like", "dislike", "click", "skip", "none")
SIGNAL_IDS = {name: i for i, name in enumerate(EMISSION_SIGNALS)}

ROW_TOLERANCE = 1e-12


class DatasetParseError(Exception):
    """A dataset file line could not be parsed."""


class OddPartition(Exception):
    """User or word counts must be even to split into equal halves."""


class EmissionRowInvalid(Exception):
    """An emission table row is not a decodable probability distribution."""


class GroundTruthUnavailable(Exception):
    """The environment cannot resolve latent rewards (e.g. real logs)."""


class Environment(Protocol):
    """Contract shared by every simulator."""

    def next(self) -> tuple[Context, ActionSet]: ...

    def feedback(self, context: Context, action_id: int) -> tuple[Feedback, LatentReward]: ...

    def oracle_best(self, context: Context, actions: ActionSet) -> int: ...

    def true_reward(self, context: Context, action_id: int) -> int: ...


# --------------------------------------------------------------------- #
# supervised-to-bandit environment                                       #
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class Dataset:
    """A multiclass dataset in the raw feature space."""

    features: tuple[FeatureVector, ...]
    labels: tuple[int, ...]
    n_features: int
    n_classes: int

    def __post_init__(self) -> None:
        if not self.features:
            raise DatasetParseError("dataset is empty")
        if len(self.features) != len(self.labels):
            raise DatasetParseError("features and labels differ in length")
        for y in self.labels:
            if not 0 <= y < self.n_classes:
                raise DatasetParseError(f"label {y} outside [0, {self.n_classes})")


def load_dataset_file(
    path, delimiter: str = ",", label_offset: int = 0
) -> Dataset:
    """Parse a header-less numeric file whose last column is the class label.

    ``label_offset`` is subtracted from the raw label to make it 0-based.
    """
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(cell) for cell in line.split(delimiter)])
            except ValueError as err:
                raise DatasetParseError(f"{path}:{line_no}: {err}") from err
    if not rows:
        raise DatasetParseError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in rows):
        raise DatasetParseError(f"{path}: rows must share >= 2 numeric columns")
    n_features = width - 1
    labels = [int(r[-1]) - label_offset for r in rows]
    n_classes = max(labels) + 1
    features = tuple(
        FeatureVector.from_pairs(
            ((j, v) for j, v in enumerate(r[:-1])), n_features
        )
        for r in rows
    )
    return Dataset(features, tuple(labels), n_features, n_classes)


def synthetic_classification_dataset(
    n_examples: int,
    n_features: int,
    n_classes: int,
    seed: int,
    noise: float = 0.25,
) -> Dataset:
    """Linearly separable multiclass data around random class prototypes."""
    rng = np.random.default_rng(seed)
    prototypes = rng.normal(size=(n_classes, n_features))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    prototypes *= 2.0
    labels = rng.integers(n_classes, size=n_examples)
    points = prototypes[labels] + noise * rng.normal(size=(n_examples, n_features))
    features = tuple(
        FeatureVector.from_pairs(
            ((j, v) for j, v in enumerate(row)), n_features
        )
        for row in points
    )
    return Dataset(features, tuple(int(y) for y in labels), n_features, n_classes)


class SupervisedToBanditEnv:
    """Dataset-backed bandit with a word-valued feedback channel.

    Record feature space: [dataset features | user one-hot | action one-hot].
    Users 0..N/2-1 are "normal" (good word on reward 1, bad word on 0);
    the rest invert the convention. Words 0..M/2-1 are the good half.
    """

    def __init__(self, dataset: Dataset, n_users: int, n_words: int, seed: int):
        if n_users % 2 or n_words % 2:
            raise OddPartition(
                f"user and word counts must be even, got {n_users}, {n_words}"
            )
        if n_users < 2 or n_words < 2:
            raise OddPartition("need at least 2 users and 2 words")
        self.dataset = dataset
        self.n_users = n_users
        self.n_words = n_words
        self.feedback_vocab_size = n_words
        self.action_count = dataset.n_classes
        self._rng = np.random.default_rng(seed)

        self.layout = FeatureLayout(
            [
                ("x", dataset.n_features),
                ("user", n_users),
                ("action", dataset.n_classes),
            ]
        )
        dim = self.layout.dimension
        user_block = self.layout.block("user")
        action_block = self.layout.block("action")

        order = self._rng.permutation(len(dataset.features))
        self._example_order = order
        self._user_of_example = order.copy()
        for pos, ex in enumerate(order):
            self._user_of_example[ex] = pos % n_users

        self._contexts: list[Context] = []
        self._example_by_features: dict[FeatureVector, int] = {}
        for ex, fv in enumerate(dataset.features):
            idx, val = fv.arrays
            combined = build_vector(
                dim,
                [
                    (idx, val),
                    one_hot(user_block, int(self._user_of_example[ex])),
                ],
            )
            self._contexts.append(Context(int(self._user_of_example[ex]), combined))
            self._example_by_features[combined] = ex

        self._actions = ActionSet(
            tuple(range(dataset.n_classes)),
            tuple(
                build_vector(dim, [one_hot(action_block, c)])
                for c in range(dataset.n_classes)
            ),
        )
        self._cursor = 0
        self._feedbacks = tuple(Feedback(w) for w in range(n_words))

    def is_normal_user(self, user_id: int) -> bool:
        return user_id < self.n_users // 2

    def is_good_word(self, word_id: int) -> bool:
        return word_id < self.n_words // 2

    def _example_of(self, context: Context) -> int:
        try:
            return self._example_by_features[context.features]
        except KeyError:
            raise GroundTruthUnavailable("context does not match any example")

    def next(self) -> tuple[Context, ActionSet]:
        ex = int(self._example_order[self._cursor])
        self._cursor = (self._cursor + 1) % len(self._example_order)
        return self._contexts[ex], self._actions

    def feedback(self, context: Context, action_id: int) -> tuple[Feedback, LatentReward]:
        ex = self._example_of(context)
        correct = action_id == self.dataset.labels[ex]
        good = self.is_normal_user(context.user_id) == correct
        half = self.n_words // 2
        word = int(self._rng.integers(half)) + (0 if good else half)
        return self._feedbacks[word], (LatentReward.POS if correct else LatentReward.ZERO)

    def oracle_best(self, context: Context, actions: ActionSet) -> int:
        ex = self._example_of(context)
        return actions.action_ids.index(self.dataset.labels[ex])

    def true_reward(self, context: Context, action_id: int) -> int:
        ex = self._example_of(context)
        return int(action_id == self.dataset.labels[ex])


def build_covertype_env(
    dataset: Dataset | str,
    n_users: int,
    n_words: int,
    seed: int,
    delimiter: str = ",",
    label_offset: int = 0,
) -> SupervisedToBanditEnv:
    """Supervised-to-bandit environment from a Dataset or a dataset file."""
    if isinstance(dataset, str):
        dataset = load_dataset_file(dataset, delimiter, label_offset)
    return SupervisedToBanditEnv(dataset, n_users, n_words, seed)


# --------------------------------------------------------------------- #
# latent-state emission environment                                      #
# --------------------------------------------------------------------- #

#: One communication style: latent reward value -> [(signal_id, prob), ...]
EmissionTable = Mapping[int, Sequence[tuple[int, float]]]


@dataclass(frozen=True)
class EmissionEnvSpec:
    state_count: int
    styles: tuple[EmissionTable, ...]
    n_users: int
    n_items: int
    reward_fractions: tuple[float, float, float] = (0.2, 0.6, 0.2)
    dn_signal_id: int | None = SIGNAL_IDS["dislike"]

    def states(self) -> tuple[int, ...]:
        return (0, 1) if self.state_count == 2 else (-1, 0, 1)

    def state_counts(self) -> tuple[int, int, int]:
        """Items per (pos, zero, neg) state: the exact composition every
        user's profile is a random permutation of.

        Largest-remainder rounding of fraction * n_items, with at least one
        positive item so every user has something worth recommending.
        """
        exact = [f * self.n_items for f in self.reward_fractions]
        counts = [int(np.floor(e)) for e in exact]
        order = np.argsort([c - e for c, e in zip(counts, exact)])
        for i in range(self.n_items - sum(counts)):
            counts[order[i]] += 1
        if counts[0] == 0:
            donor = int(np.argmax(counts[1:])) + 1
            counts[0] += 1
            counts[donor] -= 1
        if self.state_count == 2 and counts[2]:
            raise ValueError("two-state environments cannot produce reward -1")
        return counts[0], counts[1], counts[2]


def default_emission_table(state_count: int, dislike_prob: float = 0.2) -> dict:
    """Shipped emission numbers; only the signal-to-state structure is
    normative, the probabilities are configurable defaults."""
    like, dislike, click, skip, none = range(5)
    if state_count == 2:
        return {
            1: [(like, 0.3), (click, 0.7)],
            0: [(dislike, 0.1), (skip, 0.3), (none, 0.6)],
        }
    if state_count == 3:
        negative = [(dislike, dislike_prob)]
        if dislike_prob < 1.0:
            negative.append((skip, 1.0 - dislike_prob))
        return {
            1: [(like, 0.3), (click, 0.7)],
            0: [(none, 1.0)],
            -1: negative,
        }
    raise ValueError(f"state_count must be 2 or 3, got {state_count}")


def two_state_spec(
    n_users: int = 10,
    n_items: int = 10,
    positive_fraction: float = 0.2,
) -> EmissionEnvSpec:
    return EmissionEnvSpec(
        state_count=2,
        styles=(default_emission_table(2),),
        n_users=n_users,
        n_items=n_items,
        reward_fractions=(positive_fraction, 1.0 - positive_fraction, 0.0),
        dn_signal_id=None,
    )


def three_state_spec(
    n_users: int = 10,
    n_items: int = 10,
    dislike_prob: float = 0.2,
    reward_fractions: tuple[float, float, float] = (0.2, 0.6, 0.2),
) -> EmissionEnvSpec:
    return EmissionEnvSpec(
        state_count=3,
        styles=(default_emission_table(3, dislike_prob),),
        n_users=n_users,
        n_items=n_items,
        reward_fractions=reward_fractions,
    )


def _validate_style(spec: EmissionEnvSpec, style: EmissionTable) -> None:
    states = spec.states()
    seen_state_of_signal: dict[int, int] = {}
    for state in states:
        if state not in style:
            raise EmissionRowInvalid(f"missing emission row for reward {state}")
        row = style[state]
        total = 0.0
        for signal, prob in row:
            if not 0 <= signal < len(EMISSION_SIGNALS):
                raise EmissionRowInvalid(f"unknown signal id {signal}")
            if prob < 0 or not np.isfinite(prob):
                raise EmissionRowInvalid(f"invalid probability {prob}")
            if prob > 0:
                if signal in seen_state_of_signal and seen_state_of_signal[signal] != state:
                    raise EmissionRowInvalid(
                        f"signal {EMISSION_SIGNALS[signal]!r} emitted in two "
                        "latent states; feedback must be perfectly decodable"
                    )
                seen_state_of_signal[signal] = state
            total += prob
        if abs(total - 1.0) > ROW_TOLERANCE:
            raise EmissionRowInvalid(
                f"emission row for reward {state} sums to {total!r}, not 1"
            )
    dn = spec.dn_signal_id
    if dn is not None and spec.state_count == 3:
        if seen_state_of_signal.get(dn, -1) != -1:
            raise EmissionRowInvalid(
                f"designated negative signal {EMISSION_SIGNALS[dn]!r} must be "
                "emitted only in the reward -1 state"
            )


class EmissionEnv:
    """Latent-state user/item simulator with per-style signal emission.

    Record feature space: [user one-hot | item one-hot]. Every round shows
    all items; latent rewards per (user, item) are fixed at construction.
    """

    def __init__(self, spec: EmissionEnvSpec, seed: int):
        if spec.state_count not in (2, 3):
            raise EmissionRowInvalid("state_count must be 2 or 3")
        if not spec.styles:
            raise EmissionRowInvalid("at least one communication style required")
        fr = spec.reward_fractions
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"reward_fractions must be 3 non-negatives summing to 1")
        for style in spec.styles:
            _validate_style(spec, style)

        self.spec = spec
        self.n_users = spec.n_users
        self.n_items = spec.n_items
        self.action_count = spec.n_items
        self.feedback_vocab_size = len(EMISSION_SIGNALS)
        self.dn_signal_id = spec.dn_signal_id
        self._rng = np.random.default_rng(seed)

        n_pos, n_zero, n_neg = spec.state_counts()
        base = np.array([1] * n_pos + [0] * n_zero + [-1] * n_neg)
        self.profiles = np.stack(
            [self._rng.permutation(base) for _ in range(spec.n_users)]
        )
        self._best_item = np.argmax(self.profiles, axis=1)

        # Per (style, state): cumulative signal distribution for sampling.
        self._emission: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        for s, style in enumerate(spec.styles):
            for state in spec.states():
                row = [(sig, p) for sig, p in style[state] if p > 0]
                signals = np.array([sig for sig, _ in row])
                cdf = np.cumsum([p for _, p in row])
                self._emission[(s, state)] = (signals, cdf)
        self._style_of_user = np.arange(spec.n_users) % len(spec.styles)

        self.layout = FeatureLayout([("user", spec.n_users), ("item", spec.n_items)])
        dim = self.layout.dimension
        ub, ib = self.layout.block("user"), self.layout.block("item")
        self._contexts = [
            Context(u, build_vector(dim, [one_hot(ub, u)]))
            for u in range(spec.n_users)
        ]
        self._actions = ActionSet(
            tuple(range(spec.n_items)),
            tuple(build_vector(dim, [one_hot(ib, i)]) for i in range(spec.n_items)),
        )
        self._feedbacks = tuple(Feedback(s) for s in range(len(EMISSION_SIGNALS)))

    def next(self) -> tuple[Context, ActionSet]:
        user = int(self._rng.integers(self.n_users))
        return self._contexts[user], self._actions

    def feedback(self, context: Context, action_id: int) -> tuple[Feedback, LatentReward]:
        state = int(self.profiles[context.user_id, action_id])
        signals, cdf = self._emission[(int(self._style_of_user[context.user_id]), state)]
        pick = int(np.searchsorted(cdf, self._rng.random() * cdf[-1]))
        pick = min(pick, len(signals) - 1)
        return self._feedbacks[int(signals[pick])], LatentReward(state)

    def oracle_best(self, context: Context, actions: ActionSet) -> int:
        return int(self._best_item[context.user_id])

    def true_reward(self, context: Context, action_id: int) -> int:
        return int(self.profiles[context.user_id, action_id])


def build_emission_env(spec: EmissionEnvSpec, seed: int) -> EmissionEnv:
    """Validated emission environment with profiles fixed by ``seed``."""
    return EmissionEnv(spec, seed)


# --------------------------------------------------------------------- #
# ground-truth metrics and audits                                        #
# --------------------------------------------------------------------- #


def oracle_regret(env: Environment, records: Iterable[InteractionRecord]) -> float:
    """Cumulative ground-truth regret of the chosen actions in a trace."""
    total = 0.0
    for rec in records:
        best = env.oracle_best(rec.context, rec.action_set)
        total += env.true_reward(
            rec.context, rec.action_set.action_ids[best]
        ) - env.true_reward(rec.context, rec.action_set.action_ids[rec.chosen_index])
    return total


@dataclass(frozen=True)
class AuditResult:
    statistic: float
    dof: int
    p_value: float
    reject: bool
    tables: int


def conditional_independence_audit(
    env: Environment,
    n_samples: int = 100_000,
    seed: int = 0,
    significance: float = 0.001,
) -> AuditResult:
    """Chi-squared audit that feedback is independent of the action given
    (user, latent reward).

    Samples uniform-random actions, builds one action-by-signal
    contingency table per (user, reward) stratum, and pools the Pearson
    statistics. Strata too thin to test (expected counts below 1 or
    degenerate margins) are skipped.
    """
    rng = np.random.default_rng(seed)
    counts: dict[tuple[int, int], dict[tuple[int, int], int]] = {}
    for _ in range(n_samples):
        context, actions = env.next()
        j = int(rng.integers(actions.size))
        fb, latent = env.feedback(context, actions.action_ids[j])
        table = counts.setdefault((context.user_id, int(latent)), {})
        key = (j, fb.signal_id)
        table[key] = table.get(key, 0) + 1

    total_stat = 0.0
    total_dof = 0
    used = 0
    for cells in counts.values():
        rows = sorted({a for a, _ in cells})
        cols = sorted({s for _, s in cells})
        if len(rows) < 2 or len(cols) < 2:
            continue
        observed = np.zeros((len(rows), len(cols)))
        for (a, s), n in cells.items():
            observed[rows.index(a), cols.index(s)] = n
        expected = np.outer(observed.sum(1), observed.sum(0)) / observed.sum()
        if expected.min() < 1.0:
            continue
        total_stat += float(((observed - expected) ** 2 / expected).sum())
        total_dof += (len(rows) - 1) * (len(cols) - 1)
        used += 1
    if total_dof == 0:
        raise ValueError("no stratum had enough data to test")
    p_value = float(stats.chi2.sf(total_stat, total_dof))
    return AuditResult(total_stat, total_dof, p_value, p_value < significance, used)


def sweep_dislike_probability(
    p_values: Sequence[float],
    runs_per_p: int,
    horizon: int,
    seed: int,
    **experiment_kwargs,
):
    """Run the three-state configuration across dislike-emission settings.

    Thin delegator; the experiment assembly owns model construction.
    """
    from .experiments import sweep_dislike_probability as _sweep

    return _sweep(p_values, runs_per_p, horizon, seed, **experiment_kwargs)
