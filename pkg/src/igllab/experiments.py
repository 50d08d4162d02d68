"""Experiment assembly: feature encoders, model construction, per-cell
drivers, sweeps, and the decoding probe.

A "cell" is one (environment, algorithm, seed) run with its own models and
random streams, fully independent of every other cell. All randomness
derives from the cell seed via named seed spawning, so a cell is
reproducible in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .cb import CbPolicy, EpsilonGreedy, SoftmaxExploration, ctr_reward
from .core import ActionSet, Context, Feedback, FeatureVector, InteractionRecord
from .encoding import Block, FeatureLayout, build_vector, cross_index, one_hot
from .igl import IglConfig, dn_from_signals, igl_step, run_on_policy
from .learners import GateConfig, ModelConfig, OnlineSoftmaxModel
from .metrics import (
    MetricsAccumulator,
    StepMetrics,
    convergence_step,
    final_window_fractions,
)
from .sim import (
    SIGNAL_IDS,
    Dataset,
    EmissionEnv,
    EmissionEnvSpec,
    SupervisedToBanditEnv,
    three_state_spec,
)


@dataclass(frozen=True)
class LearnerParams:
    """Hyperparameters surfaced per model (policy scorer or posterior)."""

    learning_rate: float = 2.5e-3
    batch_size: int = 1
    hidden_width: int = 0
    init_scale: float = 0.2
    init_dist: str = "cauchy"


def _spawn_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


# --------------------------------------------------------------------- #
# encoders                                                              #
# --------------------------------------------------------------------- #


class EmissionIkEncoder:
    """Posterior-model input: user one-hot, signal one-hot, and their cross."""

    def __init__(self, n_users: int, n_signals: int):
        self.layout = FeatureLayout(
            [("user", n_users), ("signal", n_signals), ("cross", n_users * n_signals)]
        )
        self._user = self.layout.block("user")
        self._signal = self.layout.block("signal")
        self._cross = self.layout.block("cross")
        self._n_signals = n_signals
        self._cache: dict[tuple[int, int], FeatureVector] = {}

    def encode(self, context: Context, feedback: Feedback) -> FeatureVector:
        key = (context.user_id, feedback.signal_id)
        fv = self._cache.get(key)
        if fv is None:
            u, s = key
            fv = FeatureVector(
                (
                    self._user.slot(u),
                    self._signal.slot(s),
                    self._cross.slot(u * self._n_signals + s),
                ),
                (1.0, 1.0, 1.0),
                self.layout.dimension,
            )
            self._cache[key] = fv
        return fv


class EmissionCbEncoder:
    """Scorer input: user one-hot, item one-hot, and their cross."""

    def __init__(self, n_users: int, n_items: int):
        self.layout = FeatureLayout(
            [("user", n_users), ("item", n_items), ("cross", n_users * n_items)]
        )
        self._user = self.layout.block("user")
        self._item = self.layout.block("item")
        self._cross = self.layout.block("cross")
        self._n_items = n_items
        self._cache: dict[tuple[int, int], FeatureVector] = {}
        self._stacked: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def encode(self, context: Context, actions: ActionSet, index: int) -> FeatureVector:
        key = (context.user_id, actions.action_ids[index])
        fv = self._cache.get(key)
        if fv is None:
            u, item = key
            fv = FeatureVector(
                (
                    self._user.slot(u),
                    self._item.slot(item),
                    self._cross.slot(u * self._n_items + item),
                ),
                (1.0, 1.0, 1.0),
                self.layout.dimension,
            )
            self._cache[key] = fv
        return fv

    def encode_all(
        self, context: Context, actions: ActionSet
    ) -> tuple[np.ndarray, np.ndarray]:
        u = context.user_id
        stacked = self._stacked.get(u)
        if stacked is None:
            rows = np.empty((actions.size, 3), dtype=np.int64)
            for j, item in enumerate(actions.action_ids):
                rows[j] = (
                    self._user.slot(u),
                    self._item.slot(item),
                    self._cross.slot(u * self._n_items + item),
                )
            stacked = (rows, np.ones((actions.size, 3)))
            self._stacked[u] = stacked
        return stacked


class CovertypeIkEncoder:
    """Posterior-model input: dataset features, user one-hot, word one-hot.

    The user and word blocks are the gate pair; the per-(user, word) gate
    sign is what lets one shared class profile decode opposite word
    conventions.
    """

    def __init__(self, n_features: int, n_users: int, n_words: int):
        self.layout = FeatureLayout(
            [("x", n_features), ("user", n_users), ("word", n_words)]
        )
        self._word = self.layout.block("word")
        self._user = self.layout.block("user")

    def gate_config(self) -> GateConfig:
        return GateConfig(self._user.as_pair(), self._word.as_pair())

    def encode(self, context: Context, feedback: Feedback) -> FeatureVector:
        # Context features already occupy [x | user] of the shared space.
        idx, val = context.features.arrays
        return build_vector(
            self.layout.dimension,
            [(idx, val), one_hot(self._word, feedback.signal_id)],
        )

    def encode_raw(
        self, example_features: FeatureVector, user_id: int, word_id: int
    ) -> FeatureVector:
        idx, val = example_features.arrays
        return build_vector(
            self.layout.dimension,
            [
                (idx, val),
                one_hot(self._user, user_id),
                one_hot(self._word, word_id),
            ],
        )


class CovertypeCbEncoder:
    """Scorer input: dataset features, user and action one-hots, and the
    feature-by-action cross block that carries the class structure."""

    def __init__(self, n_features: int, n_users: int, n_actions: int):
        self.layout = FeatureLayout(
            [
                ("x", n_features),
                ("user", n_users),
                ("action", n_actions),
                ("cross", n_features * n_actions),
            ]
        )
        self._x = self.layout.block("x")
        self._user = self.layout.block("user")
        self._action = self.layout.block("action")
        self._cross = self.layout.block("cross")
        self._n_actions = n_actions
        self._stacked: dict[FeatureVector, tuple[np.ndarray, np.ndarray]] = {}

    def _row(self, context: Context, action_id: int) -> tuple[np.ndarray, np.ndarray]:
        idx, val = context.features.arrays
        x_mask = idx < self._x.size
        x_idx, x_val = idx[x_mask], val[x_mask]
        cross_idx = self._cross.start + x_idx * self._n_actions + action_id
        row_idx = np.concatenate(
            [idx, [self._action.slot(action_id)], cross_idx]
        )
        row_val = np.concatenate([val, [1.0], x_val])
        return row_idx, row_val

    def encode(self, context: Context, actions: ActionSet, index: int) -> FeatureVector:
        row_idx, row_val = self._row(context, actions.action_ids[index])
        return build_vector(self.layout.dimension, [(row_idx, row_val)])

    def encode_all(
        self, context: Context, actions: ActionSet
    ) -> tuple[np.ndarray, np.ndarray]:
        stacked = self._stacked.get(context.features)
        if stacked is None:
            rows = [self._row(context, aid) for aid in actions.action_ids]
            stacked = (
                np.stack([r[0] for r in rows]),
                np.stack([r[1] for r in rows]),
            )
            self._stacked[context.features] = stacked
        return stacked


# --------------------------------------------------------------------- #
# cell assembly                                                         #
# --------------------------------------------------------------------- #


@dataclass
class Cell:
    """One runnable (environment, algorithm, seed) combination."""

    env: object
    algorithm: str
    driver_seed: int
    igl_config: IglConfig | None
    ik: OnlineSoftmaxModel | None
    cb_policy: CbPolicy
    click_signal_id: int | None = None
    ik_encoder: object = None


def _exploration(kind: str, epsilon: float, temperature: float):
    if kind == "epsilon-greedy":
        return EpsilonGreedy(epsilon)
    if kind == "softmax":
        return SoftmaxExploration(temperature, epsilon_floor=epsilon / 100.0)
    raise ValueError(f"unknown exploration {kind!r}")


#: Tuned defaults. The posterior model trains in minibatches because the
#: synthetic-uniform weights vary by orders of magnitude between exploited
#: and explored actions; averaging inside a batch keeps Adam pointed at the
#: weighted objective instead of the raw visit frequencies.
EMISSION_IK = LearnerParams(learning_rate=7.5e-3, batch_size=50, init_scale=0.0)
EMISSION_CB = LearnerParams(learning_rate=1e-2, batch_size=1, init_scale=0.0)
COVERTYPE_IK = LearnerParams(
    learning_rate=2.5e-3, batch_size=50, init_scale=0.2, init_dist="normal"
)
COVERTYPE_CB = LearnerParams(
    learning_rate=1e-2, batch_size=1, init_scale=0.2, init_dist="normal"
)


def build_emission_cell(
    spec: EmissionEnvSpec,
    algorithm: str,
    seed: int,
    *,
    alpha: float = 1.0,
    detection_factor: float = 2.0,
    epsilon: float = 0.1,
    exploration: str = "epsilon-greedy",
    temperature: float = 1.0,
    ik_params: LearnerParams = EMISSION_IK,
    cb_params: LearnerParams = EMISSION_CB,
) -> Cell:
    env_seed, ik_seed, cb_seed, driver_seed = _spawn_seeds(seed, 4)
    env = EmissionEnv(spec, env_seed)
    k = env.action_count

    cb_encoder = EmissionCbEncoder(env.n_users, env.n_items)
    scorer = OnlineSoftmaxModel(
        ModelConfig(
            input_dim=cb_encoder.layout.dimension,
            n_classes=2,
            learning_rate=cb_params.learning_rate,
            batch_size=cb_params.batch_size,
            hidden_width=cb_params.hidden_width,
            init_scale=cb_params.init_scale,
            init_dist=cb_params.init_dist,
            seed=cb_seed,
        )
    )
    policy = CbPolicy(scorer, cb_encoder, _exploration(exploration, epsilon, temperature))

    if algorithm == "cb-ctr":
        return Cell(env, algorithm, driver_seed, None, None, policy,
                    click_signal_id=SIGNAL_IDS["click"])

    ik_encoder = EmissionIkEncoder(env.n_users, env.feedback_vocab_size)
    ik = OnlineSoftmaxModel(
        ModelConfig(
            input_dim=ik_encoder.layout.dimension,
            n_classes=k,
            learning_rate=ik_params.learning_rate,
            batch_size=ik_params.batch_size,
            hidden_width=ik_params.hidden_width,
            init_scale=ik_params.init_scale,
            init_dist=ik_params.init_dist,
            seed=ik_seed,
        )
    )
    if algorithm == "igl-p2":
        config = IglConfig.two_state(k, ik_encoder.encode, detection_factor)
    elif algorithm == "igl-p3":
        if env.dn_signal_id is None:
            raise ValueError("igl-p3 requires an environment with a negative signal")
        config = IglConfig.three_state(
            k,
            ik_encoder.encode,
            alpha=alpha,
            dn_oracle=dn_from_signals({env.dn_signal_id}),
            detection_factor=detection_factor,
        )
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return Cell(env, algorithm, driver_seed, config, ik, policy)


def build_covertype_cell(
    dataset: Dataset,
    n_users: int,
    n_words: int,
    algorithm: str,
    seed: int,
    *,
    detection_factor: float = 2.0,
    epsilon: float = 0.2,
    exploration: str = "epsilon-greedy",
    temperature: float = 1.0,
    ik_params: LearnerParams = COVERTYPE_IK,
    cb_params: LearnerParams = COVERTYPE_CB,
) -> Cell:
    env_seed, ik_seed, cb_seed, driver_seed = _spawn_seeds(seed, 4)
    env = SupervisedToBanditEnv(dataset, n_users, n_words, env_seed)
    k = env.action_count

    cb_encoder = CovertypeCbEncoder(dataset.n_features, n_users, k)
    scorer = OnlineSoftmaxModel(
        ModelConfig(
            input_dim=cb_encoder.layout.dimension,
            n_classes=2,
            learning_rate=cb_params.learning_rate,
            batch_size=cb_params.batch_size,
            hidden_width=cb_params.hidden_width,
            init_scale=cb_params.init_scale,
            init_dist=cb_params.init_dist,
            seed=cb_seed,
        )
    )
    policy = CbPolicy(scorer, cb_encoder, _exploration(exploration, epsilon, temperature))

    if algorithm == "cb-ctr":
        raise ValueError("the word-feedback environment has no click signal")
    if algorithm != "igl-p2":
        raise ValueError(f"unsupported algorithm {algorithm!r} for this environment")

    ik_encoder = CovertypeIkEncoder(dataset.n_features, n_users, n_words)
    ik = OnlineSoftmaxModel(
        ModelConfig(
            input_dim=ik_encoder.layout.dimension,
            n_classes=k,
            learning_rate=ik_params.learning_rate,
            batch_size=ik_params.batch_size,
            hidden_width=ik_params.hidden_width,
            init_scale=ik_params.init_scale,
            init_dist=ik_params.init_dist,
            gate=ik_encoder.gate_config(),
            seed=ik_seed,
        )
    )
    config = IglConfig.two_state(k, ik_encoder.encode, detection_factor)
    return Cell(env, algorithm, driver_seed, config, ik, policy,
                ik_encoder=ik_encoder)


def run_cell(
    cell: Cell,
    horizon: int,
    capture: list[InteractionRecord] | None = None,
) -> list[StepMetrics]:
    """Execute one cell to completion, returning its metric rows."""
    if cell.algorithm == "cb-ctr":
        return list(run_ctr_baseline(
            cell.env, cell.cb_policy, cell.click_signal_id, horizon, cell.driver_seed
        ))
    assert cell.igl_config is not None and cell.ik is not None
    return list(
        run_on_policy(
            cell.igl_config, cell.ik, cell.cb_policy, cell.env,
            horizon, cell.driver_seed, capture,
        )
    )


def run_ctr_baseline(
    env, policy: CbPolicy, click_signal_id: int, horizon: int, seed: int
):
    """Plain contextual bandit that rewards the designated click signal."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    rng = np.random.default_rng(seed)
    acc = MetricsAccumulator()
    for _ in range(horizon):
        context, actions = env.next()
        dist = policy.predict(context, actions)
        cdf = np.cumsum(dist.as_array)
        chosen = min(
            int(np.searchsorted(cdf, rng.random() * cdf[-1])), actions.size - 1
        )
        feedback, latent = env.feedback(context, actions.action_ids[chosen])
        reward = ctr_reward(feedback, click_signal_id)
        policy.learn(context, actions, chosen, reward, dist)
        best = env.oracle_best(context, actions)
        regret = float(
            env.true_reward(context, actions.action_ids[best])
            - env.true_reward(context, actions.action_ids[chosen])
        )
        yield acc.update(
            pseudo_reward=reward,
            true_reward=int(latent),
            ik_posterior=None,
            top1_correct=None,
            regret_delta=regret,
        )


# --------------------------------------------------------------------- #
# aggregation                                                           #
# --------------------------------------------------------------------- #


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size <= 1:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


@dataclass(frozen=True)
class SweepSummary:
    dislike_prob: float
    runs: int
    convergence_step_mean: float
    convergence_step_se: float
    final_frac_pos_mean: float
    final_frac_pos_se: float
    final_frac_zero_mean: float
    final_frac_zero_se: float
    final_frac_neg_mean: float
    final_frac_neg_se: float


def sweep_dislike_probability(
    p_values: Sequence[float],
    runs_per_p: int,
    horizon: int,
    seed: int,
    *,
    n_users: int = 20,
    n_items: int = 15,
    reward_fractions: tuple[float, float, float] = (0.2, 0.6, 0.2),
    convergence_target: float = 0.7,
    **cell_kwargs,
) -> list[SweepSummary]:
    """Three-state runs across dislike-emission probabilities.

    The labelling propensity is matched to the emission probability
    (alpha = p). The convergence statistic skips the first 200 rounds
    (the running mean is degenerate before that) and is censored at the
    horizon for runs that never cross the target.
    """
    summaries = []
    run_seeds = _spawn_seeds(seed, len(p_values) * runs_per_p)
    cursor = 0
    for p in p_values:
        if not 0.0 < p <= 1.0:
            raise ValueError(f"dislike probability {p} outside (0, 1]")
        spec = three_state_spec(
            n_users=n_users, n_items=n_items, dislike_prob=p,
            reward_fractions=reward_fractions,
        )
        conv_steps, pos, zero, neg = [], [], [], []
        for _ in range(runs_per_p):
            cell = build_emission_cell(
                spec, "igl-p3", run_seeds[cursor], alpha=p, **cell_kwargs
            )
            cursor += 1
            rows = run_cell(cell, horizon)
            step = convergence_step(rows, convergence_target, min_steps=200)
            conv_steps.append(horizon if step is None else step)
            fracs = final_window_fractions(rows)
            pos.append(fracs["frac_pos"])
            zero.append(fracs["frac_zero"])
            neg.append(fracs["frac_neg"])
        cm, cs = mean_se(conv_steps)
        pm, ps = mean_se(pos)
        zm, zs = mean_se(zero)
        nm, ns = mean_se(neg)
        summaries.append(
            SweepSummary(p, runs_per_p, cm, cs, pm, ps, zm, zs, nm, ns)
        )
    return summaries


# --------------------------------------------------------------------- #
# decoding probe                                                        #
# --------------------------------------------------------------------- #


def decoding_statistics(
    ik: OnlineSoftmaxModel,
    ik_encoder: CovertypeIkEncoder,
    dataset: Dataset,
    n_users: int,
    n_words: int,
    probe_examples: Sequence[int],
) -> np.ndarray:
    """Posterior-concentration statistic per (user, word).

    For each pair, the mean over probe examples of K times the largest
    class posterior. Values above the detection factor mean the word,
    as used by that user, pins down the action: a reward-indicating pair.
    """
    k = dataset.n_classes
    stats = np.zeros((n_users, n_words))
    for u in range(n_users):
        for w in range(n_words):
            acc = 0.0
            for ex in probe_examples:
                probs = ik.predict(
                    ik_encoder.encode_raw(dataset.features[ex], u, w), k
                )
                acc += k * float(probs.max())
            stats[u, w] = acc / len(probe_examples)
    return stats


def split_by_pattern(decoded: np.ndarray) -> np.ndarray:
    """Two-way partition of rows by agreement with the first row's pattern."""
    ref = decoded[0]
    agree = (decoded == ref).mean(axis=1)
    return (agree >= 0.5).astype(int)


def partition_purity(assignment: np.ndarray, truth: np.ndarray) -> float:
    """Purity of a 2-way clustering against a binary ground-truth split."""
    total = 0
    for cluster in (0, 1):
        members = truth[assignment == cluster]
        if members.size:
            total += max((members == 0).sum(), (members == 1).sum())
    return total / assignment.size
