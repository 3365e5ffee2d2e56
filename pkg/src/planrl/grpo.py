"""Group relative policy optimization over the toy policy.

Loss for one group (minimized)::

    -mean_i [ mean_{t unmasked in i} ( min(rho A_i, clip(rho, 1-eps, 1+eps) A_i) - beta * kl_t ) ]

with ``rho = exp(logp_new - logp_old)`` and ``kl_t = exp(d) - d - 1``,
``d = logp_ref - logp_new``. A rollout with no unmasked token contributes 0.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .adaplan import EpisodeConfig, RuleSelector, Trajectory, run_episode
from .envsim import TaskSpec, oracle_optimal_length
from .oracle import OraclePlanner
from .policy import N_FEATURES, N_HEADS, Decision, PolicyAgent, initial_weights
from .reward import OBS_CLOSE, OBS_OPEN, RewardBreakdown, Scorer, score_trajectory


class NumericError(ArithmeticError):
    pass


class SerializationError(ValueError):
    pass


@dataclass
class GrpoConfig:
    group_size: int = 16
    clip_eps: float = 0.2
    kl_beta: float = 0.01
    learning_rate: float = 0.05
    std_epsilon: float = 1e-8
    temperature: float = 1.0
    updates_per_batch: int = 1
    max_grad_norm: float | None = None
    plan_candidates: int = 4

    def validate(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be non-negative")
        if self.learning_rate <= 0 or self.updates_per_batch < 1 or self.plan_candidates < 1:
            raise ValueError("learning_rate, updates_per_batch and plan_candidates must be positive")


@dataclass
class PolicyParams:
    weights: np.ndarray
    version: int = 0

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (N_FEATURES, N_HEADS):
            raise ValueError(f"weights must have shape {(N_FEATURES, N_HEADS)}, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise NumericError("non-finite policy weights")

    @classmethod
    def initial(cls) -> "PolicyParams":
        return cls(initial_weights(), 0)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.weights.copy(), self.version)


# -- advantages and masks ------------------------------------------------------

def group_advantages(rewards, std_epsilon: float = 1e-8) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("a group needs at least two rewards")
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite reward in group")
    if np.ptp(r) == 0:
        return np.zeros_like(r)
    d = r - r.mean()
    d -= d.mean()  # second pass removes the rounding left by large offsets
    return d / max(float(np.sqrt(np.mean(d * d))), std_epsilon)


def observation_mask(tokens: list[str]) -> np.ndarray:
    """False for observation tags and everything between them."""
    mask = np.ones(len(tokens), dtype=bool)
    inside = False
    for i, tok in enumerate(tokens):
        if tok == OBS_OPEN:
            if inside:
                raise SerializationError(f"nested {OBS_OPEN} at token {i}")
            inside = True
        elif tok == OBS_CLOSE:
            if not inside:
                raise SerializationError(f"{OBS_CLOSE} without opening tag at token {i}")
            mask[i] = False
            inside = False
            continue
        if inside:
            mask[i] = False
    if inside:
        raise SerializationError("unterminated observation span")
    return mask


# -- packed decisions ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Packed:
    """Unmasked decisions of one rollout flattened for vectorized log-probs."""

    index: np.ndarray      # token positions
    feats: np.ndarray      # (rows, F)
    heads: np.ndarray      # (rows,)
    starts: np.ndarray     # (n,) first row of each decision
    chosen: np.ndarray     # (n,) chosen row of each decision
    seg: np.ndarray        # (rows,) decision id of each row

    @classmethod
    def build(cls, decisions: list[Decision | None], index: np.ndarray) -> "Packed":
        if len(index) == 0:
            z = np.zeros(0, dtype=int)
            return cls(z, np.zeros((0, N_FEATURES)), z, z, z, z)
        ds = []
        for i in index:
            d = decisions[int(i)]
            if d is None:
                raise SerializationError(f"token {int(i)} is unmasked but was not produced by the policy")
            ds.append(d)
        sizes = np.array([len(d.feats) for d in ds])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        return cls(
            np.asarray(index, dtype=int),
            np.concatenate([d.feats for d in ds]),
            np.repeat([d.head for d in ds], sizes),
            starts,
            starts + np.array([d.choice for d in ds]),
            np.repeat(np.arange(len(ds)), sizes),
        )

    def logprobs(self, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Log-probability of each chosen candidate and the per-row probabilities."""
        if len(self.index) == 0:
            return np.zeros(0), np.zeros(0)
        logits = np.einsum("rf,fr->r", self.feats, weights[:, self.heads])
        mx = np.maximum.reduceat(logits, self.starts)
        shifted = logits - mx[self.seg]
        lse = np.log(np.add.reduceat(np.exp(shifted), self.starts))
        logp_rows = shifted - lse[self.seg]
        return logp_rows[self.chosen], np.exp(logp_rows)

    def grad(self, coef: np.ndarray, probs: np.ndarray) -> np.ndarray:
        """Sum over decisions of ``coef_t * d logp_t / dW``."""
        w = -coef[self.seg] * probs
        w[self.chosen] += coef
        out = np.zeros((N_HEADS, N_FEATURES))
        np.add.at(out, self.heads, self.feats * w[:, None])
        return out.T


def token_logprobs(weights: np.ndarray, decisions: list[Decision | None]) -> np.ndarray:
    """Per-token log-probabilities; tokens the policy did not produce get 0."""
    idx = np.array([i for i, d in enumerate(decisions) if d is not None], dtype=int)
    out = np.zeros(len(decisions))
    if len(idx):
        out[idx] = Packed.build(decisions, idx).logprobs(weights)[0]
    return out


# -- rollouts ------------------------------------------------------------------

@dataclass(eq=False)
class Rollout:
    trajectory: Trajectory | None
    tokens: list[str]
    decisions: list[Decision | None]
    token_logprobs_old: np.ndarray
    token_mask: np.ndarray
    reward: float
    breakdown: RewardBreakdown | None = None

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if not (len(self.decisions) == len(self.token_logprobs_old) == len(self.token_mask) == n):
            raise ValueError("tokens, decisions, logprobs and mask must have equal length")

    @cached_property
    def packed(self) -> Packed:
        return Packed.build(self.decisions, np.flatnonzero(self.token_mask))


@dataclass(eq=False)
class RolloutGroup:
    task: TaskSpec | None
    rollouts: list[Rollout]

    def __post_init__(self) -> None:
        if len(self.rollouts) < 2:
            raise ValueError("a rollout group needs G >= 2")

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.rollouts])


@dataclass
class LossStats:
    loss: float
    clip_frac: float
    kl: float
    mean_abs_adv: float
    tokens: int


def grpo_loss(group: RolloutGroup, params_new, params_ref, cfg: GrpoConfig) -> tuple[float, np.ndarray, LossStats]:
    """Negative objective, its exact gradient w.r.t. ``params_new`` weights, and diagnostics."""
    w_new = getattr(params_new, "weights", params_new)
    w_ref = getattr(params_ref, "weights", params_ref)
    adv = group_advantages(group.rewards, cfg.std_epsilon)
    eps, beta = cfg.clip_eps, cfg.kl_beta
    total = 0.0
    grad = np.zeros((N_FEATURES, N_HEADS))
    clipped = kl_sum = 0.0
    n_tok = 0
    for a, ro in zip(adv, group.rollouts):
        pk = ro.packed
        n = len(pk.index)
        if n == 0:
            continue
        lp_new, probs = pk.logprobs(w_new)
        lp_ref, _ = pk.logprobs(w_ref)
        lp_old = ro.token_logprobs_old[pk.index]
        delta = lp_ref - lp_new
        with np.errstate(over="ignore"):  # overflow is reported below with its token index
            rho = np.exp(lp_new - lp_old)
            e_delta = np.exp(delta)
        kl = e_delta - delta - 1.0
        bad = ~(np.isfinite(rho) & np.isfinite(kl))
        if bad.any():
            raise NumericError(f"non-finite ratio or KL at token {int(pk.index[np.argmax(bad)])}")
        rho_c = np.clip(rho, 1.0 - eps, 1.0 + eps)
        unclipped = rho * a <= rho_c * a
        surr = np.where(unclipped, rho * a, rho_c * a)
        total += float(np.mean(surr - beta * kl))
        coef = (np.where(unclipped, a * rho, 0.0) - beta * (1.0 - e_delta)) / n
        grad += pk.grad(coef, probs)
        clipped += float(np.sum((rho < 1.0 - eps) | (rho > 1.0 + eps)))
        kl_sum += float(kl.sum())
        n_tok += n
    g = len(group.rollouts)
    loss = -total / g
    grad = -grad / g
    stats = LossStats(loss, clipped / n_tok if n_tok else 0.0, kl_sum / n_tok if n_tok else 0.0,
                      float(np.mean(np.abs(adv))), n_tok)
    return loss, grad, stats


def unclipped_objective(group: RolloutGroup, weights: np.ndarray, cfg: GrpoConfig) -> float:
    """Plain importance-weighted surrogate (no clipping, no KL), aggregated like grpo_loss."""
    adv = group_advantages(group.rewards, cfg.std_epsilon)
    vals = []
    for a, ro in zip(adv, group.rollouts):
        pk = ro.packed
        if len(pk.index) == 0:
            vals.append(0.0)
            continue
        lp_new, _ = pk.logprobs(weights)
        vals.append(float(np.mean(np.exp(lp_new - ro.token_logprobs_old[pk.index]) * a)))
    return float(np.mean(vals))


# -- collection ----------------------------------------------------------------

def _rollout_seed(seed, index: int) -> np.random.Generator:
    base = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.default_rng(base + [index])


def collect_group(task: TaskSpec, params: PolicyParams, stage: int, cfg: GrpoConfig, *, seed=0,
                  external_plans: bool | None = None, scorer: Scorer | None = None, mode: str = "adaplan",
                  temperature: float | None = None) -> RolloutGroup:
    """Run ``cfg.group_size`` episodes under a frozen snapshot and score them for ``stage``.

    Stage 1 takes plans from the oracle planner unless ``external_plans`` says otherwise.
    """
    weights = params.weights.copy()
    external = (stage == 1) if external_plans is None else external_plans
    temp = cfg.temperature if temperature is None else temperature
    ep_cfg = EpisodeConfig(k=cfg.plan_candidates, mode=mode)
    oracle_len = oracle_optimal_length(task)
    rollouts = []
    for g in range(cfg.group_size):
        agent = PolicyAgent(weights, _rollout_seed(seed, g), temp, record_plans=not external)
        planner = OraclePlanner() if external else agent
        traj = run_episode(task, planner, agent, RuleSelector(), cfg=ep_cfg)
        texts, decisions = agent.finish(traj)
        mask = observation_mask(texts)
        b = score_trajectory(traj, task, stage, scorer, oracle_len)
        rollouts.append(Rollout(traj, list(texts), list(decisions), np.zeros(len(texts)), mask, b.stage_scalar, b))
    for ro in rollouts:
        ro.token_logprobs_old = _old_logprobs(weights, ro)
    return RolloutGroup(task, rollouts)


def _old_logprobs(weights: np.ndarray, ro: Rollout) -> np.ndarray:
    # same packing and arithmetic as the loss, so the first update sees ratios of exactly 1
    out = np.zeros(len(ro.tokens))
    pk = ro.packed
    if len(pk.index):
        out[pk.index] = pk.logprobs(weights)[0]
    return out


# -- optimizer -----------------------------------------------------------------

@dataclass
class StepMetrics:
    mean_reward: float
    mean_abs_adv: float
    clip_frac: float
    kl: float
    loss: float
    grad_norm: float

    def to_dict(self) -> dict:
        return asdict(self)


def batch_loss(batch: list[RolloutGroup], weights: np.ndarray, ref: np.ndarray, cfg: GrpoConfig):
    losses, grads, stats = zip(*(grpo_loss(g, weights, ref, cfg) for g in batch))
    return float(np.mean(losses)), np.mean(grads, axis=0), stats


def train_step(batch: list[RolloutGroup], params: PolicyParams, params_ref: PolicyParams,
               cfg: GrpoConfig) -> tuple[PolicyParams, StepMetrics]:
    """``cfg.updates_per_batch`` gradient-descent updates on the mean group loss; inputs are not mutated."""
    if not batch:
        raise ValueError("train_step needs a non-empty batch")
    w = params.weights.copy()
    first = None
    for _ in range(cfg.updates_per_batch):
        loss, grad, stats = batch_loss(batch, w, params_ref.weights, cfg)
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(gnorm):
            raise NumericError("non-finite gradient")
        if cfg.max_grad_norm is not None and gnorm > cfg.max_grad_norm:
            grad = grad * (cfg.max_grad_norm / gnorm)
        if first is None:
            first = StepMetrics(
                float(np.mean([g.rewards.mean() for g in batch])),
                float(np.mean([s.mean_abs_adv for s in stats])),
                float(np.mean([s.clip_frac for s in stats])),
                float(np.mean([s.kl for s in stats])),
                loss, gnorm,
            )
        w = w - cfg.learning_rate * grad
    new = PolicyParams(w, params.version + cfg.updates_per_batch)
    return new, first


# -- randomized instances for property checks ----------------------------------

def random_instance(rng: np.random.Generator, group_size: int = 4, max_tokens: int = 30,
                    mask_prob: float = 0.3, jitter: float = 0.3):
    """Random (group, params_new, params_ref) with non-trivial ratios, clipping and masks."""
    w_new = rng.normal(0, 1, (N_FEATURES, N_HEADS))
    w_ref = w_new + rng.normal(0, 0.3, w_new.shape)
    rollouts = []
    for _ in range(group_size):
        n = int(rng.integers(1, max_tokens + 1))
        decisions = []
        for _ in range(n):
            k = int(rng.integers(2, 6))
            decisions.append(Decision(int(rng.integers(N_HEADS)), rng.normal(0, 1, (k, N_FEATURES)),
                                      int(rng.integers(k))))
        mask = rng.random(n) >= mask_prob
        lp = token_logprobs(w_new, decisions)
        old = lp + rng.normal(0, jitter, n)
        rollouts.append(Rollout(None, [f"t{i}" for i in range(n)], decisions, old, mask, float(rng.normal())))
    return RolloutGroup(None, rollouts), PolicyParams(w_new), PolicyParams(w_ref)


def finite_difference_error(group: RolloutGroup, params: PolicyParams, ref: PolicyParams, cfg: GrpoConfig,
                            h: float = 1e-6) -> float:
    """Norm-wise relative error between the analytic gradient and central differences."""
    _, grad, _ = grpo_loss(group, params, ref, cfg)
    fd = np.zeros_like(grad)
    for idx in np.ndindex(grad.shape):
        wp, wm = params.weights.copy(), params.weights.copy()
        wp[idx] += h
        wm[idx] -= h
        fd[idx] = (grpo_loss(group, wp, ref, cfg)[0] - grpo_loss(group, wm, ref, cfg)[0]) / (2 * h)
    scale = max(np.linalg.norm(fd), np.linalg.norm(grad), 1e-12)
    return float(np.linalg.norm(grad - fd) / scale)


# -- checkpoints ---------------------------------------------------------------

def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path, params: PolicyParams, cfg_hash: str, extra: dict | None = None) -> None:
    data = {"weights": params.weights.tolist(), "version": params.version, "config_hash": cfg_hash,
            **(extra or {})}
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    data = json.loads(Path(path).read_text())
    return PolicyParams(np.array(data["weights"], dtype=float), int(data["version"])), data
