"""
Advantage actor-critic on the augmented product.

Episodes run until the sink is reached or the horizon is hit; every step of
an episode is credited with the episode's Monte-Carlo return (no discount),
and the critic value serves as the baseline. Updates are synchronous: a batch
of episodes is collected with a frozen actor snapshot, then both networks
take one Adam step.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from .product import (
    AugmentedProduct,
    BoundMode,
    ProductState,
    encode,
    episode_reward,
    initial_product_state,
    product_step,
    valid_product_inputs,
)
from ..common.parallel import map_ordered
from ..common.seed import set_seed, spawn_generators
from ..models.mlp import Mlp, actor_network, critic_network
from ..utils.constants import ADAM_BETAS, ADAM_EPS
from ..utils.debug import Debug

# Stream key reserved for the initial states at which the value is estimated
ESTIMATE_STREAM = 1_000_003


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    zeta: float = 0.999
    episodes: int = 2000
    horizon: int = 500
    actor_lr: float = 8e-4
    critic_lr: float = 8e-4
    seed: int = 0
    entropy_coef: float = 0.01
    # mask | penalty
    invalid_actions: str = "mask"
    invalid_action_penalty: float = 0.0
    mode: BoundMode = BoundMode.upper
    batch_size: int = 16
    actor_hidden: Tuple[int, ...] = (7, 7)
    critic_hidden: Tuple[int, ...] = (7,)
    estimate_samples: int = 256
    workers: int = 1

    def __post_init__(self):
        self.mode = BoundMode(self.mode)
        self.actor_hidden = tuple(self.actor_hidden)
        self.critic_hidden = tuple(self.critic_hidden)
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.episodes < 0 or self.batch_size < 1:
            raise ValueError("episodes must be >= 0 and batch_size >= 1")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.invalid_actions not in ("mask", "penalty"):
            raise ValueError(f"invalid_actions must be 'mask' or 'penalty', got '{self.invalid_actions}'")


@dataclass
class EpisodeRecord:
    states: np.ndarray
    q: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    reached_phi: bool
    ret: float
    invalid: int = 0
    penalty: float = 0.0
    env_states: Optional[np.ndarray] = None
    # environment state after the last step; None when the episode ended in φ
    final_state: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def shaped_return(self) -> float:
        return self.ret - self.penalty * self.invalid


@dataclass
class MetricsRow:
    stage: int
    phase: str
    episode: int
    return_mean: float
    actor_loss: float
    critic_loss: float
    estimate: float


@dataclass
class TrainResult:
    learner: "A2CLearner"
    estimate: float
    metrics: List[MetricsRow] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the valid entries; invalid entries get probability exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("action mask has no valid action")
    z = np.where(mask, np.asarray(logits, dtype=np.float64), -np.inf)
    z = z - z[mask].max()
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum()


def _network_dtype(net: torch.nn.Module) -> torch.dtype:
    return next(net.parameters()).dtype


def actor_sample(actor: Mlp, encoded: np.ndarray, mask: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> int:
    valid = np.flatnonzero(mask)
    if len(valid) == 0:
        raise ValueError("action mask has no valid action")
    if len(valid) == 1:
        return int(valid[0])
    with torch.no_grad():
        logits = actor(torch.as_tensor(encoded, dtype=_network_dtype(actor))).numpy()
    probs = masked_softmax(logits, mask)
    if greedy:
        return int(np.argmax(probs))
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    index = min(index, len(probs) - 1)
    if not mask[index]:
        index = int(valid[-1])
    return index


def rollout(
    ap: AugmentedProduct,
    actor: Mlp,
    cfg: TrainConfig,
    rng: np.random.Generator,
    greedy: bool = False,
    start: Optional[ProductState] = None,
) -> EpisodeRecord:
    """Simulate one episode of at most cfg.horizon product steps."""
    penalize = cfg.invalid_actions == "penalty"
    n_inputs = ap.n_inputs
    x = start if start is not None else initial_product_state(ap, rng)

    states, qs, actions, masks, env_states = [], [], [], [], []
    reached, invalid = False, 0
    for _ in range(cfg.horizon):
        encoded = encode(x, ap)
        valid = valid_product_inputs(ap, x)
        mask = np.zeros(n_inputs, dtype=bool)
        mask[list(valid)] = True
        sample_mask = np.ones(n_inputs, dtype=bool) if penalize else mask
        u = actor_sample(actor, encoded, sample_mask, rng, greedy)

        states.append(encoded)
        qs.append(x.q)
        actions.append(u)
        masks.append(sample_mask)
        env_states.append(x.s)

        if penalize and not mask[u]:
            invalid += 1
            continue
        x, reached = product_step(ap, x, u, rng)
        if reached:
            break

    return EpisodeRecord(
        states=np.asarray(states),
        q=np.asarray(qs, dtype=np.int64),
        actions=np.asarray(actions, dtype=np.int64),
        masks=np.asarray(masks, dtype=bool),
        reached_phi=reached,
        ret=episode_reward(cfg.mode, reached),
        invalid=invalid,
        penalty=cfg.invalid_action_penalty,
        env_states=np.asarray(env_states),
        final_state=x.s,
    )


def _rollout_task(task) -> EpisodeRecord:
    ap, actor, cfg, rng, greedy = task
    return rollout(ap, actor, cfg, rng, greedy)


def collect_episodes(
    ap: AugmentedProduct,
    actor: Mlp,
    cfg: TrainConfig,
    rngs: Sequence[np.random.Generator],
    greedy: bool = False,
) -> List[EpisodeRecord]:
    """One episode per rng stream, in stream order regardless of worker count."""
    tasks = [(ap, actor, cfg, rng, greedy) for rng in rngs]
    return map_ordered(_rollout_task, tasks, cfg.workers)


# ---------------------------------------------------------------------------
# Learner
# ---------------------------------------------------------------------------

def a2c_losses(actor: Mlp, critic: Mlp, batch: Sequence[EpisodeRecord], cfg: TrainConfig) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    critic loss = mean (G - V(x_t))²
    actor loss  = -mean (G - V(x_t)) log π(a_t | x_t) - β · mean entropy
    """
    if not batch:
        raise ValueError("empty batch")
    dtype = _network_dtype(actor)
    x = torch.as_tensor(np.concatenate([ep.states for ep in batch]), dtype=dtype)
    g = torch.as_tensor(np.concatenate([np.full(len(ep), ep.shaped_return) for ep in batch]), dtype=dtype)
    a = torch.as_tensor(np.concatenate([ep.actions for ep in batch]), dtype=torch.long)
    m = torch.as_tensor(np.concatenate([ep.masks for ep in batch]), dtype=torch.bool)

    v = critic(x).squeeze(-1)
    critic_loss = ((g - v) ** 2).mean()

    advantage = (g - v).detach()
    logp_all = torch.log_softmax(actor(x).masked_fill(~m, float("-inf")), dim=-1)
    logp = logp_all.gather(1, a.unsqueeze(1)).squeeze(1)
    safe_logp = torch.where(m, logp_all, torch.zeros_like(logp_all))
    entropy = -(safe_logp.exp() * safe_logp * m).sum(dim=-1)
    actor_loss = -(advantage * logp).mean() - cfg.entropy_coef * entropy.mean()
    return actor_loss, critic_loss


class A2CLearner:
    """Actor and critic networks with their optimizers."""

    def __init__(self, input_size: int, n_actions: int, cfg: TrainConfig, dtype: torch.dtype = torch.float32):
        self.cfg = cfg
        self.actor = actor_network(input_size, n_actions, cfg.actor_hidden).to(dtype)
        self.critic = critic_network(input_size, cfg.critic_hidden).to(dtype)
        self.actor_optimizer = torch.optim.Adam(self.actor.parameters(), lr=cfg.actor_lr, betas=ADAM_BETAS, eps=ADAM_EPS)
        self.critic_optimizer = torch.optim.Adam(self.critic.parameters(), lr=cfg.critic_lr, betas=ADAM_BETAS, eps=ADAM_EPS)

    @property
    def actor_lr(self) -> float:
        return self.actor_optimizer.param_groups[0]["lr"]

    @property
    def critic_lr(self) -> float:
        return self.critic_optimizer.param_groups[0]["lr"]

    def set_learning_rates(self, actor_lr: float, critic_lr: float) -> None:
        for group in self.actor_optimizer.param_groups:
            group["lr"] = actor_lr
        for group in self.critic_optimizer.param_groups:
            group["lr"] = critic_lr

    def update(self, batch: Sequence[EpisodeRecord]) -> Tuple[float, float]:
        """One synchronous step on a batch; a zero learning rate leaves that network untouched."""
        actor_loss, critic_loss = a2c_losses(self.actor, self.critic, batch, self.cfg)
        if not (torch.isfinite(actor_loss) and torch.isfinite(critic_loss)):
            raise TrainingError(f"non-finite loss (actor {actor_loss.item()}, critic {critic_loss.item()})")

        self.actor_optimizer.zero_grad()
        self.critic_optimizer.zero_grad()
        (actor_loss + critic_loss).backward()
        if self.critic_lr > 0:
            self.critic_optimizer.step()
        if self.actor_lr > 0:
            self.actor_optimizer.step()
        return float(actor_loss.item()), float(critic_loss.item())

    def values(self, encoded: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            out = self.critic(torch.as_tensor(np.atleast_2d(encoded), dtype=_network_dtype(self.critic)))
        return out.squeeze(-1).numpy().astype(np.float64)


def estimate_value(learner: A2CLearner, ap: AugmentedProduct, states: Sequence[np.ndarray]) -> np.ndarray:
    """Critic value at the product states (s, q0) for each given environment state."""
    if len(states) == 0:
        return np.zeros(0)
    encoded = np.stack([encode(ProductState(np.asarray(s, dtype=np.float64), ap.automaton.initial), ap) for s in states])
    return learner.values(encoded)


def sample_initial_states(ap: AugmentedProduct, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    return [ap.env.sample_initial(rng) for _ in range(count)]


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def train(
    ap: AugmentedProduct,
    cfg: TrainConfig,
    learner: Optional[A2CLearner] = None,
    stream_key: Sequence[int] = (),
    stage: int = 0,
    phase: str = "joint",
    debug: Optional[Debug] = None,
    on_batch: Optional[Callable[[MetricsRow], None]] = None,
) -> TrainResult:
    """
    Run cfg.episodes episodes in batches of cfg.batch_size.

    A fresh learner is created (after seeding torch with cfg.seed) when none
    is given. Episode rng streams come from cfg.seed and `stream_key`, so
    distinct phases of a run never share randomness.

    Returns:
        TrainResult with the learner, the mean critic value at sampled initial
        states (the probability bound of the configured mode) and metrics rows
    """
    if learner is None:
        set_seed(cfg.seed)
        learner = A2CLearner(ap.encoding_size, ap.n_inputs, cfg)

    rngs = spawn_generators(cfg.seed, cfg.episodes, *stream_key)
    estimate_rng = spawn_generators(cfg.seed, 1, *stream_key, ESTIMATE_STREAM)[0]
    probe = sample_initial_states(ap, cfg.estimate_samples, estimate_rng)

    rows: List[MetricsRow] = []
    show = debug is not None and debug.enabled
    for start in tqdm(range(0, cfg.episodes, cfg.batch_size), desc=f"stage {stage} {phase}", disable=not show, leave=False):
        batch = collect_episodes(ap, learner.actor, cfg, rngs[start : start + cfg.batch_size])
        actor_loss, critic_loss = learner.update(batch)
        row = MetricsRow(
            stage=stage,
            phase=phase,
            episode=start + len(batch),
            return_mean=float(np.mean([ep.ret for ep in batch])),
            actor_loss=actor_loss,
            critic_loss=critic_loss,
            estimate=float(np.mean(estimate_value(learner, ap, probe))),
        )
        rows.append(row)
        if on_batch is not None:
            on_batch(row)

    estimate = rows[-1].estimate if rows else float(np.mean(estimate_value(learner, ap, probe)))
    if debug is not None:
        debug.log(f"Stage {stage} {phase}: {cfg.episodes} episodes, estimate {estimate:.4f}", category="train")
    return TrainResult(learner, estimate, rows)
