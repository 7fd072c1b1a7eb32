"""PPO agent over masked discrete decision events.

One shared policy serves every bus: each time a bus is ready to depart it
gets the current observation and legal-action mask, samples an action, and
the reward accrued until the next decision (of any bus) is credited to that
step. Advantages use GAE over this global decision stream; updates are the
standard clipped surrogate with a value head and an entropy bonus, all on
the in-repo MLP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import environment as env
from .nets import (
    AdamState,
    GradientError,
    MlpParams,
    adam_step,
    backward,
    entropy_and_grad,
    forward,
    init_mlp,
    masked_log_softmax,
    masked_softmax,
)
from .randomization import DRConfig, draw_episode

NUM_ACTIONS = 14


@dataclass(frozen=True)
class PPOHyper:
    """PPO knobs; defaults follow common practice for small MLP policies."""

    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    lr: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    reward_scale: float = 0.05    # rewards are avg-delay magnitudes (tens of seconds)
    normalize_advantages: bool = True


def init_policy(config: env.EnvConfig, hyper: PPOHyper, rng: np.random.Generator) -> MlpParams:
    """Policy net: shared trunk, 14 action logits plus one value output."""
    sizes = (env.observation_size(config),) + hyper.hidden + (NUM_ACTIONS + 1,)
    return init_mlp(sizes, rng, activation=hyper.activation)


@dataclass(frozen=True)
class PolicyOutput:
    probs: np.ndarray     # length 14, exactly 0 on masked actions
    log_probs: np.ndarray
    value: float


def policy_forward(params: MlpParams, observation: np.ndarray, mask: np.ndarray) -> PolicyOutput:
    """Masked action distribution and state value for one observation."""
    out, _ = forward(params, observation)
    logits, value = out[:NUM_ACTIONS], out[NUM_ACTIONS]
    log_probs = masked_log_softmax(logits, mask)
    probs = np.where(mask, np.exp(log_probs), 0.0)
    return PolicyOutput(probs=probs, log_probs=log_probs, value=float(value))


def sample_action(output: PolicyOutput, rng: np.random.Generator) -> int:
    # Renormalize to guard against float drift; masked entries are exact zeros.
    p = output.probs / output.probs.sum()
    return int(rng.choice(NUM_ACTIONS, p=p))


@dataclass
class RolloutBuffer:
    """Trajectory columns for one PPO update, advantages filled post-hoc."""

    observations: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    final_value: float = 0.0      # bootstrap when the rollout was cut mid-episode
    episode_rewards: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else 0.0


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets for the buffer."""
    rewards = np.asarray(buffer.rewards)
    values = np.asarray(buffer.values)
    dones = np.asarray(buffer.dones, dtype=bool)
    n = len(rewards)
    advantages = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        next_value = buffer.final_value if t == n - 1 else values[t + 1]
        if dones[t]:
            next_value = 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * lam * gae * (0.0 if dones[t] else 1.0)
        advantages[t] = gae
    return advantages, advantages + values


def collect_rollout(config: env.EnvConfig, params: MlpParams, lesson, dr_cfg: DRConfig,
                    horizon: int, seed: int, hyper: PPOHyper,
                    action_fn=None) -> RolloutBuffer:
    """Gather ``horizon`` decision steps, resetting episodes as they end.

    Every episode reuses the active lesson but gets a fresh seed and a fresh
    domain-randomization draw, all derived from ``seed``. ``action_fn`` (an
    ``(event, rng) -> action`` callable) replaces the network policy for
    scripted baselines and debugging.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    root = np.random.SeedSequence(seed)
    action_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
    dr_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))

    buffer = RolloutBuffer()
    episode = 0
    state = None
    snapshot = None
    episode_reward = 0.0

    scale = hyper.reward_scale

    while len(buffer) < horizon:
        if state is None:
            draw = draw_episode(dr_cfg, dr_rng)
            state = env.reset(config, lesson, draw, seed=seed * 1_000_003 + episode)
            episode += 1
            episode_reward = 0.0
            state, event = env.step_until_decision(state)
            if isinstance(event, env.EpisodeEnd):
                state = None
                continue
            snapshot = state.counters()

        obs, mask = event.observation, event.mask
        if action_fn is not None:
            action = int(action_fn(event, action_rng))
            output = policy_forward(params, obs, mask)
        else:
            output = policy_forward(params, obs, mask)
            action = sample_action(output, action_rng)

        env.apply_action(state, event, action)
        state, next_event = env.step_until_decision(state)
        reward = env.compute_reward(snapshot, state) * scale
        episode_reward += reward
        done = isinstance(next_event, env.EpisodeEnd)

        buffer.observations.append(obs)
        buffer.masks.append(mask)
        buffer.actions.append(action)
        buffer.log_probs.append(output.log_probs[action])
        buffer.rewards.append(reward)
        buffer.values.append(output.value)
        buffer.dones.append(done)

        if done:
            buffer.episode_rewards.append(episode_reward)
            state = None
        else:
            snapshot = state.counters()
            event = next_event

    if state is not None and not buffer.dones[-1]:
        buffer.final_value = policy_forward(params, event.observation, event.mask).value
    return buffer


@dataclass
class PPODiagnostics:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


def ppo_update(params: MlpParams, buffer: RolloutBuffer, hyper: PPOHyper,
               rng: np.random.Generator, opt_state: AdamState | None = None
               ) -> tuple[MlpParams, PPODiagnostics]:
    """Clipped-surrogate PPO epochs over the buffer; params update in place.

    Raises :class:`GradientError` if the loss goes non-finite, leaving the
    caller to abort with diagnostics rather than train on garbage.
    """
    if len(buffer) == 0:
        raise ValueError("empty rollout buffer")
    if opt_state is None:
        opt_state = AdamState.for_params(params)

    obs = np.asarray(buffer.observations)
    masks = np.asarray(buffer.masks, dtype=bool)
    actions = np.asarray(buffer.actions)
    old_log_probs = np.asarray(buffer.log_probs)
    advantages, returns = compute_gae(buffer, hyper.gamma, hyper.gae_lambda)
    if hyper.normalize_advantages and len(buffer) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    n = len(buffer)
    stats = {"policy": [], "value": [], "entropy": [], "kl": [], "clip": []}

    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.minibatch):
            idx = order[start : start + hyper.minibatch]
            mb_obs = obs[idx]
            mb_mask = masks[idx]
            mb_act = actions[idx]
            mb_adv = advantages[idx]
            mb_ret = returns[idx]
            mb_old = old_log_probs[idx]
            b = len(idx)

            out, cache = forward(params, mb_obs)
            logits, values = out[:, :NUM_ACTIONS], out[:, NUM_ACTIONS]
            log_probs = masked_log_softmax(logits, mb_mask)
            probs = np.where(mb_mask, np.exp(log_probs), 0.0)
            lp_act = log_probs[np.arange(b), mb_act]

            ratio = np.exp(lp_act - mb_old)
            unclipped = ratio * mb_adv
            clipped = np.clip(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * mb_adv
            surrogate = np.minimum(unclipped, clipped)
            value_err = values - mb_ret
            entropy, d_ent = entropy_and_grad(probs)

            policy_loss = -surrogate.mean()
            value_loss = 0.5 * (value_err ** 2).mean()
            loss = policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * entropy.mean()
            if not np.isfinite(loss):
                raise GradientError(f"non-finite PPO loss {loss}")

            # d(surrogate)/d(logp) = A*ratio while the clip is slack, 0 once
            # the ratio reaches the clip boundary on its advantage's side; a
            # degenerate clip range therefore freezes the policy entirely.
            saturated = np.where(
                mb_adv >= 0,
                ratio >= 1.0 + hyper.clip_eps,
                ratio <= 1.0 - hyper.clip_eps,
            )
            d_lp = np.where(saturated, 0.0, ratio * mb_adv) / b

            grad_out = np.zeros_like(out)
            one_hot = np.zeros((b, NUM_ACTIONS))
            one_hot[np.arange(b), mb_act] = 1.0
            grad_out[:, :NUM_ACTIONS] = (
                -d_lp[:, None] * (one_hot - probs)
                - (hyper.entropy_coef / b) * d_ent
            )
            grad_out[:, NUM_ACTIONS] = hyper.value_coef * value_err / b

            d_w, d_b = backward(params, cache, grad_out)
            adam_step(params, d_w, d_b, opt_state, hyper.lr)

            stats["policy"].append(policy_loss)
            stats["value"].append(value_loss)
            stats["entropy"].append(entropy.mean())
            stats["kl"].append(float(np.mean(mb_old - lp_act)))
            stats["clip"].append(float(np.mean(~active)))

    diagnostics = PPODiagnostics(
        policy_loss=float(np.mean(stats["policy"])),
        value_loss=float(np.mean(stats["value"])),
        entropy=float(np.mean(stats["entropy"])),
        approx_kl=float(np.mean(stats["kl"])),
        clip_fraction=float(np.mean(stats["clip"])),
    )
    return params, diagnostics


def evaluate_policy(config: env.EnvConfig, params: MlpParams | None, lesson,
                    dr_cfg: DRConfig, episodes: int, seed: int,
                    hyper: PPOHyper | None = None, action_fn=None) -> float:
    """Mean total episode reward under the (stochastic) policy.

    Rewards here are unscaled sim rewards, summed per episode and averaged
    over ``episodes`` seeded episodes.
    """
    root = np.random.SeedSequence(seed)
    action_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
    dr_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
    totals = []
    for ep in range(episodes):
        draw = draw_episode(dr_cfg, dr_rng)
        state = env.reset(config, lesson, draw, seed=seed * 7_919 + ep)
        state, event = env.step_until_decision(state)
        total = 0.0
        snapshot = state.counters()
        while not isinstance(event, env.EpisodeEnd):
            if action_fn is not None:
                action = int(action_fn(event, action_rng))
            else:
                output = policy_forward(params, event.observation, event.mask)
                action = sample_action(output, action_rng)
            env.apply_action(state, event, action)
            state, event = env.step_until_decision(state)
            total += env.compute_reward(snapshot, state)
            if not isinstance(event, env.EpisodeEnd):
                snapshot = state.counters()
        totals.append(total)
    return float(np.mean(totals))


def random_legal_action(event, rng: np.random.Generator) -> int:
    legal = np.flatnonzero(event.mask)
    return int(legal[rng.integers(len(legal))])


def hold_zero_action(event, rng: np.random.Generator) -> int:
    return 0
