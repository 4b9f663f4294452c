"""A three-armed bandit that isolates the actor-critic update rule.

States are random rows, rewards depend on the action only: one target arm
pays 1.0, the others 0.0 (or all arms pay 1.0 in the symmetric control).
If the losses and optimizer are wired correctly the policy must saturate on
the target arm and the critic must approach the optimal expected reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import (Transition, actor_critic_update, actor_policy,
                         create_controller_params, critic_value)
from .params import ParamStore
from .tensor import Tape, Tensor, add, pick


@dataclass
class BanditReport:
    target_action: int
    final_target_prob: float
    final_value: float
    updates_to_threshold: int      # -1 when the threshold was never reached
    final_probs: tuple[float, float, float]
    prob_history: list[float] = field(default_factory=list)


def run_bandit_check(seed: int, updates: int = 2000, gamma: float = 0.9,
                     d_model: int = 8, gru_size: int = 12,
                     ctx_rows: int = 3, symmetric: bool = False,
                     threshold: float = 0.95, rho: float = 0.95,
                     eps: float = 1e-6) -> BanditReport:
    """Train actor and critic on the bandit; report convergence statistics."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0xBA4D17,)))
    store = ParamStore(rho=rho, eps=eps)
    create_controller_params(store, d_model, gru_size, rng)
    target = int(seed) % 3
    probe_states = [rng.normal(0.0, 1.0, size=(ctx_rows, d_model))
                    for _ in range(8)]

    def probe_prob() -> float:
        vals = []
        for s in probe_states:
            probs, _ = actor_policy(Tensor(s), store, gru_size)
            vals.append(float(probs.data[target]))
        return float(np.mean(vals))

    history = []
    reached = -1
    for update in range(updates):
        state_data = rng.normal(0.0, 1.0, size=(ctx_rows, d_model))
        with Tape() as tape:
            state = Tensor(state_data)
            probs, logp = actor_policy(state, store, gru_size)
            value = critic_value(state, store, gru_size)
            p = probs.data.astype(np.float64)
            action = int(rng.choice(3, p=p / p.sum()))
            reward = 1.0 if (symmetric or action == target) else 0.0
            traj = [Transition(action, pick(logp, action), value, reward, None)]
            loss_actor, loss_critic, _ = actor_critic_update(traj, gamma)
            tape.backward(add(loss_actor, loss_critic))
        store.apply_gradients()
        if (update + 1) % 50 == 0:
            prob = probe_prob()
            history.append(prob)
            if reached < 0 and prob > threshold:
                reached = update + 1

    final_probs = np.zeros(3)
    final_value = 0.0
    for s in probe_states:
        probs, _ = actor_policy(Tensor(s), store, gru_size)
        final_probs += probs.data / len(probe_states)
        final_value += float(critic_value(Tensor(s), store, gru_size).item()) / len(probe_states)
    return BanditReport(
        target_action=target,
        final_target_prob=float(final_probs[target]),
        final_value=final_value,
        updates_to_threshold=reached,
        final_probs=tuple(float(x) for x in final_probs),
        prob_history=history,
    )
