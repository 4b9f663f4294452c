"""The decision loop: state, action, module dispatch, next state.

An episode walks a question-document pair through up to ``step_cap`` free
action choices; answering ends it, narrowing and excision shrink the
context and continue. If no answer was produced within the cap, every other
action is masked and the answer is forced. Rewards are placed according to
the configured mode (one final reward by default, per-step shaped rewards
behind a flag).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .controller import (ActionId, Answered, Excised, Narrowed, Transition,
                         compute_reward, entropy_of)
from .answer import span_nll
from .errors import ContractError, DataError, ExcisionEmptyError
from .metrics import best_f1, exact_match
from .selector import select_top_k
from .subcontext import excise_span
from .tensor import Tensor, pick, log_softmax, suspend_tape
from . import tensor as T
from .text import QAExample, TokenDoc, find_subsequence


@dataclass
class StepRecord:
    """One line of the trajectory log."""
    action: str
    ctx_tokens: int
    reward: float
    span: Optional[tuple[int, int]] = None


@dataclass
class EpisodeResult:
    answer_tokens: list[int]
    trajectory: list[Transition]
    steps: list[StepRecord]
    n_steps: int
    forced: bool
    em: int
    f1: float
    aux_losses: list[Tensor] = field(default_factory=list)
    question_fingerprints: list[bytes] = field(default_factory=list)


@dataclass
class RunMetrics:
    em: float
    f1: float
    action_props: tuple[float, float, float]
    avg_steps: float

    def to_dict(self) -> dict:
        return {"em": self.em, "f1": self.f1,
                "p_answer": self.action_props[0],
                "p_select": self.action_props[1],
                "p_excise": self.action_props[2],
                "avg_steps": self.avg_steps}


def episode_rng(run_seed: int, example_id: str, pass_index: int = 0) -> np.random.Generator:
    """Deterministic per-episode stream derived from (run seed, example id)."""
    key = zlib.crc32(example_id.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence(entropy=run_seed, spawn_key=(key, pass_index)))


def _gold_span_in(ctx: TokenDoc, golds: list[list[int]]) -> Optional[tuple[int, int]]:
    flat = ctx.flat_tokens()
    for gold in golds:
        start = find_subsequence(flat, gold)
        if start is not None:
            return start, start + len(gold) - 1
    return None


def _gold_sentence_in(ctx: TokenDoc, golds: list[list[int]]) -> Optional[int]:
    for i, sent in enumerate(ctx.sentences):
        for gold in golds:
            if find_subsequence(sent, gold) is not None:
                return i
    return None


def action_mask(ctx: TokenDoc, forced: bool, cfg: RunConfig,
                covers_all_span: Optional[bool]) -> np.ndarray:
    """Availability of (answer, select, excise) in the current state."""
    mask = np.ones(3, dtype=bool)
    if forced:
        mask[ActionId.SELECT] = False
        mask[ActionId.EXCISE] = False
        return mask
    if ctx.n_sentences <= 1:
        mask[ActionId.SELECT] = False
    if cfg.disable_excise or ctx.n_tokens <= 1 or covers_all_span:
        mask[ActionId.EXCISE] = False
    return mask


def run_episode(model, example: QAExample, cfg: RunConfig, mode: str,
                rng: Optional[np.random.Generator] = None,
                check_invariants: bool = False) -> EpisodeResult:
    """Play one episode; in train mode the policy samples, in eval it argmaxes.

    The returned trajectory carries live tensors when a tape is active, so
    the caller can turn it into losses; eval runs are pure numpy.
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be train or eval, got {mode!r}")
    train = mode == "train"
    if train and rng is None:
        raise ContractError("train mode needs an rng for action sampling")

    q_enc = model.encode_question(example)
    q_bytes = q_enc.matrix.data.tobytes()
    ctx = example.doc
    k_budget = cfg.k_initial
    trajectory: list[Transition] = []
    raw_rewards: list[float] = []
    steps: list[StepRecord] = []
    aux: list[Tensor] = []
    fingerprints: list[bytes] = []
    prev_token_count = ctx.n_tokens
    answer_tokens: list[int] = []
    forced_answer = False

    for step in range(cfg.step_cap + 1):
        forced = step == cfg.step_cap
        if check_invariants:
            if ctx.n_tokens > prev_token_count:
                raise ContractError("context grew between steps")
            if q_enc.matrix.data.tobytes() != q_bytes:
                raise ContractError("question encoding changed during episode")
        prev_token_count = ctx.n_tokens
        fingerprints.append(q_bytes)

        ctx_enc = model.encode_doc(ctx)

        # cheap pre-check: a span that would cover the whole context makes
        # excision illegal, so mask it before the policy decides
        cached_span = None
        covers_all = False
        if (not forced and not cfg.disable_excise and 1 < ctx.n_tokens <= cfg.max_span_len):
            with suspend_tape():
                cached_span = model.answer(q_enc, ctx_enc).span
            covers_all = (cached_span.start == 0
                          and cached_span.end == ctx.n_tokens - 1)

        mask = action_mask(ctx, forced, cfg, covers_all)
        state = model.state(ctx_enc, q_enc)
        probs_t, logp_t = model.policy(state, action_mask=mask)
        value_t = model.value(state)
        if trajectory:
            trajectory[-1].next_value = value_t

        if train:
            action = ActionId(int(rng.choice(3, p=_renorm(probs_t.data))))
        else:
            action = ActionId(int(np.argmax(probs_t.data)))
        log_prob = pick(logp_t, int(action))
        if train and cfg.entropy_coef > 0.0:
            aux.append(T.mul(entropy_of(probs_t, logp_t), -cfg.entropy_coef))

        if action is ActionId.ANSWER:
            out = model.answer(q_enc, ctx_enc)
            flat = ctx.flat_tokens()
            answer_tokens = flat[out.span.start:out.span.end + 1]
            outcome = Answered(answer_tokens, out.span.start, out.span.end)
            reward = compute_reward(action, outcome, example.gold_answers, ctx, None)
            trajectory.append(Transition(action, log_prob, value_t, reward, None))
            raw_rewards.append(reward)
            steps.append(StepRecord("answer", ctx.n_tokens, reward,
                                    (out.span.start, out.span.end)))
            forced_answer = forced
            if train and cfg.span_loss:
                gold_span = _gold_span_in(ctx, example.gold_answers)
                if gold_span is not None:
                    aux.append(span_nll(out, gold_span[0], gold_span[1]))
            break

        if action is ActionId.SELECT:
            dist = model.sentence_dist(q_enc, ctx)
            new_ctx, kept = select_top_k(dist, ctx, k_budget)
            k_budget = max(1, k_budget - 1)
            outcome = Narrowed(kept)
            reward = compute_reward(action, outcome, example.gold_answers, ctx, new_ctx)
            # selection trains through the policy loss: credit the chosen
            # sentences alongside the action choice itself
            sel_logp = log_softmax(dist.logits, axis=0)
            for i in kept:
                log_prob = T.add(log_prob, pick(sel_logp, i))
            trajectory.append(Transition(action, log_prob, value_t, reward, None))
            raw_rewards.append(reward)
            steps.append(StepRecord("select", ctx.n_tokens, reward))
            if train and cfg.selector_loss:
                gold_sent = _gold_sentence_in(ctx, example.gold_answers)
                if gold_sent is not None:
                    aux.append(T.mul(pick(sel_logp, gold_sent), -1.0))
            ctx = new_ctx
            continue

        # excise: produce a span on the current context and cut it out
        if cached_span is None:
            with suspend_tape():
                cached_span = model.answer(q_enc, ctx_enc).span
        try:
            new_ctx, excision = excise_span(ctx, cached_span.start, cached_span.end)
        except ExcisionEmptyError:
            # refusal: answer directly from the intact context instead,
            # crediting the decision that was actually sampled
            flat = ctx.flat_tokens()
            answer_tokens = flat[cached_span.start:cached_span.end + 1]
            outcome = Answered(answer_tokens, cached_span.start, cached_span.end)
            reward = compute_reward(ActionId.ANSWER, outcome,
                                    example.gold_answers, ctx, None)
            trajectory.append(Transition(ActionId.ANSWER, log_prob, value_t,
                                         reward, None))
            raw_rewards.append(reward)
            steps.append(StepRecord("answer", ctx.n_tokens, reward,
                                    (cached_span.start, cached_span.end)))
            forced_answer = True
            break
        outcome = Excised(excision)
        reward = compute_reward(action, outcome, example.gold_answers, ctx, new_ctx)
        trajectory.append(Transition(action, log_prob, value_t, reward, None))
        raw_rewards.append(reward)
        steps.append(StepRecord("excise", ctx.n_tokens, reward,
                                (cached_span.start, cached_span.end)))
        ctx = new_ctx

    _place_rewards(trajectory, cfg.reward_mode)
    for rec, tr in zip(steps, trajectory):
        rec.reward = tr.reward
    em = exact_match(answer_tokens, example.gold_answers)
    f1 = best_f1(answer_tokens, example.gold_answers) if answer_tokens else 0.0
    result = EpisodeResult(answer_tokens=answer_tokens, trajectory=trajectory,
                           steps=steps, n_steps=len(trajectory),
                           forced=forced_answer, em=em, f1=f1, aux_losses=aux,
                           question_fingerprints=fingerprints)
    if check_invariants:
        _check_episode(result, cfg)
    return result


def _renorm(p: np.ndarray) -> np.ndarray:
    # float32 probabilities do not always sum to exactly 1 for rng.choice
    p = p.astype(np.float64)
    return p / p.sum()


def _place_rewards(trajectory: list[Transition], mode: str) -> None:
    if mode == "shaped":
        return
    # single final reward: intermediate steps get zero, the terminal answer
    # keeps its F1
    for tr in trajectory[:-1]:
        tr.reward = 0.0


def _check_episode(result: EpisodeResult, cfg: RunConfig) -> None:
    if result.n_steps > cfg.step_cap + 1:
        raise ContractError(f"episode ran {result.n_steps} steps")
    answers = [tr for tr in result.trajectory if tr.action is ActionId.ANSWER]
    if len(answers) != 1 or result.trajectory[-1].action is not ActionId.ANSWER:
        raise ContractError("episodes must answer exactly once, at the end")
    if len(set(result.question_fingerprints)) > 1:
        raise ContractError("question fingerprint changed")


def evaluate(model, dataset: list[QAExample], cfg: RunConfig
             ) -> tuple[RunMetrics, list[dict]]:
    """Greedy-policy metrics over a dataset, plus per-example records.

    Episodes are independent and read-only over the parameters, so rollouts
    may run on a thread pool; results do not depend on the thread count.
    """
    if not dataset:
        raise DataError("cannot evaluate an empty dataset")
    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(
                lambda ex: run_episode(model, ex, cfg, "eval"), dataset))
    else:
        results = [run_episode(model, ex, cfg, "eval") for ex in dataset]
    rows = []
    action_counts = np.zeros(3, dtype=np.int64)
    total_steps = 0
    em_sum = 0
    f1_sum = 0.0
    for example, result in zip(dataset, results):
        em_sum += result.em
        f1_sum += result.f1
        total_steps += result.n_steps
        for tr in result.trajectory:
            action_counts[int(tr.action)] += 1
        rows.append({
            "id": example.id,
            "em": result.em,
            "f1": result.f1,
            "n_steps": result.n_steps,
            "actions": "|".join(rec.action for rec in result.steps),
            "steps": [rec.__dict__ for rec in result.steps],
        })
    n = len(dataset)
    props = action_counts / max(1, action_counts.sum())
    metrics = RunMetrics(em=em_sum / n, f1=f1_sum / n,
                         action_props=(float(props[0]), float(props[1]),
                                       float(props[2])),
                         avg_steps=total_steps / n)
    return metrics, rows
