"""Self-contained oracle suite behind the ``check`` command.

Every check pits a fast implementation against an independent slow oracle:
reverse-mode gradients against central finite differences, top-K against a
full sort, span decoding against exhaustive pair enumeration, excision
against a flat splice, the attention products against dense loops, and the
update rule against a bandit with a known optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .answer import decode_span
from .bandit import run_bandit_check
from .config import RunConfig
from .controller import Transition, actor_critic_update
from .encoder import Encoded
from .errors import ContractError
from .model import QaModel
from .nn import gru_params, gru_step, run_gru
from .params import ParamStore
from .selector import top_k_indices
from .subcontext import excise_span
from .tensor import Tape, Tensor, using_dtype
from .text import QAExample, TokenDoc, Vocab

REL_TOL = 1e-3
ABS_TOL = 1e-5
FD_STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}"


def finite_diff_grads(loss_fn: Callable[[], Tensor], params: list[Tensor],
                      h: float = FD_STEP,
                      max_coords: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None) -> list[dict]:
    """Central-difference gradients vs tape gradients, per parameter.

    Returns one record per parameter with the worst absolute/relative
    mismatch over the probed coordinates. ``loss_fn`` must rebuild the loss
    from current parameter values on every call.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    reports = []
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        worst = 0.0
        ok = True
        for c in coords:
            saved = flat[c]
            flat[c] = saved + h
            up = float(loss_fn().item())
            flat[c] = saved - h
            down = float(loss_fn().item())
            flat[c] = saved
            numeric = (up - down) / (2.0 * h)
            a = float(analytic.reshape(-1)[c])
            err = abs(a - numeric)
            tol = max(REL_TOL * abs(numeric), ABS_TOL)
            worst = max(worst, err - tol)
            if err > tol:
                ok = False
        reports.append({"param": getattr(p, "name", ""), "ok": ok,
                        "worst_excess": worst})
        p.grad = None
    return reports


def _gradcheck(loss_fn, params, **kw) -> bool:
    return all(r["ok"] for r in finite_diff_grads(loss_fn, params, **kw))


def check_gradient_ops(seed: int = 0, seeds_per_op: int = 10) -> CheckResult:
    """Finite-difference every primitive and composite op, reporting the
    first op whose gradient disagrees."""
    failures = []
    with using_dtype(np.float64):
        for case in range(seeds_per_op):
            rng = np.random.default_rng(seed * 1000 + case)
            for name, fn in _op_cases(rng):
                if not fn():
                    failures.append(f"{name}[case {case}]")
    if failures:
        return CheckResult("gradient_ops", False,
                           f"mismatch in {failures[0]} (+{len(failures) - 1} more)")
    return CheckResult("gradient_ops", True,
                       f"{seeds_per_op} seeded cases per op matched finite differences")


def _op_cases(rng: np.random.Generator):
    """(name, runner) pairs; each runner returns True when gradients match."""

    def tparam(*shape):
        return Tensor(rng.normal(0, 1, shape), requires_grad=True)

    def case_matmul():
        a, b = tparam(3, 4), tparam(4, 2)
        return _gradcheck(lambda: T.reduce_sum(T.matmul(a, b)), [a, b])

    def case_conv1d():
        x, w = tparam(5, 3), tparam(3, 3, 2)
        return _gradcheck(lambda: T.reduce_sum(T.square(T.conv1d(x, w))), [x, w])

    def case_softmax():
        x = tparam(4, 5)
        mask = np.array([True, True, True, False, True])
        return _gradcheck(
            lambda: T.reduce_sum(T.square(T.softmax(x, axis=1, mask=mask[None, :]))),
            [x])

    def case_log_softmax():
        x = tparam(6)
        return _gradcheck(lambda: T.pick(T.log_softmax(x, axis=0), 2), [x])

    def case_elementwise():
        x = tparam(3, 3)
        return _gradcheck(
            lambda: T.reduce_sum(T.mul(T.tanh(x), T.sigmoid(T.relu(x)))), [x])

    def case_reduce_max():
        x = tparam(4, 6)
        return _gradcheck(lambda: T.reduce_sum(T.reduce_max(x, axis=1)), [x])

    def case_embedding():
        table = tparam(7, 4)
        ids = rng.integers(0, 7, size=5)
        return _gradcheck(
            lambda: T.reduce_sum(T.square(T.embedding(table, ids))), [table])

    def case_gru():
        store = ParamStore()
        grurng = np.random.default_rng(rng.integers(1 << 31))
        from .nn import create_gru
        create_gru(store, "g", 3, 4, grurng)
        seq = Tensor(grurng.normal(0, 1, (4, 3)))
        params = [store[n] for n in store.names()]
        return _gradcheck(
            lambda: T.reduce_sum(run_gru(seq, gru_params(store, "g"), 4)), params)

    return [("matmul", case_matmul), ("conv1d", case_conv1d),
            ("softmax", case_softmax), ("log_softmax", case_log_softmax),
            ("elementwise", case_elementwise), ("reduce_max", case_reduce_max),
            ("embedding", case_embedding), ("gru", case_gru)]


def tiny_config(**overrides) -> RunConfig:
    """A configuration small enough for oracle and gradient runs."""
    base = dict(d1=8, d2=6, d_model=8, d_f=8, k_s=3, n_heads=2, char_width=6,
                sel_kernel=3, sel_filters=6, gru_size=6, max_span_len=4,
                max_state_tokens=16, batch_size=2, updates=1, eval_every=0)
    base.update(overrides)
    return RunConfig(**base)


def tiny_example(rng: np.random.Generator, vocab: Vocab,
                 n_sentences: int = 3, tokens_per_sentence: int = 4,
                 q_len: int = 2) -> QAExample:
    n_words = vocab.n_words

    def ids(k):
        return [int(i) for i in rng.integers(3, n_words, size=k)]

    sentences = [ids(tokens_per_sentence) for _ in range(n_sentences)]
    doc = TokenDoc(
        sentences=sentences,
        char_ids=[[vocab.char_ids(vocab.word(t)) for t in s] for s in sentences],
        source_spans=[[(si, ti) for ti in range(len(s))]
                      for si, s in enumerate(sentences)],
    )
    q = ids(q_len)
    gold = list(sentences[0][:2])
    return QAExample("toy-0", doc, q, [vocab.char_ids(vocab.word(t)) for t in q],
                     [gold])


def toy_vocab(n_words: int = 30, char_width: int = 6) -> Vocab:
    words = [f"w{i}" for i in range(n_words)]
    return Vocab(words, list("w0123456789"), char_width=char_width)


def end_to_end_loss(model: QaModel, example: QAExample,
                    frozen_deltas: Optional[list[float]] = None,
                    frozen_kept: Optional[list[int]] = None
                    ) -> tuple[Tensor, list[float], list[int]]:
    """One full decision-step loss with a pinned action path.

    Covers every module: encoder, sentence scorer, span extractor, both
    GRUs, the policy and value heads, and all three loss families. Freeze
    the advantage weights and the narrowed sentence set when
    differentiating numerically: the advantage is a constant by contract,
    and the selection is a discrete choice the loss conditions on.
    """
    from .selector import SentenceDist, select_top_k
    from .answer import span_nll
    from .episode import _gold_span_in

    cfg = model.cfg
    q_enc = model.encode_question(example)
    ctx = example.doc
    ctx_enc = model.encode_doc(ctx)
    state = model.state(ctx_enc, q_enc)
    probs, logp = model.policy(state)
    value = model.value(state)

    dist = model.sentence_dist(q_enc, ctx)
    if frozen_kept is not None:
        pinned = np.zeros_like(dist.probs)
        pinned[frozen_kept] = 1.0 / len(frozen_kept)
        dist = SentenceDist(probs=pinned, logits=dist.logits)
    narrowed, kept = select_top_k(dist, ctx, 2)
    sel_logp = T.log_softmax(dist.logits, axis=0)
    log_prob = T.pick(logp, 1)
    for i in kept:
        log_prob = T.add(log_prob, T.pick(sel_logp, i))

    ctx2_enc = model.encode_doc(narrowed)
    state2 = model.state(ctx2_enc, q_enc)
    logp2 = model.policy(state2)[1]
    value2 = model.value(state2)
    out = model.answer(q_enc, ctx2_enc)

    from .controller import ActionId
    traj = [
        Transition(ActionId.SELECT, log_prob, value, 0.0, value2),
        Transition(ActionId.ANSWER, T.pick(logp2, 0), value2, 0.7, None),
    ]
    loss_actor, loss_critic, deltas = actor_critic_update(
        traj, cfg.gamma, frozen_deltas=frozen_deltas)
    loss = T.add(loss_actor, loss_critic)
    gold = _gold_span_in(narrowed, example.gold_answers)
    if gold is None:
        gold = (0, 0)
    loss = T.add(loss, span_nll(out, gold[0], gold[1]))
    return loss, deltas, kept


def check_gradient_end_to_end(seed: int = 0, max_coords: int = 6) -> CheckResult:
    with using_dtype(np.float64):
        vocab = toy_vocab()
        cfg = tiny_config(seed=seed)
        model = QaModel(cfg, vocab, seed=seed)
        rng = np.random.default_rng(seed + 17)
        example = tiny_example(rng, vocab)
        params = [model.store[n] for n in model.store.names()]
        # pin the discrete pieces: advantage weights are constants by
        # contract, and the selected sentence set is conditioned on.
        # the small step keeps central differences off relu kinks
        _, deltas, kept = end_to_end_loss(model, example)
        reports = finite_diff_grads(
            lambda: end_to_end_loss(model, example, frozen_deltas=deltas,
                                    frozen_kept=kept)[0],
            params, h=1e-5, max_coords=max_coords, rng=rng)
    named = list(zip(model.store.names(), reports))
    bad = [n for n, r in named if not r["ok"]]
    if bad:
        return CheckResult("gradient_end_to_end", False,
                           f"gradient mismatch in {bad[:3]}")
    return CheckResult("gradient_end_to_end", True,
                       f"{len(params)} parameters matched finite differences")


def check_topk(seed: int = 0, cases: int = 1000) -> CheckResult:
    rng = np.random.default_rng(seed)
    for case in range(cases):
        n = int(rng.integers(1, 12))
        probs = rng.dirichlet(np.ones(n))
        k = int(rng.integers(1, n + 2))
        got = top_k_indices(probs, k)
        # oracle: stable full sort by (-p, index)
        want = sorted(sorted(range(n), key=lambda i: (-probs[i], i))[:min(k, n)])
        if got != want:
            return CheckResult("topk", False, f"case {case}: {got} != {want}")
    return CheckResult("topk", True, f"{cases} random distributions matched full sort")


def check_excision(seed: int = 0, cases: int = 1000) -> CheckResult:
    rng = np.random.default_rng(seed)
    for case in range(cases):
        n_sent = int(rng.integers(1, 6))
        lens = [int(rng.integers(1, 6)) for _ in range(n_sent)]
        total = sum(lens)
        if total < 2:
            continue
        tokens = [int(t) for t in rng.integers(3, 50, size=total)]
        sentences = []
        pos = 0
        for ln in lens:
            sentences.append(tokens[pos:pos + ln])
            pos += ln
        doc = TokenDoc(
            sentences=sentences,
            char_ids=[[[1]] * ln for ln in lens],
            source_spans=[[(si, ti) for ti in range(ln)]
                          for si, ln in enumerate(lens)],
        )
        start = int(rng.integers(0, total))
        end = int(rng.integers(start, total))
        if end - start + 1 >= total:
            continue
        got, _ = excise_span(doc, start, end)
        want = tokens[:start] + tokens[end + 1:]
        if got.flat_tokens() != want:
            return CheckResult("excision", False,
                               f"case {case}: tokens {got.flat_tokens()} != {want}")
    return CheckResult("excision", True,
                       f"{cases} random splices matched the flat-delete oracle")


def check_span_decode(seed: int = 0, cases: int = 500) -> CheckResult:
    rng = np.random.default_rng(seed)
    for case in range(cases):
        n = int(rng.integers(1, 20))
        p_s = rng.dirichlet(np.ones(n))
        p_e = rng.dirichlet(np.ones(n))
        max_len = int(rng.integers(1, n + 3))
        got = decode_span(p_s, p_e, max_len)
        best, want = -1.0, (0, 0)
        for i in range(n):
            for j in range(i, min(n, i + max_len)):
                if p_s[i] * p_e[j] > best:
                    best, want = p_s[i] * p_e[j], (i, j)
        if got != want:
            return CheckResult("span_decode", False,
                               f"case {case}: {got} != {want}")
    return CheckResult("span_decode", True,
                       f"{cases} cases matched exhaustive pair enumeration")


def check_trilinear(seed: int = 0, cases: int = 50) -> CheckResult:
    from .answer import trilinear_similarity
    rng = np.random.default_rng(seed)
    for case in range(cases):
        n, m, d = int(rng.integers(1, 6)), int(rng.integers(1, 5)), 4
        q = Encoded(Tensor(rng.normal(0, 1, (m, d))), np.ones(m, dtype=bool))
        dd = Encoded(Tensor(rng.normal(0, 1, (n, d))), np.ones(n, dtype=bool))
        w = Tensor(rng.normal(0, 1, 3 * d))
        got = trilinear_similarity(q, dd, w).data
        want = np.zeros((n, m))
        for i in range(n):
            for j in range(m):
                qv, dv = q.matrix.data[j], dd.matrix.data[i]
                feat = np.concatenate([qv, dv, qv * dv])
                want[i, j] = float(w.data @ feat)
        if not np.allclose(got, want, atol=1e-5):
            return CheckResult("trilinear", False, f"case {case} mismatch")
    return CheckResult("trilinear", True, f"{cases} cases matched the loop oracle")


def check_attention_b(seed: int = 0, cases: int = 50) -> CheckResult:
    from .answer import context_query_attention
    rng = np.random.default_rng(seed)
    for case in range(cases):
        n, m, d = int(rng.integers(1, 6)), int(rng.integers(1, 5)), 4
        q = Encoded(Tensor(rng.normal(0, 1, (m, d))), np.ones(m, dtype=bool))
        dd = Encoded(Tensor(rng.normal(0, 1, (n, d))), np.ones(n, dtype=bool))
        s = Tensor(rng.normal(0, 1, (n, m)))
        pair = context_query_attention(s, q, dd)

        def naive_softmax(x, axis):
            e = np.exp(x - x.max(axis=axis, keepdims=True))
            return e / e.sum(axis=axis, keepdims=True)

        s_row = naive_softmax(s.data, 1)
        s_col = naive_softmax(s.data, 0)
        want_a = s_row @ q.matrix.data
        want_b = s_row @ s_col.T @ dd.matrix.data
        if not (np.allclose(pair.a.data, want_a, atol=1e-5)
                and np.allclose(pair.b.data, want_b, atol=1e-5)):
            return CheckResult("attention_b", False, f"case {case} mismatch")
    return CheckResult("attention_b", True,
                       f"{cases} cases matched the dense three-matrix product")


def check_bandit(seed: int = 0) -> CheckResult:
    report = run_bandit_check(seed, updates=2000)
    ok = (report.final_target_prob > 0.95
          and abs(report.final_value - 1.0) < 0.1)
    detail = (f"target prob {report.final_target_prob:.3f}, "
              f"critic {report.final_value:.3f}, "
              f"reached threshold at update {report.updates_to_threshold}")
    return CheckResult("bandit", ok, detail)


ALL_CHECKS: dict[str, Callable[..., CheckResult]] = {
    "gradient_ops": check_gradient_ops,
    "gradient_end_to_end": check_gradient_end_to_end,
    "topk": check_topk,
    "excision": check_excision,
    "span_decode": check_span_decode,
    "trilinear": check_trilinear,
    "attention_b": check_attention_b,
    "bandit": check_bandit,
}


def run_checks(only: Optional[str] = None, seed: int = 0) -> list[CheckResult]:
    if only is not None and only not in ALL_CHECKS:
        raise ContractError(f"unknown check {only!r}; "
                            f"available: {sorted(ALL_CHECKS)}")
    names = [only] if only else list(ALL_CHECKS)
    return [ALL_CHECKS[name](seed=seed) for name in names]
