"""Acceptance gate: quantitative fixtures and properties the toolkit must
satisfy end to end. Each test prints a single summary line on success."""

import json
import time

import numpy as np

from edgeprobe import core
from edgeprobe.alignment import (
    AlignmentMatrix,
    align_tokens,
    compose,
    moses_like_tokenize,
    project_span,
)
from edgeprobe.cli import main
from edgeprobe.core import Span, Target
from edgeprobe.encoders import ActivationSet, CnnParameters, cnn_encode, orthonormalize
from edgeprobe.evaluation import (
    ConfusionCounts,
    micro_f1,
    normal_ci,
    span_distance,
    stratify_by_distance,
)
from edgeprobe.pipeline import prepare_items
from edgeprobe.probe import (
    ProbeConfig,
    evaluate_probs,
    forward_backward,
    init_params,
    micro_f1_at_threshold,
    predict,
    train_probe,
)
from edgeprobe.synthetic import make_synthetic_task

NATIVE = ["I", "do", "n't", "like", "pineapples", "."]
SUBWORD = ["_i", "_do", "_n", "'t", "_like", "_pinea", "pples", "."]


def test_projection_golden():
    start = time.time()
    moses = moses_like_tokenize("I don't like pineapples.")
    a_moses = align_tokens(NATIVE, moses)
    assert project_span(Span(4, 5), a_moses) == Span(5, 6)
    a_sub = align_tokens(NATIVE, SUBWORD)
    assert project_span(Span(4, 5), a_sub) == Span(5, 7)
    elapsed = time.time() - start
    assert elapsed < 1.0
    print(f"PASS projection golden: moses [5,6), subword [5,7) in {elapsed:.3f}s")


def test_composition_brute_force():
    start = time.time()
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        nt, nb_t, nb_s, ns = rng.integers(1, 21, size=4)
        u = AlignmentMatrix.from_dense(rng.random((nt, nb_t)) < 0.25)
        a = AlignmentMatrix.from_dense(rng.random((nb_t, nb_s)) < 0.25)
        v = AlignmentMatrix.from_dense(rng.random((ns, nb_s)) < 0.25)
        got = compose(u, a, v).to_dense()
        want = (u.to_dense().astype(int)
                @ a.to_dense().astype(int)
                @ v.to_dense().astype(int).T) > 0
        mismatches += int(not np.array_equal(got, want))
    elapsed = time.time() - start
    assert mismatches == 0
    assert elapsed < 5.0
    print(f"PASS composition: 0/1000 mismatches in {elapsed:.3f}s")


def _fd_max_rel(config, seed, h=1e-3):
    rng = np.random.default_rng(seed)
    params = {k: v.astype(np.float64) for k, v in init_params(config, seed).items()}
    batch = []
    for _ in range(2):
        n_tokens = int(rng.integers(4, 9))
        acts = rng.normal(size=(config.n_layers, n_tokens, config.input_dim))
        targets = []
        for _ in range(2):
            s1 = int(rng.integers(0, n_tokens))
            e1 = int(rng.integers(s1 + 1, n_tokens + 1))
            span2 = None
            if config.two_span:
                s2 = int(rng.integers(0, n_tokens))
                span2 = Span(s2, int(rng.integers(s2 + 1, n_tokens + 1)))
            y = (rng.random(config.n_labels) < 0.5).astype(np.float64)
            targets.append((Span(s1, e1), span2, y))
        batch.append((acts, targets))
    _, _, grads = forward_backward(batch, params, config)
    worst = 0.0
    for name, g in grads.items():
        flat_g = g.ravel()
        flat_p = params[name].ravel()
        n = len(flat_p)
        idxs = range(n) if n <= 12 else rng.choice(n, size=12, replace=False)
        for i in idxs:
            orig = flat_p[i]
            flat_p[i] = orig + h
            lp, _, _ = forward_backward(batch, params, config, compute_grads=False)
            flat_p[i] = orig - h
            lm, _, _ = forward_backward(batch, params, config, compute_grads=False)
            flat_p[i] = orig
            fd = (lp - lm) / (2 * h)
            diff = abs(fd - flat_g[i])
            if diff < 1e-9:  # below FD truncation noise
                continue
            worst = max(worst, diff / max(abs(fd) + abs(flat_g[i]), 1e-8))
    return worst


def test_gradient_finite_differences():
    start = time.time()
    configs = [
        ProbeConfig(input_dim=8, n_labels=3, two_span=False,
                    projection_dim=8, mlp_hidden_dim=8),
        ProbeConfig(input_dim=8, n_labels=3, two_span=True,
                    projection_dim=8, mlp_hidden_dim=8),
        ProbeConfig(input_dim=6, n_labels=4, two_span=False, projection_dim=8,
                    mlp_hidden_dim=8, encoder_mode="mix", n_layers=3),
        ProbeConfig(input_dim=6, n_labels=2, two_span=True, projection_dim=6,
                    mlp_hidden_dim=6, encoder_mode="mix", n_layers=2),
        ProbeConfig(input_dim=6, n_labels=3, two_span=False, projection_dim=8,
                    mlp_hidden_dim=8, encoder_mode="cnn", cnn_k=1),
        ProbeConfig(input_dim=5, n_labels=2, two_span=False, projection_dim=6,
                    mlp_hidden_dim=6, encoder_mode="cnn", cnn_k=2),
    ]
    worst = 0.0
    for seed, config in enumerate(configs, start=100):
        worst = max(worst, _fd_max_rel(config, seed))
    elapsed = time.time() - start
    assert worst < 1e-4, f"max relative gradient error {worst}"
    assert elapsed < 30.0
    print(f"PASS gradients: max relative error {worst:.2e} in {elapsed:.1f}s")


def test_span_locality():
    start = time.time()
    config = ProbeConfig(input_dim=8, n_labels=4, two_span=True,
                         projection_dim=16, mlp_hidden_dim=16)
    params = init_params(config, 0)
    rng = np.random.default_rng(1)
    acts = rng.normal(size=(1, 12, 8)).astype(np.float32)
    span1, span2 = Span(2, 4), Span(7, 9)
    inside = set(range(2, 4)) | set(range(7, 9))
    outside = [t for t in range(12) if t not in inside]
    base = predict(params, config, acts, span1, span2)
    checked = 0
    while checked < 100:
        t = outside[int(rng.integers(0, len(outside)))]
        noisy = acts.copy()
        noisy[0, t] += rng.normal(size=8).astype(np.float32) * 10.0
        out = predict(params, config, noisy, span1, span2)
        assert np.array_equal(out, base)
        checked += 1
    elapsed = time.time() - start
    assert elapsed < 5.0
    print(f"PASS span locality: 100/100 perturbations bit-identical in {elapsed:.2f}s")


def test_cnn_receptive_field():
    start = time.time()
    rng = np.random.default_rng(2)
    trials = 0
    for k in (1, 2):
        params = CnnParameters.init(k, in_dim=6, out_dim=8, rng=rng)
        for _ in range(50):
            n = int(rng.integers(2 * k + 2, 12))
            x = rng.normal(size=(1, n, 6)).astype(np.float32)
            base = cnn_encode(ActivationSet(x), params).data[0]
            j = int(rng.integers(0, n))
            bumped = x.copy()
            bumped[0, j] += rng.normal(size=6).astype(np.float32)
            out = cnn_encode(ActivationSet(bumped), params).data[0]
            changed = np.any(out != base, axis=1)
            for i in range(n):
                assert changed[i] == (abs(i - j) <= k), (k, i, j)
            trials += 1
    elapsed = time.time() - start
    assert elapsed < 5.0
    print(f"PASS CNN receptive field: {trials} trials exact in {elapsed:.2f}s")


def test_orthonormality():
    start = time.time()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 65))
        q = orthonormalize(rng.normal(size=(n, n)))
        worst = max(worst, float(np.abs(q.T @ q - np.eye(n)).max()))
    elapsed = time.time() - start
    assert worst < 1e-5
    assert elapsed < 5.0
    print(f"PASS orthonormality: max deviation {worst:.2e} in {elapsed:.2f}s")


def test_micro_f1_oracle():
    start = time.time()
    fixture = ConfusionCounts(labels=["a"], tp={"a": 2}, fp={"a": 1}, fn={"a": 1})
    assert micro_f1(fixture) == 2.0 / 3.0
    rng = np.random.default_rng(4)
    probs = rng.random((10000, 3))
    golds = (rng.random((10000, 3)) < 0.35).astype(np.float64)
    got = micro_f1_at_threshold(probs, golds)
    tp = fp = fn = 0
    for i in range(10000):
        for j in range(3):
            p = probs[i, j] >= 0.5
            g = golds[i, j] >= 0.5
            tp += p and g
            fp += p and not g
            fn += (not p) and g
    want = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    elapsed = time.time() - start
    assert abs(got - want) < 1e-12
    assert elapsed < 5.0
    print(f"PASS micro-F1 oracle: |delta| < 1e-12 on 10,000 pairs in {elapsed:.2f}s")


def _run_contrast(context_dependent, encoder_mode, cnn_k, seed):
    task = make_synthetic_task(seed=0, context_dependent=context_dependent)
    items = prepare_items(task.train, task.train_acts, task.vocab)
    dev = prepare_items(task.dev, task.dev_acts, task.vocab)
    config = ProbeConfig(input_dim=16, n_labels=4, two_span=False,
                         projection_dim=64, mlp_hidden_dim=64,
                         encoder_mode=encoder_mode, cnn_k=cnn_k)
    params, _ = train_probe(items, dev, config, seed=seed, lr=1e-3,
                            eval_interval=100, max_steps=2000)
    probs, golds = evaluate_probs(dev, params, config)
    return micro_f1_at_threshold(probs, golds)


def test_end_to_end_lexical_vs_contextual():
    start = time.time()
    lex_ctx = _run_contrast(True, "direct", 1, seed=0)
    cnn_ctx = _run_contrast(True, "cnn", 1, seed=0)
    lex_ind = _run_contrast(False, "direct", 1, seed=0)
    cnn_ind = _run_contrast(False, "cnn", 1, seed=0)
    elapsed = time.time() - start
    assert lex_ctx <= 0.60, f"lexical probe too strong on context task: {lex_ctx}"
    assert cnn_ctx >= 0.95, f"CNN +-1 probe too weak on context task: {cnn_ctx}"
    assert lex_ind > 0.99 and cnn_ind > 0.99, (lex_ind, cnn_ind)
    assert elapsed < 300.0
    print(
        "PASS end-to-end contrast: context-dependent lexical "
        f"{lex_ctx:.2f} vs cnn {cnn_ctx:.2f}; context-independent "
        f"{lex_ind:.2f}/{cnn_ind:.2f} in {elapsed:.0f}s"
    )


def test_distance_bucketing_brute_force():
    start = time.time()
    rng = np.random.default_rng(5)
    targets = []
    for _ in range(1000):
        s1 = int(rng.integers(0, 40))
        e1 = s1 + 1 + int(rng.integers(0, 3))
        s2 = int(rng.integers(0, 40))
        e2 = s2 + 1 + int(rng.integers(0, 3))
        targets.append(Target(Span(s1, e1), Span(s2, e2), frozenset(["x"])))
    preds = rng.random((1000, 1))
    golds = (rng.random((1000, 1)) < 0.5).astype(np.float64)
    buckets = stratify_by_distance(targets, preds, golds, ["x"], max_bucket=8)
    brute = {str(b): 0 for b in range(9)}
    brute["9+"] = 0
    for t in targets:
        (a, b) = sorted([t.span1, t.span2], key=lambda s: (s.start, s.end))
        d = max(0, b.start - a.end)
        brute[str(d) if d <= 8 else "9+"] += 1
    for bucket in buckets:
        assert bucket["n"] == brute[bucket["bucket"]]
    assert span_distance(Span(0, 1), Span(1, 2)) == 0  # adjacency fixture
    elapsed = time.time() - start
    assert elapsed < 5.0
    print(f"PASS distance bucketing: 1000 targets match brute force in {elapsed:.2f}s")


def test_determinism_full_runs(tmp_path, capsys):
    start = time.time()
    task = make_synthetic_task(n_train=60, n_dev=30, seed=0,
                               context_dependent=False)
    train_p = tmp_path / "train.jsonl"
    dev_p = tmp_path / "dev.jsonl"
    core.write_jsonl(task.train, train_p)
    core.write_jsonl(task.dev, dev_p)
    for run in ("a", "b"):
        cfg = tmp_path / f"{run}.cfg"
        cfg.write_text(
            "encoder=lexical\nseed=3\nlr=1e-3\nbatch_size=16\n"
            "eval_interval=20\nmax_steps=60\nprojection_dim=16\n"
            "mlp_hidden_dim=16\nembedding_dim=16\n"
            f"train_jsonl={train_p}\ndev_jsonl={dev_p}\n"
            f"output_dir={tmp_path / run}\n"
        )
        assert main(["train", str(cfg)]) == 0
        assert main(["eval", str(tmp_path / run), "--split", "dev",
                     "--by-label"]) == 0
    capsys.readouterr()
    ck_a = (tmp_path / "a" / "checkpoint.epp").read_bytes()
    ck_b = (tmp_path / "b" / "checkpoint.epp").read_bytes()
    rep_a = (tmp_path / "a" / "report_dev.json").read_bytes()
    rep_b = (tmp_path / "b" / "report_dev.json").read_bytes()
    log_a = (tmp_path / "a" / "train_log.jsonl").read_bytes()
    log_b = (tmp_path / "b" / "train_log.jsonl").read_bytes()
    elapsed = time.time() - start
    assert ck_a == ck_b
    assert rep_a == rep_b
    assert log_a == log_b
    assert elapsed < 300.0
    print(f"PASS determinism: checkpoints, logs, reports byte-identical in {elapsed:.1f}s")


def test_confidence_interval_fixture():
    start = time.time()
    lo, hi = normal_ci(0.5, 100)
    assert abs((0.5 - lo) - 0.098) < 1e-3
    assert abs((hi - 0.5) - 0.098) < 1e-3
    elapsed = time.time() - start
    assert elapsed < 1.0
    print(f"PASS CI fixture: 0.5 +- 0.098 within 1e-3 in {elapsed:.3f}s")
