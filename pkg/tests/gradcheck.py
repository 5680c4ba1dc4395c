"""Finite-difference gradient checking shared by unit and acceptance tests."""
from __future__ import annotations

import numpy as np

import rssigat.tensor_core as tc
from rssigat.gat_model import build_model, model_forward, prepare_graph
from rssigat.mtf_graph import transform
from rssigat.trace import RssiTrace, TraceSchema
from rssigat.train import ClassWeights, weighted_bce
from oracles import finite_difference_grad, max_rel_err

REL_TOL = 1e-4
FD_STEP = 1e-3


def check_case(build_loss, leaf: tc.Tensor) -> None:
    with tc.Tape() as tape:
        loss = build_loss()
        grads = tc.backward(loss, tape)
    numeric = finite_difference_grad(lambda: float(build_loss().data),
                                     leaf.data, step=FD_STEP)
    err = max_rel_err(grads[leaf], numeric)
    assert err < REL_TOL, f"gradient mismatch: rel err {err:.2e}"


def primitive_cases(rng) -> list:
    """One randomized (loss builder, leaf) pair per differentiable primitive."""
    checks = []

    def rand(*shape):
        return rng.standard_normal(shape)

    x = tc.Tensor(rand(4, 3), requires_grad=True)
    r = tc.constant(rand(4, 3))

    def composed(op):
        return lambda: tc.sum_all(tc.mul(op(), r))

    b = tc.constant(rand(3, 5))
    r2 = tc.constant(rand(4, 5))
    checks.append((lambda: tc.sum_all(tc.mul(tc.matmul(x, b), r2)), x))

    y = tc.constant(rand(4, 3))
    checks.append((composed(lambda: tc.add(x, y)), x))
    checks.append((composed(lambda: tc.sub(x, y)), x))
    checks.append((composed(lambda: tc.mul(x, y)), x))
    checks.append((composed(lambda: tc.scale(x, 1.7)), x))
    checks.append((composed(lambda: tc.reshape(tc.reshape(x, (2, 6)), (4, 3))), x))

    bias = tc.Tensor(rand(3), requires_grad=True)
    checks.append((lambda: tc.sum_all(tc.mul(tc.add(x, bias), r)), bias))

    pos = tc.Tensor(rng.uniform(0.5, 2.0, size=(4, 3)), requires_grad=True)
    checks.append((lambda: tc.sum_all(tc.mul(tc.log(pos, floor=1e-12), r)), pos))

    away = tc.Tensor(np.where(np.abs(rand(4, 3)) < 0.1, 0.5, rand(4, 3)),
                     requires_grad=True)
    checks.append((lambda: tc.sum_all(tc.mul(tc.relu(away), r)), away))
    checks.append((lambda: tc.sum_all(tc.mul(tc.leaky_relu(away, 0.2), r)), away))
    checks.append((composed(lambda: tc.sigmoid(x)), x))

    checks.append((lambda: tc.sum_all(x), x))
    r1 = tc.constant(rand(4))
    checks.append((lambda: tc.sum_all(tc.mul(tc.sum_last(x), r1)), x))
    r3 = tc.constant(rand(3))
    checks.append((lambda: tc.sum_all(tc.mul(tc.mean_axis(x, 0), r3)), x))

    idx = rng.integers(0, 4, size=7)
    rg = tc.constant(rand(7, 3))
    checks.append((lambda: tc.sum_all(tc.mul(tc.gather_rows(x, idx), rg)), x))

    vals = tc.Tensor(rand(7, 3), requires_grad=True)
    rs = tc.constant(rand(4, 3))
    sorted_idx = np.sort(idx)
    checks.append((lambda: tc.sum_all(tc.mul(
        tc.scatter_add_rows(vals, sorted_idx, 4), rs)), vals))

    seg_logits = tc.Tensor(rand(6, 2), requires_grad=True)
    segments = np.sort(rng.integers(0, 3, size=6))
    rseg = tc.constant(rand(6, 2))
    checks.append((lambda: tc.sum_all(tc.mul(
        tc.segment_softmax(seg_logits, segments), rseg)), seg_logits))

    return checks


def small_random_model(rng):
    """Three attention blocks at toy width, every parameter randomized so
    pre-activations spread away from the ReLU kinks."""
    model = build_model(seed=0, filters=2, heads=(2, 2, 2))
    for p in model.params.values():
        p.data[...] = rng.standard_normal(p.data.shape)
    return model


def sample_is_smooth(tape, probs, margin: float = 0.01) -> bool:
    """Central differences need a kink-free neighborhood: no ReLU or
    LeakyReLU input near zero, no sigmoid output near the log clamp."""
    if probs.data.min() < 1e-9 or probs.data.max() > 1 - 1e-9:
        return False
    for rec in tape.ops:
        if rec.name in ("relu", "leaky_relu"):
            if np.abs(rec.inputs[0].data).min() < margin:
                return False
    return True


def run_model_fd_trials(n_trials: int = 20, max_attempts: int = 400) -> int:
    """FD-check the full three-block model on random graphs of <= 8 nodes.

    Kink-adjacent samples are skipped deterministically; returns the number
    of attempts consumed."""
    passed = 0
    attempt = 0
    while passed < n_trials:
        attempt += 1
        assert attempt < max_attempts, "too many kink-adjacent samples rejected"
        rng = np.random.default_rng(9000 + attempt)
        n = int(rng.integers(3, 9))
        trace = RssiTrace("t", rng.integers(0, 128, size=n).astype(float))
        graph = transform(trace, TraceSchema(expected_length=max(2, n)))
        prep = prepare_graph(graph, collapse=bool(attempt % 2))
        model = small_random_model(rng)
        labels = rng.integers(0, 2, size=n)
        weights = ClassWeights(1.3, 0.8)

        def loss_fn():
            return weighted_bce(model_forward(prep, model), labels, weights)

        with tc.Tape() as tape:
            probs = model_forward(prep, model)
            loss = weighted_bce(probs, labels, weights)
            grads = tc.backward(loss, tape)
        if not sample_is_smooth(tape, probs):
            continue
        for name, p in model.params.items():
            numeric = finite_difference_grad(lambda: float(loss_fn().data),
                                             p.data, step=FD_STEP)
            err = max_rel_err(grads[p], numeric)
            assert err < REL_TOL, f"{name}: rel err {err:.2e}"
        passed += 1
    return attempt
