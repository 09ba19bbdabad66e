import os
import random

import numpy as np
import pytest

import flashpi

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
TOY = os.path.join(ROOT, "models", "toy", "model.json")


@pytest.fixture(scope="module")
def ctx():
    return flashpi.Context.create(flashpi.default_params())


def negacyclic_mul(a, b, p):
    # a * b mod (x^n + 1, p), by full convolution and folding.
    n = len(a)
    full = np.convolve(np.array(a, dtype=object), np.array(b, dtype=object))
    out = [0] * n
    for k, v in enumerate(full):
        if k < n:
            out[k] += v
        else:
            out[k - n] -= v
    return [x % p for x in out]


def centered(v, p):
    return [x - p if x > p // 2 else x for x in v]


def test_default_params(ctx):
    params = flashpi.default_params()
    assert params.n == 2048
    assert params.q == 1152921486375014401
    assert params.p == 270337
    assert params.decomp_log == 16
    again = flashpi.Params.from_json(params.to_json())
    assert (again.n, again.q, again.p) == (params.n, params.q, params.p)
    assert ctx.n == 2048


def test_roundtrip_both_encodings(ctx):
    client = flashpi.Client(ctx, seed=3)
    rng = random.Random(4)
    values = [rng.randrange(-1000, 1000) for _ in range(ctx.n)]
    for enc in ("batch", "direct"):
        ct = client.encrypt(values, enc)
        assert ct.encoding == enc
        assert client.decrypt(ct) == values
        assert 34 <= client.noise_budget(ct) <= 40


def test_drot_matches_polynomial_product(ctx):
    client = flashpi.Client(ctx, seed=5)
    rng = random.Random(6)
    p, n = ctx.p, ctx.n
    values = [rng.randrange(-p // 2, p // 2) for _ in range(n)]
    ct = client.encrypt(values, "direct")
    for step in (1, 7, n - 1, -3):
        e = (-step) % (2 * n)
        mono = [0] * n
        mono[e % n] = 1 if e < n else -1
        expect = centered(negacyclic_mul(values, mono, p), p)
        assert client.decrypt(flashpi.drot(ctx, ct, step)) == expect


def test_toy_model_secure_run(ctx):
    model = flashpi.load_model(TOY, ctx.p)
    assert model.layer_kinds[0] == "conv"
    c, h, w = model.input_shape
    rng = np.random.default_rng(7)
    x = flashpi.quantize_input(model, list(rng.uniform(-1, 1, c * h * w)))
    oracle = flashpi.oracle_infer(model, x)
    res = flashpi.run_inference(ctx, model, x, seed=8)
    assert len(res["logits"]) == len(oracle)
    assert res["offline_bytes"] == 0
    assert res["online_bytes"] > 0
    # Stochastic truncation keeps the secure logits near the oracle's.
    gap = max(abs(a - b) for a, b in zip(res["logits"], oracle))
    assert gap < ctx.p // 16


def test_bad_input_raises(ctx):
    model = flashpi.load_model(TOY, ctx.p)
    with pytest.raises(flashpi.FlashError):
        flashpi.oracle_infer(model, [0, 1, 2])
    with pytest.raises(flashpi.FlashError):
        flashpi.load_model(os.path.join(ROOT, "missing.json"), ctx.p)
