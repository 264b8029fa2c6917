# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the _core extension module against numpy references."""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.environ.get("COBRA_PYMODULE_DIR", "."))

m = pytest.importorskip("_core")


def test_ctc_matches_hand_value():
    # two uniform frames over {blank, a}: paths {aa, a-, -a} -> 3/4
    logp = np.log(np.full((2, 2), 0.5))
    assert m.ctc_nll(logp, [1]) == pytest.approx(-math.log(0.75), abs=1e-12)


def test_ctc_prefix_score_full_mass():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 3))
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    assert m.ctc_prefix_score([], logp) == 0.0
    assert m.ctc_prefix_score([1, 2, 1, 2, 1], logp) == -math.inf


def test_wer():
    assert m.wer([1, 2, 3], [1, 2, 3]) == 0.0
    assert m.wer([1, 9, 3], [1, 2, 3]) == pytest.approx(1.0 / 3)
    assert m.edit_distance([1, 2], [2, 1]) == 2


def test_rollout_identity_and_influence():
    eye = np.eye(3)
    out = m.rollout([([0, 1, 2], eye)], n_audio=2, n_video=1, n_bottleneck=0)
    np.testing.assert_allclose(out, eye, atol=1e-12)

    f = m.modality_influence(np.full((4, 4), 0.25), [0, 1], [2, 3])
    assert f == pytest.approx((0.25, 0.25, 0.25, 0.25))
    va, av = m.normalized_influence(0.3, 0.1, 0.2, 0.2)
    assert va == pytest.approx(0.25)
    assert av == pytest.approx(0.5)


def test_attention_cost_formulas():
    r = m.attention_cost(100, 32, "bottleneck", dim=4)
    assert r["formula_pairs"] == 2 * 132 * 132 == 34848
    assert r["measured_madds"] == r["formula_pairs"] * 4
    assert m.attention_cost(100, 0, "concat")["formula_pairs"] == 40000


def test_mix_at_snr_measured():
    rng = np.random.default_rng(1)
    signal = rng.normal(scale=2.0, size=(50, 8))
    noise = rng.normal(size=(50, 8))
    mixed = m.mix_at_snr(signal, noise, 10.0)
    scaled = mixed - signal
    measured = 10.0 * np.log10((signal**2).mean() / (scaled**2).mean())
    assert measured == pytest.approx(10.0, abs=0.01)


def test_synth_noise_shapes_and_determinism():
    a = m.synth_noise("pink", 64, 3, seed=9)
    b = m.synth_noise("pink", 64, 3, seed=9)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (64, 3)
    w = m.synth_noise("white", 2000, 5, seed=3)
    assert w.var() == pytest.approx(1.0, rel=0.1)


def test_model_forward_decode_and_checkpoint(tmp_path):
    cfg = {
        "dim": 16,
        "layers": 2,
        "fusion_layer": 1,
        "bottleneck_len": 2,
        "heads": 2,
        "ffn_dim": 24,
        "conv_kernel": 3,
        "vocab_size": 4,
        "decoder_layers": 1,
        "audio_feat_dim": 5,
        "video_feat_dim": 4,
        "seed": 7,
    }
    model = m.Model(cfg)
    assert model.num_params > 0
    assert model.variant == "bottleneck"

    rng = np.random.default_rng(2)
    audio = rng.normal(size=(8, 5))
    video = rng.normal(size=(4, 4))
    audio_out, video_out = model.forward(audio, video)
    assert audio_out.shape == (8, 16)
    assert video_out.shape == (4, 16)

    va, av = model.influence(audio, video)
    assert 0.0 <= va <= 1.0
    assert 0.0 <= av <= 1.0

    tokens = model.decode(audio, video, beam=2, lam=0.3, max_len=4)
    assert all(1 <= t <= 4 for t in tokens)

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    loaded = m.Model.load(path)
    audio_out2, _ = loaded.forward(audio, video)
    np.testing.assert_array_equal(audio_out, audio_out2)
