import math

import numpy as np
import pytest
from scipy.integrate import quad

from spectpp import model as M
from spectpp.autodiff import grad_check
from spectpp.core import EventSequence, RngStream, sequence_from_arrays


def tiny_config(**overrides):
    base = dict(embed_dim=8, n_components=4, n_marks=2, n_heads=1, n_layers=1)
    base.update(overrides)
    return M.ModelConfig(**base)


def zeroed(checkpoint):
    out = checkpoint.copy()
    for name in out.params:
        out.params[name] = np.zeros_like(out.params[name])
    return out


def random_checkpoint(config, seed, scale=None):
    ckpt = M.init_checkpoint(config, RngStream(seed))
    if scale is not None:
        for name in ckpt.params:
            ckpt.params[name] = ckpt.params[name] * scale
    return ckpt


# -- temporal encoding ---------------------------------------------------------

def test_thp_encoding_at_zero():
    ckpt = M.init_checkpoint(tiny_config(), RngStream(0))
    z = M.temporal_encoding(0.0, ckpt)
    assert np.array_equal(z[0::2], np.zeros(4))
    assert np.array_equal(z[1::2], np.ones(4))


def test_thp_encoding_d2_t1():
    ckpt = M.init_checkpoint(tiny_config(embed_dim=2, n_heads=1), RngStream(0))
    z = M.temporal_encoding(1.0, ckpt)
    assert z == pytest.approx([math.sin(1.0), math.cos(1.0)], rel=1e-12)


def test_attnhp_encoding_all_sine_zero_at_zero():
    ckpt = M.init_checkpoint(tiny_config(encoding="attnhp"), RngStream(0))
    assert np.array_equal(M.temporal_encoding(0.0, ckpt), np.zeros(8))


def test_sahp_encoding_uses_learnable_frequencies():
    ckpt = M.init_checkpoint(tiny_config(encoding="sahp"), RngStream(0))
    base = M.temporal_encoding(1.5, ckpt)
    ckpt.params["time_freq"] = ckpt.params["time_freq"] * 2.0
    assert not np.allclose(base, M.temporal_encoding(1.5, ckpt))
    # direct evaluation of the sinusoid with shifted phase
    d = 8
    j = np.arange(d)
    expo = (j - (j % 2)) / d
    arg = j / np.power(10000.0, expo) + 2.0 * 1.5
    want = np.where(j % 2 == 0, np.sin(arg), np.cos(arg))
    assert M.temporal_encoding(1.5, ckpt) == pytest.approx(want, rel=1e-12)


# -- embedding and encoder ------------------------------------------------------

def test_embed_events_zero_embedding_matrix():
    ckpt = M.init_checkpoint(tiny_config(), RngStream(1))
    ckpt.params["mark_embedding"] = np.zeros_like(ckpt.params["mark_embedding"])
    seq = sequence_from_arrays([0.3, 1.7], [0, 1], 10.0)
    x = M.embed_events(seq, ckpt)
    want = np.stack([M.temporal_encoding(0.3, ckpt), M.temporal_encoding(1.7, ckpt)])
    assert np.array_equal(x, want)


def test_embed_events_adds_mark_row():
    ckpt = M.init_checkpoint(tiny_config(n_marks=1), RngStream(2))
    seq = sequence_from_arrays([0.5], [0], 10.0)
    x = M.embed_events(seq, ckpt)
    want = ckpt.params["mark_embedding"][0] + M.temporal_encoding(0.5, ckpt)
    assert np.allclose(x[0], want, atol=1e-15)


def test_embed_events_shape():
    ckpt = M.init_checkpoint(tiny_config(), RngStream(3))
    seq = sequence_from_arrays(np.arange(1.0, 8.0), np.zeros(7, dtype=int), 10.0)
    assert M.embed_events(seq, ckpt).shape == (7, 8)


def test_embed_rejects_out_of_range_mark():
    ckpt = M.init_checkpoint(tiny_config(n_marks=2), RngStream(3))
    with pytest.raises(ValueError):
        M.embed_events(sequence_from_arrays([1.0], [2], 10.0), ckpt)


def test_zero_value_projections_make_encoder_identity():
    for layers in (1, 3):
        ckpt = M.init_checkpoint(tiny_config(n_layers=layers, n_heads=2), RngStream(4))
        for layer in range(layers):
            ckpt.params[f"layers.{layer}.v"] = np.zeros_like(ckpt.params[f"layers.{layer}.v"])
        seq = sequence_from_arrays([0.4, 1.0, 2.2], [0, 1, 0], 10.0)
        assert np.array_equal(M.encode_history(seq, ckpt), M.embed_events(seq, ckpt))


def test_single_event_standard_attention_adds_value_vector():
    # with one event the attention weight on itself is 1, so h = x + v
    ckpt = M.init_checkpoint(tiny_config(), RngStream(5))
    seq = sequence_from_arrays([0.7], [1], 10.0)
    x = M.embed_events(seq, ckpt)
    v = x @ ckpt.params["layers.0.v"]
    assert np.allclose(M.encode_history(seq, ckpt), x + v, atol=1e-12)


@pytest.mark.parametrize("encoding", ["thp", "sahp", "attnhp"])
def test_causality_is_bit_exact(encoding):
    config = tiny_config(encoding=encoding, n_layers=2, n_heads=2)
    ckpt = M.init_checkpoint(config, RngStream(6))
    times = np.array([0.5, 1.0, 2.0, 3.5, 4.0])
    marks = np.array([0, 1, 0, 0, 1])
    base = M.encode_history(sequence_from_arrays(times, marks, 10.0), ckpt)
    bumped_times = times.copy()
    bumped_times[3] += 0.25
    bumped_marks = marks.copy()
    bumped_marks[3] = 1
    bumped = M.encode_history(sequence_from_arrays(bumped_times, bumped_marks, 10.0), ckpt)
    assert np.array_equal(base[:3], bumped[:3])
    assert not np.allclose(base[3:], bumped[3:])


def test_encoder_rejects_empty_prefix():
    ckpt = M.init_checkpoint(tiny_config(), RngStream(6))
    with pytest.raises(ValueError):
        M.encode_history(EventSequence((), 5.0), ckpt)


# -- heads -----------------------------------------------------------------------

def test_mixture_head_all_zero_weights():
    ckpt = zeroed(M.init_checkpoint(tiny_config(), RngStream(7)))
    params = M.mixture_head(np.ones(8), ckpt)
    assert params.weights == pytest.approx(np.full(4, 0.25))
    assert np.array_equal(params.means, np.zeros(4))
    assert np.array_equal(params.scales, np.ones(4))


def test_mixture_head_scale_bias():
    ckpt = zeroed(M.init_checkpoint(tiny_config(), RngStream(7)))
    ckpt.params["mix_scale_bias"] = np.full(4, math.log(2.0))
    params = M.mixture_head(np.zeros(8), ckpt)
    assert params.scales == pytest.approx(np.full(4, 2.0), rel=1e-12)


def test_mixture_and_mark_head_invariants_on_random_checkpoints():
    config = tiny_config(n_marks=3)
    for i in range(1000):
        ckpt = random_checkpoint(config, seed=i, scale=3.0 if i % 3 else None)
        h = RngStream(10_000 + i).normal(8) * 2.0
        mix = M.mixture_head(h, ckpt)
        assert abs(float(np.sum(mix.weights)) - 1.0) < 1e-9
        assert np.all(mix.weights >= 0.0)
        assert np.all(mix.scales > 0.0)
        dist = M.mark_head(h, ckpt)
        assert abs(float(np.sum(dist.probabilities)) - 1.0) < 1e-9
        assert np.all(dist.probabilities >= 0.0)


def test_mark_head_zero_weights_uniform():
    ckpt = zeroed(M.init_checkpoint(tiny_config(n_marks=5), RngStream(8)))
    dist = M.mark_head(np.ones(8), ckpt)
    assert dist.probabilities == pytest.approx(np.full(5, 0.2))


def test_mark_head_large_bias_concentrates():
    ckpt = zeroed(M.init_checkpoint(tiny_config(n_marks=20), RngStream(8)))
    bias = np.zeros(20)
    bias[0] = 10.0
    ckpt.params["mark_out_bias"] = bias
    dist = M.mark_head(np.zeros(8), ckpt)
    assert dist.probabilities[0] > 0.999


# -- mixture density / cdf / sampling ---------------------------------------------

def test_logpdf_standard_lognormal_at_one():
    params = M.MixtureParams(np.array([1.0]), np.array([0.0]), np.array([1.0]))
    assert M.mixture_logpdf(1.0, params) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_logpdf_degenerate_mixture_equals_single_component():
    single = M.MixtureParams(np.array([1.0]), np.array([0.3]), np.array([0.7]))
    double = M.MixtureParams(np.array([0.5, 0.5]), np.array([0.3, 0.3]), np.array([0.7, 0.7]))
    for tau in (0.2, 1.0, 4.2):
        assert M.mixture_logpdf(tau, double) == pytest.approx(M.mixture_logpdf(tau, single), rel=1e-12)


def test_logpdf_rejects_nonpositive_tau():
    params = M.MixtureParams(np.array([1.0]), np.array([0.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        M.mixture_logpdf(0.0, params)


def test_density_integrates_to_one():
    rng = np.random.default_rng(0)
    for _ in range(5):
        m = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(m))
        params = M.MixtureParams(w, rng.normal(size=m), rng.uniform(0.3, 1.5, size=m))
        total, _ = quad(lambda t: math.exp(M.mixture_logpdf(t, params)), 0.0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)


def test_cdf_median_and_boundaries():
    params = M.MixtureParams(np.array([1.0]), np.array([0.0]), np.array([2.5]))
    assert M.mixture_cdf(1.0, params) == pytest.approx(0.5)
    assert M.mixture_cdf(0.0, params) == 0.0
    assert M.mixture_cdf(1e12, params) == pytest.approx(1.0, abs=1e-9)
    values = [M.mixture_cdf(t, params) for t in (0.1, 0.5, 1.0, 3.0, 10.0)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_cdf_derivative_matches_density():
    rng = np.random.default_rng(1)
    w = rng.dirichlet(np.ones(3))
    params = M.MixtureParams(w, rng.normal(size=3), rng.uniform(0.4, 1.2, size=3))
    for tau in (0.5, 1.0, 2.5):
        h = 1e-6 * tau
        fd = (M.mixture_cdf(tau + h, params) - M.mixture_cdf(tau - h, params)) / (2 * h)
        assert fd == pytest.approx(math.exp(M.mixture_logpdf(tau, params)), rel=1e-5)


def test_survival_complements_cdf():
    params = M.MixtureParams(np.array([0.4, 0.6]), np.array([0.0, 1.0]), np.array([0.5, 0.8]))
    for tau in (0.3, 1.7):
        assert M.mixture_survival(tau, params) == pytest.approx(1.0 - M.mixture_cdf(tau, params), rel=1e-12)


def test_sample_interval_degenerate_scale():
    params = M.MixtureParams(np.array([1.0]), np.array([math.log(2.0)]), np.array([1e-12]))
    tau, _ = M.sample_interval(params, RngStream(3))
    assert tau == pytest.approx(2.0, abs=1e-9)


def test_sample_interval_monte_carlo_moments():
    params = M.MixtureParams(np.array([1.0]), np.array([0.0]), np.array([1.0]))
    stream = RngStream(4)
    draws = np.array([M.sample_interval(params, stream)[0] for _ in range(10**5)])
    assert abs(float(np.median(draws)) - 1.0) < 0.02
    # mean of LogNormal(0,1) is e^{1/2}; 3 sigma of the MC mean is ~0.021
    assert abs(float(np.mean(draws)) - math.exp(0.5)) < 0.021


def test_sample_interval_reports_full_mixture_density():
    params = M.MixtureParams(np.array([0.5, 0.5]), np.array([0.0, 3.0]), np.array([0.2, 0.2]))
    stream = RngStream(5)
    for _ in range(10):
        tau, logpdf = M.sample_interval(params, stream)
        assert logpdf == pytest.approx(M.mixture_logpdf(tau, params), rel=1e-12)


# -- sequence likelihood -----------------------------------------------------------

def test_empty_sequence_loglik_is_survival_term():
    ckpt = M.init_checkpoint(tiny_config(), RngStream(9))
    mix, _ = M.position_distributions(EventSequence((), 7.0), ckpt)
    want = math.log(M.mixture_survival(7.0, mix[0]))
    assert M.sequence_loglik(EventSequence((), 7.0), ckpt) == pytest.approx(want, rel=1e-12)


def test_forced_decoder_loglik_hand_computed():
    config = tiny_config(n_components=1, n_marks=2)
    ckpt = zeroed(M.init_checkpoint(config, RngStream(10)))
    t1, t2, t_end = 0.8, 2.0, 3.0
    seq = sequence_from_arrays([t1, t2], [0, 1], t_end)

    def log_standard_lognormal(tau):
        return -math.log(tau) - 0.5 * math.log(2 * math.pi) - 0.5 * math.log(tau) ** 2

    from scipy.stats import norm
    want = (log_standard_lognormal(t1) + log_standard_lognormal(t2 - t1)
            + 2.0 * math.log(0.5) + math.log(1.0 - norm.cdf(math.log(t_end - t2))))
    assert M.sequence_loglik(seq, ckpt) == pytest.approx(want, rel=1e-10)


def test_loglik_rejects_nonpositive_interval():
    ckpt = M.init_checkpoint(tiny_config(), RngStream(11))
    seq = EventSequence((), 5.0)
    bad = sequence_from_arrays([1.0, 1.0], [0, 0], 5.0)
    M.sequence_loglik(seq, ckpt)
    with pytest.raises(ValueError):
        M.sequence_loglik(bad, ckpt)


def test_loglik_gradient_matches_finite_differences():
    config = tiny_config(n_marks=2)
    ckpt = M.init_checkpoint(config, RngStream(12))
    seq = sequence_from_arrays([0.4, 1.1, 1.9], [0, 1, 1], 4.0)

    def f(tensors):
        return M._loglik_tensor(seq.times, seq.marks, seq.t_end, tensors, config)

    assert grad_check(f, ckpt.params) < 1e-4


@pytest.mark.parametrize("encoding", ["thp", "sahp", "attnhp"])
def test_batched_forward_matches_prefix_forwards(encoding):
    config = tiny_config(encoding=encoding, n_layers=2, n_heads=2, n_marks=3)
    ckpt = random_checkpoint(config, seed=13)
    seq = sequence_from_arrays([0.2, 0.9, 1.5, 2.8], [0, 2, 1, 0], 10.0)
    mixtures, mark_dists = M.position_distributions(seq, ckpt)
    assert len(mixtures) == len(seq) + 1
    for i in range(len(seq) + 1):
        prefix = EventSequence(seq.events[:i], seq.t_end)
        mix_i, mark_i = M.next_event_distributions(prefix, ckpt)
        assert np.allclose(mixtures[i].weights, mix_i.weights, atol=1e-12)
        assert np.allclose(mixtures[i].means, mix_i.means, atol=1e-12)
        assert np.allclose(mixtures[i].scales, mix_i.scales, atol=1e-12)
        assert np.allclose(mark_dists[i].probabilities, mark_i.probabilities, atol=1e-12)


# -- checkpoint serialization -------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    config = tiny_config(encoding="sahp", n_marks=4)
    ckpt = M.init_checkpoint(config, RngStream(14))
    path = tmp_path / "model.json"
    M.save_checkpoint(path, ckpt)
    loaded = M.load_checkpoint(path)
    assert loaded.config == config
    for name in ckpt.params:
        assert np.array_equal(loaded.params[name], ckpt.params[name])


def test_checkpoint_save_is_deterministic(tmp_path):
    ckpt = M.init_checkpoint(tiny_config(), RngStream(15))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    M.save_checkpoint(a, ckpt)
    M.save_checkpoint(b, ckpt)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_version_mismatch_is_refused(tmp_path):
    ckpt = M.init_checkpoint(tiny_config(), RngStream(16))
    path = tmp_path / "model.json"
    M.save_checkpoint(path, ckpt)
    doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
    path.write_text(doc)
    with pytest.raises(M.CheckpointFormatError):
        M.load_checkpoint(path)


def test_config_validation():
    with pytest.raises(ValueError):
        M.ModelConfig(embed_dim=7)
    with pytest.raises(ValueError):
        M.ModelConfig(embed_dim=8, n_heads=3)
    with pytest.raises(ValueError):
        M.ModelConfig(encoding="rnn")
    assert M.ModelConfig(encoding="attnhp").attention == "attnhp"
    assert M.ModelConfig(encoding="thp").attention == "standard"
