import math

import numpy as np
import pytest
from scipy.integrate import quad

from spectpp.classical import (
    HawkesParams,
    SinePoissonParams,
    compensator,
    ground_truth_loglik,
    intensity,
    make_synthetic_dataset,
    process_from_record,
    process_to_record,
    thinning_sample,
    total_compensator_increments,
)
from spectpp.core import EventSequence, RngStream, sequence_from_arrays, validate_sequence

POISSON = SinePoissonParams(A=5.0, b=1.0, omega=1.0 / 50.0)
HAWKES_1D = HawkesParams(mu=np.array([2.5]), alpha=np.array([[1.0]]), beta=np.array([[2.0]]))
HAWKES_2D = HawkesParams(
    mu=np.array([0.4, 0.4]),
    alpha=np.array([[1.0, 0.5], [0.1, 1.0]]),
    beta=np.full((2, 2), 2.0),
)
EMPTY = EventSequence((), 100.0)


def quad_compensator(process, t0, t1, history):
    """Adaptive-quadrature oracle for the closed-form compensator."""
    breaks = [t for t in history.times if t0 < t < t1]
    total = np.zeros(len(intensity(process, t1, history)))
    for k in range(total.size):
        total[k], _ = quad(
            lambda t: float(intensity(process, t, history)[k]),
            t0, t1, points=breaks, limit=200, epsabs=1e-12, epsrel=1e-12,
        )
    return total


def test_poisson_intensity_at_benchmark_parameters():
    assert intensity(POISSON, 0.0, EMPTY)[0] == pytest.approx(5.0)
    assert intensity(POISSON, 25.0, EMPTY)[0] == pytest.approx(10.0)


def test_poisson_intensity_ignores_history():
    history = sequence_from_arrays([1.0, 2.0], [0, 0], 100.0)
    assert intensity(POISSON, 10.0, history)[0] == intensity(POISSON, 10.0, EMPTY)[0]


def test_hawkes_intensity_after_one_event():
    history = sequence_from_arrays([0.0], [0], 100.0)
    expected = 2.5 + math.exp(-1.0)  # mu + alpha*exp(-beta*0.5)
    assert intensity(HAWKES_1D, 0.5, history)[0] == pytest.approx(expected, rel=1e-12)


def test_intensity_rejects_time_before_history_end():
    history = sequence_from_arrays([5.0], [0], 100.0)
    with pytest.raises(ValueError):
        intensity(HAWKES_1D, 4.0, history)


def test_negative_intensity_rejected_at_construction():
    with pytest.raises(ValueError):
        SinePoissonParams(A=5.0, b=0.5, omega=1.0 / 50.0)


def test_poisson_compensator_full_window():
    value = compensator(POISSON, 0.0, 100.0, EMPTY)[0]
    assert value == pytest.approx(500.0, rel=1e-12)
    oracle = quad_compensator(POISSON, 0.0, 100.0, EMPTY)[0]
    assert value == pytest.approx(oracle, rel=1e-8)


def test_homogeneous_compensator_is_rate_times_duration():
    proc = HawkesParams(mu=np.array([2.0]), alpha=np.array([[0.0]]), beta=np.array([[1.0]]))
    assert np.sum(compensator(proc, 3.0, 7.0, EMPTY)) == pytest.approx(8.0)


def test_hawkes_excitation_mass_is_branching_ratio():
    history = sequence_from_arrays([0.0], [0], 1e4)
    # total mass of one kernel: compensator minus the baseline part
    value = float(compensator(HAWKES_1D, 0.0, 100.0, history)[0]) - 2.5 * 100.0
    assert value == pytest.approx(0.5, abs=1e-12)


def test_compensator_matches_quadrature_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = int(rng.integers(1, 3))
        proc = HawkesParams(
            mu=rng.uniform(0.1, 2.0, size=m),
            alpha=rng.uniform(0.0, 1.0, size=(m, m)),
            beta=rng.uniform(1.0, 3.0, size=(m, m)),
        )
        times = np.sort(rng.uniform(0.0, 5.0, size=4))
        marks = rng.integers(0, m, size=4)
        history = sequence_from_arrays(times, marks, 100.0)
        t0 = float(times[-1]) + rng.uniform(0.0, 1.0)
        t1 = t0 + rng.uniform(0.1, 3.0)
        got = compensator(proc, t0, t1, history)
        want = quad_compensator(proc, t0, t1, history)
        assert np.allclose(got, want, rtol=1e-8)


def test_compensator_additivity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        proc = HawkesParams(
            mu=rng.uniform(0.1, 2.0, size=2),
            alpha=rng.uniform(0.0, 1.0, size=(2, 2)),
            beta=rng.uniform(1.0, 3.0, size=(2, 2)),
        )
        history = sequence_from_arrays([0.3, 0.9], [0, 1], 100.0)
        t0, t1, t2 = 1.0, 2.5, 4.0
        left = compensator(proc, t0, t1, history)
        right = compensator(proc, t1, t2, history)
        whole = compensator(proc, t0, t2, history)
        assert np.allclose(left + right, whole, rtol=1e-12)


def test_compensator_rejects_reversed_interval():
    with pytest.raises(ValueError):
        compensator(POISSON, 5.0, 3.0, EMPTY)


def test_total_compensator_increments_match_reference():
    seq = sequence_from_arrays([0.4, 1.1, 2.0, 3.7], [0, 1, 1, 0], 10.0)
    for proc in (POISSON, HAWKES_2D):
        incs = total_compensator_increments(proc, seq)
        prev = 0.0
        for i, event in enumerate(seq.events):
            history = EventSequence(seq.events[:i], seq.t_end)
            want = float(np.sum(compensator(proc, prev, event.time, history)))
            assert incs[i] == pytest.approx(want, rel=1e-10)
            prev = event.time


def test_thinning_output_is_valid():
    for proc, k in ((POISSON, 1), (HAWKES_1D, 1), (HAWKES_2D, 2)):
        seq = thinning_sample(proc, 50.0, RngStream(3).child("t"))
        assert validate_sequence(seq, k).ok


def test_thinning_homogeneous_mean_count():
    proc = HawkesParams(mu=np.array([2.0]), alpha=np.array([[0.0]]), beta=np.array([[1.0]]))
    counts = [len(thinning_sample(proc, 100.0, RngStream(7).child(f"r{i}")))
              for i in range(500)]
    # Poisson(200) per replication; 3 sigma of the replicated mean is 1.9
    assert abs(float(np.mean(counts)) - 200.0) < 1.9


def test_thinning_hawkes_mean_count():
    counts = np.array([len(thinning_sample(HAWKES_1D, 100.0, RngStream(8).child(f"r{i}")))
                       for i in range(500)])
    # branching ODE: E[N] = mu*T/(1-a) - (a*mu/(1-a)^2)*(1 - exp(-(b-a)T)), a = alpha/beta
    expected = 500.0 - 2.5 * (1.0 - math.exp(-100.0))
    stderr = float(np.std(counts)) / math.sqrt(counts.size)
    assert abs(float(np.mean(counts)) - expected) < 3.0 * stderr


def test_multivariate_marks_in_range():
    data = make_synthetic_dataset(HAWKES_2D, 20, 100.0, RngStream(9))
    marks = np.concatenate([seq.marks for seq in data if len(seq)])
    assert set(np.unique(marks)) <= {0, 1}
    assert len(data) == 20


def test_dataset_generation_is_deterministic():
    a = make_synthetic_dataset(HAWKES_1D, 3, 20.0, RngStream(10))
    b = make_synthetic_dataset(HAWKES_1D, 3, 20.0, RngStream(10))
    for x, y in zip(a, b):
        assert np.array_equal(x.times, y.times)
        assert np.array_equal(x.marks, y.marks)


def test_dataset_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        make_synthetic_dataset(POISSON, 0, 10.0, RngStream(1))


def test_loglik_single_event_homogeneous():
    proc = HawkesParams(mu=np.array([1.0]), alpha=np.array([[0.0]]), beta=np.array([[1.0]]))
    seq = sequence_from_arrays([0.42], [0], 1.0)
    assert ground_truth_loglik(seq, proc) == pytest.approx(-1.0)


def test_loglik_empty_sequence_is_survival_only():
    proc = HawkesParams(mu=np.array([2.0]), alpha=np.array([[0.0]]), beta=np.array([[1.0]]))
    assert ground_truth_loglik(EventSequence((), 3.0), proc) == pytest.approx(-6.0)


def test_loglik_matches_quadrature_oracle():
    seq = sequence_from_arrays([1.0, 1.5], [0, 0], 2.0)
    # oracle: log-rates at events (strict history) minus quadrature compensator
    lam1 = float(intensity(HAWKES_1D, 1.0, EventSequence((), 2.0))[0])
    lam2 = float(intensity(HAWKES_1D, 1.5, EventSequence(seq.events[:1], 2.0))[0])
    comp = (
        quad_compensator(HAWKES_1D, 0.0, 1.0, EventSequence((), 2.0))
        + quad_compensator(HAWKES_1D, 1.0, 1.5, EventSequence(seq.events[:1], 2.0))
        + quad_compensator(HAWKES_1D, 1.5, 2.0, EventSequence(seq.events, 2.0))
    )
    oracle = math.log(lam1) + math.log(lam2) - float(np.sum(comp))
    assert ground_truth_loglik(seq, HAWKES_1D) == pytest.approx(oracle, rel=1e-6)


def test_loglik_multivariate_matches_reference_forms():
    seq = sequence_from_arrays([0.5, 0.8, 1.9], [0, 1, 0], 3.0)
    total = 0.0
    prev = 0.0
    for i, event in enumerate(seq.events):
        history = EventSequence(seq.events[:i], seq.t_end)
        total += math.log(float(intensity(HAWKES_2D, event.time, history)[event.mark]))
        total -= float(np.sum(compensator(HAWKES_2D, prev, event.time, history)))
        prev = event.time
    total -= float(np.sum(compensator(HAWKES_2D, prev, seq.t_end, EventSequence(seq.events, seq.t_end))))
    assert ground_truth_loglik(seq, HAWKES_2D) == pytest.approx(total, rel=1e-10)


def test_nonstationary_hawkes_warns_but_builds(caplog):
    with caplog.at_level("WARNING"):
        proc = HawkesParams(mu=np.array([1.0]), alpha=np.array([[3.0]]), beta=np.array([[2.0]]))
    assert proc.n_marks == 1
    assert any("spectral radius" in rec.message for rec in caplog.records)


def test_process_record_round_trip():
    for proc in (POISSON, HAWKES_2D):
        rebuilt = process_from_record(process_to_record(proc))
        assert type(rebuilt) is type(proc)
    rebuilt = process_from_record(process_to_record(HAWKES_2D))
    assert np.array_equal(rebuilt.alpha, HAWKES_2D.alpha)


@pytest.mark.slow
def test_thousand_sequence_dataset():
    data = make_synthetic_dataset(POISSON, 1000, 100.0, RngStream(77))
    assert len(data) == 1000
    assert all(validate_sequence(seq, 1).ok for seq in data)
