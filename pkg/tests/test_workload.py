import numpy as np
from scipy import stats as sps

from cfnsync.workload import (Outcome, Task, WorkloadConfig, next_interarrival,
                              sample_task)


class _ZeroNormal:
    """Stub rng that pins the shared deviate at zero."""

    def standard_normal(self):
        return 0.0


def _draws(lam, n, seed=0):
    cfg = WorkloadConfig(lambda_in=lam)
    rng = np.random.default_rng(seed)
    return np.array([next_interarrival(cfg, rng) for _ in range(n)])


def test_interarrival_mean_lambda_20():
    xs = _draws(20.0, 100_000)
    assert 0.049 <= xs.mean() <= 0.051


def test_interarrival_mean_lambda_60():
    xs = _draws(60.0, 100_000)
    assert abs(xs.mean() - 1 / 60) < 5e-4


def test_interarrival_ks_against_exponential():
    xs = _draws(10.0, 20_000, seed=3)
    stat, p = sps.kstest(xs, "expon", args=(0, 1 / 10.0))
    assert p > 0.01


def test_memorylessness_conditional_tail():
    xs = _draws(20.0, 200_000, seed=5)
    s = 0.05
    tail = xs[xs > s] - s
    stat, p = sps.ks_2samp(tail, xs[:tail.size])
    assert p > 0.01


def test_mean_workload_maps_to_one_megabyte():
    cfg = WorkloadConfig()
    task = sample_task(cfg, 0, 1.0, _ZeroNormal())
    assert task.cycles == 1e8
    assert task.bits == 8e6  # 1.0 MB
    assert task.deadline == 1.8


def test_sample_statistics_and_correlation():
    cfg = WorkloadConfig()
    rng = np.random.default_rng(2)
    tasks = [sample_task(cfg, i, 0.0, rng) for i in range(100_000)]
    c = np.array([t.cycles for t in tasks])
    d = np.array([t.bits for t in tasks])
    assert abs(c.mean() - 1e8) / 1e8 < 0.01
    assert np.corrcoef(c, d)[0, 1] > 0.99
    assert (c > 0).all() and (d > 0).all()
    assert all(t.deadline == 1.8 for t in tasks[:100])


def test_clamp_keeps_workload_positive():
    cfg = WorkloadConfig(sigma_cycles=9e7)

    class _Deep:
        def standard_normal(self):
            return -5.0

    task = sample_task(cfg, 0, 0.0, _Deep())
    assert task.cycles == 0.1 * cfg.mu_cycles
    assert task.bits > 0


def test_task_outcome_follows_deadline():
    t = Task(id=0, t_arrival=1.0, bits=1.0, cycles=1.0, deadline=1.8)
    t.finish(2.8)
    assert t.outcome == Outcome.SUCCESS
    t2 = Task(id=1, t_arrival=1.0, bits=1.0, cycles=1.0, deadline=1.8)
    t2.finish(2.8 + 1e-9)
    assert t2.outcome == Outcome.FAIL_TIMEOUT
