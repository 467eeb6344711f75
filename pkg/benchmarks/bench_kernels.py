"""Per-call latency of the compiled inference kernels against the numpy
fallback, plus one full learned-policy episode under each backend.

Usage: python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from cfnsync import _kernels
from cfnsync.config import load_config
from cfnsync.simulate import run_episode
from cfnsync.training import Models


def _time(fn, n):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(n):
        fn()
    return (time.perf_counter() - t0) / n * 1e6  # us/call


def main():
    cfg = load_config()
    models = Models.build(cfg.encoder)
    params = models.init_params(0)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 3, 6)
    s_sn = rng.normal(size=cfg.encoder.d_sem + 2)

    print(f"compiled extension available: {_kernels.HAVE_COMPILED}")
    rows = []
    slow_enc = _kernels.make_encoder_fn(cfg.encoder, params, force_numpy=True)
    slow_mlp = _kernels.make_mlp_fn(params, "sn.", force_numpy=True)
    rows.append(("encoder forward (numpy)", _time(lambda: slow_enc(x), 3000)))
    rows.append(("policy head forward (numpy)", _time(lambda: slow_mlp(s_sn), 5000)))
    if _kernels.HAVE_COMPILED:
        fast_enc = _kernels.make_encoder_fn(cfg.encoder, params)
        fast_mlp = _kernels.make_mlp_fn(params, "sn.")
        rows.append(("encoder forward (compiled)", _time(lambda: fast_enc(x), 20000)))
        rows.append(("policy head forward (compiled)", _time(lambda: fast_mlp(s_sn), 20000)))
        ref, got = slow_enc(x), fast_enc(x)
        rows.append(("max |compiled - numpy| (encoder)",
                     float(np.max(np.abs(got - ref)))))

    for name, val in rows:
        print(f"{name:38s} {val:12.3f}" + (" us/call" if "max" not in name else ""))
    if _kernels.HAVE_COMPILED:
        enc_speed = rows[0][1] / rows[2][1]
        mlp_speed = rows[1][1] / rows[3][1]
        print(f"speedup: encoder {enc_speed:.1f}x, policy head {mlp_speed:.1f}x")

    env = cfg.copy()
    env.workload.lambda_in = 40.0
    env.workload.episode_len = 100.0
    for force, label in ((True, "numpy"), (False, "compiled")):
        if force is False and not _kernels.HAVE_COMPILED:
            continue
        t0 = time.perf_counter()
        m = run_episode(env, "semantic", "learned", seed=1, params=params,
                        force_numpy=force)
        wall = time.perf_counter() - t0
        print(f"episode 100s lam=40 learned stack [{label:8s}]: {wall:6.2f}s "
              f"({m.arrivals} tasks, {m.updates} updates)")


if __name__ == "__main__":
    main()
