"""Benchmarks: compiled kernels vs the pure-Python mirrors, and the cost of
per-language factorization relative to a fully shared model.

Run as ``python3 -m factorweights.bench`` (``--quick`` shrinks the sizes).
Both kernel backends are imported directly, so the comparison runs in one
process regardless of which backend the package selected at import time.
"""

import argparse
import json
import statistics
import sys
import time
from array import array

from .diffcore.rng import Rng
from .harness import (Adam, build_model, generate_corpus, make_batches,
                      parse_config_items, resolve_config, task_from_config)
from .harness.optim import clip_global_norm, noam_lr
from .kernels import BACKEND, _pykern

try:
    from .kernels import _ckern
except ImportError:
    _ckern = None


def _rand(n, rng):
    buf = array("d", bytes(8 * n))
    rng.fill_normal(buf)
    return buf


def bench_matmul(kern, m, n, k, budget=0.25):
    """GFLOP/s of kern.bmm_nn on one [m,k] @ [k,n] product."""
    rng = Rng(0).split(f"mm.{m}.{n}.{k}")
    a, b = _rand(m * k, rng), _rand(k * n, rng)
    out = array("d", bytes(8 * m * n))
    reps = 0
    t0 = time.perf_counter()
    while True:
        kern.bmm_nn(a, b, out, 1, m, k, n)
        reps += 1
        dt = time.perf_counter() - t0
        if dt >= budget and reps >= 3:
            return 2.0 * m * n * k * reps / dt / 1e9


def backend_parity(m=17, n=13, k=11):
    """The two backends must agree bit for bit, not just approximately."""
    if _ckern is None:
        return None
    rng = Rng(1).split("parity")
    a, b = _rand(m * k, rng), _rand(k * n, rng)
    out_c = array("d", bytes(8 * m * n))
    out_p = array("d", bytes(8 * m * n))
    _ckern.bmm_nn(a, b, out_c, 1, m, k, n)
    _pykern.bmm_nn(a, b, out_p, 1, m, k, n)
    return out_c.tobytes() == out_p.tobytes()


def time_training_steps(cfg, steps, warmup=3):
    """Wall time per optimizer update for the configured model.

    Returns a list of per-step seconds (warmup steps discarded).  Shared by
    the benchmark and the compute-overhead acceptance check.
    """
    corpus = generate_corpus(task_from_config(cfg))
    model = build_model(cfg)
    params = model.params()
    adam = Adam(params)
    queue = []
    epoch = 0
    times = []
    for step in range(1, steps + warmup + 1):
        if not queue:
            epoch += 1
            queue = make_batches(corpus.split("train"), cfg["max_frames"],
                                 seed=cfg["seed"] + epoch)
        batch = queue.pop(0)
        t0 = time.perf_counter()
        adam.zero_grad()
        loss = model.batch_loss(batch[0].language, batch)
        loss.backward()
        clip_global_norm(params, cfg["clip_norm"])
        adam.step(noam_lr(step, cfg["base_lr"], cfg["warmup"], cfg["d_model"]))
        dt = time.perf_counter() - t0
        if step > warmup:
            times.append(dt)
    return times


def _bench_cfg(d_model, factored, steps_budget):
    # desk-scale batch shapes: with small batches the O(D^2) compose cost
    # dwarfs the matmul and the ratio stops measuring anything useful
    return resolve_config(dict(
        parse_config_items(""), langs=4, vocab=12, d_model=d_model, layers=1,
        heads=4, arch="attention", k=1, factored=factored, max_frames=512,
        train_per_lang=256, dev_per_lang=4, test_per_lang=4,
        total_updates=steps_budget))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="factorweights.bench")
    parser.add_argument("--quick", action="store_true",
                        help="smaller sizes, fewer steps")
    parser.add_argument("--d-model", type=int, default=None,
                        help="model width for the step benchmark")
    parser.add_argument("--steps", type=int, default=None,
                        help="timed steps per model")
    args = parser.parse_args(argv)
    quick = args.quick
    sizes = [(32, 32, 32), (64, 64, 64)] if quick else \
        [(64, 64, 64), (128, 128, 128), (256, 256, 256)]
    d_model = args.d_model or (32 if quick else 128)
    steps = args.steps or (5 if quick else 20)

    summary = {"active_backend": BACKEND, "matmul": {}, "parity": None}
    print(f"active backend: {BACKEND}")
    print(f"{'size':>14} {'c GFLOP/s':>10} {'py GFLOP/s':>11} {'speedup':>8}")
    for (m, n, k) in sizes:
        gf_py = bench_matmul(_pykern, m, n, k)
        gf_c = bench_matmul(_ckern, m, n, k) if _ckern is not None else None
        label = f"{m}x{k}x{n}"
        if gf_c is None:
            print(f"{label:>14} {'n/a':>10} {gf_py:>11.4f} {'n/a':>8}")
        else:
            print(f"{label:>14} {gf_c:>10.3f} {gf_py:>11.4f} {gf_c / gf_py:>7.0f}x")
        summary["matmul"][label] = {"c": gf_c, "py": gf_py}

    parity = backend_parity()
    summary["parity"] = parity
    if parity is None:
        print("bit parity: compiled backend not built (FACTORWEIGHTS_NO_EXT?)")
    else:
        print(f"bit parity c vs py: {'identical' if parity else 'MISMATCH'}")

    step_stats = {}
    for factored in (1, 0):
        cfg = _bench_cfg(d_model, factored, steps)
        times = time_training_steps(cfg, steps)
        med = statistics.median(times)
        step_stats["factorized" if factored else "shared"] = med
        print(f"{'factorized' if factored else 'shared':>10} model, "
              f"D={d_model}: median step {med * 1e3:.2f} ms over {len(times)} steps")
    ratio = step_stats["factorized"] / step_stats["shared"]
    print(f"factorized / shared step-time ratio: {ratio:.3f}")
    summary["step_ms"] = {k: v * 1e3 for k, v in step_stats.items()}
    summary["step_ratio"] = ratio
    summary["d_model"] = d_model
    summary["steps"] = steps

    print(json.dumps(summary, sort_keys=True))
    return 0 if (parity is not False) else 1


if __name__ == "__main__":
    sys.exit(main())
