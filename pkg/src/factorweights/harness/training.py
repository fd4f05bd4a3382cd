"""Training loop and greedy-decoding evaluation.

Evaluation groups utterances by (language, frame count, token count) so each
group decodes as one rectangular batch; groups are independent, so they can
run on a small thread pool (FACTORWEIGHTS_THREADS caps it) and results are
merged in a fixed order, keeping metrics identical regardless of scheduling.
"""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

from ..diffcore.tensor import no_grad, scale
from .checkpoint import build_model, model_state, save_checkpoint
from .corpus import make_batches
from .optim import Adam, clip_global_norm, noam_lr

log = logging.getLogger("factorweights")

METRICS_HEADER = "step,lang,split,loss,token_acc,seq_err,lr"


def eval_threads():
    raw = os.environ.get("FACTORWEIGHTS_THREADS", "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"FACTORWEIGHTS_THREADS must be >= 1, got {raw!r}")
        return n
    return os.cpu_count() or 1


def evaluate(model, utterances, threads=None):
    """Per-language teacher-forced loss plus greedy-decoding accuracy.

    Returns {lang: {loss, token_accuracy, sequence_error_rate, tokens,
    utterances}}.  Token accuracy counts position matches against the
    reference content; any content mismatch marks the whole sequence wrong.
    """
    if not utterances:
        raise ValueError("evaluate: no utterances")
    for u in utterances:
        if u.language >= model.langs:
            raise ValueError(
                f"evaluate: utterance language {u.language} outside the model's "
                f"{model.langs} languages")
    groups = {}
    for u in utterances:
        groups.setdefault((u.language, u.frames.shape[0], len(u.tokens)), []).append(u)
    keys = sorted(groups)

    def run_group(key):
        l, n, _m = key
        utts = groups[key]
        with no_grad():
            loss = model.batch_loss(l, utts).item()
            hyps = model.greedy_decode_batch(l, utts, max_len=n + 2)
        hits = total = errs = 0
        for u, hyp in zip(utts, hyps):
            ref = u.tokens[1:-1]
            if hyp and hyp[-1] == model.eos_id:
                hyp = hyp[:-1]
            hits += sum(1 for a, b in zip(hyp, ref) if a == b)
            total += len(ref)
            errs += hyp != ref
        return loss * total, hits, total, errs, len(utts)

    threads = threads if threads is not None else eval_threads()
    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(keys))) as pool:
            outcomes = list(pool.map(run_group, keys))
    else:
        outcomes = [run_group(key) for key in keys]

    per_lang = {}
    for key, (loss_sum, hits, total, errs, count) in zip(keys, outcomes):
        agg = per_lang.setdefault(key[0], [0.0, 0, 0, 0, 0])
        agg[0] += loss_sum
        agg[1] += hits
        agg[2] += total
        agg[3] += errs
        agg[4] += count
    return {
        l: {
            "loss": agg[0] / agg[2],
            "token_accuracy": agg[1] / agg[2],
            "sequence_error_rate": agg[3] / agg[4],
            "tokens": agg[2],
            "utterances": agg[4],
        }
        for l, agg in sorted(per_lang.items())
    }


def train(cfg, corpus, out_dir):
    """Run the configured number of updates; returns a summary dict.

    Side effects in out_dir: metrics.csv (one row per language per eval),
    best.fwf (highest per-language-minimum dev accuracy so far), final.fwf.
    A non-finite training loss aborts with the step and batch language.
    """
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.monotonic()
    model = build_model(cfg)
    params = model.params()
    adam = Adam(params)
    total = cfg["total_updates"]
    accum = cfg["accum_batches"]
    best_path = os.path.join(out_dir, "best.fwf")
    final_path = os.path.join(out_dir, "final.fwf")
    metrics_path = os.path.join(out_dir, "metrics.csv")

    epoch = 0
    queue = []

    def next_batch():
        nonlocal epoch, queue
        if not queue:
            epoch += 1
            queue = make_batches(corpus.split("train"), cfg["max_frames"],
                                 seed=cfg["seed"] * 1_000_003 + epoch)
        return queue.pop(0)

    best = (-1.0, -1.0)
    best_step = -1
    stale_evals = 0
    stop_reason = ""
    last_eval = None

    with open(metrics_path, "w", encoding="utf-8") as metrics:
        metrics.write(METRICS_HEADER + "\n")

        def run_eval(step, lr):
            nonlocal best, best_step, stale_evals, last_eval
            results = evaluate(model, corpus.split("dev"))
            for l, m in results.items():
                metrics.write(f"{step},{l},dev,{m['loss']!r},"
                              f"{m['token_accuracy']!r},"
                              f"{m['sequence_error_rate']!r},{lr!r}\n")
            metrics.flush()
            accs = [m["token_accuracy"] for m in results.values()]
            score = (min(accs), sum(accs) / len(accs))
            log.info("step %d lr %.3e | dev acc min %.4f mean %.4f | loss %s",
                     step, lr, score[0], score[1],
                     " ".join(f"{m['loss']:.4f}" for m in results.values()))
            if score > best:
                best = score
                best_step = step
                stale_evals = 0
                save_checkpoint(best_path, model_state(model, adam), step, cfg)
            else:
                stale_evals += 1
            last_eval = results
            return score

        run_eval(0, 0.0)
        step = 0
        while step < total:
            step += 1
            adam.zero_grad()
            for _ in range(accum):
                batch = next_batch()
                lang = batch[0].language
                loss = model.batch_loss(lang, batch)
                if accum > 1:
                    loss = scale(loss, 1.0 / accum)
                value = loss.item()
                if not math.isfinite(value):
                    raise RuntimeError(
                        f"training aborted at step {step}: non-finite loss on "
                        f"language {lang}")
                loss.backward()
            if cfg["clip_norm"] > 0:
                clip_global_norm(params, cfg["clip_norm"])
            lr = noam_lr(step, cfg["base_lr"], cfg["warmup"], cfg["d_model"])
            adam.step(lr)
            if step % cfg["eval_interval"] == 0 or step == total:
                score = run_eval(step, lr)
                if cfg["early_stop_acc"] > 0 and score[0] >= cfg["early_stop_acc"]:
                    stop_reason = f"dev accuracy reached {cfg['early_stop_acc']}"
                    break
                if 0 < cfg["early_stop_patience"] <= stale_evals:
                    stop_reason = f"no improvement in {stale_evals} evals"
                    break

        save_checkpoint(final_path, model_state(model, adam), step, cfg)

    return {
        "steps": step,
        "epochs": epoch,
        "best_step": best_step,
        "best_min_acc": best[0],
        "best_mean_acc": best[1],
        "stopped_early": stop_reason,
        "final_eval": last_eval,
        "metrics_path": metrics_path,
        "best_path": best_path,
        "final_path": final_path,
        "wall_time": time.monotonic() - t0,
    }
