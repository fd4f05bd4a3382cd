"""Batch command-line interface.

Exit codes: 0 success, 1 verification or run failure, 2 usage/IO error.
Every run prints a single-line JSON summary as its last stdout line; human
tables go above it, progress logging goes to stderr.  Given the same flags
and seed, reruns produce an identical summary line.
"""

import argparse
import json
import logging
import os
import sys
from array import array

from . import kernels
from .diffcore.gradcheck import finite_diff_check
from .diffcore.rng import Rng
from .diffcore.tensor import Tensor, add
from .factorlin import equivalence_sweep
from .harness import (build_model, evaluate, generate_corpus, load_checkpoint,
                      parse_config_items, read_checkpoint, render_config,
                      resolve_config, save_corpus, task_from_config, train)
from .seq2seq import Utterance

log = logging.getLogger("factorweights")

EQUIV_TOL = 1e-9
GRADCHECK_TOL = 1e-5


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))
    sys.stdout.flush()


def _load_cfg(args):
    text = ""
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            text = f.read()
    items = parse_config_items(text)
    for name in ("seed", "k", "langs", "arch"):
        value = getattr(args, name, None)
        if value is not None:
            items[name] = value
    return resolve_config(items)


# -- subcommands ----------------------------------------------------------------


def _cmd_gen_data(args):
    cfg = _load_cfg(args)
    corpus = generate_corpus(task_from_config(cfg))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "corpus.fwc")
    save_corpus(corpus, path)
    cfg_path = os.path.join(args.out, "task.cfg")
    with open(cfg_path, "w", encoding="utf-8") as f:
        f.write(render_config(cfg))
    return 0, {
        "command": "gen-data",
        "path": path,
        "config": cfg_path,
        "langs": cfg["langs"],
        "vocab": cfg["vocab"],
        "utterances": {name: len(utts) for name, utts in corpus.splits.items()},
    }


def _cmd_train(args):
    cfg = _load_cfg(args)
    corpus = generate_corpus(task_from_config(cfg))
    result = train(cfg, corpus, args.out)
    final_dev = {
        str(l): {key: m[key] for key in
                 ("loss", "token_accuracy", "sequence_error_rate")}
        for l, m in result["final_eval"].items()
    }
    log.info("trained %d steps (%d epochs) in %.1f s",
             result["steps"], result["epochs"], result["wall_time"])
    return 0, {
        "command": "train",
        "out": args.out,
        "arch": cfg["arch"],
        "steps": result["steps"],
        "best_step": result["best_step"],
        "best_min_acc": result["best_min_acc"],
        "best_mean_acc": result["best_mean_acc"],
        "stopped_early": result["stopped_early"],
        "final_dev": final_dev,
        "metrics": result["metrics_path"],
        "best_checkpoint": result["best_path"],
        "final_checkpoint": result["final_path"],
    }


def _cmd_eval(args):
    model, state = load_checkpoint(args.checkpoint)
    cfg = _load_cfg(args) if args.config else state["config"]
    corpus = generate_corpus(task_from_config(cfg))
    splits = {}
    print(f"{'split':<6} {'lang':>4} {'loss':>10} {'token_acc':>10} {'seq_err':>8}")
    for split in ("dev", "test"):
        results = evaluate(model, corpus.split(split))
        for l, m in results.items():
            print(f"{split:<6} {l:>4} {m['loss']:>10.4f} "
                  f"{m['token_accuracy']:>10.4f} {m['sequence_error_rate']:>8.4f}")
        splits[split] = {
            str(l): {key: m[key] for key in
                     ("loss", "token_accuracy", "sequence_error_rate")}
            for l, m in results.items()
        }
    return 0, {
        "command": "eval",
        "checkpoint": args.checkpoint,
        "step": state["step"],
        "splits": splits,
    }


def _gradcheck_model(arch, seed):
    model = build_model(resolve_config(dict(
        parse_config_items(""), arch=arch, d_feat=3, d_model=6, layers=1,
        heads=2, d_ff=8, vocab=3, langs=2, k=1, seed=seed)))
    rng = Rng(seed).split("gradcheck-input")
    utts = []
    for l in range(model.langs):
        n = 2
        buf = array("d", bytes(8 * n * model.d_feat))
        rng.split(l).fill_normal(buf)
        trng = rng.split(f"t.{l}")
        toks = ([model.bos_id] + [trng.randint(model.vocab) for _ in range(n)]
                + [model.eos_id])
        utts.append(Utterance(Tensor((n, model.d_feat), buf), toks, l))

    def f(_params):
        return add(model.batch_loss(0, [utts[0]]), model.batch_loss(1, [utts[1]]))

    return finite_diff_check(f, model.params(), tol=GRADCHECK_TOL)


def _cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else 0
    arches = ("lstm", "attention") if args.arch is None else (args.arch,)
    results = {}
    ok = True
    for arch in arches:
        report = _gradcheck_model(arch, seed)
        print(f"== {arch} ==")
        print(report)
        results[arch] = {"max_rel_err": report.max_rel_err, "ok": report.ok}
        ok = ok and report.ok
    return (0 if ok else 1), {
        "command": "gradcheck",
        "tolerance": GRADCHECK_TOL,
        "results": results,
        "ok": ok,
    }


def _cmd_equiv_check(args):
    seed = args.seed if args.seed is not None else 0
    dims = None
    if args.dims:
        parts = args.dims.split(",")
        if len(parts) != 2:
            raise _UsageError(f"--dims wants D_IN,D_OUT, got {args.dims!r}")
        try:
            dims = (int(parts[0]), int(parts[1]))
        except ValueError:
            raise _UsageError(f"--dims wants integers, got {args.dims!r}") from None
    pinned = dims or args.k or args.langs
    layers = 32 if pinned else 208
    max_dev, tested = equivalence_sweep(seed=seed, layers=layers, dims=dims,
                                        k=args.k, langs=args.langs)
    ok = max_dev <= EQUIV_TOL
    print(f"{tested} layers, max |fast - explicit| = {max_dev:.3e} "
          f"({'OK' if ok else 'FAIL'} at {EQUIV_TOL:.0e})")
    return (0 if ok else 1), {
        "command": "equiv-check",
        "layers": tested,
        "max_deviation": max_dev,
        "tolerance": EQUIV_TOL,
        "ok": ok,
    }


def _cmd_params(args):
    cfg = _load_cfg(args)
    model = build_model(cfg)
    summary = model.overhead_summary()
    print(f"{'layer':<28} {'shape':>12} {'shared':>10} {'added/lang':>10} {'ratio':>9}")
    for o in summary["per_layer"]:
        shape = f"{o['d_in']}x{o['d_out']}"
        print(f"{o['path']:<28} {shape:>12} "
              f"{o['shared']:>10} {o['per_language_added']:>10} "
              f"{o['ratio']:>9.4%}")
    print(f"per-language added: {summary['per_language_added']} "
          f"({summary['ratio_vs_total']:.4%} of shared total "
          f"{summary['shared_total']})")
    out = {
        "command": "params",
        "arch": cfg["arch"],
        "langs": cfg["langs"],
        "k": cfg["k"],
        "per_language_added": summary["per_language_added"],
        "shared_linear": summary["shared_linear"],
        "shared_total": summary["shared_total"],
        "ratio_vs_linear": summary["ratio_vs_linear"],
        "ratio_vs_total": summary["ratio_vs_total"],
    }
    code = 0
    if args.checkpoint:
        arrays, _step, _cfg = read_checkpoint(args.checkpoint)
        ckpt_bytes = sum(8 * len(buf) for name, (_s, buf) in arrays.items()
                         if not name.startswith("adam."))
        model_bytes = sum(8 * p.size for p in model.params())
        out["checkpoint_bytes"] = ckpt_bytes
        out["model_bytes"] = model_bytes
        out["checkpoint_match"] = ckpt_bytes == model_bytes
        if not out["checkpoint_match"]:
            code = 1
            print(f"MISMATCH: checkpoint holds {ckpt_bytes} bytes of weights, "
                  f"model wants {model_bytes}")
    return code, out


def _cmd_plot(args):
    metrics = os.path.join(args.out, "metrics.csv")
    with open(metrics, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("step,lang,split"):
        raise ValueError(f"{metrics}: not a metrics CSV")
    by_lang = {}
    for line in lines[1:]:
        step, lang, _split, loss, acc, seq_err, lr = line.split(",")
        by_lang.setdefault(int(lang), []).append(
            (int(step), float(loss), float(acc), float(seq_err), float(lr)))
    langs = sorted(by_lang)
    data_path = os.path.join(args.out, "curves.dat")
    with open(data_path, "w", encoding="utf-8") as f:
        f.write("# step loss token_acc seq_err lr; one index block per language\n")
        for l in langs:
            f.write(f"# language {l}\n")
            for row in sorted(by_lang[l]):
                f.write(" ".join(repr(v) for v in row) + "\n")
            f.write("\n\n")
    script_path = os.path.join(args.out, "curves.gp")
    with open(script_path, "w", encoding="utf-8") as f:
        f.write(
            "set terminal pngcairo size 900,600\n"
            f"set output '{os.path.join(args.out, 'curves.png')}'\n"
            "set multiplot layout 2,1\n"
            "set xlabel 'update'\n"
            "set ylabel 'dev loss'\n"
            f"plot for [i=0:{len(langs) - 1}] '{data_path}' index i "
            "using 1:2 with lines title sprintf('lang %d', i)\n"
            "set ylabel 'dev token accuracy'\n"
            "set yrange [0:1]\n"
            f"plot for [i=0:{len(langs) - 1}] '{data_path}' index i "
            "using 1:3 with lines title sprintf('lang %d', i)\n"
            "unset multiplot\n")
    rows = sum(len(v) for v in by_lang.values())
    return 0, {
        "command": "plot",
        "rows": rows,
        "languages": langs,
        "data": data_path,
        "script": script_path,
    }


# -- driver ----------------------------------------------------------------------


def _build_parser():
    parser = _Parser(prog="factorweights",
                     description="Per-language factorized sequence models.")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def common(p, *names):
        if "config" in names:
            p.add_argument("--config", help="key = value config file")
        if "out" in names:
            p.add_argument("--out", required=True, help="output directory")
        if "seed" in names:
            p.add_argument("--seed", type=int, help="seed override")
        if "checkpoint" in names:
            p.add_argument("--checkpoint", help="checkpoint path")
        if "k" in names:
            p.add_argument("--k", type=int, help="factor rank override")
        if "langs" in names:
            p.add_argument("--langs", type=int, help="language count override")
        if "arch" in names:
            p.add_argument("--arch", choices=("lstm", "attention"),
                           help="architecture override")

    p = sub.add_parser("gen-data", help="materialize a corpus for a config")
    common(p, "config", "out", "seed", "k", "langs", "arch")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a config")
    common(p, "config", "out", "seed", "k", "langs", "arch")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on dev and test")
    common(p, "config", "seed", "k", "langs", "arch")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of model gradients")
    common(p, "seed", "arch")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("equiv-check",
                       help="compare the gated and explicit forward paths")
    common(p, "seed", "k", "langs")
    p.add_argument("--dims", help="pin layer dims as D_IN,D_OUT")
    p.set_defaults(func=_cmd_equiv_check)

    p = sub.add_parser("params", help="parameter accounting for a config")
    common(p, "config", "seed", "k", "langs", "arch", "checkpoint")
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("plot",
                       help="gnuplot data and script from a run's metrics.csv")
    common(p, "out")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None):
    parser = _build_parser()
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise _UsageError("a subcommand is required")
        log.info("kernel backend: %s", kernels.BACKEND)
        code, summary = args.func(args)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"error: {e}\n")
        _emit({"error": str(e), "exit": 2})
        return 2
    except (OSError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        _emit({"error": str(e), "exit": 2})
        return 2
    except RuntimeError as e:
        sys.stderr.write(f"error: {e}\n")
        _emit({"error": str(e), "exit": 1})
        return 1
    _emit(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
