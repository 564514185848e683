"""Command-line entry point: ``symcorr <command> --seed S --config FILE --out DIR``.

Exit codes: 0 on success, 2 on contract, format, or I/O errors, 1 otherwise.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import SymCorrError
from .lab.config import apply, check_sections, load_config, section
from .lab.fts import load_episode, save_episode, write_mask
from .lab.report import emit_report
from .lab.sweep import DEFAULT_N_VALUES, METHODS, SWEEP_TOKENS, ModelSpec, comparison_params, dilution_sweep
from .lab.synth import TOY_TRAIN_SPEC, PoolSpec, episode_digest, synth_pool
from .pruning import PruneConfig, greedy_select, multilayer_terms
from .segmenter.metrics import bce_loss, miou
from .segmenter.model import ForwardConfig, forward_episode
from .segmenter.training import SGDConfig, loss_and_grad_fn, train_toy
from .segmenter.types import SegmenterParams
from .tensor.gradcheck import finite_difference_check

logger = logging.getLogger("symcorr")

SECTIONS = ("pool", "model", "prune", "forward", "sweep", "train", "gradcheck")
DEFAULT_POOL = PoolSpec(n_low=9, tokens_per_layer=SWEEP_TOKENS)


@dataclass(frozen=True)
class SweepSettings:
    n_values: tuple = DEFAULT_N_VALUES
    seeds: int = 1
    methods: tuple = METHODS
    metric: str = "delta"
    workers: int = 1


@dataclass(frozen=True)
class TrainSettings:
    hidden: int = 16
    heads: int = 1
    refiner_scale: float = 0.1


@dataclass(frozen=True)
class GradcheckSettings:
    points: int = 3
    step: float = 1e-5
    tolerance: float = 1e-4
    dim: int = 4
    hidden: int = 3
    n_supports: int = 2


@dataclass(frozen=True)
class _Forward:
    attention: str = "symmetric"
    scale_mode: str = "sqrt_d"
    pool_mode: str = "tokens"


class Run:
    """Parsed flags plus the typed config sections of one invocation."""

    def __init__(self, args):
        self.args = args
        raw = load_config(args.config) if args.config else {}
        check_sections(raw, SECTIONS)
        self.raw = raw
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.model = apply(ModelSpec(), section(raw, "model"), "model")
        self.prune = apply(PruneConfig(), section(raw, "prune"), "prune")
        self.sweep = apply(SweepSettings(), section(raw, "sweep"), "sweep")
        train = section(raw, "train")
        sgd_keys = set(SGDConfig.__dataclass_fields__)
        self.train = apply(TrainSettings(), {k: v for k, v in train.items() if k not in sgd_keys}, "train")
        self.sgd = apply(SGDConfig(), {k: v for k, v in train.items() if k in sgd_keys}, "train")
        self.grad = apply(GradcheckSettings(), section(raw, "gradcheck"), "gradcheck")
        fwd = apply(_Forward(), section(raw, "forward"), "forward")
        self.forward = ForwardConfig(fwd.attention, fwd.scale_mode, fwd.pool_mode, self.prune)

    def pool(self, default: PoolSpec = DEFAULT_POOL) -> PoolSpec:
        return apply(default, section(self.raw, "pool"), "pool").replace(seed=self.args.seed)

    def episode(self, default: PoolSpec = DEFAULT_POOL):
        if getattr(self.args, "episode", None):
            return load_episode(self.args.episode)
        return synth_pool(self.pool(default))

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_bytes(text.encode("utf-8"))
        return path


def _fmt(x) -> str:
    return format(float(x), ".6f")


def cmd_synth(run: Run) -> None:
    e = run.episode()
    save_episode(run.out / "episode", e)
    print(f"wrote {len(e.supports)} supports to {run.out / 'episode'} (sha256 {episode_digest(e)[:16]})")


def cmd_contrib(run: Run) -> None:
    e = run.episode()
    params = comparison_params(e.dims, run.args.seed, run.model)
    out = forward_episode(e, params, run.forward)
    lines = ["layer,support,delta"]
    for l, rep in enumerate(out.reports):
        for sid, d in zip(out.selected_ids, rep.per_support_delta):
            lines.append(f"{l},{sid},{_fmt(d)}")
    run.write("contrib.csv", "\n".join(lines) + "\n")
    print(f"{len(out.selected_ids)} supports scored over {len(out.reports)} layers")


def cmd_prune(run: Run) -> None:
    e = run.episode()
    params = comparison_params(e.dims, run.args.seed, run.model)
    pools = [[s.layers[l] for s in e.supports] for l in range(e.n_layers)]
    terms = multilayer_terms(pools, e.query_layers, params.projectors)
    keep = min(run.prune.keep, len(terms))
    result = greedy_select(terms, keep)
    chosen = set(result.selected_ids)
    lines = ["support,theta_term,selected"]
    for i, t in enumerate(terms):
        lines.append(f"{e.supports[i].id},{_fmt(t)},{int(i in chosen)}")
    run.write("prune.csv", "\n".join(lines) + "\n")
    print(f"kept {keep} of {len(terms)} supports in {result.evaluations} subset evaluations")


def cmd_segment(run: Run) -> None:
    e = run.episode()
    params = comparison_params(e.dims, run.args.seed, run.model)
    out = forward_episode(e, params, run.forward)
    write_mask(run.out / "mask.pgm", out.mask.binary)
    score = miou([out.mask], [e.query_truth], [e.category])
    loss = bce_loss(out.mask.probs, e.query_truth)
    run.write("segment.txt", f"miou = {_fmt(score)}\nbce = {_fmt(loss)}\n"
                             f"kept = {','.join(str(i) for i in out.selected_ids)}\n")
    print(f"mIoU {score:.4f}, BCE {loss:.4f}")


def cmd_dilution(run: Run) -> None:
    s = run.sweep
    template = run.pool(PoolSpec(tokens_per_layer=SWEEP_TOKENS))
    seeds = [run.args.seed + k for k in range(s.seeds)]
    result = dilution_sweep(template, s.n_values, s.methods, seeds, run.model, run.prune,
                            timing=run.args.timing, workers=s.workers)
    emit_report(result, run.out / "dilution.csv", run.out / "dilution.svg", metric=s.metric)
    print(f"{len(result.rows)} rows, config {result.metadata['config_hash']}")


def _tiny_episode(seed: int, g: GradcheckSettings):
    spec = PoolSpec(n_low=g.n_supports - 1, dim=g.dim, tokens_per_layer=(4, 16, 64), seed=seed)
    return synth_pool(spec)


def cmd_gradcheck(run: Run) -> int:
    g = run.grad
    worst = 0.0
    lines = ["point,max_rel_err"]
    for k in range(g.points):
        seed = run.args.seed + k
        e = _tiny_episode(seed, g)
        params = SegmenterParams.random(e.dims, g.hidden, np.random.default_rng([seed, 2]))
        f, grad, x0 = loss_and_grad_fn(e, params, run.forward)
        err = finite_difference_check(f, x0, g.step, grad=grad)
        worst = max(worst, err)
        lines.append(f"{k},{err:.3e}")
    run.write("gradcheck.csv", "\n".join(lines) + "\n")
    ok = worst <= g.tolerance
    print(f"max relative error {worst:.3e} over {g.points} points ({'ok' if ok else 'FAILED'})")
    return 0 if ok else 1


def cmd_train(run: Run) -> None:
    e = run.episode(TOY_TRAIN_SPEC)
    t = run.train
    params = SegmenterParams.unit_bias_init(e.dims, t.hidden, t.heads, np.random.default_rng(run.args.seed),
                                            refiner_scale=t.refiner_scale)
    result = train_toy([e], params, run.sgd, run.forward)
    trace = result.loss_trace
    run.write("loss.csv", "step,loss\n" + "".join(f"{i},{l:.9f}\n" for i, l in enumerate(trace)))
    print(f"loss {trace[0]:.4f} -> {trace[-1]:.4f} ({trace[-1] / trace[0]:.1%} of initial)")


COMMANDS = {
    "synth": (cmd_synth, "write a seeded synthetic episode (FTS features, PGM masks)"),
    "contrib": (cmd_contrib, "per-support contribution index of every layer"),
    "prune": (cmd_prune, "score supports against the query and keep the best"),
    "segment": (cmd_segment, "run the untrained comparison model on one episode"),
    "dilution": (cmd_dilution, "deviation and mIoU against the number of shots"),
    "gradcheck": (cmd_gradcheck, "compare analytic and finite-difference gradients"),
    "train": (cmd_train, "momentum SGD on a single synthetic episode"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symcorr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=Path, default=None, help="key = value file with dotted sections")
        p.add_argument("--out", type=Path, default=Path("out"))
        if name in ("contrib", "prune", "segment", "train"):
            p.add_argument("--episode", type=Path, default=None, help="episode directory written by synth")
        if name == "dilution":
            p.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte reproducibility)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        run = Run(args)
        t0 = time.perf_counter()
        code = handler(run) or 0
        logger.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
        return code
    except (SymCorrError, OSError) as exc:
        print(f"symcorr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything else is a bug
        logger.exception("internal error")
        print(f"symcorr {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
