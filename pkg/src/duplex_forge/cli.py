"""duplex-forge command line.

Exit codes: 0 success, 1 validation failure, 2 missing input, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .codec import INDEPENDENT, LAYERED, default_layout
from .config import ConfigError, dump_config, parse_bool, read_config, resolve_seed
from .dialogue import CorpusError, read_corpus, write_corpus

EXIT_OK, EXIT_INVALID, EXIT_MISSING, EXIT_INTERNAL = 0, 1, 2, 3


class MissingInput(Exception):
    pass


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise MissingInput(f"missing required setting --{n.replace('_', '-')}")


def _exists(path, what):
    if not Path(path).exists():
        raise MissingInput(f"{what} not found: {path}")
    return Path(path)


def _out_dir(args) -> Path:
    _need(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(out: Path, args) -> None:
    # the run directory itself is left out so reruns elsewhere match byte for byte
    skip = {"func", "config", "command", "out"}
    values = {k: v for k, v in vars(args).items() if k not in skip}
    (out / "config.snapshot").write_text(dump_config(values), encoding="utf-8")


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must be LO:HI, got {text!r}") from None
    return lo, hi


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    from .synthetic import event_corpus, random_corpus
    out = Path(args.out_file)
    gen = event_corpus if args.kind == "events" else random_corpus
    corpus = gen(args.n, seed=args.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        write_corpus(corpus, fh)
    print(f"wrote {len(corpus)} dialogues to {out}")
    return EXIT_OK


def cmd_build(args) -> int:
    from .streams import StreamBuilder, Vocabulary, write_examples
    _need(args, "corpus")
    corpus = read_corpus(_exists(args.corpus, "corpus"))
    out = _out_dir(args)
    _snapshot(out, args)
    vocab = Vocabulary.load(_exists(args.vocab, "vocabulary")) if args.vocab else None
    sb = StreamBuilder(alignment=args.alignment, audio_delay_frames=args.delay,
                       behavior_tokens=args.behavior_tokens, loss_mode=args.loss_mode, layout=args.layout,
                       max_length=args.max_length, vocab_size=args.vocab_size)
    sb.fit(corpus, vocabulary=vocab)
    examples, excluded = sb.build(corpus)
    name = "examples.bin" if args.format == "bin" else "examples.jsonl"
    with open(out / name, "wb") as fh:
        write_examples(examples, fh, args.format)
    sb.vocabulary_.save(out / "vocab.txt")
    report = {
        "seed": args.seed,
        "n_dialogues": len(corpus),
        "n_examples": len(examples),
        "excluded": [{"dialogue_id": i, "system": s, "reason": r} for i, s, r in excluded],
    }
    (out / "build_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if not corpus:
        _warn("corpus is empty; wrote an empty example file")
    print(f"{len(examples)} examples, {len(excluded)} excluded -> {out / name}")
    return EXIT_OK


def _write_loss_csv(path: Path, steps, losses, append: bool) -> None:
    mode = "a" if append and path.exists() else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            w.writerow(["step", "loss"])
        for s, l in zip(steps, losses):
            w.writerow([s, repr(float(l))])


def cmd_train(args) -> int:
    from .neural import FrameNet, ModelConfig, load_checkpoint, save_checkpoint, train
    from .streams import read_examples
    _need(args, "examples")
    path = _exists(args.examples, "examples file")
    # validate the model configuration before touching data
    layout = default_layout(args.layout)
    cfg = ModelConfig(hidden_size=args.hidden_size, n_layers=args.n_layers, layout=layout,
                      text_vocab_size=args.text_vocab_size, seed=args.seed, context_length=args.context_length,
                      head_init_scale=args.head_init_scale)
    with open(path, "rb") as fh:
        examples = read_examples(fh)
    if not examples:
        raise ValueError("examples file is empty")
    out = _out_dir(args)
    _snapshot(out, args)
    start = 0
    if args.resume:
        net, start, _ = load_checkpoint(_exists(args.resume, "checkpoint"))
    else:
        if examples[0].n_codebooks != layout.n_codebooks:
            raise ValueError(f"examples have {examples[0].n_codebooks} codebooks, layout {args.layout!r} "
                             f"has {layout.n_codebooks}")
        net = FrameNet(cfg)
    res = train(net, examples, args.steps, args.lr, args.accumulation, args.clip, start_step=start)
    save_checkpoint(net, out / "model.ckpt", start + len(res.losses), extra={"seed": args.seed})
    _write_loss_csv(out / "loss.csv", res.steps, res.losses, append=bool(args.resume))
    print(f"steps {start + 1}..{start + len(res.losses)}: loss {res.losses[0]:.4f} -> {res.losses[-1]:.4f}")
    return EXIT_OK


def _agent_seeds(seed: int, i: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence([seed, i]).generate_state(2)
    return int(a), int(b)


def _build_agents(net, d, vocab, sampling, seeds):
    from .engine import ModelAgent
    from .streams import build_prefix
    agents = []
    for spk, s in zip(d.speakers, seeds):
        prefix = build_prefix(d, spk, vocab, grow=False)
        if max(prefix.prompt_tokens, default=0) >= net.config.text_vocab_size:
            raise ValueError("prompt token outside the model's text vocabulary")
        agents.append(ModelAgent(net, prefix, sampling, seed=s))
    return agents


def _prompt_meta(d) -> list[dict]:
    from .evaluation.report import AgentPrompt
    out = []
    for spk in d.speakers:
        b = d.behavior[spk]
        slot = (d.speaker_ref or {}).get(spk, spk)
        out.append(AgentPrompt(slot, b.starts, b.backchannels, b.interruptions).__dict__)
    return out


def cmd_converse(args) -> int:
    from .engine import SamplingParams, converse, write_records
    from .neural import load_checkpoint
    from .streams import Vocabulary
    _need(args, "checkpoint", "prompts", "vocab")
    net, _, _ = load_checkpoint(_exists(args.checkpoint, "checkpoint"))
    prompts = read_corpus(_exists(args.prompts, "prompts file"))
    vocab = Vocabulary.load(_exists(args.vocab, "vocabulary"))
    if not prompts:
        raise ValueError("prompts file is empty")
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    sampling = SamplingParams(args.temperature, args.top_k, args.top_p)
    out = _out_dir(args)
    _snapshot(out, args)
    records = []
    for i in range(args.n):
        d = prompts[i % len(prompts)]
        a, b = _build_agents(net, d, vocab, sampling, _agent_seeds(args.seed, i))
        meta = {"dialogue_id": d.id, "seed": args.seed, "index": i, "speakers": list(d.speakers),
                "prompts": _prompt_meta(d)}
        records.append(converse(a, b, args.frames, conv_id=f"conv-{i:05d}", meta=meta))
    with open(out / "conversations.jsonl", "w", encoding="utf-8") as fh:
        write_records(records, fh)
    print(f"wrote {len(records)} conversations to {out / 'conversations.jsonl'}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .engine import (ModelAgent, SamplingParams, converse, leading_silence_frames, read_records,
                         record_first_speaker)
    from .neural import load_checkpoint
    from .streams import InstructionPrefix
    _need(args, "conversations")
    with open(_exists(args.conversations, "conversations file"), encoding="utf-8") as fh:
        records = read_records(fh)
    net = load_checkpoint(_exists(args.checkpoint, "checkpoint"))[0] if args.checkpoint else None
    layout = net.config.layout if net is not None else default_layout(args.layout)
    mismatches = 0
    for rec in records:
        line = (f"{rec.id}: {rec.n_frames} frames, first speaker {record_first_speaker(rec, layout)}, "
                f"leading silence {leading_silence_frames(rec, layout)} frames")
        if net is not None:
            agents = []
            for desc in rec.agents:
                if desc.get("kind") != "model":
                    raise ValueError(f"{rec.id}: only model agents can be replayed")
                agents.append(ModelAgent(net, InstructionPrefix(desc["speaker_slot"], tuple(desc["prompt_tokens"])),
                                         SamplingParams(**desc["sampling"]), seed=desc["seed"]))
            again = converse(agents[0], agents[1], rec.n_frames, rec.id, rec.meta)
            same = again.dumps() == rec.dumps()
            mismatches += not same
            line += ", replay identical" if same else ", replay DIFFERS"
        print(line)
    if mismatches:
        print(f"{mismatches} conversation(s) did not replay identically", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _params(args):
    from .evaluation import DetectorParams
    return DetectorParams(args.split, args.interrupt, args.overlap_tol, args.bc_max)


def _write_report(out: Path, report) -> None:
    names = ("general", "instruction", "turns")
    for name, table in zip(names, report.tables()):
        (out / f"{name}.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")


def cmd_fixtures(args) -> int:
    from .evaluation import fixture_report
    out = _out_dir(args)
    report = fixture_report()
    _write_report(out, report)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_eval(args) -> int:
    from .engine import read_records
    from .evaluation import SyntheticSpeakerEncoder, evaluate_run
    from .streams import Vocabulary
    if args.fixtures:
        return cmd_fixtures(args)
    _need(args, "conversations")
    with open(_exists(args.conversations, "conversations file"), encoding="utf-8") as fh:
        records = read_records(fh)
    vocab = Vocabulary.load(_exists(args.vocab, "vocabulary")) if args.vocab else None
    ppl = None
    if args.checkpoint and args.examples:
        from .neural import load_checkpoint, perplexity
        from .streams import read_examples
        net = load_checkpoint(_exists(args.checkpoint, "checkpoint"))[0]
        with open(_exists(args.examples, "examples file"), "rb") as fh:
            exs = read_examples(fh)
        ppl = (perplexity(net, exs, "dau"), perplexity(net, exs, "text"))
    out = _out_dir(args)
    _snapshot(out, args)
    report = evaluate_run(records, params=_params(args), vocab=vocab, layout=default_layout(args.layout),
                          perplexity=ppl, speaker_encoder=SyntheticSpeakerEncoder(seed=args.seed),
                          ipu_silence_threshold_s=args.ipu_threshold, label=args.label)
    _write_report(out, report)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    from .evaluation import grid_search
    _need(args, "corpus")
    corpus = read_corpus(_exists(args.corpus, "corpus"))
    out = _out_dir(args)
    _snapshot(out, args)
    ranges = {"split": args.split_range, "interrupt": args.interrupt_range, "overlap": args.overlap_range}
    res = grid_search(corpus, ranges, args.step, args.bc_max, args.workers)
    b = res.best
    (out / "best_params.txt").write_text(dump_config({
        "split": b.split_threshold_s, "interrupt": b.interruption_threshold_s,
        "overlap_tol": b.overlap_tolerance_s, "bc_max": b.bc_max_duration_s, "objective": res.objective,
        "seed": args.seed}), encoding="utf-8")
    summary = {"best": list(b.triple), "objective": res.objective, "grid_shape": list(res.counts.shape[1:]),
               "n_configs": res.n_configs, "per_dialogue_mean_std": res.summary(), "seed": args.seed}
    (out / "grid_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"best split={b.split_threshold_s} interrupt={b.interruption_threshold_s} "
          f"overlap={b.overlap_tolerance_s} objective={res.objective} over {res.n_configs} configs")
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _detector_flags(p):
    p.add_argument("--split", type=float, default=0.565, help="word merge threshold (s)")
    p.add_argument("--interrupt", type=float, default=0.405, help="interruption threshold (s)")
    p.add_argument("--overlap-tol", type=float, default=0.435, help="overlap tolerance (s)")
    p.add_argument("--bc-max", type=float, default=1.0, help="longest backchannel (s)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="duplex-forge", description="Full-duplex dialogue stream toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="global seed (falls back to $DUPLEX_FORGE_SEED)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("synth", help="write a synthetic corpus")
    s.add_argument("--kind", choices=("random", "events"), default="random")
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--out-file", "-o", default="corpus.jsonl")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build", help="corpus -> training examples")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--vocab", help="start from an existing vocabulary file")
    s.add_argument("--alignment", choices=("word", "utterance"), default="word")
    s.add_argument("--delay", type=int, default=2, help="audio delay in frames")
    s.add_argument("--behavior-tokens", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--loss-mode", choices=("s", "s_u"), default="s_u")
    s.add_argument("--layout", choices=(INDEPENDENT, LAYERED), default=INDEPENDENT)
    s.add_argument("--max-length", type=int, default=2048)
    s.add_argument("--vocab-size", type=int, default=1024)
    s.add_argument("--format", choices=("jsonl", "bin"), default="jsonl")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("train", help="train the frame model")
    s.add_argument("--examples")
    s.add_argument("--out")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--layout", choices=(INDEPENDENT, LAYERED), default=INDEPENDENT)
    s.add_argument("--hidden-size", type=int, default=32)
    s.add_argument("--n-layers", type=int, default=1)
    s.add_argument("--context-length", type=int, default=2048)
    s.add_argument("--text-vocab-size", type=int, default=1024)
    s.add_argument("--head-init-scale", type=float, default=0.0)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--lr", type=float, default=5e-5)
    s.add_argument("--accumulation", type=int, default=8)
    s.add_argument("--clip", type=float, default=1.0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("converse", help="self-talk between two model instances")
    s.add_argument("--checkpoint")
    s.add_argument("--prompts", help="corpus file whose dialogues supply both agents' prompts")
    s.add_argument("--vocab")
    s.add_argument("--out")
    s.add_argument("--n", type=int, default=5)
    s.add_argument("--frames", type=int, default=250)
    s.add_argument("--temperature", type=float, default=0.9)
    s.add_argument("--top-k", type=int, default=40)
    s.add_argument("--top-p", type=float, default=1.0)
    s.set_defaults(func=cmd_converse)

    s = sub.add_parser("replay", help="summarise and optionally re-run recorded conversations")
    s.add_argument("--conversations")
    s.add_argument("--checkpoint", help="re-run and compare against this model")
    s.add_argument("--layout", choices=(INDEPENDENT, LAYERED), default=INDEPENDENT)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("eval", help="report tables for recorded conversations")
    s.add_argument("--conversations")
    s.add_argument("--vocab")
    s.add_argument("--checkpoint", help="with --examples, adds perplexities")
    s.add_argument("--examples")
    s.add_argument("--out")
    s.add_argument("--label", default="run")
    s.add_argument("--layout", choices=(INDEPENDENT, LAYERED), default=INDEPENDENT)
    s.add_argument("--ipu-threshold", type=float, default=0.2)
    s.add_argument("--fixtures", action="store_true", help="render the published reference rows")
    _detector_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gridsearch", help="calibrate detector thresholds on a flagged corpus")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--split-range", type=_range, default=(0.20, 0.90))
    s.add_argument("--interrupt-range", type=_range, default=(0.10, 0.70))
    s.add_argument("--overlap-range", type=_range, default=(0.05, 0.50))
    s.add_argument("--step", type=float, default=0.005)
    s.add_argument("--bc-max", type=float, default=1.0)
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    s.set_defaults(func=cmd_gridsearch)

    s = sub.add_parser("fixtures", help="write the published reference tables")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fixtures)
    return p


def _apply_config(parser, argv, values: dict[str, str]) -> None:
    """Config entries become defaults of the chosen subcommand; explicit flags still win."""
    pre, _ = parser.parse_known_args(argv)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = subparsers.choices[pre.command]
    actions = {a.dest: a for a in sp._actions if a.dest != "help"}
    defaults = {}
    for key, raw in values.items():
        if key == "seed":
            continue
        if key not in actions:
            raise ConfigError(f"unknown setting {key!r} for {pre.command}")
        a = actions[key]
        if isinstance(a, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
            defaults[key] = parse_bool(raw)
        elif a.type is not None:
            try:
                defaults[key] = a.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as e:
                raise ConfigError(f"bad value for {key}: {e}") from None
        else:
            defaults[key] = raw
        if a.choices is not None and defaults[key] not in a.choices:
            raise ConfigError(f"{key} must be one of {list(a.choices)}")
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        values = {}
        if pre.config:
            values = read_config(_exists(pre.config, "config file"))
            _apply_config(parser, argv, values)
        args = parser.parse_args(argv)
        args.seed = resolve_seed(args.seed, values.get("seed"))
        return args.func(args)
    except MissingInput as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, CorpusError, ValueError, KeyError, OverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:  # --help/--version exit 0, usage errors count as invalid input
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
