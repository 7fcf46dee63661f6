"""Command-line surface.

Every command is deterministic given the config seed: rerunning a
command writes byte-identical outputs (logs carry no timestamps).
Failures exit nonzero with one machine-parseable line on stderr:
``error: <kind>: <message>``.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from . import model as M
from . import pipeline as P
from .config import RunConfig, load_config
from .corpus import gen_corpus
from .tensor import Tensor, no_grad


def _load_run_config(args) -> RunConfig:
    rc = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        rc.seed = args.seed
    return rc


def _say(args, message: str):
    if not getattr(args, "quiet", False):
        print(message)


def _check_corpus_matches(rc: RunConfig, corpus):
    spec = corpus.spec
    for key in ("n_speakers", "mel_dim", "phoneme_vocab"):
        if getattr(rc, key) != getattr(spec, key):
            raise ValueError(
                f"config {key}={getattr(rc, key)} does not match corpus "
                f"{key}={getattr(spec, key)}"
            )


def cmd_gen_corpus(args) -> int:
    rc = _load_run_config(args)
    corpus = gen_corpus(rc.corpus_spec())
    formats.save_corpus(args.out, corpus)
    count = rc.n_speakers * rc.utterances_per_speaker
    _say(args, f"wrote {count} utterances for {rc.n_speakers} speakers "
               f"to {args.out}")
    return 0


def _write_loss_log(path, log_rows):
    names = ["step"] + list(P.LOSS_NAMES) + ["total"]
    lines = ["\t".join(names)]
    for step, losses in log_rows:
        cells = [str(step)]
        for name in P.LOSS_NAMES:
            cells.append(repr(losses[name]) if name in losses else "-")
        cells.append(repr(losses["total"]))
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_pretrain(args) -> int:
    rc = _load_run_config(args)
    corpus = formats.load_corpus(args.corpus)
    _check_corpus_matches(rc, corpus)
    progress = None
    if not args.quiet:
        def progress(step, total, losses):
            if step % max(1, total // 20) == 0 or step == total - 1:
                print(f"step {step}/{total} total={losses['total']:.5f}")
    ps, log_rows = P.pretrain(corpus, rc, progress=progress)
    formats.save_checkpoint(args.out, ps, {
        "seed": str(rc.seed),
        "phase1_steps": str(rc.pretrain_phase1_steps),
        "phase2_steps": str(rc.pretrain_phase2_steps),
    })
    log_path = args.log or f"{args.out}.log"
    _write_loss_log(log_path, log_rows)
    _say(args, f"checkpoint written to {args.out}; loss log at {log_path}")
    return 0


def cmd_finetune(args) -> int:
    rc = _load_run_config(args)
    corpus = formats.load_corpus(args.corpus)
    ps, meta = formats.load_checkpoint(args.checkpoint)
    _check_corpus_matches(rc, corpus)
    speaker = args.speaker
    if speaker is None:
        speaker = corpus.adapt_speaker_ids[0]
    adapted, log_rows = P.finetune(ps, corpus, rc, speaker, k=args.k)
    meta.update({
        "adapted_speaker": str(speaker),
        "finetune_steps": str(rc.finetune_steps),
        "adaptation_k": str(args.k if args.k is not None else rc.adaptation_k),
    })
    formats.save_checkpoint(args.out, adapted, meta)
    log_path = args.log or f"{args.out}.log"
    _write_loss_log(log_path, log_rows)
    _say(args, f"adapted checkpoint for speaker {speaker} written to {args.out}")
    return 0


def cmd_export_speaker(args) -> int:
    ps, _ = formats.load_checkpoint(args.checkpoint)
    deployed = P.export_speaker(ps, ps.config, args.speaker)
    formats.save_speaker_blob(args.out, deployed)
    size = Path(args.out).stat().st_size
    _say(args, f"exported speaker {args.speaker}: "
               f"{deployed.scalar_count} scalars, {size} bytes")
    return 0


def _read_phonemes(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ValueError(f"no phoneme ids in {path}")
    return np.array([int(t) for t in tokens], dtype=np.int64)


def cmd_infer(args) -> int:
    ps, _ = formats.load_checkpoint(args.checkpoint)
    cfg = ps.config
    deployed = formats.load_speaker_blob(args.blob)
    phonemes = _read_phonemes(args.phonemes)
    reference = None
    if args.reference is not None:
        fields = dict(formats.read_records(args.reference))
        if "mel" not in fields:
            raise ValueError(f"{args.reference} holds no mel record")
        reference = fields["mel"]
    mel, durations = P.infer(ps, cfg, phonemes, reference_mel=reference,
                             deployed=deployed)
    formats.save_mel(args.out, mel.astype(np.float32))
    _say(args, f"synthesized {mel.shape[0]} frames "
               f"({durations.sum()} total duration) to {args.out}")
    return 0


def cmd_eval(args) -> int:
    ps, meta = formats.load_checkpoint(args.checkpoint)
    cfg = ps.config
    corpus = formats.load_corpus(args.corpus)
    deployed = None
    if args.blob is not None:
        deployed = formats.load_speaker_blob(args.blob)

    if args.speaker is not None:
        speakers = [args.speaker]
    elif deployed is not None and "adapted_speaker" in meta:
        speakers = [int(meta["adapted_speaker"])]
    else:
        speakers = corpus.source_speaker_ids

    k_label = meta.get("adaptation_k", "-")
    lines = ["speaker\tK\tteacher_forced_mse\tfree_running_mse\tduration_accuracy"]
    for sid in speakers:
        testset = corpus.holdout_utterances(sid)
        reference = P.pick_reference(corpus.train_utterances(sid)).mel
        metrics = P.evaluate(
            ps, cfg, testset, reference_mel=reference,
            deployed=deployed,
            speaker_emb=None if deployed is not None else M.speaker_embedding(ps, sid),
        )
        lines.append("\t".join([
            str(sid), str(k_label),
            repr(metrics["teacher_forced_mse"]),
            repr(metrics["free_running_mse"]),
            repr(metrics["duration_accuracy"]),
        ]))
    report = "\n".join(lines) + "\n"
    Path(args.report).write_text(report)
    if not args.quiet:
        sys.stdout.write(report)
    return 0


def cmd_inspect(args) -> int:
    if args.blob is not None:
        deployed = formats.load_speaker_blob(args.blob)
        h = deployed.embedding.size
        sites = len(deployed.gammas)
        expected = 2 * h * sites + h
        if deployed.scalar_count != expected:
            raise ValueError(
                f"blob scalar count {deployed.scalar_count} != formula {expected}"
            )
        _say(args, f"speaker blob: h={h} sites={sites} "
                   f"scalars={deployed.scalar_count} (formula ok) "
                   f"file_bytes={formats.blob_file_size(h, sites)}")
        return 0

    ps, _ = formats.load_checkpoint(args.checkpoint)
    cfg = ps.config
    counts = {scope: M.count_params(ps, cfg, scope)
              for scope in ("total", "finetuned", "deployed")}
    h, c = cfg.hidden, cfg.cln_sites
    if cfg.use_cln and not cfg.cln_bias:
        if counts["finetuned"] != 2 * h * h * c + h:
            raise ValueError(
                f"walked finetuned count {counts['finetuned']} != "
                f"formula {2 * h * h * c + h}"
            )
        if counts["deployed"] != 2 * h * c + h:
            raise ValueError(
                f"walked deployed count {counts['deployed']} != "
                f"formula {2 * h * c + h}"
            )
    for scope in ("total", "finetuned", "deployed"):
        _say(args, f"{scope}\t{counts[scope]}")
    _say(args, f"h={h} C={c} (closed-form check ok)")
    return 0


def cmd_dump_utterance_vectors(args) -> int:
    from . import acoustic

    ps, _ = formats.load_checkpoint(args.checkpoint)
    cfg = ps.config
    if not cfg.use_utterance_cond:
        raise ValueError("model has no utterance-level encoder")
    corpus = formats.load_corpus(args.corpus)
    lines = []
    with no_grad():
        for sid in range(corpus.spec.n_speakers):
            for utt in corpus.utterances[sid]:
                vec = acoustic.utterance_encode(
                    ps, Tensor(utt.mel.astype(ps.dtype))
                ).data
                lines.append(" ".join([str(sid)] + [repr(float(v)) for v in vec]))
    Path(args.out).write_text("\n".join(lines) + "\n")
    _say(args, f"wrote {len(lines)} utterance vectors to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxadapt",
        description="voice adaptation pipeline on a synthetic corpus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", default=None,
                           help="config file or preset name (paper, toy)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("gen-corpus", help="synthesize the corpus to a directory")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("pretrain", help="two-phase pretraining")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="loss log path (default OUT.log)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="adapt one speaker")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--speaker", type=int, default=None)
    p.add_argument("--k", type=int, default=None,
                   help="adaptation utterances (default: config adaptation_k)")
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("export-speaker", help="write a deployed speaker blob")
    common(p, config=False, seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--speaker", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_speaker)

    p = sub.add_parser("infer", help="synthesize mel for a phoneme sequence")
    common(p, config=False, seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--blob", required=True)
    p.add_argument("--phonemes", required=True,
                   help="text file of whitespace-separated phoneme ids")
    p.add_argument("--reference", default=None,
                   help="utterance record supplying the reference mel")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate on corpus holdout utterances")
    common(p, config=False, seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--blob", default=None)
    p.add_argument("--corpus", required=True)
    p.add_argument("--speaker", type=int, default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="parameter counts by scope")
    common(p, config=False, seed=False)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--blob", default=None)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("dump-utterance-vectors",
                       help="utterance-level vectors for offline visualization")
    common(p, config=False, seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_utterance_vectors)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "inspect" and not (args.checkpoint or args.blob):
        print("error: ValueError: inspect needs --checkpoint or --blob",
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
