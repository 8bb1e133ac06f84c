"""Command-line entry point: synth, enroll, detect, evaluate, calibrate, bench.

Exit codes: 0 success, 1 runtime failure, 2 usage error. An optional JSON
config file can pre-set any flag; explicit flags win over the file, which
wins over defaults. VT_LOG controls the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import decoder, dsp, evaluation, kws as kws_mod, pipeline, synth, verifier
from .audio import AudioFormatError, parse_wav, read_wav
from .embedder import EmbeddingNetwork, embed, random_embedding_bundle
from .kws import KwsNetwork, random_kws_bundle
from .weights import WeightFormatError, load_weights, save_weights

log = logging.getLogger("voicetrigger")


def _engine_from_args(args) -> pipeline.Engine:
    return pipeline.Engine.from_files(
        args.kws_weights,
        args.emb_weights,
        decision_window=args.decision_window,
        decision_hop=args.decision_hop,
        refractory=args.refractory,
    )


def _sv_threshold(args) -> float:
    if args.threshold_set:
        return verifier.load_thresholds(args.threshold_set).operating_threshold(
            args.method
        )
    if args.sv_threshold is None:
        raise SystemExit2("need --sv-threshold or --threshold-set")
    return args.sv_threshold


class SystemExit2(Exception):
    """Usage error surfaced after argparse has run."""


def cmd_synth(args) -> int:
    config = synth.TrialsetConfig.from_totals(
        args.pos,
        args.neg,
        num_target_speakers=args.speakers,
        num_imposter_speakers=args.imposters,
    )
    trials_path, manifest_path = synth.build_trialset(config, args.seed, args.out)
    log.info("wrote %s and %s", trials_path, manifest_path)
    print(trials_path)
    return 0


def cmd_synth_train(args) -> int:
    manifest = synth.build_training_corpus(
        args.speakers,
        args.seed,
        args.out,
        keyword_utts=args.keyword_utts,
        filler_utts=args.filler_utts,
        confusable_utts=args.confusable_utts,
        open_fraction=args.open_fraction,
    )
    print(manifest)
    return 0


def cmd_init_weights(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(out / "kws.pvtw", random_kws_bundle(args.seed))
    save_weights(out / "emb.pvtw", random_embedding_bundle(args.seed + 1))
    print(out / "kws.pvtw")
    print(out / "emb.pvtw")
    return 0


def cmd_enroll(args) -> int:
    if not 1 <= len(args.wavs) <= 3:
        raise SystemExit2(f"enrollment takes 1-3 WAV files, got {len(args.wavs)}")
    net = EmbeddingNetwork.from_bundle(load_weights(args.emb_weights))
    embeddings = [
        embed(net, dsp.extract_features(read_wav(p), 0)) for p in args.wavs
    ]
    profile = verifier.enroll(args.speaker, embeddings)
    target = Path(args.profile_dir) / f"{profile.speaker_id}.json"
    if target.exists():
        log.warning("overwriting existing profile %s", target)
    path = verifier.save_profile(args.profile_dir, profile)
    print(path)
    return 0


def cmd_detect(args) -> int:
    engine = _engine_from_args(args)
    profile_path = Path(args.profile_dir) / f"{args.speaker}.json"
    if not profile_path.exists():
        log.error("no profile for speaker %s at %s", args.speaker, profile_path)
        return 1
    profile = verifier.load_profile(profile_path)
    if args.wav == "-":
        audio = parse_wav(sys.stdin.buffer.read())
    else:
        audio = read_wav(args.wav)
    decision = engine.process_utterance(
        audio, profile, args.kws_threshold, _sv_threshold(args)
    )
    print(pipeline.decision_line(0, decision))
    return 0


def _eval_chunk(kws_path, emb_path, trials, kws_thr, sv_thr, base_dir,
                decoder_cfg):
    engine = pipeline.Engine.from_files(kws_path, emb_path, **decoder_cfg)
    labels, decisions, durations = [], [], []
    profiles = {}
    for trial in trials:
        key = trial.enroll_paths
        if key not in profiles:
            embeddings = [
                engine.enrollment_embedding(
                    dsp.extract_features(read_wav(Path(base_dir) / p), 0)
                )
                for p in trial.enroll_paths
            ]
            profiles[key] = verifier.enroll(f"trial{trial.line_number}", embeddings)
        audio = read_wav(Path(base_dir) / trial.test_path)
        decisions.append(
            engine.process_utterance(audio, profiles[key], kws_thr, sv_thr)
        )
        labels.append(trial.label)
        durations.append(audio.duration_seconds)
    return labels, decisions, durations


def _run_evaluation(args, jobs: int):
    trials = evaluation.parse_trials(args.trials)
    if not trials:
        raise SystemExit2(f"{args.trials}: no trials")
    base_dir = Path(args.trials).parent
    sv_thr = _sv_threshold(args)
    decoder_cfg = {
        "decision_window": args.decision_window,
        "decision_hop": args.decision_hop,
        "refractory": args.refractory,
    }
    if jobs <= 1:
        ordered_trials = trials
        labels, decisions, durations = _eval_chunk(
            args.kws_weights, args.emb_weights, trials,
            args.kws_threshold, sv_thr, base_dir, decoder_cfg,
        )
    else:
        chunks = [trials[i::jobs] for i in range(jobs)]
        ordered_trials = [t for chunk in chunks for t in chunk]
        labels, decisions, durations = [], [], []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    _eval_chunk, args.kws_weights, args.emb_weights, chunk,
                    args.kws_threshold, sv_thr, base_dir, decoder_cfg,
                )
                for chunk in chunks if chunk
            ]
            for fut in futures:
                lb, dc, du = fut.result()
                labels += lb
                decisions += dc
                durations += du
    report = evaluation._build_report(
        labels, decisions, durations,
        keyword_present=evaluation.keyword_presence(ordered_trials, base_dir),
    )
    return report, decisions, ordered_trials


def cmd_evaluate(args) -> int:
    report, decisions, _ = _run_evaluation(args, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report(out / "report.json", report)
    evaluation.write_trial_tsv(out / "trials.tsv", decisions)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_bench(args) -> int:
    # RTF is defined single-core; worker parallelism is forced off.
    report, _, _ = _run_evaluation(args, jobs=1)
    doc = {
        "t_process_note": "enrollment excluded",
        "rtf": round(report.rtf, 6),
        "hardware": report.hardware,
        "num_trials": report.num_pos + report.num_neg,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rtf.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))
    return 0


def cmd_calibrate(args) -> int:
    if args.scores:
        pos, neg = [], []
        for lineno, raw in enumerate(Path(args.scores).read_text().splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise SystemExit2(f"{args.scores}:{lineno}: expected 3 tab fields")
            label, _, sv = fields
            if sv == "NA":
                continue
            (pos if label == "positive" else neg).append(float(sv))
    else:
        if not args.trials:
            raise SystemExit2("calibrate needs --scores or --trials")
        # calibration derives thresholds from raw sv scores; the operating
        # threshold only affects accept/reject flags, so any value works here
        if args.sv_threshold is None and not args.threshold_set:
            args.sv_threshold = 0.0
        _, decisions, trials = _run_evaluation(args, jobs=args.jobs)
        pos = [
            d.sv_score for t, d in zip(trials, decisions)
            if t.label == "positive" and d.sv_score is not None
        ]
        neg = [
            d.sv_score for t, d in zip(trials, decisions)
            if t.label == "negative" and d.sv_score is not None
        ]
    if not pos or not neg:
        log.error("calibration needs positive and negative sv scores")
        return 1
    thresholds = verifier.calibrate(pos, neg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    verifier.save_thresholds(out / "thresholds.json", thresholds)
    print(
        json.dumps(
            {
                "thr_eer": thresholds.thr_eer,
                "thr_mindcf": thresholds.thr_mindcf,
                "thr_mean": thresholds.thr_mean,
            },
            indent=2,
        )
    )
    return 0


def cmd_forward(args) -> int:
    features = dsp.read_feature_dump(args.features)
    if args.kws_weights:
        net = KwsNetwork.from_bundle(load_weights(args.kws_weights))
        posteriors = kws_mod.kws_posteriors(net, features)
        print(json.dumps({"posteriors": posteriors.tolist()}))
    elif args.emb_weights:
        net = EmbeddingNetwork.from_bundle(load_weights(args.emb_weights))
        print(json.dumps({"embedding": embed(net, features).tolist()}))
    else:
        raise SystemExit2("forward needs --kws-weights or --emb-weights")
    return 0


def cmd_features(args) -> int:
    features = dsp.extract_features(read_wav(args.wav), channel=args.channel)
    dsp.write_feature_dump(args.out, features)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voicetrigger",
        description="Personalized voice trigger: keyword spotting gated by "
        "speaker verification.",
    )
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    def model_flags(p, emb_only=False):
        if not emb_only:
            p.add_argument("--kws-weights", required=True)
        p.add_argument("--emb-weights", required=True)

    def threshold_flags(p):
        p.add_argument("--kws-threshold", type=float, default=0.5)
        p.add_argument("--sv-threshold", type=float)
        p.add_argument("--threshold-set", help="thresholds.json from calibrate")
        p.add_argument("--method", choices=["v1", "v2"], default="v2")
        p.add_argument("--decision-window", type=int,
                       default=decoder.DECISION_WINDOW)
        p.add_argument("--decision-hop", type=int, default=decoder.DECISION_HOP)
        p.add_argument("--refractory", type=int, default=decoder.REFRACTORY)

    p = add("synth", cmd_synth, help="generate a synthetic trial set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--pos", type=int, default=200)
    p.add_argument("--neg", type=int, default=1800)
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--imposters", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)

    p = add("synth-train", cmd_synth_train,
            help="generate a clean training corpus with alignments")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=50)
    p.add_argument("--keyword-utts", type=int, default=6)
    p.add_argument("--filler-utts", type=int, default=4)
    p.add_argument("--confusable-utts", type=int, default=0)
    p.add_argument("--open-fraction", type=float, default=0.6)

    p = add("init-weights", cmd_init_weights,
            help="write seeded random PVTW bundles (plumbing/testing)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("enroll", cmd_enroll, help="build a speaker profile from 1-3 WAVs")
    model_flags(p, emb_only=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--profile-dir", default="profiles")
    p.add_argument("wavs", nargs="+")

    p = add("detect", cmd_detect, help="run the two-stage trigger on one WAV")
    model_flags(p)
    threshold_flags(p)
    p.add_argument("--speaker", required=True)
    p.add_argument("--profile-dir", default="profiles")
    p.add_argument("wav", help="WAV path, or - for stdin")

    p = add("evaluate", cmd_evaluate, help="score a trial file end to end")
    model_flags(p)
    threshold_flags(p)
    p.add_argument("--trials", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = add("bench", cmd_bench,
            help="measure the real-time factor (single-threaded)")
    model_flags(p)
    threshold_flags(p)
    p.add_argument("--trials", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1,
                   help="ignored: RTF is defined single-core")

    p = add("calibrate", cmd_calibrate,
            help="derive V1/V2 thresholds from dev scores")
    p.add_argument("--scores", help="TSV of label, kws_confidence, sv_score")
    p.add_argument("--trials")
    p.add_argument("--kws-weights")
    p.add_argument("--emb-weights")
    threshold_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = add("features", cmd_features,
            help="extract log-mel features from a WAV into a feature dump")
    p.add_argument("--out", required=True)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("wav")

    p = add("forward", cmd_forward,
            help="run one network on a feature dump (parity checks)")
    p.add_argument("--kws-weights")
    p.add_argument("--emb-weights")
    p.add_argument("--features", required=True)

    return parser


def _apply_config_file(parser, argv):
    """Merge a JSON config under the flags: flags > file > defaults."""
    ns, _ = parser.parse_known_args(argv)
    if not getattr(ns, "config", None):
        return argv
    doc = json.loads(Path(ns.config).read_text())
    extra = []
    for key, value in doc.items():
        flag = "--" + key.replace("_", "-")
        if flag not in " ".join(argv):
            extra += [flag, str(value)]
    # Inject after the subcommand so argparse attributes them correctly.
    return argv + extra


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("VT_LOG", "WARNING").upper())
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except SystemExit2 as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (
        FileNotFoundError,
        ValueError,
        WeightFormatError,
        AudioFormatError,
        evaluation.TrialParseError,
    ) as e:
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
