"""Command-line entry point: ``asrlab <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from asrlab import corpus, decoder, evaluation, frontend, ga, mlp, pipeline, som
from asrlab.errors import StageError
from asrlab.pipeline import stage

log = logging.getLogger("asrlab")


# ------------------------------------------------------------- helpers


def _train_records(manifest, table):
    """Training records that have features; every record when no split is marked."""
    have = set(table.ids)
    recs = manifest.subset("train") or manifest.records
    return [r for r in recs if r.utterance_id in have]


def _split_sessions(manifest, split, ids):
    have = set(ids)
    if split:
        seqs = manifest.sequences(split)
    else:
        by_spk = {}
        for r in manifest.records:
            by_spk.setdefault(r.speaker_id, []).append(r)
        seqs = list(by_spk.values())
    seqs = [[r for r in s if r.utterance_id in have] for s in seqs]
    return [s for s in seqs if s]


class _Bare:
    """Stand-in record for decoding a feature file without a manifest."""

    def __init__(self, uid):
        self.utterance_id = uid


def _prefix_sessions(ids):
    groups = {}
    for uid in ids:
        groups.setdefault(uid.split("_", 1)[0], []).append(_Bare(uid))
    return list(groups.values())


def write_posteriors(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        width = rows[0][1].size if rows else 0
        w.writerow(["utterance_id"] + [f"p{q}" for q in range(width)])
        for uid, p in rows:
            w.writerow([uid] + [repr(float(v)) for v in p])


def read_posteriors(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "utterance_id":
            raise ValueError(f"{path}: not a posterior dump")
        return {row[0]: np.array([float(v) for v in row[1:]]) for row in reader if row}


# ----------------------------------------------------------- subcommands


def cmd_synth(args):
    with stage("synth"):
        spec = corpus.SynthSpec(n_words=args.words, n_speakers=args.speakers, n_reps=args.reps, seed=args.seed,
                                snr_db=args.snr_db)
        manifest = corpus.synth_corpus(spec, args.out_dir)
        if args.split:
            manifest = corpus.split_corpus(manifest, args.train_fraction, args.seed, args.dev_fraction)
        corpus.write_manifest(manifest, Path(args.out_dir) / "manifest.csv")
    print(f"wrote {len(manifest.records)} utterances to {args.out_dir}")


def cmd_extract(args):
    with stage("extract"):
        cfg = frontend.FrontendConfig(frame_ms=args.frame_ms, overlap_ms=args.overlap_ms, model_order=args.order,
                                      target_frames=args.target_frames, rasta_enabled=not args.no_rasta)
        manifest = corpus.load_manifest(args.manifest)
        table = frontend.extract_corpus(manifest, cfg, Path(args.manifest).parent)
        frontend.write_features(args.out, table)
    print(f"wrote {len(table.ids)} feature vectors to {args.out}")


def cmd_train_som(args):
    with stage("train-som"):
        table = frontend.read_features(args.features)
        if args.manifest:
            recs = _train_records(corpus.load_manifest(args.manifest), table)
            by_id = table.by_id()
            X = np.vstack([by_id[r.utterance_id].values for r in recs])
        else:
            X = table.matrix()
        cfg = pipeline.som_config_for(som.SomConfig(epochs=args.epochs, seed=args.seed), args.k)
        codebook = som.som_train(X, cfg)
        som.save_codebook(codebook, args.out)
        qe = som.som_quantization_error(codebook, X)
    print(f"trained {args.k}-unit SOM on {X.shape[0]} vectors, quantization error {qe:.6g}")


def cmd_train_mlp(args):
    with stage("train-mlp"):
        table = frontend.read_features(args.features)
        manifest = corpus.load_manifest(args.labels)
        codebook = som.load_codebook(args.som)
        recs = _train_records(manifest, table)
        by_id = table.by_id()
        acts = som.som_encode_batch(codebook, np.vstack([by_id[r.utterance_id].values for r in recs]), args.encoding)
        labels = np.array([r.word_id for r in recs], dtype=np.intp)
        cfg = mlp.MlpConfig(n_input=codebook.k_units, n_output=manifest.size, n_hidden=args.hidden, lr=args.lr,
                            epochs=args.epochs, seed=args.seed)
        model = mlp.mlp_train(acts, labels, cfg)
        mlp.save_model(model, args.out)
        if args.loss_csv:
            mlp.write_loss_csv(model, args.loss_csv)
        acc = mlp.training_accuracy(model, acts, labels)
    print(f"trained MLP {codebook.k_units}-{args.hidden}-{manifest.size}, training accuracy {acc:.4f}")


def cmd_build_hmm(args):
    with stage("build-hmm"):
        manifest = corpus.load_manifest(args.manifest)
        seqs = manifest.sequences("train") or _split_sessions(manifest, None, manifest.by_id())
        hmm = decoder.build_hmm([[r.word_id for r in s] for s in seqs], manifest.size, args.smoothing)
        decoder.save_hmm(hmm, args.out)
        if args.csv:
            decoder.export_hmm_csv(hmm, args.csv)
    print(f"built {manifest.size}-state word HMM from {len(seqs)} sessions")


def cmd_optimize_ga(args):
    with stage("optimize-ga"):
        hmm = decoder.load_hmm(args.hmm)
        post = read_posteriors(args.posteriors)
        manifest = corpus.load_manifest(args.labels)
        seqs = _split_sessions(manifest, args.split, post) or _split_sessions(manifest, None, post)
        if not seqs:
            raise ValueError("no labelled utterance has a posterior row")
        pairs = [(np.vstack([post[r.utterance_id] for r in s]), [r.word_id for r in s]) for s in seqs]
        dev = ga.DevSet.from_posteriors(pairs, hmm.class_priors)
        cfg = ga.GaConfig(population=args.pop, generations=args.gens, seed=args.seed, fitness_mode=args.fitness)
        base_fit = ga.fitness(ga.repair(ga.Chromosome.from_hmm(hmm).genes), dev, mode=cfg.fitness_mode)
        best, history = ga.evolve(dev, hmm, cfg)
        decoder.save_hmm(best, args.out)
        if args.history:
            ga.write_history_csv(history, args.history)
    print(f"fitness {base_fit:.6g} -> {history[-1].best_fitness:.6g} over {args.gens} generations")


def cmd_decode(args):
    with stage("decode"):
        model = mlp.load_model(args.mlp)
        codebook = som.load_codebook(args.som)
        hmm = decoder.load_hmm(args.hmm)
        table = frontend.read_features(args.features)
        by_id = table.by_id()
        vocab = None
        if args.manifest:
            manifest = corpus.load_manifest(args.manifest)
            vocab = manifest.vocabulary
            seqs = _split_sessions(manifest, args.split, table.ids)
        else:
            seqs = _prefix_sessions(table.ids)
        if not seqs:
            raise ValueError("nothing to decode")
        rows = pipeline.decode_sequences(model, codebook, hmm, seqs, by_id, vocab, args.encoding)
        pipeline.write_decodes(args.out, rows)
        if args.posteriors_out:
            ordered = [r.utterance_id for s in seqs for r in s]
            acts = som.som_encode_batch(codebook, np.vstack([by_id[u].values for u in ordered]), args.encoding)
            write_posteriors(args.posteriors_out, list(zip(ordered, mlp.mlp_posteriors(model, acts))))
    print(f"decoded {len(rows)} utterances in {len(seqs)} sessions")


def cmd_evaluate(args):
    with stage("evaluate"):
        manifest = corpus.load_manifest(args.manifest)
        report = evaluation.score_decodes(pipeline.read_decodes(args.decoded), manifest, args.system)
        text = evaluation.render_report([report], "text" if args.out and args.out.endswith(".txt") else "csv")
        if args.out:
            Path(args.out).write_text(text)
        if args.svg:
            evaluation.write_svg([report], args.svg)
    print(evaluation.render_report([report], "text"), end="")


def _overrides(args):
    pairs = {
        "experiment.seed": args.seed,
        "experiment.out_dir": args.out_dir,
        "experiment.manifest": args.manifest,
        "corpus.n_words": args.words,
        "corpus.n_speakers": args.speakers,
        "corpus.n_reps": args.reps,
        "som.k_units": getattr(args, "k", None),
        "som.epochs": args.som_epochs,
        "mlp.hidden": args.hidden,
        "mlp.epochs": args.mlp_epochs,
        "mlp.lr": args.mlp_lr,
        "ga.population": args.pop,
        "ga.generations": args.gens,
        "ga.fitness_mode": args.fitness,
    }
    out = {k: str(v) for k, v in pairs.items() if v is not None}
    if getattr(args, "no_ga", False):
        out["experiment.ga_enabled"] = "false"
    for item in args.set or []:
        key, _, value = item.partition("=")
        if "." not in key or not _:
            raise ValueError(f"--set expects section.key=value, got {item!r}")
        out[key] = value
    return out


def _load_cfg(args):
    try:
        return pipeline.load_config(args.config, _overrides(args))
    except (ValueError, OSError) as exc:
        raise StageError("config", exc) from exc


def cmd_run(args):
    cfg = _load_cfg(args)
    result = pipeline.run_experiment(cfg)
    print(evaluation.render_report(result.reports, "text", include_timing=True), end="")
    if result.baseline_fitness is not None:
        print(f"GA dev fitness {result.baseline_fitness:.6g} -> {result.ga_fitness:.6g}")
    if args.svg:
        with stage("evaluate"):
            evaluation.write_svg(result.reports, args.svg)


def cmd_grid(args):
    cfg = _load_cfg(args)
    try:
        k_list = [int(k) for k in args.k_list.split(",") if k.strip()]
    except ValueError as exc:
        raise StageError("config", exc) from exc
    reports, _ = pipeline.run_grid(cfg, k_list, args.ga)
    print(evaluation.render_report(reports, "text", include_timing=True), end="")
    if args.svg:
        with stage("evaluate"):
            evaluation.write_svg(reports, args.svg)


# ---------------------------------------------------------------- parser


def _experiment_flags(p):
    p.add_argument("--config", help="INI file with [experiment], [corpus], [frontend], [som], [mlp], [ga] sections")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--manifest", help="use an existing corpus instead of synthesizing one")
    p.add_argument("--words", type=int)
    p.add_argument("--speakers", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--som-epochs", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--mlp-epochs", type=int)
    p.add_argument("--mlp-lr", type=float)
    p.add_argument("--pop", type=int)
    p.add_argument("--gens", type=int)
    p.add_argument("--fitness", choices=["mse", "wra"])
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="any other config value")
    p.add_argument("--svg", help="also write a per-speaker WRA bar chart")


def build_parser():
    parser = argparse.ArgumentParser(prog="asrlab", description="SOM/MLP/HMM word recognition experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic word corpus")
    p.add_argument("--words", type=int, default=20)
    p.add_argument("--speakers", type=int, default=5)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", action="store_true", help="also assign train/dev/test")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--dev-fraction", type=float, default=0.125,
                   help="share of the training split held out as dev (GA fitness)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="RASTA-PLP features for every manifest entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame-ms", type=float, default=25.0)
    p.add_argument("--overlap-ms", type=float, default=10.0)
    p.add_argument("--order", type=int, default=12)
    p.add_argument("--target-frames", type=int)
    p.add_argument("--no-rasta", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-som", help="train the SOM codebook")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", help="restrict training to the train split")
    p.add_argument("--k", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_som)

    p = sub.add_parser("train-mlp", help="train the posterior MLP on SOM activations")
    p.add_argument("--features", required=True)
    p.add_argument("--som", required=True)
    p.add_argument("--labels", required=True, help="manifest CSV")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--encoding", choices=["soft", "onehot"], default="soft")
    p.add_argument("--loss-csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_mlp)

    p = sub.add_parser("build-hmm", help="word-bigram HMM from training label sessions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--csv", help="also export the matrices as CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_hmm)

    p = sub.add_parser("optimize-ga", help="evolve HMM transition and prior probabilities")
    p.add_argument("--hmm", required=True)
    p.add_argument("--posteriors", required=True, help="CSV written by decode --posteriors-out")
    p.add_argument("--labels", required=True, help="manifest CSV")
    p.add_argument("--split", default="dev")
    p.add_argument("--pop", type=int, default=30)
    p.add_argument("--gens", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--fitness", choices=["mse", "wra"], default="mse")
    p.add_argument("--history")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize_ga)

    p = sub.add_parser("decode", help="Viterbi-decode utterance sessions")
    p.add_argument("--mlp", required=True)
    p.add_argument("--som", required=True)
    p.add_argument("--hmm", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", help="group sessions by speaker and name the words")
    p.add_argument("--split", help="only decode this split (needs --manifest)")
    p.add_argument("--encoding", choices=["soft", "onehot"], default="soft")
    p.add_argument("--posteriors-out", help="also dump MLP posteriors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="score decodes against the manifest")
    p.add_argument("--decoded", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--system", default="sys")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="one full sysK (+GA) experiment")
    _experiment_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--no-ga", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="sysK and sysK+GA for several K")
    _experiment_flags(p)
    p.add_argument("--k-list", default="16,32,64,128")
    p.add_argument("--ga", choices=["both", "on", "off"], default="both")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"asrlab: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
