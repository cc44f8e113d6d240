"""Experiment pipeline CLI: generate -> chart -> train -> evaluate -> report.

Every stage is deterministic given the master seed (named-stream derivation
per stage) and idempotent: rerunning with identical inputs rewrites byte-
identical outputs. Inference timing is the one inherently non-deterministic
measurement, so it is only written when --timing is passed.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import SPLIT_CALIBRATION, SPLIT_TEST, build_dataset, load_dataset, save_dataset
from .chart import ChannelCharter, chart_quality, load_chart, save_chart
from .codebook import batch_beam_scores, build_codebook, central_subcarrier
from .config import ConfigError, derive_seed, load_config
from .evaluate import (
    EvalReport,
    cdf_to_csv,
    correlation_cdf,
    correlation_map,
    overhead_report,
    time_inference,
    top_k_accuracy,
)
from .neural import TrainingDivergedError, forward, forward_batch, load_network, save_network
from .predictors import (
    BeamClassifier,
    NearestBeamPredictor,
    NearestPrecoderPredictor,
    PrecoderRegressor,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class CliValidationError(ValueError):
    pass


class _Ranking:
    __slots__ = ("indices",)

    def __init__(self, indices):
        self.indices = indices


def _say(args, message):
    if not args.quiet:
        print(message)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_path(out):
    return out / "dataset.cbds"


def _chart_path(out):
    return out / "chart.cbch"


def _net_path(out, backend, task, bs_index):
    return out / f"net_{backend}_{task}_bs{bs_index}.cbnn"


def _master_seed(args, cfg):
    return args.seed if args.seed is not None else cfg.seed


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_dataset_checked(out):
    path = _dataset_path(out)
    if not path.exists():
        raise CliValidationError(f"dataset not found at {path}; run 'generate' first")
    return load_dataset(path)


def _load_chart_checked(out):
    path = _chart_path(out)
    if not path.exists():
        raise CliValidationError(f"chart not found at {path}; run 'chart' first")
    return load_chart(path)


def _labels_and_scores(codebook, dataset, bs_index, sample_indices):
    g = dataset.downlink[sample_indices, bs_index]
    scores = batch_beam_scores(codebook, g)
    return np.argmax(scores, axis=1), scores


def cmd_generate(args):
    cfg = load_config(args.config)
    out = _outdir(args)
    master = _master_seed(args, cfg)
    scene = cfg.scene(rng_seed=derive_seed(master, "generate"))
    dataset = build_dataset(
        scene, cfg.array, cfg.ul_carrier, cfg.dl_carrier, cfg.calibration_fraction
    )
    save_dataset(dataset, _dataset_path(out))
    n_beams = cfg.o_v * cfg.o_h * cfg.array.n_antennas
    _say(
        args,
        f"generated {dataset.n_samples} UEs ({int(np.sum(dataset.split == SPLIT_CALIBRATION))} "
        f"calibration / {int(np.sum(dataset.split == SPLIT_TEST))} test), "
        f"D={dataset.vector_dim}, N_b={n_beams} -> {_dataset_path(out)}",
    )
    return EXIT_OK


def cmd_chart(args):
    cfg = load_config(args.config)
    out = _outdir(args)
    dataset = _load_dataset_checked(out)
    cal = dataset.indices_of(SPLIT_CALIBRATION)
    if cal.size == 0:
        raise CliValidationError("dataset has no calibration samples")
    # charting sees only the uplink channels collected at BS1
    charter = ChannelCharter(**cfg.chart).fit(dataset.uplink_vectorized()[cal])
    save_chart(charter, _chart_path(out))
    quality = chart_quality(dataset.positions[cal], charter.embedding_, 0.05)
    self_err = float(
        np.mean(
            np.linalg.norm(
                charter.transform(dataset.uplink_vectorized()[cal]) - charter.embedding_, axis=1
            )
        )
    )
    _say(
        args,
        f"chart built on {cal.size} calibration channels -> {_chart_path(out)}\n"
        f"TW={quality.trustworthiness:.4f} CT={quality.continuity:.4f} "
        f"KS={quality.kruskal_stress:.4f} (5% neighbourhoods)\n"
        f"calibration self-embedding mean error: {self_err:.3e}",
    )
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config)
    out = _outdir(args)
    dataset = _load_dataset_checked(out)
    chart = _load_chart_checked(out)
    if not 0 <= args.bs_index < dataset.n_bs:
        raise CliValidationError(
            f"--bs-index {args.bs_index} out of range; valid range is 0..{dataset.n_bs - 1}"
        )
    cal = dataset.indices_of(SPLIT_CALIBRATION)
    if chart.embedding_.shape[0] != cal.size:
        raise CliValidationError("chart and dataset calibration sizes disagree; regenerate the chart")

    master = _master_seed(args, cfg)
    seed = derive_seed(master, f"train:{args.backend}:{args.task}:bs{args.bs_index}")
    input_kind = "rff" if args.backend == "rff" else "dense"
    codebook = build_codebook(cfg.array.n_v, cfg.array.n_h, cfg.o_v, cfg.o_h)
    z_train = chart.embedding_

    common = dict(
        input_kind=input_kind,
        n_frequencies=cfg.train["n_frequencies"],
        hidden_size=cfg.train["hidden_size"],
        sigma=cfg.train["sigma"],
        epochs=cfg.train["epochs"],
        batch_size=cfg.train["batch_size"],
        learning_rate=cfg.train["learning_rate"],
        seed=seed,
    )
    loss_path = out / f"loss_{args.backend}_{args.task}_bs{args.bs_index}.csv"
    try:
        if args.task == "classification":
            labels, _ = _labels_and_scores(codebook, dataset, args.bs_index, cal)
            est = BeamClassifier(n_beams=codebook.n_beams, **common).fit(z_train, labels)
        else:
            f = central_subcarrier(dataset.dl_carrier.n_subcarriers)
            targets = dataset.downlink[cal, args.bs_index, :, f]
            est = PrecoderRegressor(**common).fit(z_train, targets)
    except TrainingDivergedError as err:
        _write_loss_csv(loss_path, err.history)
        print(f"training diverged: {err} (partial history saved to {loss_path})", file=sys.stderr)
        return EXIT_RUNTIME

    net_path = _net_path(out, args.backend, args.task, args.bs_index)
    save_network(est.net_, net_path)
    _write_loss_csv(loss_path, est.loss_history_)
    _say(
        args,
        f"trained {args.backend} {args.task} for bs {args.bs_index}: "
        f"loss {est.loss_history_[0]:.4f} -> {est.loss_history_[-1]:.4f} "
        f"({len(est.loss_history_)} epochs) -> {net_path}",
    )
    return EXIT_OK


def _write_loss_csv(path, history):
    lines = ["epoch,loss"] + [f"{i},{v:.17g}" for i, v in enumerate(history)]
    _write_text(path, "\n".join(lines) + "\n")


def _net_backends(cfg):
    return [b for b in cfg.backends if b in ("rff", "mlp")]


def cmd_evaluate(args):
    cfg = load_config(args.config)
    out = _outdir(args)
    dataset = _load_dataset_checked(out)
    chart = _load_chart_checked(out)
    cal = dataset.indices_of(SPLIT_CALIBRATION)
    test = dataset.indices_of(SPLIT_TEST)
    if test.size == 0:
        raise CliValidationError("dataset has no test samples")

    codebook = build_codebook(cfg.array.n_v, cfg.array.n_h, cfg.o_v, cfg.o_h)
    ds_id = _dataset_path(out).stem
    report = EvalReport(dataset_id=ds_id)
    report.chart_quality = chart_quality(dataset.positions[cal], chart.embedding_, 0.05)
    report.overhead = overhead_report(dataset.n_bs, dataset.vector_dim, chart.n_components)

    z_train = chart.embedding_
    z_test = chart.transform(dataset.uplink_vectorized()[test])
    f = central_subcarrier(dataset.dl_carrier.n_subcarriers)
    ground_xy = dataset.positions[test][:, :2]

    for bs in range(dataset.n_bs):
        train_labels, _ = _labels_and_scores(codebook, dataset, bs, cal)
        test_labels, test_scores = _labels_and_scores(codebook, dataset, bs, test)
        order = np.argsort(-test_scores, axis=1, kind="stable")
        rankings = [_Ranking(row) for row in order]
        g_test = dataset.downlink[test, bs, :, f]
        g_energy = np.einsum("ia,ia->i", g_test.conj(), g_test).real

        beam_predictors = {}
        for backend in _net_backends(cfg):
            path = _net_path(out, backend, "classification", bs)
            if not path.exists():
                raise CliValidationError(f"missing checkpoint for backend '{backend}': {path}")
            beam_predictors[backend] = load_network(path)
        if "nn1" in cfg.backends:
            beam_predictors["nn1"] = NearestBeamPredictor().fit(z_train, train_labels)

        def eta_of(precoders):
            return np.abs(np.einsum("ia,ia->i", precoders.conj(), g_test)) ** 2 / g_energy

        acc, eta = {}, {}
        for backend, predictor in beam_predictors.items():
            if isinstance(predictor, NearestBeamPredictor):
                predicted = predictor.predict(z_test)
            else:
                predicted = np.argmax(forward_batch(predictor, z_test), axis=1)
            acc[backend] = {k: top_k_accuracy(predicted, rankings, k) for k in cfg.top_k}
            eta[f"{backend}_classif"] = eta_of(codebook.beams[predicted])

        acc["oracle"] = {k: top_k_accuracy(test_labels, rankings, k) for k in cfg.top_k}
        # codebook ceiling: best central-subcarrier correlation over all beams
        all_eta = np.abs(codebook.beams.conj() @ g_test.T) ** 2 / g_energy[None, :]
        eta["oracle"] = all_eta.max(axis=0)

        if "regression" in cfg.tasks:
            for backend in _net_backends(cfg):
                path = _net_path(out, backend, "regression", bs)
                if not path.exists():
                    raise CliValidationError(
                        f"missing regression checkpoint for backend '{backend}': {path}"
                    )
                eta[f"{backend}_regr"] = eta_of(forward_batch(load_network(path), z_test))
        if "nn1" in cfg.backends:
            nn1_prec = NearestPrecoderPredictor().fit(z_train, dataset.downlink[cal, bs, :, f])
            eta["nn1"] = eta_of(nn1_prec.predict(z_test))

        report.accuracies[bs] = acc
        report.eta[bs] = eta
        _write_text(out / f"metrics_{ds_id}_bs{bs}.txt", report.metrics_text(bs))
        for name, samples in sorted(eta.items()):
            cdf = correlation_cdf(np.clip(samples, 0.0, 1.0))
            _write_text(out / f"cdf_{ds_id}_bs{bs}_{name}.csv", cdf_to_csv(cdf))
            csv_text, svg_text = correlation_map(ground_xy, samples)
            _write_text(out / f"map_{ds_id}_bs{bs}_{name}.csv", csv_text)
            _write_text(out / f"map_{ds_id}_bs{bs}_{name}.svg", svg_text)

        if args.timing:
            rows = ["backend,mean_ns,std_ns"]
            for backend, predictor in beam_predictors.items():
                if isinstance(predictor, NearestBeamPredictor):
                    target = predictor
                else:
                    def target(row, _net=predictor):
                        return int(np.argmax(forward(_net, row)))

                mean_ns, std_ns = time_inference(target, z_test, repetitions=10)
                rows.append(f"{backend},{mean_ns:.1f},{std_ns:.1f}")
            _write_text(out / f"timing_{ds_id}_bs{bs}.csv", "\n".join(rows) + "\n")

        _say(args, report.metrics_text(bs).rstrip())

    _write_text(out / f"summary_{ds_id}.txt", report.summary_text())
    _say(args, report.summary_text().rstrip())
    return EXIT_OK


def cmd_report(args):
    out = Path(args.out)
    if not out.is_dir():
        raise CliValidationError(f"output directory {out} does not exist")
    parts = []
    for path in sorted(out.glob("summary_*.txt")) + sorted(out.glob("metrics_*.txt")):
        parts.append(path.read_text().rstrip() + "\n")
    if not parts:
        raise CliValidationError(f"no metrics files in {out}; run 'evaluate' first")
    text = "# chartbeam report\n\n" + "\n".join(parts)
    _write_text(out / "report.txt", text)
    _say(args, f"report written to {out / 'report.txt'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chartbeam",
        description="Channel-charting beam prediction experiment pipeline",
    )
    parser.add_argument("--version", action="version", version=f"chartbeam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    common(sub.add_parser("generate", help="synthesize and persist a dataset"))
    common(sub.add_parser("chart", help="build the channel chart at BS1"))
    p_train = sub.add_parser("train", help="train one network backend")
    common(p_train)
    p_train.add_argument("--backend", required=True, choices=["rff", "mlp"])
    p_train.add_argument("--task", default="classification",
                         choices=["classification", "regression"])
    p_train.add_argument("--bs-index", type=int, required=True)
    p_eval = sub.add_parser("evaluate", help="compute metrics and report files")
    common(p_eval)
    p_eval.add_argument("--timing", action="store_true",
                        help="also measure inference timing (non-deterministic output)")
    p_report = sub.add_parser("report", help="bundle metrics into report.txt")
    common(p_report, needs_config=False)
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "chart": cmd_chart,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CliValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as err:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
