"""Acceptance suite: one test per ship criterion, each printing a PASS/FAIL
line (run with -s or -rA to see them). The heavier criteria share one
paper-scale synthetic run built once per session."""

import time
from dataclasses import dataclass, field

import numpy as np
import pytest
import yaml
from scipy.optimize import linprog

import chartbeam as cb
from chartbeam.channel import Rectangle
from chartbeam.chart import cross_channel_distances
from chartbeam.cli import EXIT_OK, main as cli_main
from chartbeam.codebook import batch_beam_scores
from chartbeam.evaluate import overhead_report, time_inference, top_k_accuracy
from chartbeam.neural import loss_and_gradients
from chartbeam.predictors import (
    BeamClassifier,
    CodebookClassifierPrecoder,
    NearestBeamPredictor,
    PrecoderRegressor,
)
from conftest import procrustes_residual
from test_codebook import brute_force_ranking
from test_neural import finite_difference_gradients, max_relative_error, tiny_net


def report(number, name, detail):
    print(f"ACCEPTANCE {number} ({name}): PASS - {detail}")


def fail_report(number, name):
    print(f"ACCEPTANCE {number} ({name}): FAIL")


class criterion:
    """Prints the pass/fail line for one acceptance criterion."""

    def __init__(self, number, name):
        self.number = number
        self.name = name
        self.detail = ""

    def __enter__(self):
        self.started = time.monotonic()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            report(self.number, self.name, self.detail or f"{time.monotonic() - self.started:.1f}s")
        else:
            fail_report(self.number, self.name)
        return False


@dataclass
class PaperScaleRun:
    dataset: object
    chart: object
    codebook: object
    y_train: np.ndarray
    y_test: np.ndarray
    rank_order_test: np.ndarray
    z_train: np.ndarray
    z_test: np.ndarray
    g_train_central: np.ndarray
    g_test_central: np.ndarray
    predictions: dict = field(default_factory=dict)
    eta: dict = field(default_factory=dict)
    build_seconds: float = 0.0


@pytest.fixture(scope="session")
def paper_run():
    """2000-UE scene at the published dimensions (N_a=64, N_s=16, N_b=256),
    charted at BS1, with RFF/MLP/1-NN backends trained for BS2."""
    t0 = time.monotonic()
    scene = cb.SceneConfig(
        bs_positions=((-30.0, 7.5, 10.0), (10.0, 7.5, 2.0)),
        bs_orientations=(0.0, np.pi),
        ue_area=Rectangle(0.0, 20.0, 0.0, 15.0),
        n_ue=2000,
        n_scatterers=2,
        scatterer_area=Rectangle(-20.0, -5.0, -20.0, 35.0),
        rng_seed=20240809,
    )
    array = cb.ArrayConfig(8, 8)
    ul = cb.CarrierConfig(3.5e9, 20e6, 16)
    dl = cb.CarrierConfig(28e9, 20e6, 16)
    dataset = cb.build_dataset(scene, array, ul, dl, 0.8)
    cal = dataset.indices_of(0)
    test = dataset.indices_of(1)

    chart = cb.ChannelCharter(n_neighbors=15, n_components=2, oos_neighbors=3).fit(
        dataset.uplink_vectorized()[cal]
    )
    codebook = cb.build_codebook(8, 8, 2, 2)
    bs = 1  # the BS not used for charting
    y_train = np.argmax(batch_beam_scores(codebook, dataset.downlink[cal, bs]), axis=1)
    scores_test = batch_beam_scores(codebook, dataset.downlink[test, bs])
    y_test = np.argmax(scores_test, axis=1)
    rank_order_test = np.argsort(-scores_test, axis=1, kind="stable")

    z_train = chart.embedding_
    z_test = chart.transform(dataset.uplink_vectorized()[test])
    f = 8  # central subcarrier of 16
    g_train = dataset.downlink[cal, bs, :, f]
    g_test = dataset.downlink[test, bs, :, f]

    run = PaperScaleRun(dataset, chart, codebook, y_train, y_test, rank_order_test,
                        z_train, z_test, g_train, g_test)

    train_kw = dict(n_frequencies=200, hidden_size=64, sigma=1.0, epochs=300,
                    batch_size=64, learning_rate=3e-4)
    rff = BeamClassifier(input_kind="rff", n_beams=256, seed=1, **train_kw).fit(z_train, y_train)
    mlp = BeamClassifier(input_kind="dense", n_beams=256, seed=1, **train_kw).fit(z_train, y_train)
    nn1 = NearestBeamPredictor().fit(z_train, y_train)
    run.predictions = {
        "rff": rff.predict(z_test),
        "mlp": mlp.predict(z_test),
        "nn1": nn1.predict(z_test),
    }

    ge = np.einsum("ia,ia->i", g_test.conj(), g_test).real

    def eta_of(precoders):
        return np.abs(np.einsum("ia,ia->i", precoders.conj(), g_test)) ** 2 / ge

    regr = PrecoderRegressor(input_kind="rff", seed=2, **train_kw).fit(z_train, g_train)
    run.eta = {
        "rff_regr": eta_of(regr.predict(z_test)),
        "rff_classif": eta_of(CodebookClassifierPrecoder(rff, codebook).predict(z_test)),
        "oracle": (np.abs(codebook.beams.conj() @ g_test.T) ** 2 / ge[None, :]).max(axis=0),
    }
    run.build_seconds = time.monotonic() - t0
    return run


def test_criterion_1_codebook_correctness():
    with criterion(1, "codebook correctness") as c:
        t0 = time.monotonic()
        oversampled = cb.build_codebook(8, 8, 2, 2)
        assert oversampled.beams.shape == (256, 64)
        norms = np.linalg.norm(oversampled.beams, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)
        orthonormal = cb.build_codebook(8, 8, 1, 1)
        gram = orthonormal.beams.conj() @ orthonormal.beams.T
        assert np.max(np.abs(gram - np.eye(64))) < 1e-9
        elapsed = time.monotonic() - t0
        assert elapsed < 1.0
        c.detail = f"256 unit-norm beams, O=1 unitary within 1e-9, {elapsed:.3f}s"


def test_criterion_2_best_beam_oracle():
    with criterion(2, "best-beam oracle") as c:
        t0 = time.monotonic()
        rng = np.random.default_rng(202)
        for _ in range(200):
            n_v = int(rng.integers(1, 3))
            n_h = int(rng.integers(1, 5))
            if n_v * n_h > 8:
                continue
            o_v, o_h = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            n_s = int(rng.integers(1, 5))
            book = cb.build_codebook(n_v, n_h, o_v, o_h)
            g = rng.normal(size=(book.n_antennas, n_s)) + 1j * rng.normal(size=(book.n_antennas, n_s))
            ranking = cb.rank_beams(book, g)
            oracle_order, oracle_scores = brute_force_ranking(book.beams, g)
            assert np.array_equal(ranking.indices, oracle_order)
            assert np.max(np.abs(ranking.scores - oracle_scores[oracle_order])) < 1e-12
        elapsed = time.monotonic() - t0
        assert elapsed < 5.0
        c.detail = f"200 instances match brute force exactly, {elapsed:.2f}s"


def test_criterion_3_charting_exactness():
    with criterion(3, "charting exactness") as c:
        t0 = time.monotonic()
        rng = np.random.default_rng(303)
        planted = rng.uniform(-5, 5, size=(500, 2))
        dist = np.linalg.norm(planted[:, None] - planted[None, :], axis=-1)
        coords = cb.classical_mds(dist, 2)
        residual = procrustes_residual(planted, coords)
        assert residual < 1e-6
        quality = cb.chart_quality(planted, planted, 0.05)
        assert quality.trustworthiness == pytest.approx(1.0)
        assert quality.continuity == pytest.approx(1.0)
        assert quality.kruskal_stress == pytest.approx(0.0, abs=1e-12)
        elapsed = time.monotonic() - t0
        assert elapsed < 10.0
        c.detail = f"N=500 Procrustes residual {residual:.2e}, TW=CT=1, KS=0, {elapsed:.2f}s"


def test_criterion_4_charting_quality_synthetic_scene():
    with criterion(4, "charting quality on synthetic scene") as c:
        t0 = time.monotonic()
        scene = cb.SceneConfig(
            bs_positions=((0.0, 20.0, 15.0), (40.0, 20.0, 4.0)),
            bs_orientations=(0.0, np.pi),
            ue_area=Rectangle(10.0, 70.0, 0.0, 40.0),
            n_ue=1000,
            n_scatterers=2,
            scatterer_area=Rectangle(-40.0, -20.0, -40.0, 80.0),
            rng_seed=404,
        )
        dataset = cb.build_dataset(
            scene, cb.ArrayConfig(8, 8), cb.CarrierConfig(3.5e9, 20e6, 16),
            cb.CarrierConfig(28e9, 20e6, 16), 0.999,
        )
        channels = dataset.uplink_vectorized()
        chart = cb.build_chart(channels, n_neighbors=15)
        quality = cb.chart_quality(dataset.positions, chart.embedding_, 0.05)
        assert quality.trustworthiness >= 0.85
        assert quality.continuity >= 0.85
        elapsed = time.monotonic() - t0
        assert elapsed < 120.0
        c.detail = (f"TW={quality.trustworthiness:.3f} CT={quality.continuity:.3f} "
                    f"(threshold 0.85), {elapsed:.1f}s")


def test_criterion_5_gradient_fidelity():
    with criterion(5, "gradient fidelity") as c:
        t0 = time.monotonic()
        rng = np.random.default_rng(505)
        worst = 0.0
        for kind in ("rff", "dense"):
            for head in ("classification", "regression"):
                net = tiny_net(kind, head, seed=505)
                z = rng.normal(size=(6, 2))
                if head == "classification":
                    targets = rng.integers(0, 5, size=6)
                else:
                    targets = rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3))
                _, grads = loss_and_gradients(net, z, targets)
                fd = finite_difference_gradients(net, z, targets)
                worst = max(worst, max_relative_error(grads, fd))
        assert worst < 1e-4
        elapsed = time.monotonic() - t0
        assert elapsed < 30.0
        c.detail = f"worst relative error {worst:.2e} over 4 architecture/head combos, {elapsed:.1f}s"


def test_criterion_6_learning_capability_ordering(paper_run):
    with criterion(6, "learning capability ordering") as c:
        top1 = {k: float(np.mean(v == paper_run.y_test)) for k, v in paper_run.predictions.items()}
        assert top1["rff"] >= top1["mlp"], f"RFF {top1['rff']} < MLP {top1['mlp']}"
        baseline = 1.0 / paper_run.codebook.n_beams
        for backend, acc in top1.items():
            assert acc >= 20.0 * baseline, f"{backend} {acc} below 20x random baseline"
        assert paper_run.build_seconds < 600.0
        c.detail = (f"top-1 rff={top1['rff']:.3f} mlp={top1['mlp']:.3f} nn1={top1['nn1']:.3f}, "
                    f"baseline x20={20 * baseline:.4f}, pipeline {paper_run.build_seconds:.0f}s")


def test_criterion_7_top_k_dominance(paper_run):
    with criterion(7, "top-k dominance") as c:
        rankings = [cb.BeamRanking(indices=row, scores=np.zeros(len(row)))
                    for row in paper_run.rank_order_test]
        for backend, predicted in paper_run.predictions.items():
            gammas = [top_k_accuracy(predicted, rankings, k) for k in (1, 2, 3)]
            assert gammas[1] >= gammas[0] and gammas[2] >= gammas[1], (backend, gammas)
        oracle = [top_k_accuracy(paper_run.y_test, rankings, k) for k in (1, 2, 3)]
        assert oracle == [1.0, 1.0, 1.0]
        c.detail = "gamma monotone in k for rff/mlp/nn1; oracle gamma = 1 at k=1,2,3"


def test_criterion_8_regression_beats_classification(paper_run):
    with criterion(8, "regression vs codebook classification") as c:
        mean_regr = float(np.mean(paper_run.eta["rff_regr"]))
        mean_classif = float(np.mean(paper_run.eta["rff_classif"]))
        assert mean_regr >= mean_classif - 0.01
        c.detail = f"mean eta regression {mean_regr:.4f} vs codebook classifier {mean_classif:.4f}"


def test_criterion_9_out_of_sample_consistency(paper_run):
    with criterion(9, "out-of-sample consistency") as c:
        cal = paper_run.dataset.indices_of(0)
        channels = paper_run.dataset.uplink_vectorized()[cal]
        back = paper_run.chart.transform(channels)
        worst = float(np.max(np.linalg.norm(back - paper_run.chart.embedding_, axis=1)))
        assert worst < 1e-6

        test_channels = paper_run.dataset.uplink_vectorized()[paper_run.dataset.indices_of(1)]
        queries = test_channels[:10]
        z = paper_run.chart.transform(queries)
        dist = cross_channel_distances(queries, channels)
        for q in range(queries.shape[0]):
            nn = np.argsort(dist[q], kind="stable")[: paper_run.chart._oos_neighbors_]
            verts = paper_run.chart.embedding_[nn]
            a_eq = np.vstack([verts.T, np.ones(len(verts))])
            b_eq = np.append(z[q], 1.0)
            res = linprog(np.zeros(len(verts)), A_eq=a_eq, b_eq=b_eq,
                          bounds=[(0, None)] * len(verts), method="highs")
            assert res.success, f"query {q} outside neighbor hull"
        c.detail = f"worst calibration self-embedding error {worst:.2e}; hull membership holds"


def test_criterion_10_overhead_accounting():
    with criterion(10, "overhead accounting") as c:
        costs = overhead_report(2, 1024, 2)
        assert costs["sweeping_cost"] == 2048
        assert costs["proposed_cost"] == 1028
        c.detail = "B=2, D=1024, d=2 -> sweeping 2048 vs proposed 1028 coefficients"


def test_criterion_11_timing_relations(paper_run):
    with criterion(11, "timing relations") as c:
        rng = np.random.default_rng(1111)
        queries = rng.normal(size=(40, 2))
        labels = rng.integers(0, 16, size=200_000)
        small = NearestBeamPredictor().fit(rng.normal(size=(20_000, 2)), labels[:20_000])
        large = NearestBeamPredictor().fit(rng.normal(size=(200_000, 2)), labels)
        t_nn_small, _ = time_inference(small, queries, repetitions=10)
        t_nn_large, _ = time_inference(large, queries, repetitions=10)
        assert t_nn_large > 2.0 * t_nn_small, "brute-force 1-NN time must grow with references"

        train_kw = dict(n_frequencies=32, hidden_size=16, n_beams=16, epochs=2, seed=0)
        net_small = BeamClassifier(**train_kw).fit(rng.normal(size=(200, 2)),
                                                   rng.integers(0, 16, size=200))
        net_large = BeamClassifier(**train_kw).fit(rng.normal(size=(2000, 2)),
                                                   rng.integers(0, 16, size=2000))
        # best of two measurements per network to suppress warm-up noise
        t_net_small = min(time_inference(net_small, queries, repetitions=10)[0] for _ in range(2))
        t_net_large = min(time_inference(net_large, queries, repetitions=10)[0] for _ in range(2))
        ratio = t_net_large / t_net_small
        assert 0.5 < ratio < 2.0, "network time must not scale with training-set size"
        c.detail = (f"1-NN {t_nn_small:.0f}ns -> {t_nn_large:.0f}ns per query (10x refs); "
                    f"network ratio {ratio:.2f}")


ACCEPTANCE_CLI_CONFIG = {
    "seed": 77,
    "scene": {
        "bs_positions": [[0.0, 10.0, 8.0], [35.0, 10.0, 8.0]],
        "bs_orientations": [0.0, 3.14159265],
        "ue_area": [8.0, 28.0, 2.0, 18.0],
        "n_ue": 90,
        "n_scatterers": 2,
        "scatterer_area": [-5.0, 40.0, 20.0, 30.0],
    },
    "uplink": {"center_frequency": 3.5e9, "bandwidth": 20e6, "n_subcarriers": 4},
    "downlink": {"center_frequency": 28e9, "bandwidth": 20e6, "n_subcarriers": 4},
    "array": {"n_v": 2, "n_h": 2},
    "chart": {"n_neighbors": 8},
    "train": {"n_frequencies": 12, "hidden_size": 16, "epochs": 25, "batch_size": 24},
}


def test_criterion_12_end_to_end_determinism(tmp_path):
    with criterion(12, "end-to-end determinism") as c:
        config = tmp_path / "cfg.yaml"
        config.write_text(yaml.safe_dump(ACCEPTANCE_CLI_CONFIG))

        def run(out):
            assert cli_main(["generate", "--config", str(config), "--out", out, "--quiet"]) == EXIT_OK
            assert cli_main(["chart", "--config", str(config), "--out", out, "--quiet"]) == EXIT_OK
            for backend in ("rff", "mlp"):
                for task in ("classification", "regression"):
                    for bs in ("0", "1"):
                        assert cli_main(["train", "--config", str(config), "--out", out,
                                         "--quiet", "--backend", backend, "--task", task,
                                         "--bs-index", bs]) == EXIT_OK
            assert cli_main(["evaluate", "--config", str(config), "--out", out, "--quiet"]) == EXIT_OK
            assert cli_main(["report", "--out", out, "--quiet"]) == EXIT_OK

        out_a, out_b = tmp_path / "runA", tmp_path / "runB"
        run(str(out_a))
        run(str(out_b))
        names_a = sorted(p.name for p in out_a.iterdir())
        names_b = sorted(p.name for p in out_b.iterdir())
        assert names_a == names_b
        for name in names_a:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
        c.detail = f"two full pipeline runs produced {len(names_a)} byte-identical artifacts"
