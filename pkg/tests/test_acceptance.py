"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`. The learning criterion
trains all three pool modes at the full default configuration, so this
module takes a few minutes of CPU time.
"""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from msae import gradcheck, objective
from msae.cli import main as cli_main
from msae.data_io import load_checkpoint, read_csv, read_pgm, save_checkpoint, write_pgm
from msae.multispace import glcm_window_statistic, gradient_channel, lbp_channel
from msae.network import NetworkConfig, forward_full, init_network
from msae.optimizer import adam_init, adam_step
from msae.pipeline import benchmark_sweep, confidence_interval, evaluate, synth_dataset, train

from test_multispace import glcm_oracle, lbp_oracle, sobel_oracle
from test_optimizer import scalar_adam_oracle


def report(criterion: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {status} [{criterion}] {detail}")
    assert passed, f"{criterion}: {detail}"


# ---------------------------------------------------------------------------
# criterion 5 fixture: full-default training for every pool mode (shared with
# criterion 3, which inspects the logged batches)


@pytest.fixture(scope="module")
def default_runs():
    dataset = synth_dataset(classes=3, per_class=150, patch=32, seed=42)
    assert len(dataset.train) == 300 and len(dataset.test) == 150
    runs = {}
    t0 = time.perf_counter()
    for mode in ("max", "risa", "mir"):
        cfg = NetworkConfig(input_size=32, window=3, filters=8, pool_mode=mode,
                            classifier_hidden=256, classes=3, seed=42)
        net = init_network(cfg)
        untrained = evaluate(net, dataset)
        trained, log = train(net, dataset, objective_mode="enhanced",
                             epochs=50, batch=16, lambda_s=0.1, seed=42)
        trained_metrics = evaluate(trained, dataset)
        runs[mode] = dict(untrained=untrained, trained=trained_metrics, log=log)
    runs["elapsed_s"] = time.perf_counter() - t0
    return runs


class TestCriterion1GradientIntegrity:
    def test_gradcheck_all_primitives_and_full_graph(self):
        t0 = time.perf_counter()
        results = gradcheck.run_all(seed=7, shapes=5)
        names = {r.name.split("[")[0] for r in results}
        assert {"conv2d", "deconv2d", "maxpool", "subspace_pool", "dense",
                "sigmoid", "softmax", "full_graph"} <= names
        worst = max(r.max_rel for r in results)

        # the command itself must also pass and report the max error
        runner = CliRunner()
        res = runner.invoke(cli_main, ["gradcheck", "--seed", "7"],
                            catch_exceptions=False)
        elapsed = time.perf_counter() - t0
        ok = (all(r.frac_pass >= 0.99 for r in results)
              and res.exit_code == 0
              and "max relative error" in res.output
              and worst < 1e-4
              and elapsed < 60.0)
        report("1 gradient integrity", ok,
               f"max_rel={worst:.2e}, min_pass={min(r.frac_pass for r in results):.4f}, "
               f"gradcheck command exit={res.exit_code}, runtime={elapsed:.1f}s (< 60s)")


class TestCriterion2AdamOracle:
    def test_first_step_and_trajectory(self):
        params = {"w": np.zeros(1)}
        state = adam_init(params)
        theta1 = adam_step(state, params, {"w": np.ones(1)})["w"][0]
        first_ok = abs(theta1 - (-0.001 / (1.0 + 1e-8))) <= 1e-12

        grads = [math.cos(0.1 * t) + 0.3 for t in range(100)]
        params = {"w": np.zeros(1)}
        state = adam_init(params)
        worst = 0.0
        for g, expected in zip(grads, scalar_adam_oracle(grads)):
            params = adam_step(state, params, {"w": np.array([g])})
            worst = max(worst, abs(params["w"][0] - expected))
        report("2 adam oracle", first_ok and worst <= 1e-12,
               f"theta1 err={abs(theta1 - (-0.001 / (1.0 + 1e-8))):.2e}, "
               f"100-step max err={worst:.2e} (<= 1e-12)")


class TestCriterion3ObjectiveIdentities:
    def test_unit_examples_exact(self):
        checks = [
            objective.squared_error(np.array([0.0, 0.0]), np.array([1.0, 2.0])) == 5.0,
            objective.prev_step_squared_error(np.array([3.0]), np.array([0.0]),
                                              np.array([1.0])) == 4.0,
            abs(objective.sparsity_penalty(np.full((1, 2, 2), 1.0 / math.e))
                - 1.0 / math.e) <= 1e-15,
            abs(objective.label_log_likelihood(np.array([0.0, 1.0, 0.0]),
                                               np.array([0.1, 0.7, 0.2]))
                - math.log(0.7)) <= 1e-15,
            objective.classic_objective(3.0, 2.0, 0.0) == 3.0,
            abs(objective.enhanced_objective(5.0, math.log(0.7), 0.1, 0.5)
                - (5.0 - math.log(0.7) + 0.05)) <= 1e-12,
        ]
        assert all(checks)

    def test_identities_on_every_logged_batch(self, default_runs):
        checked = 0
        ok = True
        for mode in ("max", "risa", "mir"):
            for epoch in default_runs[mode]["log"]:
                for rep in epoch.batch_reports:
                    checked += 1
                    ok &= abs(rep.l - (rep.r + rep.lambda_s * rep.s)) <= 1e-12
                    ok &= abs(rep.mr - (rep.r1 - rep.rl)) <= 1e-12
                    ok &= abs(rep.eml - (rep.mr + rep.lambda_s * rep.s)) <= 1e-12
                    ok &= rep.rl <= 0.0 and rep.s >= 0.0
        report("3 objective identities", ok and checked >= 2850,
               f"{checked} batches checked, all identities within 1e-12, RL<=0, S>=0")


class TestCriterion4FeatureChannelOracles:
    def test_fifty_random_images_exact(self):
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(50):
            img = rng.uniform(0.0, 1.0, (16, 16))
            worst = max(worst, np.abs(gradient_channel(img[None])[0]
                                      - sobel_oracle(img)).max())
            worst = max(worst, np.abs(lbp_channel(img[None])[0]
                                      - lbp_oracle(img)).max())
            worst = max(worst, np.abs(glcm_window_statistic(img[None])[0]
                                      - glcm_oracle(img, 5, 8, (0, 1))).max())
        report("4 feature-channel oracles", worst <= 1e-12,
               f"50 images x 3 channels, max abs deviation {worst:.2e} (<= 1e-12)")


class TestCriterion5LearningAtDeskScale:
    def test_accuracy_thresholds_and_runtime(self, default_runs):
        lines = []
        ok = True
        for mode in ("max", "risa", "mir"):
            got = default_runs[mode]["trained"].accuracy_pct
            base = default_runs[mode]["untrained"].accuracy_pct
            ok &= got >= 90.0 and (got - base) >= 30.0
            lines.append(f"{mode}: {base:.1f}%->{got:.1f}%")
        elapsed = default_runs["elapsed_s"]
        ok &= elapsed < 600.0
        report("5 learning at desk scale", ok,
               "; ".join(lines) + f"; runtime={elapsed:.0f}s (< 600s)")

    def test_enhanced_objective_decreases_at_defaults(self, default_runs):
        log = default_runs["mir"]["log"]  # the default pool mode
        drop = 1.0 - log[-1].report.eml / log[0].report.eml
        assert drop >= 0.20, f"EML dropped only {drop * 100:.1f}%"


class TestCriterion6ModeSeparability:
    def test_sweep_csv_ci_and_throughput(self, tmp_path):
        records = benchmark_sweep([32, 64], [3, 4, 5], ["risa", "mir"], repeats=3,
                                  per_class=6, epochs=2, batch=8, filters=4,
                                  hidden=16, seed=0)
        ok = len(records) == 12  # |sizes| * |windows| * |modes|

        runner = CliRunner()
        res = runner.invoke(cli_main, [
            "benchmark", "--sizes", "32,64", "--windows", "3,4,5",
            "--modes", "risa,mir", "--repeats", "3", "--per-class", "6",
            "--epochs", "2", "--batch", "8", "--filters", "4", "--hidden", "16",
            "--seed", "0", "--out", str(tmp_path)], catch_exceptions=False)
        ok &= res.exit_code == 0
        header, rows = read_csv(tmp_path / "benchmark.csv")
        ok &= header == ["input_size", "window", "pool_mode", "accuracy_pct",
                         "throughput_fps", "ci_center", "ci_halfwidth",
                         "improvement_pct"]
        ok &= len(rows) == 12

        # CI spot check against hand arithmetic; 1.96*2/sqrt(2) = 2.77186
        center, hw = confidence_interval([8.0, 12.0], 1.96)
        ok &= center == 10.0 and abs(hw - 1.96 * 2.0 / math.sqrt(2.0)) <= 1e-6

        # per-cell CI columns recompute from the repeat accuracies
        for rec in records:
            c, h = confidence_interval(rec.accuracy_runs, 1.96)
            ok &= rec.ci_center == c and rec.ci_halfwidth == h
            ok &= rec.throughput_fps > 0.0
            total = rec.n_tests / rec.throughput_fps
            components = rec.reconstruction_time_s + rec.classification_time_s
            ok &= abs(total - components) <= 1e-9 * max(total, 1.0)
        report("6 mode separability", ok,
               f"12 cells x 3 repeats, schema stable, CI spot check "
               f"hw={hw:.6f}, throughput components consistent")


class TestCriterion7Determinism:
    def test_byte_identical_reruns(self, tmp_path):
        # identical argv + seed, run twice into the same paths; every data
        # artifact must come back byte-identical
        runner = CliRunner()
        src = tmp_path / "ds" / "train_0000.pgm"
        commands = [
            ["synth", "--per-class", "3", "--patch", "8", "--seed", "5",
             "--out", str(tmp_path / "ds")],
            ["train", "--per-class", "6", "--patch", "16", "--filters", "4",
             "--hidden", "8", "--epochs", "1", "--batch", "8", "--seed", "3",
             "--pool", "mir", "--out", str(tmp_path / "run")],
            ["reconstruct", "--in", str(src), "--out", str(tmp_path / "ms")],
            ["preprocess", "--in", str(src), "--out", str(tmp_path / "half.pgm")],
        ]
        artifacts = ["ds/index.csv", "ds/train_0000.pgm", "run.ckpt",
                     "run.ckpt.bin", "run_log.csv", "run_loss.png",
                     "ms_gradient.pgm", "ms_glcm.pgm", "ms_lbp.pgm", "half.pgm"]

        def run_all():
            for argv in commands:
                res = runner.invoke(cli_main, argv, catch_exceptions=False)
                assert res.exit_code == 0, argv
            return {rel: (tmp_path / rel).read_bytes() for rel in artifacts}

        first = run_all()
        second = run_all()
        differing = [rel for rel in artifacts if first[rel] != second[rel]]
        report("7 determinism", not differing,
               f"{len(artifacts)} artifacts byte-identical across identical-argv "
               f"reruns (differing: {differing or 'none'})")


class TestCriterion8RoundTrips:
    def test_pgm_and_checkpoint(self, tmp_path):
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 1, (1, 13, 11))
        write_pgm(img, tmp_path / "x.pgm")
        back = read_pgm(tmp_path / "x.pgm")
        quantized = np.round(np.clip(img, 0, 1) * 255.0) / 255.0
        pgm_ok = np.array_equal(back, quantized)

        ckpt_ok = True
        for mode in ("max", "risa", "mir"):
            cfg = NetworkConfig(input_size=16, filters=4, pool_mode=mode,
                                classifier_hidden=8, classes=3, seed=6)
            net = init_network(cfg)
            save_checkpoint(net, tmp_path / f"{mode}.ckpt")
            loaded = load_checkpoint(tmp_path / f"{mode}.ckpt")
            x = rng.uniform(0, 1, (cfg.in_channels, 16, 16))
            a = forward_full(net, x)
            b = forward_full(loaded, x)
            ckpt_ok &= np.array_equal(a[0], b[0]) and np.array_equal(a[2], b[2])
            ckpt_ok &= all(np.array_equal(net.params[n], loaded.params[n])
                           for n in net.params)
        report("8 round trips", pgm_ok and ckpt_ok,
               "PGM quantization-exact; checkpoint save->load->forward bitwise")
