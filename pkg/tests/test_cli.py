import io
import json
import shutil
import tempfile
import time
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

from ticlust.base.data_retrieval import load_timeline_rttm
from ticlust.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from tests.helpers import CONFIGS, MockConsole


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main([str(arg) for arg in argv])
    return code, out.getvalue(), err.getvalue()


class TicCliTestCase(unittest.TestCase):
    """
    End-to-end tests of the ticlust command on synthetic sessions.
    """

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def synth(self, spec=CONFIGS / "synth_default.json", name="synth"):
        out_dir = self.tmp / name
        code, _, err = run_cli("synth", "--spec", spec, "--out-dir", out_dir)
        self.assertEqual(code, EXIT_OK, err)
        return out_dir

    def cluster(self, session, name, *extra):
        rttm, metrics = self.tmp / f"{name}.rttm", self.tmp / f"{name}.json"
        code, _, err = run_cli(
            "cluster",
            "--features", session / "synthetic.csv",
            "--times", session / "synthetic.times.csv",
            "--ref", session / "synthetic.ref.rttm",
            "--out-rttm", rttm,
            "--out-metrics", metrics,
            *extra,
        )
        self.assertEqual(code, EXIT_OK, err)
        return rttm, json.loads(metrics.read_text(encoding="utf-8"))

    def write_rttm(self, name, lines):
        path = self.tmp / name
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return path

    def test_synth_cluster_score(self):
        session = self.synth()
        for name in ("synthetic.csv", "synthetic.times.csv", "synthetic.ref.rttm", "synthetic.spec.json"):
            self.assertTrue((session / name).exists(), name)

        rttm, metrics = self.cluster(session, "tic", "--config", CONFIGS / "cluster.json")
        self.assertGreaterEqual(metrics["accuracy"], 0.95)
        trace = metrics["objective_trace"]
        for i in range(1, len(trace)):
            if i not in metrics["reseed_iterations"]:
                self.assertLessEqual(trace[i], trace[i - 1] + 1e-6 * max(1.0, abs(trace[i - 1])))

        code, out, _ = run_cli("score", "--ref", session / "synthetic.ref.rttm", "--hyp", rttm)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.strip(), f"DER: {metrics['der'] * 100:.2f}%")

    def test_score_reference_against_itself(self):
        session = self.synth(CONFIGS / "synth_small.json")
        ref = session / "synthetic.ref.rttm"
        out_json = self.tmp / "score.json"
        code, out, _ = run_cli("score", "--ref", ref, "--hyp", ref, "--out", out_json)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.strip(), "DER: 0.00%")
        self.assertEqual(json.loads(out_json.read_text(encoding="utf-8"))["der"], 0.0)

    def test_score_partial_confusion(self):
        ref = self.write_rttm(
            "ref.rttm",
            ["SPEAKER s 1 0.00 3.00 <NA> <NA> a <NA> <NA>", "SPEAKER s 1 3.00 7.00 <NA> <NA> b <NA> <NA>"],
        )
        hyp = self.write_rttm(
            "hyp.rttm",
            ["SPEAKER s 1 0.00 6.00 <NA> <NA> 0 <NA> <NA>", "SPEAKER s 1 6.00 4.00 <NA> <NA> 1 <NA> <NA>"],
        )
        code, out, _ = run_cli("score", "--ref", ref, "--hyp", hyp)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.strip(), "DER: 30.00%")

    def test_score_session_mismatch(self):
        ref = self.write_rttm("ref.rttm", ["SPEAKER s1 1 0.00 1.00 <NA> <NA> a <NA> <NA>"])
        hyp = self.write_rttm("hyp.rttm", ["SPEAKER s2 1 0.00 1.00 <NA> <NA> a <NA> <NA>"])
        code, _, err = run_cli("score", "--ref", ref, "--hyp", hyp)
        self.assertEqual(code, EXIT_DATA)
        # log records may precede it; the user-facing message is always the last line
        self.assertEqual(err.splitlines()[-1], "error: reference session 's1' does not match hypothesis 's2'")

    def test_missing_features_file(self):
        code, _, err = run_cli("cluster", "--features", self.tmp / "missing.csv", "--k", 2)
        self.assertEqual(code, EXIT_DATA)
        self.assertIn("error:", err)

    def test_more_clusters_than_rows(self):
        features = self.tmp / "two.csv"
        features.write_text("1,2\n3,4\n", encoding="utf-8")
        code, _, err = run_cli("cluster", "--features", features, "--k", 3)
        self.assertEqual(code, EXIT_DATA)
        self.assertIn("cannot form", err)

    def test_missing_cluster_count(self):
        session = self.synth(CONFIGS / "synth_small.json")
        code, _, err = run_cli("cluster", "--features", session / "synthetic.csv", "--logging.level", "DEBUG")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertEqual(err.splitlines()[-1], "error: missing required setting(s): k")

    def test_invalid_configurations(self):
        session = self.synth(CONFIGS / "synth_small.json")
        code, _, _ = run_cli("synth", "--spec", CONFIGS / "synth_bad_stay.json", "--out-dir", self.tmp / "bad")
        self.assertEqual(code, EXIT_CONFIG)
        code, _, err = run_cli(
            "cluster", "--features", session / "synthetic.csv", "--config", CONFIGS / "cluster_unknown_key.json"
        )
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("gamma", err)
        code, _, _ = run_cli("cluster", "--features", session / "synthetic.csv", "--k", 2, "--tic.window", 0)
        self.assertEqual(code, EXIT_CONFIG)
        code, _, _ = run_cli("cluster", "--bogus")
        self.assertEqual(code, EXIT_CONFIG)

    def test_baseline_single_cluster(self):
        session = self.synth(CONFIGS / "synth_small.json")
        rttm = self.tmp / "base.rttm"
        code, _, err = run_cli(
            "baseline", "--features", session / "synthetic.csv", "--times", session / "synthetic.times.csv",
            "--k", 1, "--out-rttm", rttm,
        )
        self.assertEqual(code, EXIT_OK, err)
        timeline = load_timeline_rttm(rttm)
        self.assertEqual(timeline.labels, ["0"])
        self.assertEqual(timeline.uri, "synthetic")

    def test_baseline_unknown_method(self):
        session = self.synth(CONFIGS / "synth_small.json")
        code, _, err = run_cli("baseline", "--features", session / "synthetic.csv", "--k", 2, "--method", "movmf")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("unsupported baseline method", err)

    def test_same_seed_same_outputs(self):
        first = self.synth(CONFIGS / "synth_small.json", "a")
        second = self.synth(CONFIGS / "synth_small.json", "b")
        for name in ("synthetic.csv", "synthetic.times.csv", "synthetic.ref.rttm", "synthetic.spec.json"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

        rttm_a, metrics_a = self.cluster(first, "a", "--k", 2, "--tic.seed", 3)
        rttm_b, metrics_b = self.cluster(first, "b", "--k", 2, "--tic.seed", 3)
        self.assertEqual(rttm_a.read_bytes(), rttm_b.read_bytes())
        self.assertEqual(metrics_a, metrics_b)

    def test_events_log(self):
        session = self.synth(CONFIGS / "synth_small.json")
        events = self.tmp / "events"
        self.cluster(session, "tic", "--k", 2, "--logging.events_dir", events)
        text = (events / "events.log").read_text(encoding="utf-8")
        self.assertIn("em_iteration iteration=1", text)

    def test_window_two_does_not_hurt(self):
        # close means: clusters differ mostly in their cross-time correlation
        base = json.loads((CONFIGS / "synth_windowed.json").read_text(encoding="utf-8"))
        for seed in (21, 22, 23):
            with self.subTest(seed=seed):
                spec = self.tmp / f"windowed{seed}.json"
                spec.write_text(json.dumps({**base, "seed": seed}), encoding="utf-8")
                session = self.synth(spec, f"windowed{seed}")
                _, single = self.cluster(session, f"w1_{seed}", "--k", 3, "--tic.window", 1)
                _, windowed = self.cluster(session, f"w2_{seed}", "--k", 3, "--tic.window", 2)
                self.assertGreaterEqual(windowed["accuracy"], single["accuracy"])

    def test_bench(self):
        out_dir = self.tmp / "bench"
        with patch("ticlust.cli.Console", MockConsole):
            code, _, err = run_cli(
                "bench", "--spec", CONFIGS / "synth_small.json", "--out-dir", out_dir, "--pca-dims", "2"
            )
            self.assertEqual(code, EXIT_OK, err)
        report = json.loads((out_dir / "bench.json").read_text(encoding="utf-8"))
        self.assertEqual([arm["pca_dims"] for arm in report["arms"]], [None, 2])
        for arm in report["arms"]:
            self.assertGreaterEqual(arm["tic"]["accuracy"], arm["cosine_kmeans"]["accuracy"] - 0.01)
            self.assertGreaterEqual(arm["tic"]["der"], 0.0)
        self.assertEqual(report["spec"]["seed"], 11)

    def test_bench_default_session(self):
        out_dir = self.tmp / "bench_default"
        started = time.perf_counter()
        with patch("ticlust.cli.Console", MockConsole):
            code, _, err = run_cli("bench", "--spec", CONFIGS / "synth_default.json", "--out-dir", out_dir)
        elapsed = time.perf_counter() - started
        self.assertEqual(code, EXIT_OK, err)
        (arm,) = json.loads((out_dir / "bench.json").read_text(encoding="utf-8"))["arms"]
        self.assertGreaterEqual(arm["tic"]["accuracy"], 0.95)
        self.assertLessEqual(arm["tic"]["der"], 0.05)
        self.assertLessEqual(arm["cosine_kmeans"]["accuracy"], arm["tic"]["accuracy"])
        self.assertLess(elapsed, 60.0)

    def test_bench_table(self):
        console = MockConsole()
        with patch("ticlust.cli.Console", return_value=console):
            code, _, err = run_cli("bench", "--spec", CONFIGS / "synth_small.json", "--out-dir", self.tmp / "bench")
        self.assertEqual(code, EXIT_OK, err)
        text = MockConsole.remove_rich_syntax(console.captured_print)
        self.assertIn("Synthetic benchmark", text)
        self.assertIn("none", text)

    def test_bench_rejects_invalid_pca_arm(self):
        code, _, err = run_cli(
            "bench", "--spec", CONFIGS / "synth_small.json", "--out-dir", self.tmp / "bench", "--pca-dims", "9"
        )
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("PCA arm", err)
        self.assertFalse((self.tmp / "bench" / "bench.json").exists())


if __name__ == "__main__":
    unittest.main()
