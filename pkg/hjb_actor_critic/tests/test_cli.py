"""Test the hjbac command line tool."""

import csv
import io
import json
import os
import tempfile
import unittest
from unittest import mock

from hjb_actor_critic import __version__
from hjb_actor_critic.cli import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, call_command, main
from hjb_actor_critic.nn import save_checkpoint
from hjb_actor_critic.problems import catalog, preset
from hjb_actor_critic.tests.util import fitted_pair

TINY_TRAIN = [
    "--problem",
    "toy1d",
    "--width",
    "8",
    "--critic-width",
    "8",
    "--critic-steps",
    "1",
    "--actor-steps",
    "1",
    "--batch-critic",
    "16",
    "--batch-actor",
    "16",
    "--eval-points",
    "50",
    "--optimizer",
    "sgd",
]


def _read_csv(path):
    with open(path, encoding="UTF-8", newline="") as file:
        return list(csv.reader(file))


class CommandTestCase(unittest.TestCase):
    """Runs commands against a temporary output directory."""

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with
        self.stdout = io.StringIO()
        self.stderr = io.StringIO()

    def tearDown(self):
        self.tmpdir.cleanup()

    def path(self, *parts):
        return os.path.join(self.tmpdir.name, *parts)

    def call(self, name, *args, **options):
        return call_command(name, *args, stdout=self.stdout, stderr=self.stderr, **options)


class TestMain(CommandTestCase):
    """Test main and argument handling."""

    def test_version(self):
        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            self.assertEqual(EXIT_OK, main(["--version"]))
        self.assertEqual(f"{__version__}\n", stdout.getvalue())

    def test_help(self):
        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            self.assertEqual(EXIT_OK, main(["--help"]))
            self.assertEqual(EXIT_USAGE, main([]))
        self.assertIn("verify-mc", stdout.getvalue())

    def test_unknown_command(self):
        with mock.patch("sys.stderr", new_callable=io.StringIO) as stderr:
            self.assertEqual(EXIT_USAGE, main(["fly"]))
        self.assertIn("Unknown command 'fly'", stderr.getvalue())

    def test_list_problems(self):
        self.assertEqual(EXIT_OK, self.call("list-problems"))
        lines = self.stdout.getvalue().splitlines()
        self.assertEqual(len(catalog()), len(lines))
        self.assertTrue(any(line.startswith("poisson1d ") for line in lines))

    def test_bad_arguments(self):
        self.assertEqual(EXIT_USAGE, self.call("train", "--width", "wide"))
        self.assertEqual(EXIT_USAGE, self.call("train", problem="toy1d", colour="blue"))
        self.assertEqual(EXIT_USAGE, self.call("train", "--out", self.path("x")))
        self.assertIn("--problem is required", self.stderr.getvalue())

    def test_unknown_problem(self):
        self.assertEqual(EXIT_USAGE, self.call("train", "--problem", "problem9", "--out", self.path("x")))
        self.assertIn("problem9", self.stderr.getvalue())

    def test_invalid_config(self):
        config = self.path("train.yml")
        with open(config, "w", encoding="UTF-8") as file:
            file.write("beta: 0.4\n")
        code = self.call("train", *TINY_TRAIN, "--config", config, "--out", self.path("x"))
        self.assertEqual(EXIT_USAGE, code)
        self.assertIn("beta", self.stderr.getvalue())


class TestTrainCommand(CommandTestCase):
    """Test train and replay."""

    def test_train(self):
        out = self.path("run")
        self.assertEqual(EXIT_OK, self.call("train", *TINY_TRAIN, "--cycles", "2", "--out", out))
        for name in ("config.json", "metrics.csv", "actor.json", "critic.json", "training_report.md"):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)
        self.assertEqual(5, len(_read_csv(os.path.join(out, "metrics.csv"))))
        with open(os.path.join(out, "manifest.json"), encoding="UTF-8") as file:
            manifest = json.load(file)
        self.assertEqual(("train", 0), (manifest["command"], manifest["exit_code"]))
        self.assertEqual(8, manifest["config"]["width"])
        self.assertIn("mse_c:", self.stdout.getvalue())

    def test_zero_cycles(self):
        out = self.path("run")
        self.assertEqual(EXIT_OK, self.call("train", *TINY_TRAIN, "--cycles", "0", "--out", out))
        rows = _read_csv(os.path.join(out, "metrics.csv"))
        self.assertEqual(1, len(rows))
        self.assertEqual("elapsed_s", rows[0][-1])

    def test_replay_reproduces_metrics(self):
        first = self.path("first")
        second = self.path("second")
        self.assertEqual(EXIT_OK, self.call("train", *TINY_TRAIN, "--cycles", "2", "--seed", "3", "--out", first))
        self.assertEqual(EXIT_OK, self.call("replay", first, "--out", second))

        def without_elapsed(directory):
            return [row[:-1] for row in _read_csv(os.path.join(directory, "metrics.csv"))]

        self.assertEqual(without_elapsed(first), without_elapsed(second))
        with open(os.path.join(second, "config.json"), encoding="UTF-8") as file:
            self.assertEqual(3, json.load(file)["seed"])

    def test_replay_needs_out(self):
        self.assertEqual(EXIT_USAGE, self.call("replay", self.path("missing")))
        self.assertEqual(EXIT_USAGE, self.call("replay", self.path("missing"), "--out", self.path("x")))

    def test_divergence(self):
        config = self.path("train.yml")
        with open(config, "w", encoding="UTF-8") as file:
            file.write("divergence_threshold: 1.0e-12\n")
        out = self.path("run")
        self.assertEqual(EXIT_DIVERGED, self.call("train", *TINY_TRAIN, "--config", config, "--out", out))
        self.assertTrue(os.path.exists(os.path.join(out, "critic.json")))
        with open(os.path.join(out, "manifest.json"), encoding="UTF-8") as file:
            manifest = json.load(file)
        self.assertEqual(2, manifest["exit_code"])
        self.assertEqual("critic", manifest["summary"]["diverged_phase"])
        self.assertIn("Training diverged", self.stderr.getvalue())


class TestVerifyCommand(CommandTestCase):
    """Test verify-mc."""

    def setUp(self):
        super().setUp()
        problem = preset("toy1d")
        actor, critic = fitted_pair(problem, width=64, points=500)
        save_checkpoint(self.path("actor.json"), actor, problem.name)
        save_checkpoint(self.path("critic.json"), critic, problem.name)
        self.args = [
            "--problem",
            "toy1d",
            "--actor-ckpt",
            self.path("actor.json"),
            "--critic-ckpt",
            self.path("critic.json"),
            "--points",
            "3",
            "--dt",
            "0.01",
            "--max-time",
            "10",
        ]

    def test_verify(self):
        out = self.path("verify")
        self.assertEqual(EXIT_OK, self.call("verify-mc", *self.args, "--paths", "1", "--out", out))
        lines = self.stdout.getvalue().splitlines()
        self.assertTrue(lines[-3].startswith("E1 "))
        e2 = float(lines[-2].split()[1])
        self.assertLess(e2, 1e-6)
        rows = _read_csv(os.path.join(out, "agreement.csv"))
        self.assertEqual(4, len(rows))
        self.assertEqual("n/a", rows[1][4])
        for name in ("agreement_report.md", "histogram_v_minus_q.csv", "manifest.json"):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

    def test_swapped_checkpoints(self):
        args = list(self.args)
        args[3], args[5] = args[5], args[3]
        self.assertEqual(EXIT_USAGE, self.call("verify-mc", *args, "--out", self.path("verify")))
        self.assertIn("expected a actor checkpoint", self.stderr.getvalue())

    def test_missing_checkpoint(self):
        self.assertEqual(EXIT_USAGE, self.call("verify-mc", "--problem", "toy1d", "--actor-ckpt", "a.json"))


class TestStudyCommand(CommandTestCase):
    """Test study."""

    def test_unknown_study(self):
        self.assertEqual(EXIT_USAGE, self.call("study", "nothing", "--out", self.path("s")))
        self.assertEqual(EXIT_USAGE, self.call("study", "--out", self.path("s")))

    def test_limit_ode(self):
        out = self.path("s")
        args = ["limit-ode", "--T", "0", "--grid-points", "5", "--kernel-samples", "100", "--out", out]
        self.assertEqual(EXIT_OK, self.call("study", *args))
        rows = _read_csv(os.path.join(out, "limit-ode.csv"))
        self.assertEqual(["t", "x", "Q", "U", "V", "u_star"], rows[0])
        self.assertEqual(6, len(rows))
        self.assertEqual("-1", rows[1][1])

    def test_ntk_variance(self):
        out = self.path("s")
        args = ["ntk-variance", "--widths", "8,32", "--reinits", "5", "--x", "0.1,0.2", "--y", "0.3,-0.1", "--out", out]
        self.assertEqual(EXIT_OK, self.call("study", *args))
        self.assertEqual(3, len(_read_csv(os.path.join(out, "ntk-variance.csv"))))
        with open(os.path.join(out, "manifest.json"), encoding="UTF-8") as file:
            self.assertIn("slope", json.load(file)["summary"])

    def test_mismatched_points(self):
        args = ["ntk-variance", "--x", "0.1,0.2", "--y", "0.3", "--out", self.path("s")]
        self.assertEqual(EXIT_USAGE, self.call("study", *args))
