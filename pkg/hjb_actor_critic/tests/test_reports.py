"""Test report rendering and run manifests."""

import dataclasses
import json
import math
import os
import tempfile
import unittest

from jinja2 import DictLoader, Environment, StrictUndefined, UndefinedError

from hjb_actor_critic.config import McConfig, TrainConfig
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.manifest import MANIFEST_FILENAME, RunManifest
from hjb_actor_critic.metrics_mc import AgreementReport, AgreementRow
from hjb_actor_critic.problems import preset
from hjb_actor_critic.reports import render_agreement_report, render_report, render_training_report, sci
from hjb_actor_critic.trainer import MetricsRecord, TrainResult


class TestSciFilter(unittest.TestCase):
    """Test the sci filter."""

    def test_values(self):
        self.assertEqual("1.2346e-05", sci(1.23456e-5))
        self.assertEqual("3.0e+00", sci(3, digits=1))
        self.assertEqual("n/a", sci(math.nan))
        self.assertEqual("n/a", sci(None))


class TestRenderReports(unittest.TestCase):
    """Test the Markdown reports."""

    def setUp(self):
        self.problem = preset("toy1d")
        self.tmpdir = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_undefined_variables_fail(self):
        env = Environment(loader=DictLoader({"broken.j2": "{{ missing }}"}), undefined=StrictUndefined)
        with self.assertRaises(UndefinedError):
            render_report("broken.j2", {}, env=env)

    def test_training_report(self):
        records = [MetricsRecord(0, 4, "critic", critic_loss=0.5), MetricsRecord(0, 8, "actor", actor_loss=1.0)]
        result = TrainResult(None, None, records)
        path = os.path.join(self.tmpdir.name, "training_report.md")
        text = render_training_report(
            path, self.problem, TrainConfig(width=32), result, {"mse_c": 2.5e-4, "re_c": math.nan}
        )
        with open(path, encoding="UTF-8") as file:
            self.assertEqual(text, file.read())
        self.assertIn("# Training report: toy1d", text)
        self.assertIn("- Completed cycles: 1", text)
        self.assertIn("| mse_c | 2.5000e-04 |", text)
        self.assertIn("| re_c | n/a |", text)
        self.assertIn("| width | 32 |", text)
        self.assertIn("| truncation_delta | default |", text)
        self.assertNotIn("Diverged", text)

    def test_diverged_training_report(self):
        text = render_training_report(None, self.problem, TrainConfig(), None, {}, diverged="loss out of range")
        self.assertIn("- Completed cycles: 0", text)
        self.assertIn("**Diverged**: loss out of range", text)

    def test_agreement_report(self):
        rows = [
            AgreementRow([0.1], 1.0, 1.0, 1.1, 0.05, 0.4, 0.0),
            AgreementRow([0.2], 1.0, 1.0, 0.9, 0.05, 0.4, 0.5),
        ]
        report = AgreementReport(math.nan, math.nan, 0.01, rows, {}, True)
        problem = dataclasses.replace(self.problem, value_function=None)
        text = render_agreement_report(
            None, problem, McConfig(), report, {"q_minus_vmc": "histogram_q_minus_vmc.csv"}
        )
        self.assertIn("2 start points, 2000 paths each", text)
        self.assertIn("| E1 = mean (V - V_mc)^2 | n/a |", text)
        self.assertIn("| E3 = mean (Q - V_mc)^2 | 1.0000e-02 |", text)
        self.assertIn("| censored paths | 25.00% |", text)
        self.assertIn("only E3 is available", text)
        self.assertIn("- `q_minus_vmc`: histogram_q_minus_vmc.csv", text)


class TestRunManifest(unittest.TestCase):
    """Test RunManifest."""

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_write_and_load(self):
        manifest = RunManifest("train", {"problem": "toy1d"}, {"width": 8}, 3, self.tmpdir.name)
        manifest.finish(0, ["metrics.csv", "config.json"], re_c=math.nan, e1=0.5)
        path = manifest.write()
        self.assertEqual(MANIFEST_FILENAME, path.name)
        with open(path, encoding="UTF-8") as file:
            document = json.load(file)
        self.assertIsNone(document["summary"]["re_c"])
        self.assertEqual(["config.json", "metrics.csv"], document["outputs"])
        loaded = RunManifest.load(self.tmpdir.name)
        self.assertEqual(manifest, loaded)

    def test_bad_manifest(self):
        with self.assertRaises(ConfigurationError):
            RunManifest.load(self.tmpdir.name)
        path = RunManifest("study", {}, {}, None, self.tmpdir.name).write()
        with open(path, encoding="UTF-8") as file:
            document = json.load(file)
        document["format_version"] = 7
        with open(path, "w", encoding="UTF-8") as file:
            json.dump(document, file)
        with self.assertRaises(ConfigurationError):
            RunManifest.load(path)

    def test_csv_schema_mismatch_warns(self):
        manifest = RunManifest("study", {}, {}, None, self.tmpdir.name)
        manifest.csv_schema_version = 0
        manifest.write()
        with self.assertLogs("hjb_actor_critic.manifest", level="WARNING"):
            RunManifest.load(self.tmpdir.name)
