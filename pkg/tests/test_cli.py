"""End-to-end tests for the voxpath command line."""

import json

import pytest

from voxpath.main import build_parser, main
from voxpath.models import LABEL_SLUGS

FAST_CONFIG = """
[dsp]
n_mfcc = 8

[shac]
budget = 20
batch = 10
max_classifiers = 1
final_batch = 10

[search.svm_pipeline]
rf_trees = { choices = [10] }

[pipeline]
k = 3
"""

SMALL_CORPUS = """
duration_s = 0.5

[classes.normal]
count = 6

[classes.neoplasm]
count = 6

[classes.phonotrauma]
count = 6

[classes.vocal_palsy]
count = 6
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthesize, extract, tune, train once for the whole module."""
    root = tmp_path_factory.mktemp("cli")
    (root / "voxpath.toml").write_text(FAST_CONFIG)
    (root / "corpus.toml").write_text(SMALL_CORPUS)
    config = str(root / "voxpath.toml")

    steps = [
        ["synth", "--spec", str(root / "corpus.toml"), "--out-dir", str(root / "corpus"), "--seed", "7"],
        ["extract", "--manifest", str(root / "corpus" / "manifest.txt"), "--out", str(root / "features.json")],
        ["tune", "--cache", str(root / "features.json"), "--out", str(root / "hp.json")],
        ["train", "--cache", str(root / "features.json"), "--hyperparams", str(root / "hp.json"),
         "--out", str(root / "model.json")],
    ]
    for argv in steps:
        assert main(["--config", config, *argv]) == 0, argv
    return root


def run(workspace, *argv, jobs=None):
    prefix = ["--config", str(workspace / "voxpath.toml")]
    if jobs is not None:
        prefix += ["--jobs", str(jobs)]
    return main([*prefix, *argv])


class TestParser:
    """Tests for argument parsing."""

    def test_subcommands(self):
        """Every command is registered."""
        parser = build_parser()
        for command in ("synth", "extract", "tune", "train", "evaluate", "predict"):
            args = parser.parse_args(
                [command, "--out-dir", "x"] if command == "synth"
                else [command, "--input", "x"] if command == "predict"
                else [command]
            )
            assert args.command == command

    def test_unknown_kind(self):
        """Model kinds are restricted to the two families."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["tune", "--kind", "lstm"])


class TestPipelineCommands:
    """Tests for the synth -> extract -> tune -> train -> predict chain."""

    def test_corpus_written(self, workspace):
        """24 clips and a manifest."""
        lines = [
            line for line in (workspace / "corpus" / "manifest.txt").read_text().splitlines()
            if line and not line.startswith("#")
        ]
        assert len(lines) == 24

    def test_feature_cache(self, workspace):
        """d from the config gives 3d columns."""
        cache = json.loads((workspace / "features.json").read_text())
        assert cache["d"] == 8
        assert len(cache["rows"]) == 24
        assert all(len(row["values"]) == 24 for row in cache["rows"])

    def test_tuning_outputs(self, workspace):
        """Hyperparameters and the CSV log are written."""
        hp = json.loads((workspace / "hp.json").read_text())
        assert hp["hyperparams"]["kind"] == "svm-pipeline"
        assert hp["hyperparams"]["rf_trees"] == 10
        assert hp["tune_seed"] == 17 and hp["eval_seed"] == 7
        log = (workspace / "hp.csv").read_text().splitlines()
        assert log[0].startswith("stage,accepted,score")
        assert len(log) == 21

    def test_evaluate_prints_table(self, workspace, capsys):
        """The report table has the metric columns and k folds."""
        assert run(workspace, "evaluate", "--cache", str(workspace / "features.json"),
                   "--hyperparams", str(workspace / "hp.json"), "--out", str(workspace / "r1.json")) == 0
        out = capsys.readouterr().out
        for column in ("Sensitivity", "Specificity", "Recall", "Scores", "Std. Dev"):
            assert column in out
        report = json.loads((workspace / "r1.json").read_text())
        assert len(report["metrics"]["folds"]) == 3
        assert report["provenance"]["d"] == 8

    def test_evaluate_k_override(self, workspace):
        """--k beats the config."""
        assert run(workspace, "evaluate", "--cache", str(workspace / "features.json"),
                   "--hyperparams", str(workspace / "hp.json"), "--k", "4",
                   "--out", str(workspace / "r_k4.json")) == 0
        report = json.loads((workspace / "r_k4.json").read_text())
        assert len(report["metrics"]["folds"]) == 4

    def test_evaluate_is_reproducible(self, workspace):
        """Reruns, serial or parallel, write identical bytes."""
        common = ["evaluate", "--cache", str(workspace / "features.json"),
                  "--hyperparams", str(workspace / "hp.json")]
        assert run(workspace, *common, "--out", str(workspace / "r2.json")) == 0
        assert run(workspace, *common, "--out", str(workspace / "r3.json"), jobs=2) == 0
        first = (workspace / "r2.json").read_bytes()
        assert (workspace / "r3.json").read_bytes() == first
        assert (workspace / "r2.json.txt").read_bytes() == (workspace / "r3.json.txt").read_bytes()

    def test_extract_rerun_identical(self, workspace):
        """Extracting the same manifest again writes the same cache bytes."""
        assert run(workspace, "extract", "--manifest", str(workspace / "corpus" / "manifest.txt"),
                   "--out", str(workspace / "features2.json"), jobs=2) == 0
        assert (workspace / "features2.json").read_bytes() == (workspace / "features.json").read_bytes()

    def test_predict_manifest(self, workspace, capsys):
        """One 'path,label' line per clip."""
        assert run(workspace, "predict", "--model", str(workspace / "model.json"),
                   "--input", str(workspace / "corpus" / "manifest.txt"),
                   "--out", str(workspace / "pred.txt")) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 24
        assert all(line.split(",")[1] in LABEL_SLUGS.values() for line in lines)
        assert (workspace / "pred.txt").read_text().strip().splitlines() == lines

    def test_predict_single_wav(self, workspace, capsys):
        """A WAV input prints one label."""
        wav = workspace / "corpus" / "normal" / "normal_000.wav"
        assert run(workspace, "predict", "--model", str(workspace / "model.json"), "--input", str(wav)) == 0
        assert capsys.readouterr().out.strip() in LABEL_SLUGS.values()


class TestExitCodes:
    """Tests for failure categories."""

    def test_unknown_config_key(self, tmp_path):
        """Config errors exit with 2."""
        path = tmp_path / "bad.toml"
        path.write_text("[dsp]\nwindow = 'hann'\n")
        assert main(["--config", str(path), "synth", "--out-dir", str(tmp_path / "c")]) == 2

    def test_bad_corpus_spec_key(self, tmp_path):
        """Unknown corpus spec keys exit with 2."""
        spec = tmp_path / "corpus.toml"
        spec.write_text("[classes.normal]\ncolour = \"red\"\n")
        assert main(["synth", "--spec", str(spec), "--out-dir", str(tmp_path / "c")]) == 2

    def test_missing_required_path(self):
        """A path with neither a flag nor a default is a config error."""
        assert main(["evaluate"]) == 2

    def test_missing_manifest(self, tmp_path):
        """Unreadable inputs exit with the I/O code."""
        assert main(["extract", "--manifest", str(tmp_path / "none.txt"), "--out", str(tmp_path / "f.json")]) == 5

    def test_model_version_mismatch(self, workspace, tmp_path):
        """Loading a model from another format version exits with 3."""
        data = json.loads((workspace / "model.json").read_text())
        data["format_version"] = 99
        bad = tmp_path / "model.json"
        bad.write_text(json.dumps(data))
        wav = workspace / "corpus" / "normal" / "normal_000.wav"
        assert run(workspace, "predict", "--model", str(bad), "--input", str(wav)) == 3


@pytest.mark.slow
class TestReferenceRun:
    """Full-size corpus through tuning and evaluation."""

    def test_learns_and_reproduces(self, tmp_path):
        """200 clips, d=15, budget 200: weighted >= 0.55 and identical reruns."""
        corpus = tmp_path / "corpus"
        cache = tmp_path / "features.json"
        assert main(["synth", "--out-dir", str(corpus), "--seed", "7"]) == 0
        assert main(["extract", "--manifest", str(corpus / "manifest.txt"), "--out", str(cache)]) == 0
        assert main(["tune", "--cache", str(cache), "--out", str(tmp_path / "hp.json"), "--budget", "200"]) == 0
        assert main(["--jobs", "4", "tune", "--cache", str(cache), "--out", str(tmp_path / "hp4.json"),
                     "--budget", "200"]) == 0
        assert (tmp_path / "hp.json").read_bytes() == (tmp_path / "hp4.json").read_bytes()

        evaluate = ["evaluate", "--cache", str(cache), "--hyperparams", str(tmp_path / "hp.json")]
        assert main([*evaluate, "--out", str(tmp_path / "a.json")]) == 0
        assert main([*evaluate, "--out", str(tmp_path / "b.json")]) == 0
        assert main(["--jobs", "4", *evaluate, "--out", str(tmp_path / "c.json")]) == 0
        first = (tmp_path / "a.json").read_bytes()
        assert (tmp_path / "b.json").read_bytes() == first
        assert (tmp_path / "c.json").read_bytes() == first
        assert json.loads(first)["metrics"]["weighted"] >= 0.55
