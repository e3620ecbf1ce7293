import json

import pytest

from cli.main import build_parser, main
from dataset.schema import load_dataset
from evaluation.report import EvalReport
from utils.logger import logger


def _error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith("error: ")]


class TestCommandLine:
    """Test suite for the netsynth command line"""

    @pytest.fixture(autouse=True)
    def setup_test(self, tmp_path, tiny_model_config):
        """Setup test environment"""
        self.tmp_path = tmp_path
        self.runs = tmp_path / "runs"
        self.corpus = tmp_path / "corpus"
        self.config = tmp_path / "run_config.json"
        self.config.write_text(json.dumps({"network": tiny_model_config.model_dump(mode="json")}), encoding="utf-8")

    def _run(self, *argv, run_name):
        return main([*argv, "--output-dir", str(self.runs), "--run-name", run_name])

    def _make_corpus(self):
        status = self._run(
            "make-corpus", "--output", str(self.corpus), "--n-samples", "24", "--length", "14", run_name="corpus"
        )
        assert status == 0, "make-corpus failed"

    def test_train_generate_evaluate_pipeline(self):
        """Verify the four commands chain and evaluate reports exactly the requested metrics"""
        logger.info("Testing CLI pipeline")
        self._make_corpus()

        status = self._run(
            "train", "--dataset", str(self.corpus), "--config", str(self.config), "--max-batches", "2", run_name="train"
        )
        checkpoint = self.runs / "train" / "checkpoints" / "final.pt"
        assert status == 0 and checkpoint.exists(), "train did not write final.pt"
        assert (self.runs / "train" / "train_log.csv").exists(), "train did not write its log"

        synth = self.tmp_path / "synth"
        status = self._run(
            "generate", "--checkpoint", str(checkpoint), "--count", "30", "--output", str(synth), run_name="generate"
        )
        assert status == 0, "generate failed"
        assert len(load_dataset(synth)) == 30, "generate wrote the wrong number of samples"

        status = self._run(
            "evaluate", "--real", str(self.corpus), "--synth", str(synth), "--metrics", "autocorr,w1", "--no-plots",
            run_name="evaluate",
        )
        assert status == 0, "evaluate failed"
        report = EvalReport.load_json(self.runs / "evaluate" / "report.json")
        assert report.metric_names == ["autocorr", "w1"], f"Unexpected metrics {report.metric_names}"
        logger.info("✅ CLI pipeline verified")

    def test_manifest_records_run(self):
        """Verify every command writes a manifest with its seed and inputs"""
        self._make_corpus()

        manifest = json.loads((self.runs / "corpus" / "manifest.json").read_text(encoding="utf-8"))

        assert manifest["command"] == "make-corpus", f"Unexpected command {manifest['command']}"
        assert manifest["seed"] == 0, f"Unexpected seed {manifest['seed']}"
        assert manifest["outputs"]["dataset"] == str(self.corpus), "Manifest does not name the dataset"
        assert "config" in manifest and "torch_version" in manifest, "Manifest misses config or versions"

    def test_baseline_train_and_generate(self):
        """Verify a baseline trains through the CLI and samples from its saved file"""
        self._make_corpus()

        status = self._run(
            "train", "--dataset", str(self.corpus), "--config", str(self.config), "--model", "ar", "--ar-order", "2",
            "--max-batches", "2", run_name="train_ar",
        )
        model_file = self.runs / "train_ar" / "checkpoints" / "ar.pkl"
        assert status == 0 and model_file.exists(), "AR training did not write its model file"

        status = self._run(
            "generate", "--checkpoint", str(model_file), "--count", "5", "--output", str(self.tmp_path / "ar_synth"),
            run_name="generate_ar",
        )
        assert status == 0, "generate from a baseline failed"

    def test_errors_print_one_line_and_exit_1(self, capsys):
        """Verify a failing command prints 'error: <ErrorClass>: <message>' and returns 1"""
        status = self._run(
            "evaluate", "--real", str(self.tmp_path / "absent"), "--synth", str(self.tmp_path / "absent"),
            run_name="evaluate",
        )

        lines = _error_lines(capsys)
        assert status == 1, f"Expected exit status 1, got {status}"
        assert len(lines) == 1 and lines[0].startswith("error: FormatError: "), f"Unexpected error output {lines}"

    def test_invalid_config_lists_violations(self, capsys):
        """Verify a config with a bad value fails with a validation error"""
        self._make_corpus()
        capsys.readouterr()
        bad = self.tmp_path / "bad.json"
        bad.write_text(json.dumps({"network": {"batch_size": 0}, "train": {"checkpoint_every": 0}}), encoding="utf-8")

        status = self._run("train", "--dataset", str(self.corpus), "--config", str(bad), run_name="bad")

        lines = _error_lines(capsys)
        assert status == 1, f"Expected exit status 1, got {status}"
        assert lines[0].startswith("error: ValidationError: "), f"Unexpected error output {lines}"
        assert "batch_size" in lines[0] and "checkpoint_every" in lines[0], "Not every violation was reported"

    def test_unsupported_generate_option(self, capsys):
        """Verify --length on a baseline is a contract error"""
        self._make_corpus()
        self._run(
            "train", "--dataset", str(self.corpus), "--model", "hmm", "--hmm-states", "2", "--max-batches", "2",
            run_name="train_hmm",
        )
        capsys.readouterr()

        status = self._run(
            "generate", "--checkpoint", str(self.runs / "train_hmm" / "checkpoints" / "hmm.pkl"), "--count", "2",
            "--length", "5", "--output", str(self.tmp_path / "out"), run_name="generate_hmm",
        )

        assert status == 1, f"Expected exit status 1, got {status}"
        assert _error_lines(capsys)[0].startswith("error: ContractError: "), "Expected a contract error"

    def test_unknown_flag_is_usage_error(self):
        """Verify argparse rejects unknown flags with exit status 2"""
        with pytest.raises(SystemExit) as excinfo:
            main(["train", "--bogus"])

        assert excinfo.value.code == 2, f"Expected exit status 2, got {excinfo.value.code}"

    def test_parser_knows_every_command(self):
        """Verify every documented command parses"""
        parser = build_parser()
        commands = parser._subparsers._group_actions[0].choices

        assert set(commands) == {
            "make-corpus", "train", "generate", "evaluate", "attack", "dp-ablation", "retarget"
        }, f"Unexpected commands {set(commands)}"

    def _train_doppelganger(self):
        self._make_corpus()
        status = self._run(
            "train", "--dataset", str(self.corpus), "--config", str(self.config), "--max-batches", "2", run_name="train"
        )
        assert status == 0, "train failed"
        return self.runs / "train" / "checkpoints" / "final.pt"

    def test_generate_conditions_on_metadata_file(self):
        """Verify --metadata-file generates --count samples per row, or only for --metadata-row"""
        logger.info("Testing generation from a metadata file")
        checkpoint = self._train_doppelganger()
        rows = self.tmp_path / "rows.csv"
        rows.write_text("class\nA\nB\nB\n", encoding="utf-8")

        every_row, single_row = self.tmp_path / "every_row", self.tmp_path / "single_row"
        status = self._run(
            "generate", "--checkpoint", str(checkpoint), "--count", "2", "--metadata-file", str(rows),
            "--output", str(every_row), run_name="generate_rows",
        )
        assert status == 0, "generate with --metadata-file failed"
        status = self._run(
            "generate", "--checkpoint", str(checkpoint), "--count", "3", "--metadata-file", str(rows),
            "--metadata-row", "0", "--output", str(single_row), run_name="generate_row",
        )
        assert status == 0, "generate with --metadata-row failed"

        classes = load_dataset(every_row).metadata_column("class")
        assert classes == ["A", "A", "B", "B", "B", "B"], f"Unexpected classes {classes}"
        assert load_dataset(single_row).metadata_column("class") == ["A"] * 3, "--metadata-row ignored"
        manifest = json.loads((self.runs / "generate_rows" / "manifest.json").read_text(encoding="utf-8"))
        assert "metadata_file" in manifest["input_hashes"], "Metadata file hash missing from the manifest"
        logger.info("✅ Metadata file conditioning verified")

    def test_metadata_file_accepts_dataset_attributes(self):
        """Verify a dataset's attributes.csv, sample_id column included, works as a metadata file"""
        checkpoint = self._train_doppelganger()
        expected = load_dataset(self.corpus).metadata_column("class")[5]

        status = self._run(
            "generate", "--checkpoint", str(checkpoint), "--count", "2", "--output", str(self.tmp_path / "out"),
            "--metadata-file", str(self.corpus / "attributes.csv"), "--metadata-row", "5", run_name="generate_attr",
        )

        assert status == 0, "generate from attributes.csv failed"
        classes = load_dataset(self.tmp_path / "out").metadata_column("class")
        assert classes == [expected] * 2, f"Expected {expected} twice, got {classes}"

    @pytest.mark.parametrize(
        "content, extra, error_class",
        [
            ("region\nA\n", [], "FormatError"),
            ("class\n", [], "FormatError"),
            ("class\nA\n", ["--metadata-row", "4"], "ContractError"),
            ("class\nA\n", ["--fixed-metadata", '["A"]'], "ContractError"),
        ],
    )
    def test_bad_metadata_file_usage(self, capsys, content, extra, error_class):
        """Verify header mismatches, empty files and bad row selections fail with one error line"""
        checkpoint = self._train_doppelganger()
        rows = self.tmp_path / "rows.csv"
        rows.write_text(content, encoding="utf-8")
        capsys.readouterr()

        status = self._run(
            "generate", "--checkpoint", str(checkpoint), "--count", "2", "--metadata-file", str(rows), *extra,
            "--output", str(self.tmp_path / "out"), run_name="generate_bad",
        )

        assert status == 1, f"Expected exit status 1, got {status}"
        lines = _error_lines(capsys)
        assert lines and lines[0].startswith(f"error: {error_class}: "), f"Unexpected error output {lines}"
