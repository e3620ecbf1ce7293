"""
Behave environment configuration
Sets up a scratch workspace and a command-line runner for BDD scenarios
"""
import io
import json
import shlex
import shutil
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from cli.main import main
from config.run_config import ModelConfig
from config.settings import NetSynthSettings
from utils.logger import logger

TINY_NETWORK = ModelConfig(
    noise_dim=3,
    attr_mlp=(8,),
    minmax_mlp=(8,),
    rnn_units=8,
    disc_mlp=(16,),
    aux_disc_mlp=(16,),
    batch_size=8,
    dtype="float64",
)


class CliRunner:
    """Runs netsynth commands in-process inside one scenario workspace"""

    def __init__(self, workspace: Path):
        self.workspace = workspace
        self.runs = workspace / "runs"
        self.config_path = workspace / "run_config.json"
        self.config_path.write_text(
            json.dumps({"network": TINY_NETWORK.model_dump(mode="json")}), encoding="utf-8"
        )
        self.status = None
        self.stdout = ""
        self.stderr = ""
        self.run_names = []

    def run(self, command_line: str, run_name: str) -> int:
        argv = shlex.split(command_line.replace("{workspace}", str(self.workspace)))
        argv += ["--output-dir", str(self.runs), "--run-name", run_name]
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            self.status = main(argv)
        self.stdout, self.stderr = out.getvalue(), err.getvalue()
        self.run_names.append(run_name)
        logger.info(f"netsynth {argv[0]} exited with {self.status}")
        return self.status

    def run_dir(self, run_name: str) -> Path:
        return self.runs / run_name


def before_all(context):
    """
    Runs once before all features
    Setup global configuration
    """
    logger.info("=" * 60)
    logger.info("🚀 BEHAVE TEST SUITE STARTING")
    logger.info("=" * 60)
    logger.info(f"Environment: {NetSynthSettings.ENVIRONMENT}")
    logger.info(f"Torch threads: {NetSynthSettings.NUM_THREADS}")
    logger.info("=" * 60)


def before_feature(context, feature):
    logger.info(f"📋 Feature: {feature.name}")


def before_scenario(context, scenario):
    """
    Runs before each scenario
    Create a fresh workspace and runner
    """
    logger.info(f"🎬 Scenario: {scenario.name}")
    context.workspace = Path(tempfile.mkdtemp(prefix="netsynth_bdd_"))
    context.netsynth = CliRunner(context.workspace)
    logger.info(f"✅ Workspace ready: {context.workspace}")


def after_scenario(context, scenario):
    """
    Runs after each scenario
    Keep the workspace of failed scenarios for inspection, remove it otherwise
    """
    if scenario.status == "failed":
        logger.error(f"❌ Scenario FAILED: {scenario.name}")
        logger.info(f"📁 Workspace kept: {context.workspace}")
        if context.netsynth.stderr:
            logger.info(f"Last stderr: {context.netsynth.stderr.strip()}")
        return
    logger.info(f"✅ Scenario PASSED: {scenario.name}")
    shutil.rmtree(context.workspace, ignore_errors=True)


def after_feature(context, feature):
    logger.info(f"✓ Feature completed: {feature.name}")
    logger.info("-" * 60)


def after_all(context):
    logger.info("=" * 60)
    logger.info("🏁 BEHAVE TEST SUITE COMPLETED")
    logger.info("=" * 60)


def before_tag(context, tag):
    if tag == "slow":
        logger.info("⚠️  Running slow scenario")


def after_step(context, step):
    if step.status == "failed":
        logger.error(f"❌ Step failed: {step.name}")
