"""Common step definitions used across features"""
import json

from behave import given, then, when

from utils.logger import logger


@given('a sinusoid corpus of {n_samples:d} samples with length {length:d}')
def step_make_corpus(context, n_samples, length):
    """Write a small sinusoid corpus into the workspace"""
    context.corpus = context.workspace / "corpus"
    status = context.netsynth.run(
        f"make-corpus --output {context.corpus} --n-samples {n_samples} --length {length}", "corpus"
    )
    assert status == 0, f"make-corpus failed: {context.netsynth.stderr}"
    logger.info(f"Corpus written to {context.corpus}")


@when('I run netsynth with "{command_line}"')
def step_run_command(context, command_line):
    """Run an arbitrary netsynth command line"""
    context.netsynth.run(command_line, f"run_{len(context.netsynth.run_names)}")


@then('the command should succeed')
def step_command_succeeded(context):
    assert context.netsynth.status == 0, f"Expected success, got {context.netsynth.status}: {context.netsynth.stderr}"
    logger.info("✅ Command succeeded")


@then('the command should fail with "{error_class}"')
def step_command_failed(context, error_class):
    """Verify exit status 1 and a single 'error: <ErrorClass>: <message>' line"""
    lines = [line for line in context.netsynth.stderr.splitlines() if line.startswith("error: ")]
    assert context.netsynth.status == 1, f"Expected exit status 1, got {context.netsynth.status}"
    assert len(lines) == 1, f"Expected one error line, got {lines}"
    assert lines[0].startswith(f"error: {error_class}: "), f"Expected {error_class}, got '{lines[0]}'"
    logger.info(f"✅ Failed with {error_class}")


@then('every run should have a manifest')
def step_every_run_has_manifest(context):
    for run_name in context.netsynth.run_names:
        manifest_path = context.netsynth.run_dir(run_name) / "manifest.json"
        assert manifest_path.exists(), f"Run {run_name} wrote no manifest"
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        assert "seed" in manifest and "config" in manifest, f"Manifest of {run_name} is incomplete"
    logger.info(f"✅ {len(context.netsynth.run_names)} manifests present")
