"""Step definitions for training, generation, evaluation and retargeting"""
import json

from behave import given, then, when

from dataset.schema import load_dataset
from evaluation.report import EvalReport
from gan.checkpoint import load_checkpoint
from utils.helpers import parameter_digest
from utils.logger import logger

MODEL_FILES = {"doppelganger": "final.pt"}


def _train(context, model, batches):
    runner = context.netsynth
    status = runner.run(
        f"train --dataset {context.corpus} --config {runner.config_path} --model {model} "
        f"--max-batches {batches} --ar-order 2 --hmm-states 2",
        f"train_{model}",
    )
    context.model_file = runner.run_dir(f"train_{model}") / "checkpoints" / MODEL_FILES.get(model, f"{model}.pkl")
    return status


@given('a "{model}" model trained for {batches:d} batches')
def step_trained_model(context, model, batches):
    assert _train(context, model, batches) == 0, f"Training failed: {context.netsynth.stderr}"


@when('I train a "{model}" model for {batches:d} batches')
def step_train_model(context, model, batches):
    _train(context, model, batches)
    logger.info(f"Trained {model}; model file {context.model_file}")


@when('I generate {count:d} samples')
def step_generate(context, count):
    context.synth = context.workspace / "synth"
    context.netsynth.run(
        f"generate --checkpoint {context.model_file} --count {count} --output {context.synth}", "generate"
    )


@when('I evaluate the samples with metrics "{metrics}"')
def step_evaluate(context, metrics):
    context.netsynth.run(
        f"evaluate --real {context.corpus} --synth {context.synth} --metrics {metrics} --no-plots", "evaluate"
    )
    context.report_path = context.netsynth.run_dir("evaluate") / "report.json"


@when('I retarget the model to class probabilities A {share_a:g} and B {share_b:g}')
def step_retarget(context, share_a, share_b):
    probs = json.dumps({"class": {"A": share_a, "B": share_b}}).replace(" ", "")
    context.netsynth.run(
        f"retarget --checkpoint {context.model_file} --target-probs '{probs}' --max-batches 2 --n-target 50",
        "retarget",
    )
    context.retargeted = context.netsynth.run_dir("retarget") / "checkpoints" / "retargeted.pt"


@when('I rejection-sample {count:d} series with class probabilities A {share_a:g} and B {share_b:g}')
def step_rejection_sample(context, count, share_a, share_b):
    probs = json.dumps({"class": {"A": share_a, "B": share_b}}).replace(" ", "")
    context.netsynth.run(
        f"retarget --checkpoint {context.model_file} --target-probs '{probs}' --rejection --count {count}",
        "rejection",
    )
    context.synth = context.netsynth.run_dir("rejection") / "dataset"


@then('the report should contain exactly the metrics "{metrics}"')
def step_report_metrics(context, metrics):
    report = EvalReport.load_json(context.report_path)
    expected = metrics.split(",")
    assert report.metric_names == expected, f"Expected {expected}, got {report.metric_names}"
    logger.info(f"✅ Report metrics: {report.metric_names}")


@then('the synthetic dataset should have {count:d} samples')
def step_synthetic_count(context, count):
    ds = load_dataset(context.synth)
    assert len(ds) == count, f"Expected {count} samples, got {len(ds)}"


@then('the sampled dataset should have {count_a:d} "A" and {count_b:d} "B" samples')
def step_class_counts(context, count_a, count_b):
    labels = load_dataset(context.synth).metadata_column("class")
    assert labels.count("A") == count_a and labels.count("B") == count_b, f"Unexpected class mix {labels}"
    logger.info(f"✅ Class mix {count_a}/{count_b}")


@then('the retargeted checkpoint should keep the measurement path')
def step_measurement_path_kept(context):
    source, retargeted = load_checkpoint(context.model_file), load_checkpoint(context.retargeted)
    before = parameter_digest(source.measurement_path_parameters())
    after = parameter_digest(retargeted.measurement_path_parameters())
    assert before == after, "Retargeting changed the measurement path"
    logger.info("✅ Measurement path unchanged")
