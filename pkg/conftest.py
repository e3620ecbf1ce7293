import pytest
from datetime import datetime

from config.run_config import ModelConfig, TrainConfig
from config.settings import NetSynthSettings
from dataset.corpus import make_sinusoid_corpus
from dataset.schema import save_dataset
from utils.logger import logger
from utils.reference_data import reference_data


def pytest_addoption(parser):
    """Add custom command line options for test configuration"""
    parser.addoption(
        "--run-acceptance",
        action="store_true",
        default=False,
        help="Run the slow acceptance trend tests on the full sinusoid corpus"
    )
    parser.addoption(
        "--acceptance-seeds",
        action="store",
        default="0,1,2",
        help="Comma-separated seeds for acceptance runs"
    )


def pytest_collection_modifyitems(config, items):
    """Skip acceptance tests unless they were asked for"""
    if config.getoption("--run-acceptance"):
        return
    skip_acceptance = pytest.mark.skip(reason="needs --run-acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip_acceptance)


@pytest.fixture(scope="session")
def test_session_info():
    """Provide test session information"""
    return {
        "start_time": datetime.now().isoformat(),
        "environment": NetSynthSettings.ENVIRONMENT,
        "num_threads": NetSynthSettings.NUM_THREADS,
    }


@pytest.fixture(scope="session")
def acceptance_seeds(request):
    return [int(s) for s in request.config.getoption("--acceptance-seeds").split(",") if s.strip()]


@pytest.fixture(scope="session")
def small_corpus():
    """40 two-class sinusoids of 14 records each"""
    return make_sinusoid_corpus(n_samples=40, length=14, seed=0)


@pytest.fixture(scope="session")
def tiny_model_config():
    """Narrow float64 networks so unit tests train in well under a second"""
    return ModelConfig(
        noise_dim=3,
        attr_mlp=(8,),
        minmax_mlp=(8,),
        rnn_units=8,
        disc_mlp=(16,),
        aux_disc_mlp=(16,),
        batch_size=8,
        dtype="float64",
    )


@pytest.fixture(scope="session")
def tiny_train_config():
    return TrainConfig(max_batches=3, seed=0)


@pytest.fixture(scope="function")
def corpus_dir(tmp_path, small_corpus):
    """The small corpus saved in the on-disk dataset format"""
    path = tmp_path / "corpus"
    save_dataset(small_corpus, path)
    return path


@pytest.fixture(scope="session")
def reference():
    """Provide oracle constants and thresholds for tests"""
    return reference_data


@pytest.fixture(autouse=True)
def test_logging(request):
    """Automatically log test start and end"""
    test_name = request.node.name
    logger.log_run_start(test_name, 0)
    yield
    logger.log_run_end(test_name, "completed")


@pytest.hookimpl(tryfirst=True)
def pytest_configure(config):
    """Configure pytest with metadata and markers"""
    config.addinivalue_line("markers", "acceptance: slow trend checks on the full corpus")
    if hasattr(config, "_metadata"):
        config._metadata["Project Name"] = "netsynth"
        config._metadata["Environment"] = NetSynthSettings.ENVIRONMENT
        config._metadata["Torch Threads"] = str(NetSynthSettings.NUM_THREADS)
        config._metadata["Framework Version"] = NetSynthSettings.VERSION


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Keep the call-phase report on the item for the session summary"""
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.rep_call = report
        if report.failed:
            logger.error(f"❌ Test FAILED: {item.name}")


@pytest.hookimpl(trylast=True)
def pytest_sessionfinish(session, exitstatus):
    """Log test session completion summary"""
    logger.info("=" * 60)
    logger.info("🏁 TEST SESSION COMPLETED")
    logger.info("=" * 60)
    logger.info(f"Exit status: {exitstatus}")
    logger.info(f"Total tests collected: {len(session.items)}")

    passed_count = 0
    failed_count = 0
    for item in session.items:
        if hasattr(item, 'rep_call'):
            if item.rep_call.passed:
                passed_count += 1
            elif item.rep_call.failed:
                failed_count += 1

    logger.info(f"Tests passed: {passed_count}")
    logger.info(f"Tests failed: {failed_count}")
    logger.info("=" * 60)
