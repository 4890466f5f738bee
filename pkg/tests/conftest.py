import numpy as np
import pytest

from speakerdist.roomsim import RoomSpec, SceneSpec


@pytest.fixture
def classroom():
    room = RoomSpec.uniform((7.5, 9.0, 3.5), 0.3)
    return SceneSpec(room, (2.0, 3.0, 1.5), (5.0, 6.0, 1.2), seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TINY_MODEL = dict(conv_filters=(4, 8, 8), attention_filters=(4, 4), recurrent_width=8, head_width=8)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Ten 1 s synthetic clips in five folds (6 train / 2 val / 2 test)."""
    from speakerdist.scenegen import SyntheticBuildConfig, build_synthetic_dataset
    out = tmp_path_factory.mktemp("tiny_dataset")
    build_synthetic_dataset(SyntheticBuildConfig(n_scenes=10, clip_duration_s=1.0, n_rays=1000,
                                                 seed=11), out, workers=1)
    return out / "manifest.jsonl"


@pytest.fixture(scope="session")
def tiny_model_config():
    from speakerdist.model import ModelConfig
    return ModelConfig(num_recurrent_layers=1, **TINY_MODEL)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, tiny_dataset, tiny_model_config):
    from speakerdist.training import TrainConfig, train
    out = tmp_path_factory.mktemp("tiny_run")
    return train(tiny_dataset, tiny_model_config, TrainConfig(epochs=2, batch_size=4), out).checkpoint


# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
