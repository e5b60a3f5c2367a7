from __future__ import annotations

import pytest

from synth import SynthFixture, generate_fixture


@pytest.fixture(scope="session")
def big_fixture(tmp_path_factory) -> SynthFixture:
    """The 500-utterance synthetic fixture used by the acceptance suite."""
    root = tmp_path_factory.mktemp("synth_big")
    return generate_fixture(root, n_train=300, n_tests=500, seed=20240811)


@pytest.fixture(scope="session")
def mini_fixture(tmp_path_factory) -> SynthFixture:
    """A 20-utterance fixture for CLI/golden/integration tests."""
    root = tmp_path_factory.mktemp("synth_mini")
    return generate_fixture(root, n_train=60, n_tests=20, seed=7)
