# tests/conftest.py
import json

import numpy as np
import pytest
from loguru import logger

from fcmvc.models import SyntheticSpec
from fcmvc.services.harness import apply_missing, generate_synthetic
from fcmvc.services.registry import ViewBatch


@pytest.fixture(autouse=True)
def quiet_logs():
    """Library code only emits; keep pytest output free of loguru's default sink."""
    logger.remove()
    yield
    logger.remove()


@pytest.fixture()
def make_stream():
    """Factory for planted multi-view streams: (views, truth)."""

    def _make(n=60, k=3, views=3, dims=None, seed=0, separation=10.0, ratio=0.0, pattern_seed=0):
        spec = SyntheticSpec(
            n=n, k=k, views=views, dims=dims or [max(8, k)] * views, separation=separation, seed=seed
        )
        batches, truth = generate_synthetic(spec)
        if ratio:
            batches, _ = apply_missing(batches, ratio, pattern_seed)
        return batches, truth

    return _make


@pytest.fixture()
def random_batch():
    """A view over the given ids filled with standard normal entries."""

    def _make(ids, d=4, view_index=1, seed=0):
        rng = np.random.default_rng(seed)
        return ViewBatch(view_index, rng.standard_normal((d, len(ids))), tuple(ids))

    return _make


@pytest.fixture()
def cli(capsys):
    """Run the command line in-process; returns (exit_code, stdout)."""
    from fcmvc.main import main

    def _run(*argv):
        code = main([str(a) for a in argv])
        out = capsys.readouterr().out
        return code, out

    return _run


@pytest.fixture()
def read_json():
    def _read(path):
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    return _read
