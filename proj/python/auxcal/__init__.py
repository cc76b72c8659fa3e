"""Auxiliary confidence calibration for LLM question answering."""

import json
import os

from ._auxcal import *  # noqa: F401,F403
from ._auxcal import (
    _load_corpus_json,
    _run_pipeline,
    _run_stage,
    _synthesize_fixture_run,
)

__version__ = "0.1.0"


def _config_text(config):
    if isinstance(config, (str, os.PathLike)) and os.path.exists(config):
        with open(config) as fh:
            return fh.read()
    return json.dumps(config or {})


def load_corpus(path):
    """Records as plain dicts."""
    return [json.loads(line) for line in _load_corpus_json(os.fspath(path))]


def run_stage(stage, config):
    """Run one stage. `config` is a dict or a path to a JSON config."""
    _run_stage(stage, _config_text(config))


def run_pipeline(config, workdir):
    _run_pipeline(_config_text(config), os.fspath(workdir))


def synthesize_fixture_run(config, corpus_path, fixtures_path):
    _synthesize_fixture_run(_config_text(config), os.fspath(corpus_path), os.fspath(fixtures_path))
