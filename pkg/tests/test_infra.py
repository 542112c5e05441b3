import logging
import re

import pytest

from reludepth import errors, infra


def test_load_config_defaults():
    config = infra.load_config({})
    assert config.workers == 1
    assert config.output_dir == "results"
    assert config.eval_chunk == 2048
    assert not config.debug


def test_load_config_from_environment():
    config = infra.load_config({
        "RELUDEPTH_WORKERS": "4",
        "RELUDEPTH_OUTPUT_DIR": "/tmp/sweeps",
    })
    assert config.workers == 4
    assert config.output_dir == "/tmp/sweeps"


def test_pyenv_file_is_applied(tmp_path):
    pyenv = tmp_path / "env.py"
    pyenv.write_text(
        "RELUDEPTH_DEBUG = True\n"
        "RELUDEPTH_EVAL_CHUNK = 512\n"
        "helper = 'ignored'\n"
    )
    env = {"RELUDEPTH_PYENV": str(pyenv)}
    config = infra.load_config(env)
    assert config.debug
    assert config.eval_chunk == 512
    assert "helper" not in env


def test_debug_raises_package_log_level():
    package_logger = logging.getLogger("reludepth")
    previous = package_logger.level
    try:
        infra.configure_logging(infra.load_config({"RELUDEPTH_DEBUG": "1"}))
        assert package_logger.level == logging.DEBUG
    finally:
        package_logger.setLevel(previous)


def test_generate_error_id():
    first, second = infra.generate_error_id(), infra.generate_error_id()
    assert re.fullmatch(r"[A-Z2-7]{13}", first)
    assert first != second


@pytest.mark.parametrize("exc, code", [
    (errors.VerificationFailure(0.5, 0.1), errors.EXIT_VERIFICATION),
    (errors.DivergenceError("nan"), errors.EXIT_DIVERGENCE),
    (errors.InvalidInputError("bad"), errors.EXIT_USAGE),
    (errors.InvalidConfigError("bad"), errors.EXIT_USAGE),
    (errors.MalformedDocumentError("bad"), errors.EXIT_USAGE),
    (errors.SpecViolationError("bad"), errors.EXIT_USAGE),
    (FileNotFoundError("missing.json"), errors.EXIT_USAGE),
    (RuntimeError("boom"), errors.EXIT_INTERNAL),
])
def test_exit_codes(exc, code):
    assert errors.exit_code_for(exc) == code


def test_verification_failure_message():
    exc = errors.VerificationFailure(0.5, 0.1)
    assert exc.max_error == 0.5
    assert "exceeds declared epsilon 0.1" in str(exc)
