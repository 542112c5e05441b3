import base64
import logging
import logging.config
import os
import pathlib
import secrets
import typing

import environ
import toml


@environ.config(prefix="RELUDEPTH")
class AppConfig:
    workers = environ.var(1, converter=int)
    output_dir = environ.var("results")
    # rows per chunk when evaluating wide constructions
    eval_chunk = environ.var(2048, converter=int)
    logging_config = environ.var("")
    debug = environ.bool_var(False)


_UPPER_CASE = "".join(map(chr, range(ord("A"), ord("Z")+1)))


def _apply_pyenv(env: typing.MutableMapping[str, str]) -> None:
    try:
        env_init = env["RELUDEPTH_PYENV"]
    except KeyError:
        return

    import runpy
    init_vars = runpy.run_path(env_init)
    for name, value in init_vars.items():
        if not name:
            continue
        if name[0] not in _UPPER_CASE:
            continue
        env[name] = str(value)


def load_config(
        env: typing.Optional[typing.MutableMapping[str, str]] = None,
        ) -> AppConfig:
    if env is None:
        env = os.environ
    _apply_pyenv(env)
    return environ.to_config(AppConfig, environ=env)


def configure_logging(config: AppConfig) -> None:
    logging_config: typing.Union[str, pathlib.Path, typing.Dict[
        str, typing.Any]] = config.logging_config
    if logging_config:
        with open(logging_config, "r") as f:
            logging_config = toml.load(f)
        logging.config.dictConfig(logging_config)
    else:
        logging.basicConfig(level=logging.WARNING)
        if config.debug:
            logging.getLogger("reludepth").setLevel(logging.DEBUG)


def generate_error_id() -> str:
    return base64.b32encode(secrets.token_bytes(8)).decode(
        "ascii"
    ).rstrip("=")
