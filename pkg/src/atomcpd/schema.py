"""Access to the JSON schemas shipped with the package."""

import json
from importlib import resources

from .exceptions import ConfigError

SCHEMA_NAMES = ("signal", "report", "eta", "segments", "experiment")


def load_schema(name):
    """Return the parsed JSON schema for one output kind."""
    if name not in SCHEMA_NAMES:
        raise ConfigError(f"unknown schema {name!r}; choose from {', '.join(SCHEMA_NAMES)}")
    text = resources.files("atomcpd").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def all_schemas():
    return {name: load_schema(name) for name in SCHEMA_NAMES}
