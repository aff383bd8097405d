"""Bundled inputs: the planted demo corpus and the GraphML schema."""

from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    return Path(str(resources.files(__name__).joinpath(name)))
