"""Built-in model registry."""

from __future__ import annotations

import hashlib
from importlib import resources
from pathlib import Path

from .network import ReactionNetwork, parse_model

ALIASES = {
    "gene-expression": "example3",
    "lotka-volterra": "example8",
    "lp-fail": "example6",
    "birth-annihilation": "example7",
}

# The networks worked through in the validity analysis discussion.
WORKED_EXAMPLES = ("example2", "example3", "example6", "example7", "example8")


def builtin_names() -> list[str]:
    files = resources.files("gtcrn").joinpath("models").iterdir()
    return sorted(p.name[: -len(".crn")] for p in files if p.name.endswith(".crn"))


def builtin_text(name: str) -> str:
    name = ALIASES.get(name, name)
    path = resources.files("gtcrn").joinpath("models").joinpath(f"{name}.crn")
    if not path.is_file():
        raise KeyError(f"no built-in model named {name!r}")
    return path.read_text(encoding="utf-8")


def load_builtin(name: str) -> ReactionNetwork:
    return parse_model(builtin_text(name), name=ALIASES.get(name, name))


def resolve_model(ref: str) -> tuple[ReactionNetwork, str]:
    """Load a model from a file path or built-in name; returns (network, source text)."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        return parse_model(text, name=path.stem), text
    try:
        text = builtin_text(ref)
    except KeyError:
        raise FileNotFoundError(f"{ref!r} is neither a file nor a built-in model ({', '.join(builtin_names())})") from None
    return parse_model(text, name=ALIASES.get(ref, ref)), text


def model_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
