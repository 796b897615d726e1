"""Bundled chart fixtures."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..graded import ChartedDgManifold, parse_dg_spec

VALID = (
    "abelian2",
    "so3",
    "heisenberg",
    "affine2",
    "string_su2",
    "poisson_const",
    "poisson_quadratic",
    "courant_std",
    "courant_hflux",
)
FAILING = ("broken_jacobi",)


def bundled_names() -> tuple[str, ...]:
    return VALID + FAILING


def chart_text(name: str) -> str:
    stem = name[:-3] if name.endswith(".dg") else name
    return resources.files(__name__).joinpath(f"{stem}.dg").read_text()


def load(name_or_path: str, allow_unchecked: bool = False) -> ChartedDgManifold:
    """Load a chart from a file path, or from the bundled fixtures by name."""
    p = Path(name_or_path)
    if p.is_file():
        return parse_dg_spec(p.read_text(), p.stem, allow_unchecked)
    stem = p.name[:-3] if p.name.endswith(".dg") else p.name
    if stem not in bundled_names():
        raise FileNotFoundError(f"no chart file or bundled chart named {name_or_path!r}")
    return parse_dg_spec(chart_text(stem), stem, allow_unchecked)
