"""Small hand-checkable reference datasets."""

from __future__ import annotations

from importlib import resources

from ..data import CombinedDataset, load_csv


def fixture_path(name: str):
    """Path-like handle to a shipped fixture CSV (``'d0'`` or ``'d2'``)."""
    return resources.files(__name__).joinpath(f"{name}.csv")


def load_fixture(name: str) -> CombinedDataset:
    return load_csv(fixture_path(name).read_bytes(), provenance=f"fixture:{name}")


def d0() -> CombinedDataset:
    return load_fixture("d0")


def d2() -> CombinedDataset:
    return load_fixture("d2")
