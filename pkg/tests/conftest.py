"""Shared test fixtures: corpus paths and scripted-provider helpers."""

import pytest

from webforge.resources import data_path, fixture_paths


@pytest.fixture(scope="session")
def fixture_texts():
    return {p.stem: p.read_text(encoding="utf-8") for p in fixture_paths()}


@pytest.fixture(scope="session")
def shop_graph_path():
    return data_path("shop.sitegraph")


@pytest.fixture(scope="session")
def trap_graph_path():
    return data_path("trap.sitegraph")
