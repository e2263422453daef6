"""Real-browser driver checks; the whole module skips when Playwright is absent."""

import re

import pytest

pytest.importorskip("playwright.sync_api")

from forge_adapter.drivers import PlaywrightDriver  # noqa: E402


@pytest.fixture(scope="module")
def pw_driver():
    try:
        driver = PlaywrightDriver()
    except Exception as exc:  # library present but no browser binaries
        pytest.skip(f"playwright unusable here: {exc}")
    yield driver
    driver.close()


def test_open_builds_a_bidded_snapshot(pw_driver, site):
    page = pw_driver.open(f"{site}/index.html")
    assert page.root.role == "RootWebArea"
    assert page.root.props["url"] == f"{site}/index.html"
    seen = re.findall(r"\[(e\d+)\]", page.text)
    assert seen and seen == [f"e{i}" for i in range(1, len(seen) + 1)]


def test_click_reports_navigation_targets(pw_driver, site):
    page = pw_driver.open(f"{site}/index.html")
    catalog = next(b for b, n in page.bids.items()
                   if n.role == "link" and n.name == "Catalog")
    target = pw_driver.click(page, catalog)
    assert target == f"{site}/catalog.html"
