"""Access to packaged data files: lexicons, weight tables, sample graphs."""

from pathlib import Path

_DATA = Path(__file__).parent / "data"


def data_path(*parts: str) -> Path:
    return _DATA.joinpath(*parts)


def fixture_paths() -> list[Path]:
    return sorted((_DATA / "fixtures").glob("*.a11y"))


def load_lexicon(path: Path | None = None) -> list[str]:
    p = path or data_path("fill_lexicon.txt")
    words = [line.strip() for line in p.read_text(encoding="utf-8").splitlines()]
    return [w for w in words if w]


def load_blocklist(path: Path | None = None) -> list[str]:
    p = path or data_path("blocklist.txt")
    terms = [line.strip() for line in p.read_text(encoding="utf-8").splitlines()]
    return [t for t in terms if t and not t.startswith("#")]


def load_action_weights(path: Path | None = None) -> dict[str, float]:
    """Parse the `<primitive> <weight>` table (one pair per line)."""
    p = path or data_path("action_weights.txt")
    weights: dict[str, float] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            name, raw = line.split()
            weights[name] = float(raw)
        except ValueError as exc:
            raise ValueError(f"{p}:{lineno}: expected '<name> <float>'") from exc
    return weights
