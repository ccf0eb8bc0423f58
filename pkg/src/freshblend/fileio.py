"""Small file helpers: atomic text writes and float formatting."""

import os
import tempfile


def atomic_write_text(path: str, content: str) -> None:
    """Write `content` to `path` via a temp file + rename in the same dir."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value) -> str:
    """Shortest round-tripping decimal form of a real value."""
    return repr(float(value))
