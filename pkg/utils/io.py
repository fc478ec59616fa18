import csv
import json
import os
from contextlib import contextmanager
from typing import Any, Dict, Iterable, Sequence

from models.exceptions import ConfigError


@contextmanager
def atomic_write(path: str, mode: str = "w"):
    """Write to ``path.tmp`` and rename over ``path`` once the block succeeds."""
    tmp = f"{path}.tmp"
    f = open(tmp, mode, encoding="utf-8", newline="")
    try:
        yield f
    except BaseException:
        f.close()
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    f.close()
    os.replace(tmp, path)


def load_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_table(path: str, metadata: Dict[str, Any], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Delimited table with a ``#``-prefixed metadata header."""
    with atomic_write(path) as f:
        for key in sorted(metadata):
            f.write(f"# {key}: {json.dumps(metadata[key], sort_keys=True)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_table(path: str):
    """Inverse of :func:`write_table`: returns (metadata, columns, rows as str)."""
    metadata: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            metadata[key] = json.loads(value)
        else:
            body.append(line)
    reader = list(csv.reader(body))
    return metadata, reader[0], reader[1:]
