"""
Shared utilities: file output, CSV formatting, and config hashing.
"""

# system imports
import csv
import hashlib
import io
import json
import numbers
from collections.abc import Iterable, Sequence
from pathlib import Path

# 3rd party imports
from pydantic import BaseModel

# project imports
from gpi_morl.config import logger

# Config fields that do not change what a run computes
UNHASHED_FIELDS = {"seeds", "output_dir"}


###############################################################################
#
def write_file(path: Path, content: str) -> None:
    """
    Write content to file, ensuring it ends with newline.

    Args:
        path: Path to write to
        content: Content to write

    Note:
        Creates parent directories if they don't exist. Line endings are
        always LF.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    if not content.endswith("\n"):
        content += "\n"
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(content)
    logger.info("Wrote %s", path)


###############################################################################
#
def format_number(value: int | float | bool | None) -> str:
    """
    Render a CSV cell.

    Integers print as integers, floats with repr so they round-trip exactly,
    and None as an empty cell.
    """
    if value is None:
        return ""
    if isinstance(value, numbers.Integral):
        return str(int(value))
    return repr(float(value))


###############################################################################
#
def csv_text(
    header: Sequence[str], rows: Iterable[Sequence[int | float | str | None]]
) -> str:
    """Build CSV text with a header row, '.' decimals and LF line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [cell if isinstance(cell, str) else format_number(cell) for cell in row]
        )
    return buffer.getvalue()


###############################################################################
#
def read_csv(path: Path) -> list[dict[str, str]]:
    """
    Read a CSV file with a header row.

    Raises:
        FileNotFoundError: If the file does not exist
    """
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


###############################################################################
#
def config_hash(config: BaseModel) -> str:
    """
    Stable short hash of the semantic content of a config.

    The model is dumped to JSON with sorted keys, leaving out seeds and the
    output directory, so formatting of the source file never matters.
    """
    data = config.model_dump(mode="json", exclude=UNHASHED_FIELDS)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
