"""Flat CSV tables of ints, floats and strings that survive a write/read cycle exactly."""

import csv
import re

_INT = re.compile(r"^-?\d+$")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return _cell(v.item())
    return str(v)


def _parse(text):
    if text == "":
        return None
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def write_table_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_table_csv(path):
    """Return ``(header, rows)`` with every cell typed back to int, float, str or None."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[_parse(c) for c in r] for r in rows[1:] if r]
