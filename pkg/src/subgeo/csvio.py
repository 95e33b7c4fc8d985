"""Byte-stable CSV output: shortest round-trip floats, '.' separator, '\\n' line endings."""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Sequence

RESULT_COLUMNS = ("experiment_id", "op", "model_tag", "x0", "t_or_delta", "estimate", "se", "n",
                  "censored_fraction", "bound", "pass_flag")
CERTIFICATE_COLUMNS = ("model_tag", "V_tag", "phi_tag", "v_max", "b", "max_violation", "points_checked")


def fmt(v) -> str:
    """Locale-independent text for one cell; floats use repr (shortest round trip)."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(v)


def to_csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> bytes:
    data = to_csv(columns, rows).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
