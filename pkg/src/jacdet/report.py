"""Deterministic JSON/CSV emission with atomic writes."""
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

REPORT_SCHEMA = "jacdet-report/1"
SPECTRUM_SCHEMA = "jacdet-spectrum/1"
COMPARE_SCHEMA = "jacdet-compare/1"
SCAN_SCHEMA = "jacdet-scan/1"


def clean(x):
    """Convert numpy scalars/arrays to JSON-ready values; NaN/inf become None."""
    if isinstance(x, dict):
        return {str(k): clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj):
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for v in r])
    return buf.getvalue()


def write_text(path, text):
    """Write atomically (temporary file in the target directory, then rename).

    ``path`` of None or '-' writes to stdout.
    """
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".jacdet-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
