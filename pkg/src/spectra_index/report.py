"""Run reports: deterministic JSON documents produced by the command line."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__


def sanitize(obj):
    """Convert numpy scalars/arrays and non-finite floats to plain JSON values.

    Non-finite reals become the strings ``"inf"``, ``"-inf"`` and ``"nan"``
    so the output stays strict JSON.
    """
    if hasattr(obj, "to_json"):
        return sanitize(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunReport:
    """One command invocation.

    Reals are written with ``repr``, i.e. the shortest string that reads
    back to the same double (at most 17 significant digits), so the report
    round-trips losslessly.
    """

    command: str
    input_digest: str | None
    results: object
    tolerances: dict = field(default_factory=dict)
    timing: dict | None = None
    version: str = __version__

    def to_json(self) -> dict:
        out = {
            "command": self.command,
            "version": self.version,
            "input_digest": self.input_digest,
            "results": sanitize(self.results),
            "tolerances": sanitize(self.tolerances),
        }
        if self.timing is not None:
            out["timing"] = sanitize(self.timing)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def crossings_csv(crossings) -> str:
    """CSV table ``parameter,multiplicity`` of a crossing list."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "multiplicity"])
    for c in crossings:
        if isinstance(c, dict):
            w.writerow([repr(float(c["parameter"])), int(c["multiplicity"])])
        else:
            w.writerow([repr(float(c.parameter)), int(c.multiplicity)])
    return buf.getvalue()
