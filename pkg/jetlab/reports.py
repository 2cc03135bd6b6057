"""
Schema-versioned JSON reports.

A report document is

    {"schema_version", "manifest", "problem", "verdict", "checks", "extra"}

in that order. Floats that JSON cannot carry (+-inf, nan) are written as the
strings "inf", "-inf" and "nan" so documents stay strict JSON.
"""

import csv
import hashlib
import io
import json
import logging
import math
import os
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .models import SCHEMA_VERSION, CheckReport, CheckStatus, RunManifest, SolveResult

logger = logging.getLogger(__name__)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays, enums and non-finite floats to plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return repr(value)


def overall_verdict(reports: Sequence[CheckReport]) -> CheckStatus:
    return CheckStatus.PASS if all(r.passed for r in reports) else CheckStatus.FAIL


def build_document(manifest: RunManifest, problem: Dict[str, Any], reports: Sequence[CheckReport],
                   extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest.to_dict(),
        "problem": problem,
        "verdict": overall_verdict(reports).value,
        "checks": [r.to_dict() for r in reports],
        "extra": extra or {},
    }


def dumps(document: Dict[str, Any]) -> str:
    return json.dumps(to_jsonable(document), indent=2, allow_nan=False) + "\n"


def write_report(path: str, document: Dict[str, Any]) -> None:
    """Write a report document; the parent directory is created if missing."""
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(dumps(document))
    except OSError as e:
        logger.error(f"Error writing report {path}: {str(e)}")
        raise
    logger.info(f"Wrote report {path}")


def sidecar_path(csv_path: str) -> str:
    return csv_path + ".json"


def write_solution(csv_path: str, result: SolveResult, manifest: RunManifest) -> str:
    """Write the solved grid as CSV plus a metadata sidecar; returns the sidecar path."""
    meta = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest.to_dict(),
        **result.metadata(),
    }
    side = sidecar_path(csv_path)
    try:
        result.grid.to_csv(csv_path)
        with open(side, "w", encoding="utf-8") as f:
            f.write(dumps(meta))
    except OSError as e:
        logger.error(f"Error writing solution {csv_path}: {str(e)}")
        raise
    logger.info(f"Wrote solution {csv_path} and {side}")
    return side


def summary_lines(command: str, reports: Sequence[CheckReport]) -> List[str]:
    """Human summary printed by the CLI."""
    lines = [f"{command}: {overall_verdict(reports).value}"]
    for r in reports:
        lines.append(f"  {r.name:<28} {r.verdict.value:<5} samples={r.samples} seed={r.seed}")
        if r.counterexamples:
            lines.append(f"    first witness: {json.dumps(to_jsonable(r.counterexamples[0]))}")
    return lines


CHECK_COLUMNS = ("name", "verdict", "samples", "seed", "counterexamples")


def dumps_checks_csv(reports: Sequence[CheckReport]) -> str:
    """One row per check; the counterexample column holds the witness count."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CHECK_COLUMNS)
    for r in reports:
        writer.writerow([r.name, r.verdict.value, r.samples, r.seed, len(r.counterexamples)])
    return buffer.getvalue()


def write_checks_csv(path: str, reports: Sequence[CheckReport]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(dumps_checks_csv(reports))
    except OSError as e:
        logger.error(f"Error writing report {path}: {str(e)}")
        raise
