"""Report tables: a TSV with a header row plus a JSON-lines twin.

Every record carries the three metrics, its config echo, and the format
version; readers reject unknown major versions.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import FormatError
from .ioutil import FORMAT_VERSION, canonical_json, format_version_string, write_text_atomic

TSV_COLUMNS = ("name", "rmse", "mape", "mae", "n_samples", "n_excluded_mape", "format_version", "config")


def write_report(base_path, rows: list[dict]) -> tuple[Path, Path]:
    """Write ``<base>.tsv`` and ``<base>.jsonl``; returns both paths."""
    base = Path(base_path)
    tsv_path = base.with_suffix(".tsv")
    jsonl_path = base.with_suffix(".jsonl")
    version = format_version_string()

    lines = ["\t".join(TSV_COLUMNS)]
    for row in rows:
        lines.append(
            "\t".join(
                (
                    str(row["name"]),
                    f"{row['rmse']:.10g}",
                    f"{row['mape']:.10g}",
                    f"{row['mae']:.10g}",
                    str(row["n_samples"]),
                    str(row["n_excluded_mape"]),
                    version,
                    canonical_json(row.get("config", {})),
                )
            )
        )
    write_text_atomic(tsv_path, "\n".join(lines) + "\n")

    out = []
    for row in rows:
        record = dict(row)
        record["format_version"] = version
        out.append(canonical_json(record))
    write_text_atomic(jsonl_path, "\n".join(out) + "\n")
    return tsv_path, jsonl_path


def read_report_jsonl(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        major = int(str(record.get("format_version", "0")).split(".")[0])
        if major != FORMAT_VERSION[0]:
            raise FormatError(f"unsupported report format version {record.get('format_version')}")
        rows.append(record)
    return rows
