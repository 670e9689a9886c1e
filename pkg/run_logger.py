import json
import logging
import os
from typing import Any, Dict, Iterable

import numpy as np

logger = logging.getLogger(__name__)

RUN_FILE = "run.jsonl"
SUMMARY_FILE = "summary.json"
RESOLVED_CONFIG_FILE = "resolved_config.json"


def convert_numpy(value):
    """numpy scalars/arrays to plain Python so json can write them."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: convert_numpy(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [convert_numpy(v) for v in value]
    return value


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path: str, payload: Dict[str, Any]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(convert_numpy(payload), indent=2) + "\n")
    logger.debug(f"wrote {path}")


def write_jsonl(path: str, rows: Iterable[Dict[str, Any]]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(convert_numpy(row)) + "\n")
    logger.debug(f"wrote {path}")


def write_resolved_config(out_dir: str, resolved: Dict[str, Any]) -> str:
    path = os.path.join(ensure_dir(out_dir), RESOLVED_CONFIG_FILE)
    write_json(path, resolved)
    return path


def log_run(out_dir: str, record) -> Dict[str, str]:
    """Write run.jsonl, summary.json and resolved_config.json for a RunRecord."""
    ensure_dir(out_dir)
    paths = {
        "run": os.path.join(out_dir, RUN_FILE),
        "summary": os.path.join(out_dir, SUMMARY_FILE),
        "resolved_config": os.path.join(out_dir, RESOLVED_CONFIG_FILE),
    }
    write_jsonl(paths["run"], record.rows)
    write_json(paths["summary"], record.summary)
    write_json(paths["resolved_config"], record.config.to_dict())
    logger.info(f"✅ Logged run ({len(record.rows)} eval rows) to {out_dir}")
    return paths


def read_jsonl(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
