#!/usr/bin/env python3
"""
Run Viewer - Display a run.jsonl, a sweep CSV or a summary JSON in a readable format
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import json

import pandas as pd
from tabulate import tabulate

from run_logger import read_jsonl


def load_table(path: str) -> pd.DataFrame:
    """Any curvlab output file as a DataFrame."""
    if path.endswith(".jsonl"):
        return pd.DataFrame(read_jsonl(path))
    if path.endswith(".csv"):
        return pd.read_csv(path)
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return pd.DataFrame([{"key": k, "value": json.dumps(v) if isinstance(v, (dict, list)) else v}
                             for k, v in data.items()])
    raise ValueError(f"unsupported file type: {path}")


def render_table(df: pd.DataFrame, limit: int = 20) -> str:
    shown = df.head(limit)
    return tabulate(shown.values.tolist(), headers=list(shown.columns), tablefmt="grid", floatfmt=".4g")


def view_run(path: str, limit: int = 20):
    """Display an output file as a grid"""
    try:
        df = load_table(path)
        print(f"📊 {path}: {len(df)} rows")
        print("=" * 80)
        if df.empty:
            print("❌ No rows found.")
            return
        print(render_table(df, limit))
        if len(df) > limit:
            print(f"... and {len(df) - limit} more rows")
    except Exception as e:
        print(f"❌ Error viewing {path}: {e}")


def view_simple(path: str):
    """Display only the last row of a run or sweep file"""
    try:
        df = load_table(path)
        if df.empty:
            print("❌ No rows found.")
            return
        print(f"📋 Last row of {path}:")
        for key, value in df.iloc[-1].items():
            if isinstance(value, float):
                print(f"   {key}: {value:.4f}")
            else:
                print(f"   {key}: {value}")
    except Exception as e:
        print(f"❌ Error viewing {path}: {e}")


if __name__ == "__main__":
    print("🚀 curvlab - Run Viewer")
    print("=" * 50)

    args = [a for a in sys.argv[1:] if a != "--simple"]
    if not args:
        print("💡 usage: view_runs.py PATH [--simple]")
        sys.exit(2)
    if "--simple" in sys.argv:
        view_simple(args[0])
    else:
        view_run(args[0])
