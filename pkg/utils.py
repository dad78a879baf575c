import csv
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LATEST_NAME = 'latest.jsonl'


def _line(record: Dict[str, Any], timestamp: Optional[str]) -> str:
    row = {'schema_version': SCHEMA_VERSION, **record}
    if timestamp is not None and 'timestamp' not in row:
        row['timestamp'] = timestamp
    return json.dumps(row, ensure_ascii=False, sort_keys=True)


def save_records(results_dir: str, command: str, records: Sequence[Dict[str, Any]],
                 timestamps: bool = True) -> str:
    """
    Write records as JSON lines under <results_dir>/<command>/

    Args:
        results_dir: Root directory for result files
        command: CLI command the records belong to (e.g. 'classify')
        records: One dict per line
        timestamps: When False no timestamp enters file names or records,
            so identical runs give identical files

    Returns:
        Path of the file written (latest.jsonl is always refreshed too)
    """
    command_dir = os.path.join(results_dir, command)
    os.makedirs(command_dir, exist_ok=True)

    now = datetime.now()
    stamp = now.isoformat() if timestamps else None
    filename = f"{now.strftime('%Y-%m-%d_%H-%M-%S')}.jsonl" if timestamps else 'results.jsonl'
    file_path = os.path.join(command_dir, filename)

    content = ''.join(_line(r, stamp) + '\n' for r in records)
    for path in (file_path, os.path.join(command_dir, LATEST_NAME)):
        with open(path, 'w', encoding='utf-8') as f:
            f.write(content)

    logger.info(f"{len(records)} records saved to {file_path}")
    return file_path


def load_records(path: str) -> List[Dict[str, Any]]:
    """Read a JSON-lines file written by save_records"""
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def get_historical_records(results_dir: str, command: str, limit: int = 10) -> List[List[Dict[str, Any]]]:
    """
    Load past result files for a command, newest first

    Args:
        results_dir: Root directory for result files
        command: CLI command name
        limit: Maximum number of files to load
    """
    command_dir = os.path.join(results_dir, command)
    if not os.path.exists(command_dir):
        return []

    files = sorted((f for f in os.listdir(command_dir) if f.endswith('.jsonl') and f != LATEST_NAME),
                   reverse=True)
    result = []
    for file in files[:limit]:
        file_path = os.path.join(command_dir, file)
        try:
            result.append(load_records(file_path))
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading {file_path}: {e}")
    return result


def save_jsonl(path: str, rows: Sequence[Dict[str, Any]]) -> str:
    """Write rows as strict JSON lines to an explicit path"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True, allow_nan=False) + '\n')
    logger.info(f"{len(rows)} rows saved to {path}")
    return path


def save_json(path: str, data: Dict[str, Any]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
    logger.info(f"Data saved to {path}")
    return path


def save_csv(path: str, rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    """Write rows as a CSV table; columns default to the first row's keys"""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction='ignore')
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"CSV table with {len(rows)} rows saved to {path}")
    return path
