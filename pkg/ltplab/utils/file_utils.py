import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

from ltplab.controllers.datagen import Example
from ltplab.controllers.pruning import DEFAULT_TEMPERATURE, ThresholdSet
from ltplab.core.errors import ConfigError


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: str | Path, data: Any) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=float)
        f.write("\n")
    return path


def read_json(path: str | Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    return path


def read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


# DATASETS

def save_dataset(path: str | Path, examples: Iterable[Example]) -> Path:
    return write_jsonl(path, (e.to_dict() for e in examples))


def load_dataset(path: str | Path) -> list[Example]:
    return [Example.from_dict(record) for record in read_jsonl(path)]


# THRESHOLDS

def save_thresholds(path: str | Path, thresholds: ThresholdSet) -> Path:
    return write_json(path, thresholds.to_list())


def load_thresholds(path: str | Path, temperature: float = DEFAULT_TEMPERATURE) -> ThresholdSet:
    data = read_json(path)
    if isinstance(data, dict):
        return ThresholdSet.from_dict(data)
    if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
        raise ConfigError(f"{path}: thresholds must be a JSON list of numbers")
    return ThresholdSet(data, temperature, learnable=False)
