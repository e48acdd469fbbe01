"""
Plain-text run artifacts.

Every text output begins with ``# config_hash=<hex> seed=<n>``. Artifacts are
``key=value`` lines; arrays are written row-major and comma-joined with a
companion ``<key>.shape`` entry.
"""

import json
from hashlib import sha256
from os.path import exists as os_exists
from typing import Any, Dict, Iterable, Mapping, Tuple, Union

import numpy as np
import pandas as pd

from volatility.errors import InvalidConfig
from .config import RunConfig

Value = Union[str, int, float, bool, np.ndarray]
HEADER_PREFIX = "# "


NON_SEMANTIC_RUN_KEYS = ("output_dir", "html_log", "log_level")


def config_hash(config: Union[RunConfig, Mapping[str, Any]]) -> str:
    """SHA-256 of the canonical JSON dump of a resolved configuration.

    Where outputs go and how verbosely a run logs do not change the hash.
    """
    if isinstance(config, RunConfig):
        resolved = config.to_dict()
        for key in NON_SEMANTIC_RUN_KEYS:
            resolved["run"].pop(key)
    else:
        resolved = dict(config)
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return sha256(canonical.encode("utf-8")).hexdigest()


def content_hash(paths: Iterable[str]) -> str:
    digest = sha256()
    for path in paths:
        with open(path, "rb") as f:
            digest.update(f.read())
    return digest.hexdigest()


def header_line(hash_hex: str, seed: Union[int, str]) -> str:
    return f"{HEADER_PREFIX}config_hash={hash_hex} seed={seed}"


def parse_header(line: str) -> Dict[str, str]:
    if not line.startswith(HEADER_PREFIX):
        raise InvalidConfig(f"missing '# config_hash=... seed=...' header, got '{line.strip()}'")
    fields = {}
    for token in line[len(HEADER_PREFIX) :].split():
        key, _, value = token.partition("=")
        fields[key] = value
    return fields


def _format_value(value: Value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_artifact(path: str, entries: Mapping[str, Value], hash_hex: str, seed: int):
    lines = [header_line(hash_hex, seed)]
    for key, value in entries.items():
        if "=" in key or "\n" in key:
            raise InvalidConfig(f"artifact key '{key}' cannot be written")
        if isinstance(value, np.ndarray):
            array = np.asarray(value, dtype=float)
            lines.append(f"{key}.shape=" + "x".join(str(d) for d in array.shape))
            lines.append(f"{key}=" + ",".join(repr(float(v)) for v in array.ravel(order="C")))
        else:
            lines.append(f"{key}={_format_value(value)}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_artifact(path: str) -> Tuple[Dict[str, str], Dict[str, Value]]:
    """Header fields and entries; arrays come back as float ndarrays, the rest as strings."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise InvalidConfig(f"{path} is empty")
    header = parse_header(lines[0])
    raw: Dict[str, str] = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidConfig(f"{path}: expected key=value", line=number)
        raw[key] = value

    entries: Dict[str, Value] = {}
    for key, value in raw.items():
        if key.endswith(".shape"):
            continue
        shape_text = raw.get(f"{key}.shape")
        if shape_text is None:
            entries[key] = value
            continue
        shape = tuple(int(d) for d in shape_text.split("x")) if shape_text else ()
        values = [float(v) for v in value.split(",")] if value else []
        entries[key] = np.array(values, dtype=float).reshape(shape)
    return header, entries


def write_csv_with_header(path: str, frame: pd.DataFrame, hash_hex: str, seed: int):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header_line(hash_hex, seed) + "\n")
        frame.to_csv(f, index=False, lineterminator="\n", float_format="%.10g")


def write_text_with_header(path: str, text: str, hash_hex: str, seed: Union[int, str]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header_line(hash_hex, seed) + "\n")
        f.write(text)


RESULTS_COLUMNS = ["series", "model", "seed", "train_ll", "val_ll", "test_ll", "config_hash"]


def append_result(path: str, row: Mapping[str, Any], hash_hex: str, seed: int):
    """Append one row to a results file, creating it (header included) if needed.

    A row for the same (series, model, seed) replaces the earlier one.
    """
    values = dict(row)
    values.setdefault("config_hash", hash_hex)
    new = pd.DataFrame([{column: values.get(column) for column in RESULTS_COLUMNS}])
    if os_exists(path):
        with open(path, "r", encoding="utf-8") as f:
            first = f.readline()
        header = parse_header(first)
        frame = pd.read_csv(path, comment="#", dtype={"series": str, "model": str, "config_hash": str})
        key = (frame["series"] == new.at[0, "series"]) & (frame["model"] == new.at[0, "model"]) & (
            frame["seed"] == new.at[0, "seed"]
        )
        frame = pd.concat([frame[~key], new], ignore_index=True)
        hash_hex = header.get("config_hash", hash_hex)
        seed = header.get("seed", seed)
    else:
        frame = new
    write_csv_with_header(path, frame, hash_hex, seed)

