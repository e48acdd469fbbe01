"""
Run configuration: one YAML file with data, model and run sections, plus
``--set key.path=value`` overrides from the command line.
"""

from dataclasses import asdict, dataclass, field
from os.path import dirname as os_dirname
from os.path import isabs as os_isabs
from os.path import join as os_join
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from logger import Logger, SUPPORTED_LOG_LEVELS
from volatility.errors import InvalidConfig
from volatility.timeseries import DEFAULT_SCALE, PriceColumns, SplitSpec

MODEL_KINDS = (
    "garch-n",
    "garch-t",
    "egarch-n",
    "egarch-t",
    "bekk-n",
    "bekk-t",
    "neural-garch-n",
    "neural-garch-t",
    "neural-bekk-n",
    "neural-bekk-t",
)
UNIVARIATE_KINDS = ("garch-n", "garch-t", "egarch-n", "egarch-t", "neural-garch-n", "neural-garch-t")
SQUASHES = ("sigmoid", "softplus")

_DATA_KEYS = {"files", "date_format", "scale", "demean", "split"}
_FILE_KEYS = {"path", "name", "date_column", "price_column"}
_SPLIT_KEYS = {"train", "val", "test"}
_RUN_KEYS = {"seed", "output_dir", "html_log", "log_level"}


@dataclass(frozen=True)
class FileEntry:
    path: str
    name: str
    date_column: str = "date"
    price_column: str = "price"


@dataclass(frozen=True)
class DataSection:
    files: Tuple[FileEntry, ...]
    date_format: Optional[str] = None
    scale: float = DEFAULT_SCALE
    demean: bool = False
    split: SplitSpec = SplitSpec()

    def columns(self) -> List[PriceColumns]:
        return [
            PriceColumns(f.name, f.date_column, f.price_column, self.date_format)
            for f in self.files
        ]

    @property
    def n_assets(self) -> int:
        return len(self.files)


@dataclass(frozen=True)
class ModelSection:
    kind: str
    hidden_size: int = 64
    mlp_width: int = 64
    nu_scale: float = 28.0
    learning_rate: float = 1e-3
    epochs: int = 200
    n_samples: int = 1
    squash: str = "sigmoid"
    mc_draws: int = 0
    n_starts: int = 5
    log_every: int = 10

    @property
    def is_neural(self) -> bool:
        return self.kind.startswith("neural-")

    @property
    def is_multivariate(self) -> bool:
        return self.kind not in UNIVARIATE_KINDS

    @property
    def innovation(self) -> str:
        return "student_t" if self.kind.endswith("-t") else "normal"

    @property
    def classic_kind(self) -> str:
        """Identifier used by the classical estimators (e.g. ``garch_t``)."""
        return self.kind.replace("-", "_")


@dataclass(frozen=True)
class RunSection:
    seed: int
    output_dir: str = "output"
    html_log: bool = False
    log_level: str = "INFO"


@dataclass(frozen=True)
class RunConfig:
    data: DataSection
    model: ModelSection
    run: RunSection
    source: str = field(default="", compare=False)

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration with defaults filled in (hashed into every output)."""
        resolved = asdict(self)
        resolved.pop("source")
        split = resolved["data"].pop("split")
        resolved["data"]["split"] = {
            "train": split["train_frac"],
            "val": split["val_frac"],
            "test": split["test_frac"],
        }
        resolved["data"]["files"] = [dict(f) for f in resolved["data"]["files"]]
        return resolved


def _key_lines(node, prefix: str = "", lines: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    """Map dotted key paths to the 1-based line they appear on."""
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}{key_node.value}"
            lines[path] = key_node.start_mark.line + 1
            _key_lines(value_node, path + ".", lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            lines[f"{prefix}{i}"] = item.start_mark.line + 1
            _key_lines(item, f"{prefix}{i}.", lines)
    return lines


class _Parser:
    def __init__(self, lines: Dict[str, int], overridden: Sequence[str]):
        self.lines = lines
        self.overridden = set(overridden)

    def fail(self, path: str, message: str):
        if path in self.overridden:
            raise InvalidConfig(f"{path} (from --set): {message}")
        raise InvalidConfig(f"{path}: {message}", line=self.lines.get(path))

    def section(self, raw: Any, path: str, allowed: set, required: bool = True) -> Dict[str, Any]:
        if raw is None:
            if required:
                self.fail(path, "section is missing")
            return {}
        if not isinstance(raw, dict):
            self.fail(path, "expected a mapping")
        for key in raw:
            if key not in allowed:
                self.fail(f"{path}.{key}", f"unknown key (expected one of {sorted(allowed)})")
        return raw

    def typed(self, raw: Dict[str, Any], path: str, key: str, kind, default):
        if key not in raw or raw[key] is None:
            return default
        value = raw[key]
        full = f"{path}.{key}"
        if kind is bool:
            if not isinstance(value, bool):
                self.fail(full, f"expected true/false, got {value!r}")
            return value
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(full, f"expected an integer, got {value!r}")
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(full, f"expected a number, got {value!r}")
            return float(value)
        if not isinstance(value, str):
            self.fail(full, f"expected a string, got {value!r}")
        return value

    def positive(self, value, path: str, allow_zero: bool = False):
        if value < 0 or (value == 0 and not allow_zero):
            self.fail(path, f"must be {'non-negative' if allow_zero else 'positive'}, got {value}")
        return value

    def data(self, raw: Any, base_dir: str) -> DataSection:
        raw = self.section(raw, "data", _DATA_KEYS)
        files_raw = raw.get("files")
        if not isinstance(files_raw, list) or not files_raw:
            self.fail("data.files", "expected a non-empty list of price files")
        files = []
        for i, entry in enumerate(files_raw):
            path = f"data.files.{i}"
            if isinstance(entry, str):
                entry = {"path": entry}
            entry = self.section(entry, path, _FILE_KEYS)
            file_path = self.typed(entry, path, "path", str, None)
            if not file_path:
                self.fail(f"{path}.path", "is required")
            if not os_isabs(file_path):
                file_path = os_join(base_dir, file_path)
            default_name = file_path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
            files.append(
                FileEntry(
                    path=file_path,
                    name=self.typed(entry, path, "name", str, default_name),
                    date_column=self.typed(entry, path, "date_column", str, "date"),
                    price_column=self.typed(entry, path, "price_column", str, "price"),
                )
            )
        names = [f.name for f in files]
        if len(set(names)) != len(names):
            self.fail("data.files", f"asset names must be unique, got {names}")

        split_raw = self.section(raw.get("split"), "data.split", _SPLIT_KEYS, required=False)
        defaults = SplitSpec()
        try:
            split = SplitSpec(
                self.typed(split_raw, "data.split", "train", float, defaults.train_frac),
                self.typed(split_raw, "data.split", "val", float, defaults.val_frac),
                self.typed(split_raw, "data.split", "test", float, defaults.test_frac),
            )
        except InvalidConfig as e:
            self.fail("data.split", str(e))

        return DataSection(
            files=tuple(files),
            date_format=self.typed(raw, "data", "date_format", str, None),
            scale=self.positive(self.typed(raw, "data", "scale", float, DEFAULT_SCALE), "data.scale"),
            demean=self.typed(raw, "data", "demean", bool, False),
            split=split,
        )

    def model(self, raw: Any) -> ModelSection:
        allowed = {f for f in ModelSection.__dataclass_fields__}
        raw = self.section(raw, "model", allowed)
        kind = self.typed(raw, "model", "kind", str, None)
        if kind not in MODEL_KINDS:
            self.fail("model.kind", f"expected one of {list(MODEL_KINDS)}, got {kind!r}")
        defaults = ModelSection(kind=kind)
        values = {"kind": kind}
        for name in allowed - {"kind"}:
            default = getattr(defaults, name)
            values[name] = self.typed(raw, "model", name, type(default), default)
        for name in ("hidden_size", "mlp_width", "n_samples", "n_starts", "log_every"):
            self.positive(values[name], f"model.{name}")
        for name in ("nu_scale", "learning_rate"):
            self.positive(values[name], f"model.{name}")
        for name in ("epochs", "mc_draws"):
            self.positive(values[name], f"model.{name}", allow_zero=True)
        if values["squash"] not in SQUASHES:
            self.fail("model.squash", f"expected one of {list(SQUASHES)}, got {values['squash']!r}")
        return ModelSection(**values)

    def run(self, raw: Any) -> RunSection:
        raw = self.section(raw, "run", _RUN_KEYS)
        seed = self.typed(raw, "run", "seed", int, None)
        if seed is None:
            self.fail("run.seed", "is mandatory")
        self.positive(seed, "run.seed", allow_zero=True)
        log_level = self.typed(raw, "run", "log_level", str, "INFO").upper()
        if log_level not in SUPPORTED_LOG_LEVELS:
            self.fail("run.log_level", f"expected one of {SUPPORTED_LOG_LEVELS}")
        return RunSection(
            seed=seed,
            output_dir=self.typed(raw, "run", "output_dir", str, "output"),
            html_log=self.typed(raw, "run", "html_log", bool, False),
            log_level=log_level,
        )


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> List[str]:
    """Apply ``key.path=value`` strings in place; values are parsed as YAML scalars.

    Returns the overridden key paths.
    """
    paths = []
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidConfig(f"--set expects key.path=value, got '{item}'")
        try:
            parsed = yaml.safe_load(value) if value.strip() else None
        except yaml.YAMLError as e:
            raise InvalidConfig(f"--set {key}: cannot parse value '{value}': {e}")
        parts = key.split(".")
        node = raw
        for part in parts[:-1]:
            if isinstance(node, list):
                if not part.isdigit() or int(part) >= len(node):
                    raise InvalidConfig(f"--set {key}: no list entry '{part}'")
                node = node[int(part)]
                continue
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, (dict, list)):
                raise InvalidConfig(f"--set {key}: '{part}' is not a section")
            node = child
        last = parts[-1]
        if isinstance(node, list):
            if not last.isdigit() or int(last) >= len(node):
                raise InvalidConfig(f"--set {key}: no list entry '{last}'")
            node[int(last)] = parsed
        else:
            node[last] = parsed
        paths.append(key)
    return paths


def parse_config(text: str, base_dir: str = ".", overrides: Sequence[str] = (), source: str = "") -> RunConfig:
    try:
        raw = yaml.safe_load(text)
        lines = _key_lines(yaml.compose(text)) if raw is not None else {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        raise InvalidConfig(f"YAML syntax error: {problem}", line=mark.line + 1 if mark else None)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InvalidConfig("top level must be a mapping with data, model and run sections", line=1)
    for key in raw:
        if key not in ("data", "model", "run"):
            raise InvalidConfig(f"unknown section '{key}'", line=lines.get(str(key)))

    overridden = apply_overrides(raw, overrides)
    parser = _Parser(lines, overridden)
    return RunConfig(
        data=parser.data(raw.get("data"), base_dir),
        model=parser.model(raw.get("model")),
        run=parser.run(raw.get("run")),
        source=source,
    )


def load_config(path: str, overrides: Sequence[str] = ()) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_config(text, base_dir=os_dirname(path) or ".", overrides=overrides, source=path)


def check_dimensions(config: RunConfig, log_level: str = "INFO"):
    """Univariate kinds need exactly one asset; BEKK kinds on one asset only warn."""
    n = config.data.n_assets
    kind = config.model.kind
    if kind in UNIVARIATE_KINDS and n != 1:
        raise InvalidConfig(f"model.kind '{kind}' is univariate but data.files lists {n} assets")
    if kind not in UNIVARIATE_KINDS and n == 1:
        Logger(log_level, "config").warning(
            f"⚠️ '{kind}' is a multivariate model but only one asset is configured; proceeding with n=1"
        )
