"""
Shared configuration helpers.
Defaults live in the root config.json; experiment configs are merged onto
them strictly (unknown keys are errors) and hashed for run bookkeeping.
"""

import copy
import hashlib
import json
import os
import re
from typing import Any, Dict, Iterable, Tuple

from app.core.ensemble import parse_number
from app.exceptions import ConfigError

DEFAULTS_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config.json')
REQUIRED_SECTIONS = ('ensemble',)
HASH_PREFIX = 16
# execution settings that cannot change any output value
UNHASHED_KEYS = ('workers', 'output_dir')


def get_config(path: str = DEFAULTS_PATH) -> Dict[str, Any]:
    """Reload and return config from disk (always fresh)"""
    with open(path, 'r') as f:
        return json.load(f)


def _key_line(text: str, key: str) -> int:
    """1-based line of the first occurrence of "key": in the document"""
    if not text:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    if not match:
        return None
    return text.count('\n', 0, match.start()) + 1


def merge_strict(defaults: Dict[str, Any], overrides: Dict[str, Any], text: str = "",
                 prefix: str = "") -> Dict[str, Any]:
    """
    Merge overrides onto a deep copy of defaults. Keys absent from defaults
    raise ConfigError; a default of null accepts any value.
    """
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        dotted = f"{prefix}{key}"
        if key not in merged:
            raise ConfigError("unknown configuration key", key=dotted, line=_key_line(text, key))
        current = merged[key]
        if isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a table", key=dotted, line=_key_line(text, key))
            merged[key] = merge_strict(current, value, text, f"{dotted}.")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_experiment(path: str) -> Tuple[Dict[str, Any], str]:
    """Parse an experiment config; returns the document and its raw text"""
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}", line=e.lineno)
    if not isinstance(document, dict):
        raise ConfigError("experiment config must be a JSON object")
    return document, text


def parse_value(raw: str) -> Any:
    """--set values are JSON when they parse, raw strings otherwise"""
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_override(config: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Apply one dotted.key=value override in place"""
    if '=' not in assignment:
        raise ConfigError(f"override '{assignment}' is not of the form key=value")
    dotted, raw = assignment.split('=', 1)
    parts = dotted.strip().split('.')
    node = config
    for depth, part in enumerate(parts):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError("unknown configuration key", key='.'.join(parts[:depth + 1]))
        if depth == len(parts) - 1:
            if isinstance(node[part], dict):
                raise ConfigError("cannot override a whole table", key=dotted)
            node[part] = parse_value(raw)
        else:
            node = node[part]
    return config


def resolve_config(path: str, overrides: Iterable[str] = (), op: str = None, defaults: Dict[str, Any] = None,
                   **flags) -> Dict[str, Any]:
    """
    defaults <- experiment file <- --set overrides <- command-line flags
    (seed, workers, output_dir). The result is the content of config.resolved.
    `op` comes from the subcommand and must agree with the file when both name one.
    """
    defaults = get_config() if defaults is None else defaults
    document, text = load_experiment(path)
    for section in REQUIRED_SECTIONS:
        if section not in document:
            raise ConfigError(f"missing required section '{section}'", key=section)
    if op is not None and document.get('op') not in (None, op):
        raise ConfigError(f"config names op '{document['op']}' but '{op}' was requested", key='op',
                          line=_key_line(text, 'op'))
    config = merge_strict(defaults, document, text)
    for assignment in overrides or ():
        apply_override(config, assignment)
    if op is not None:
        config['op'] = op
    if not config.get('op'):
        raise ConfigError("missing required section 'op'", key='op')
    for key, value in flags.items():
        if value is not None:
            config[key] = value
    return config


def canonical_json(config: Dict[str, Any]) -> str:
    return json.dumps(config, sort_keys=True, separators=(',', ':'))


def config_hash(config: Dict[str, Any]) -> str:
    hashed = {key: value for key, value in config.items() if key not in UNHASHED_KEYS}
    return hashlib.sha256(canonical_json(hashed).encode()).hexdigest()


def short_hash(config: Dict[str, Any]) -> str:
    return config_hash(config)[:HASH_PREFIX]


def number(value) -> float:
    """Config numbers: JSON numbers or 'p/q' rational strings"""
    try:
        return parse_number(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"'{value}' is not a number or rational")


def complex_value(value) -> complex:
    """[re, im] pair (entries may be rationals) or a plain number"""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"complex value {value!r} must be [re, im]")
        return complex(number(value[0]), number(value[1]))
    return complex(number(value), 0.0)
