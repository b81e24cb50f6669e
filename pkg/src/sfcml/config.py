"""Flat ``key = value`` run configuration and its TSV manifest form."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .exceptions import InvalidValue, MissingKey, UnknownKey
from .samplers import SAMPLER_KINDS, SamplerKind
from .trainer import DEFAULT_KS, TrainConfig

_DELIMITERS = {"tab": "\t", "comma": ",", "space": " ", "semicolon": ";", "pipe": "|", "::": "::"}
_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}

# keys whose value may be a comma list; each combination is one grid point
GRID_KEYS = ("train.learning_rate", "train.margin", "sampler.u")


class _Reject(ValueError):
    pass


def _int(text):
    try:
        return int(text)
    except ValueError:
        raise _Reject("expected an integer") from None


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise _Reject("expected a number") from None


def _bool(text):
    t = text.lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise _Reject("expected true or false")


def _list(item):
    def parse(text):
        parts = [p.strip() for p in text.split(",")]
        if not parts or any(p == "" for p in parts):
            raise _Reject("expected a comma-separated list")
        return tuple(item(p) for p in parts)

    return parse


def _choice(*options):
    def parse(text):
        if text not in options:
            raise _Reject(f"expected one of {', '.join(options)}")
        return text

    return parse


def _delimiter(text):
    if text in _DELIMITERS:
        return text
    if len(text) == 1:
        return text
    raise _Reject(f"expected a single character or one of {', '.join(_DELIMITERS)}")


def _auto(item):
    def parse(text):
        return None if text == "auto" else item(text)

    return parse


def _positive(item):
    def parse(text):
        v = item(text)
        values = v if isinstance(v, tuple) else (v,)
        if any(x is not None and not x > 0 for x in values):
            raise _Reject("must be positive")
        return v

    return parse


def _non_negative(item):
    def parse(text):
        v = item(text)
        if v < 0:
            raise _Reject("must be non-negative")
        return v

    return parse


def _ratios(text):
    r = _list(_float)(text)
    if len(r) != 3 or any(x < 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise _Reject("expected three non-negative ratios summing to 1")
    return r


# key -> (parser, default); a default of None marks a required key
_SCHEMA: Dict[str, Tuple[Callable, Optional[str]]] = {
    "dataset.path": (str, None),
    "dataset.delimiter": (_delimiter, "tab"),
    "dataset.threshold": (_float, "4.0"),
    "dataset.min_interactions": (_positive(_int), "5"),
    "split.seed": (_non_negative(_int), "0"),
    "split.ratios": (_ratios, "0.6,0.2,0.2"),
    "train.learning_rate": (_list(_non_negative(_float)), "0.01"),
    "train.epochs": (_positive(_int), "200"),
    "train.batch_size": (_positive(_int), "256"),
    "train.margin": (_positive(_list(_float)), "1.0"),
    "train.dim": (_positive(_int), "256"),
    "train.radius": (_positive(_float), "1.0"),
    "train.patience": (_positive(_int), "15"),
    "train.improvement_epsilon": (_non_negative(_float), "1e-5"),
    "train.seed": (_non_negative(_int), "0"),
    "train.method": (_choice("sfcml", "sampled"), "sfcml"),
    "train.sequential": (_bool, "false"),
    "sampler.kind": (_choice(*SAMPLER_KINDS), "uniform"),
    "sampler.u": (_positive(_list(_int)), "1"),
    "sampler.candidate_multiplier": (_positive(_auto(_int)), "auto"),
    "sampler.replace": (_auto(_bool), "auto"),
    "eval.ks": (_positive(_list(_int)), ",".join(str(k) for k in DEFAULT_KS)),
    "eval.mask_mode": (_choice("masked", "unmasked"), "masked"),
    "output.dir": (str, "sfcml-run"),
    "log.timing": (_bool, "false"),
}

KNOWN_KEYS = tuple(_SCHEMA)


@dataclass
class RunConfig:
    """Validated run configuration.

    ``raw`` keeps the normalized text of every key so the configuration
    round-trips through :meth:`manifest_tsv` unchanged; ``values`` holds
    the parsed form.
    """

    raw: Dict[str, str] = field(default_factory=dict)
    values: Dict[str, object] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def delimiter(self) -> str:
        d = self.values["dataset.delimiter"]
        return _DELIMITERS.get(d, d)

    @property
    def is_grid(self) -> bool:
        return any(len(self.values[k]) > 1 for k in GRID_KEYS)

    def grid(self) -> Dict[str, Sequence]:
        """Candidate values per tunable field, in :func:`grid_search` naming."""
        return {
            "learning_rate": self.values["train.learning_rate"],
            "margin": self.values["train.margin"],
            "n_negatives": self.values["sampler.u"],
        }

    def sampler(self, n_negatives: Optional[int] = None) -> SamplerKind:
        return SamplerKind(
            self.values["sampler.kind"],
            n_negatives if n_negatives is not None else self.values["sampler.u"][0],
            self.values["sampler.candidate_multiplier"],
            self.values["sampler.replace"],
        )

    def train_configs(self) -> List[TrainConfig]:
        """One :class:`TrainConfig` per grid point, in grid order."""
        v = self.values
        out = []
        for lr, margin, u in itertools.product(
            v["train.learning_rate"], v["train.margin"], v["sampler.u"]
        ):
            out.append(
                TrainConfig(
                    learning_rate=lr,
                    epochs=v["train.epochs"],
                    batch_size=v["train.batch_size"],
                    margin=margin,
                    dim=v["train.dim"],
                    radius=v["train.radius"],
                    patience=v["train.patience"],
                    improvement_epsilon=v["train.improvement_epsilon"],
                    seed=v["train.seed"],
                    method=v["train.method"],
                    sampler=self.sampler(u),
                    sequential=v["train.sequential"],
                )
            )
        return out

    def train_config(self) -> TrainConfig:
        configs = self.train_configs()
        if len(configs) != 1:
            key = next(k for k in GRID_KEYS if len(self.values[k]) > 1)
            raise InvalidValue(key, self.raw[key], "a grid is not allowed here")
        return configs[0]

    def manifest_tsv(self) -> str:
        lines = ["key\tvalue"]
        lines += [f"{k}\t{self.raw[k]}" for k in KNOWN_KEYS]
        return "\n".join(lines) + "\n"


def _split_assignment(text: str, sep: str) -> Tuple[str, str]:
    if sep not in text:
        raise InvalidValue("<line>", text, f"expected 'key {sep.strip() or 'TAB'} value'")
    key, value = text.split(sep, 1)
    return key.strip(), value.strip()


def parse_assignments(lines: Iterable[str], sep: str = "=") -> Dict[str, str]:
    """Collect ``key sep value`` pairs, skipping blanks and ``#`` comments."""
    out = {}
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, value = _split_assignment(line if sep == "\t" else stripped, sep)
        out[key] = value
    return out


def resolve(assignments: Dict[str, str]) -> RunConfig:
    """Validate raw assignments against the schema, filling defaults."""
    for key in assignments:
        if key not in _SCHEMA:
            raise UnknownKey(key)
    cfg = RunConfig()
    for key, (parser, default) in _SCHEMA.items():
        if key in assignments:
            text = assignments[key]
        elif default is None:
            raise MissingKey(key)
        else:
            text = default
        try:
            value = parser(text)
        except _Reject as exc:
            raise InvalidValue(key, text, str(exc)) from None
        cfg.raw[key] = text
        cfg.values[key] = value
    if not cfg.values["dataset.path"]:
        raise InvalidValue("dataset.path", "", "must not be empty")
    return cfg


def _read_config_file(path) -> Dict[str, str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    # a run manifest is itself a valid config
    if lines and lines[0] == "key\tvalue":
        return parse_assignments(lines[1:], sep="\t")
    return parse_assignments(lines, sep="=")


def load_config(path=None, overrides: Sequence[str] = ()) -> RunConfig:
    """Read a config file (or a ``run-manifest.tsv``) and apply ``key=value`` overrides.

    Parameters
    ----------
    path : path-like, optional
        ``key = value`` lines with ``#`` comments. May be omitted when the
        overrides supply every required key.
    overrides : sequence of str
        Applied after the file, in order.

    Raises
    ------
    UnknownKey, MissingKey, InvalidValue
    """
    assignments = _read_config_file(path) if path is not None else {}
    for item in overrides:
        key, value = _split_assignment(item, "=")
        assignments[key] = value
    return resolve(assignments)
