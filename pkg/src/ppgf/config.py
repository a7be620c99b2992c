"""Run configuration: an INI-style ``key = value`` file with sections,
validated against a fixed schema and overridable with ``--set key=value``.

Bare keys in ``--set`` resolve to the unique section that defines them;
grid entries must be qualified (``grid.lr=0.001,0.005``).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

from .data import SplitPlan
from .errors import ConfigError
from .model import PPGFConfig
from .train import TrainConfig


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv):
    def parse(text):
        text = str(text).strip()
        return [conv(v.strip()) for v in text.split(",") if v.strip()] if text else []
    return parse


def _optional_int(text):
    text = str(text).strip()
    return None if text in ("", "none", "None") else int(text)


# (section, key) -> (parser, default)
SCHEMA = {
    ("data", "path"): (str, ""),
    ("data", "target_column"): (str, "value"),
    ("data", "train_frac"): (float, 0.6),
    ("data", "valid_frac"): (float, 0.2),
    ("data", "test_frac"): (float, 0.2),
    ("data", "lookback"): (int, 32),
    ("data", "horizon"): (int, 1),
    ("data", "groups"): (int, 2),
    ("model", "conv_channels"): (int, 16),
    ("model", "kernel_width"): (int, 3),
    ("model", "model_dim"): (int, 16),
    ("model", "hidden_dim"): (int, 16),
    ("model", "heads"): (int, 2),
    ("model", "ffn_dim"): (int, 32),
    ("model", "output_dim"): (int, 16),
    ("model", "lambda1"): (float, 1.0),
    ("model", "lambda2"): (float, 1.0),
    ("model", "lambda3"): (float, 5.0),
    ("model", "aux_ce_weight"): (float, 1.0),
    ("model", "detach_confidence_gate"): (_bool, True),
    ("model", "relative_head"): (str, "per_class"),
    ("model", "ablation"): (_list(str), []),
    ("model", "dtype"): (str, "float32"),
    ("train", "batch_size"): (int, 32),
    ("train", "max_epochs"): (int, 500),
    ("train", "patience"): (int, 20),
    ("train", "lr"): (float, 1e-3),
    ("train", "seed"): (int, 0),
    ("grid", "lr"): (_list(float), []),
    ("grid", "groups"): (_list(int), []),
    ("grid", "lambda1"): (_list(float), []),
    ("grid", "lambda2"): (_list(float), []),
    ("grid", "lambda3"): (_list(float), []),
    ("grid", "budget"): (_optional_int, None),
    ("run", "out"): (str, "runs/default"),
    ("run", "jobs"): (int, 1),
    ("run", "autocorr_lags"): (int, 100),
}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolve_key(key):
    if "." in key:
        section, name = key.split(".", 1)
        if (section, name) not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return section, name
    hits = [sk for sk in SCHEMA if sk[1] == key and sk[0] != "grid"]
    if not hits:
        raise ConfigError(f"unknown config key {key!r}")
    if len(hits) > 1:
        raise ConfigError(f"ambiguous key {key!r}; qualify it as one of "
                          f"{['.'.join(h) for h in hits]}")
    return hits[0]


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[resolve_key(key)]

    def set(self, key, raw):
        sk = resolve_key(key)
        parser = SCHEMA[sk][0]
        try:
            self.values[sk] = parser(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {'.'.join(sk)}: {raw!r} ({exc})") from exc

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(), base_dir=path.parent)

    @classmethod
    def from_text(cls, text, base_dir=None):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unparseable config: {exc}") from exc
        rc = cls(base_dir=Path(base_dir) if base_dir else Path.cwd())
        for section in cp.sections():
            for key, raw in cp.items(section):
                if (section, key) not in SCHEMA:
                    raise ConfigError(f"unknown config key {section}.{key}")
                rc.set(f"{section}.{key}", raw)
        return rc

    def apply_overrides(self, pairs):
        for pair in pairs or []:
            if "=" not in pair:
                raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
            key, raw = pair.split("=", 1)
            self.set(key.strip(), raw.strip())

    def resolved_text(self):
        """Every key with its effective value, in schema order."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for (section, key), value in self.values.items():
            if (section, key) == ("data", "path") and value:
                value = str(self.data_path().resolve())  # usable from any directory
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, key, _format(value))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # ------------------------------------------------------------ projections

    def data_path(self):
        p = Path(self["data.path"])
        return p if p.is_absolute() else self.base_dir / p

    def split_plan(self):
        return SplitPlan(self["train_frac"], self["valid_frac"], self["test_frac"])

    def model_config(self, D=1, **extra):
        return PPGFConfig(
            L=self["lookback"], D=D, T=self["horizon"], K=self["groups"],
            conv_channels=self["conv_channels"], kernel_width=self["kernel_width"],
            model_dim=self["model_dim"], hidden_dim=self["hidden_dim"], heads=self["heads"],
            ffn_dim=self["ffn_dim"], output_dim=self["output_dim"],
            lambda1=self["lambda1"], lambda2=self["lambda2"], lambda3=self["lambda3"],
            aux_ce_weight=self["aux_ce_weight"],
            detach_confidence_gate=self["detach_confidence_gate"],
            relative_head=self["relative_head"],
            ablation=frozenset(self["ablation"]), dtype=self["model.dtype"],
            lr=self["train.lr"], seed=self["seed"], **extra,
        )

    def train_config(self):
        return TrainConfig(batch_size=self["batch_size"], max_epochs=self["max_epochs"],
                           patience=self["patience"], lr=self["train.lr"], seed=self["seed"])

    def grid_space(self):
        return {k: self[f"grid.{k}"] for k in ("lr", "groups", "lambda1", "lambda2", "lambda3")
                if self[f"grid.{k}"]}
