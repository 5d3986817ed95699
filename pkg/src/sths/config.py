"""Experiment configuration files.

Configs are INI files. Every section is parsed into typed values with
defaults filled in, and the result has a canonical JSON form whose SHA-256 is
the config hash, so key order, whitespace and spelled-out defaults do not
change it. Output location and worker count are excluded from the hash.

Example::

    [experiment]
    command = run
    arms = rs, cfbs, pn-cfbs/3c
    seeds = 0-9

    [synthetic]
    seed = 0
    imbalance = zipf

    [sths]
    T = 4
    K = 8
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from sths.models import MODELS
from sths.sampling import SamplingPolicy
from sths.synthetic import ConfigError, SyntheticConfig
from sths.training import SthsConfig

COMMANDS = ("synth", "run", "diagnose")
SETTINGS = ("zsl", "gzsl-strict")

_EXPERIMENT = {
    "command": "run",
    "name": "experiment",
    "setting": "zsl",
    "arms": ["cfbs"],
    "seeds": [0],
    "evaluate": None,
    "jobs": 1,
    "checkpoints": False,
}
_STHS = {"T": 4, "K": 1, "prior_d": 3, "prior_components": None}
_DIAGNOSE = {"budget": None, "group_size": None, "top_counts": [1, 2, 4]}
_OUTPUT = {"dir": None, "format": "csv"}


def parse_seeds(text: str) -> list:
    """``"0-3, 7"`` -> ``[0, 1, 2, 3, 7]``; order kept, duplicates dropped."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        lo, _, hi = part.partition("-")
        span = range(int(lo), int(hi) + 1) if hi else [int(lo)]
        for s in span:
            if s not in out:
                out.append(s)
    return out


def _coerce(value: str, default, key: str, section: str):
    v = value.strip()
    try:
        if isinstance(default, bool):
            if v.lower() in ("1", "true", "yes", "on"):
                return True
            if v.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        if isinstance(default, int):
            return int(v)
        if isinstance(default, float):
            return float(v)
        if isinstance(default, (list, tuple)):
            items = [x.strip() for x in v.split(",") if x.strip()]
            if default and isinstance(default[0], int):
                return [int(x) for x in items]
            if isinstance(default, tuple):
                return [float(x) for x in items]
            return items
        if default is None:
            if v == "" or v.lower() == "none":
                return None
            try:
                return int(v)
            except ValueError:
                return v
        return v
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {value!r}", [f"{section}.{key}"]) from None


def _parse_section(cp, section: str, defaults: dict, required: Optional[dict] = None) -> dict:
    """Typed values of ``section`` over ``defaults``; ``required`` maps extra
    keys without defaults to a value of their type."""
    required = required or {}
    out = dict(defaults)
    if not cp.has_section(section):
        return out
    bad = []
    for key, raw in cp.items(section):
        if key not in defaults and key not in required:
            bad.append(f"{section}.{key}")
            continue
        if section == "experiment" and key == "seeds":
            try:
                out[key] = parse_seeds(raw)
            except ValueError:
                raise ConfigError(f"[experiment] seeds: cannot parse {raw!r}", ["experiment.seeds"]) from None
            continue
        out[key] = _coerce(raw, defaults[key] if key in defaults else required[key], key, section)
    if bad:
        raise ConfigError(f"unknown config key(s): {bad}", bad)
    return out


def _synthetic_defaults() -> dict:
    d = {}
    for f in dataclasses.fields(SyntheticConfig):
        if f.default is not dataclasses.MISSING:
            d[f.name] = f.default
    return d


def _model_defaults(kind: str) -> dict:
    _, params_cls = MODELS[kind]
    return {f.name: f.default for f in dataclasses.fields(params_cls)}


@dataclass(frozen=True)
class Arm:
    """One sweep arm: ``policy[/prior][@setting]``."""

    spec: str
    policy: str
    prior: str
    setting: Optional[str]

    @classmethod
    def parse(cls, spec: str) -> "Arm":
        text = spec.strip().lower()
        setting = None
        if "@" in text:
            text, setting = text.split("@", 1)
            if setting not in SETTINGS:
                raise ConfigError(f"arm {spec!r}: unknown setting {setting!r}", ["experiment.arms"])
        policy, _, prior = text.partition("/")
        prior = prior or ("none" if policy != "pn-cfbs" else "3c")
        try:
            SamplingPolicy(policy, 1, prior)
        except ValueError as exc:
            raise ConfigError(f"arm {spec!r}: {exc}", ["experiment.arms"]) from None
        return cls(spec=spec.strip().lower(), policy=policy, prior=prior, setting=setting)

    @property
    def dirname(self) -> str:
        return self.spec.replace("/", "_").replace("@", "_at_")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: dict
    sths: dict
    model: dict
    diagnose: dict
    output: dict
    dataset_path: Optional[str] = None
    synthetic: Optional[dict] = None
    source: Optional[str] = None
    arms: tuple = field(default=(), compare=False)

    @property
    def name(self) -> str:
        return self.experiment["name"]

    @property
    def command(self) -> str:
        return self.experiment["command"]

    @property
    def seeds(self) -> list:
        return list(self.experiment["seeds"])

    def canonical(self) -> dict:
        """Typed, default-filled content that determines the results."""
        exp = {k: v for k, v in self.experiment.items() if k != "jobs"}
        d = {
            "experiment": exp,
            "sths": self.sths,
            "model": self.model,
            "diagnose": self.diagnose,
            "dataset": {"path": self.dataset_path} if self.dataset_path else None,
            "synthetic": self.synthetic,
        }
        return json.loads(json.dumps(d, sort_keys=True))

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_seeds(self, seeds) -> "ExperimentConfig":
        seeds = list(seeds)
        if not seeds:
            raise ConfigError("seed list is empty", ["experiment.seeds"])
        return dataclasses.replace(self, experiment={**self.experiment, "seeds": seeds})

    def synthetic_config(self, sweep_seed: int = 0) -> SyntheticConfig:
        """Synthetic dataset for one sweep seed (base seed plus sweep seed)."""
        d = dict(self.synthetic)
        d["seed"] = int(d["seed"]) + int(sweep_seed)
        return SyntheticConfig.from_dict(d)

    def sths_config(self, arm: Arm, seed: int) -> SthsConfig:
        s = self.sths
        policy = SamplingPolicy(arm.policy, s["K"], arm.prior, seed)
        return SthsConfig(
            T=s["T"],
            policy=policy,
            model=dict(self.model),
            seed=seed,
            prior_d=s["prior_d"],
            prior_components=s["prior_components"],
        )

    def arm_setting(self, arm: Arm) -> str:
        return arm.setting or self.experiment["setting"]

    def evaluate_mode(self) -> str:
        mode = self.experiment["evaluate"]
        if mode is None:
            return "gzsl" if self.experiment["setting"] == "gzsl-strict" else "zsl"
        return mode


def parse_config(text: str, base_dir: Optional[Path] = None, source: Optional[str] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", []) from None
    known = {"experiment", "sths", "model", "diagnose", "output", "dataset", "synthetic"}
    unknown = sorted(set(cp.sections()) - known)
    if unknown:
        raise ConfigError(f"unknown section(s): {unknown}", unknown)

    exp = _parse_section(cp, "experiment", _EXPERIMENT)
    if exp["command"] not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}", ["experiment.command"])
    if exp["setting"] not in SETTINGS:
        raise ConfigError(f"setting must be one of {SETTINGS}", ["experiment.setting"])
    if exp["evaluate"] not in (None, "zsl", "gzsl"):
        raise ConfigError("evaluate must be zsl or gzsl", ["experiment.evaluate"])
    if not exp["seeds"]:
        raise ConfigError("seed list is empty", ["experiment.seeds"])
    if exp["jobs"] < 1:
        raise ConfigError("jobs must be >= 1", ["experiment.jobs"])
    arms = tuple(Arm.parse(a) for a in exp["arms"])
    if not arms and exp["command"] == "run":
        raise ConfigError("no arms given", ["experiment.arms"])
    exp["arms"] = [a.spec for a in arms]

    sths = _parse_section(cp, "sths", _STHS)
    kind = cp.get("model", "kind", fallback="embedding").strip()
    if kind not in MODELS:
        raise ConfigError(f"unknown model kind {kind!r}", ["model.kind"])
    model = {"kind": kind, **_parse_section(cp, "model", _model_defaults(kind), required={"kind": ""})}
    model["kind"] = kind
    diagnose = _parse_section(cp, "diagnose", _DIAGNOSE)
    output = _parse_section(cp, "output", _OUTPUT)

    has_path = cp.has_section("dataset")
    has_syn = cp.has_section("synthetic")
    if has_path == has_syn:
        raise ConfigError("exactly one of [dataset] and [synthetic] is required", ["dataset", "synthetic"])
    path = syn = None
    if has_path:
        raw = _parse_section(cp, "dataset", {"path": ""})["path"]
        if not raw:
            raise ConfigError("[dataset] path is required", ["dataset.path"])
        p = Path(raw)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        path = str(p)
        if exp["command"] == "synth":
            raise ConfigError("synth needs a [synthetic] section", ["synthetic"])
    else:
        syn = _parse_section(cp, "synthetic", _synthetic_defaults(), required={"seed": 0})
        missing = [] if "seed" in syn else ["seed"]
        if missing:
            raise ConfigError(f"synthetic config is missing required field(s): {missing}", missing)
        syn["proportions"] = list(syn["proportions"])
        SyntheticConfig.from_dict(syn)  # validates

    try:
        SthsConfig(T=sths["T"], prior_d=sths["prior_d"], model=model)
        for a in arms:
            SamplingPolicy(a.policy, sths["K"], a.prior)
    except ValueError as exc:
        raise ConfigError(str(exc), ["sths"]) from None
    return ExperimentConfig(
        experiment=exp,
        sths=sths,
        model=model,
        diagnose=diagnose,
        output=output,
        dataset_path=path,
        synthetic=syn,
        source=source,
        arms=arms,
    )


def list_presets() -> list:
    root = resources.files("sths") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    res = resources.files("sths") / "presets" / f"{name}.ini"
    if not res.is_file():
        raise FileNotFoundError(f"no preset named {name!r}; available: {list_presets()}")
    return res.read_text(encoding="utf-8")


def load_config(ref) -> ExperimentConfig:
    """Load a config from a file path, or from a bundled preset by name
    (``preset:NAME`` or a bare name that is not an existing file)."""
    ref = str(ref)
    if ref.startswith("preset:"):
        return parse_config(preset_text(ref[7:]), None, ref)
    p = Path(ref)
    if p.is_file():
        return parse_config(p.read_text(encoding="utf-8"), p.parent, str(p))
    if p.suffix == "" and p.name in list_presets():
        return parse_config(preset_text(p.name), None, f"preset:{p.name}")
    raise FileNotFoundError(f"config not found: {ref}")
