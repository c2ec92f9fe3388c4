"""Run configuration: an INI file layered over the packaged defaults."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .expansion import ExpansionRequest
from .fusion import FusionConfig
from .losses import LossWeights
from .metrics import DEFAULT_MAP_THRESHOLDS
from .perturbation import NoiseSpec
from .supervision import SupervisionConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LLMSettings:
    model_id: str = "llama3-8b"
    temperature: float = 0.0
    max_tokens: int = 128
    offline: bool = False
    prompt_version: str = "v1"
    noise_fraction: float = 0.0

    def __post_init__(self):
        # reuse the request invariants for temperature / max_tokens
        ExpansionRequest("x", self.model_id, self.temperature, self.max_tokens)
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must be in [0, 1]")


@dataclass(frozen=True)
class RunConfig:
    annotations: Path
    embeddings_dir: Path
    cache: Path
    output_dir: Path
    predictions: Path
    supervision: SupervisionConfig
    fusion: FusionConfig
    losses: LossWeights
    noise: NoiseSpec
    llm: LLMSettings
    r1_thresholds: tuple
    map_thresholds: tuple
    seed: int = 0
    jobs: int = 1
    strict: Optional[bool] = None

    def strict_for(self, default: bool) -> bool:
        return default if self.strict is None else self.strict

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("annotations", "embeddings_dir", "cache", "output_dir", "predictions"):
            out[key] = str(out[key])
        out["r1_thresholds"] = list(self.r1_thresholds)
        out["map_thresholds"] = list(self.map_thresholds)
        return out


def default_config_text() -> str:
    return resources.files("softbound").joinpath("default.ini").read_text()


def _floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_bool(text: str) -> bool:
    return configparser.ConfigParser.BOOLEAN_STATES[text.strip().lower()]


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Build and validate a :class:`RunConfig`.

    Args:
        path: optional INI file; its values override the packaged defaults and
            its directory anchors relative paths (the working directory
            otherwise).
        overrides: ``{section: {key: value}}`` applied last (command-line flags).

    Raises:
        ConfigError: unreadable file or any invalid value. Nothing is written
            before validation completes.
    """
    parser = configparser.ConfigParser()
    parser.read_string(default_config_text())
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")
        base = path.resolve().parent
    for section, values in (overrides or {}).items():
        for key, value in values.items():
            if value is not None:
                parser.set(section, key, str(value))

    def p(key):
        return (base / parser.get("paths", key)).resolve()

    try:
        sup = parser["supervision"]
        fus = parser["fusion"]
        los = parser["losses"]
        noi = parser["noise"]
        llm = parser["llm"]
        run = parser["run"]
        seed = run.getint("seed")
        strict_text = run.get("strict", "auto").strip().lower()
        scale = fus.get("attn_scale", "").strip()
        cfg = RunConfig(
            annotations=p("annotations"),
            embeddings_dir=p("embeddings_dir"),
            cache=p("cache"),
            output_dir=p("output_dir"),
            predictions=p("predictions"),
            supervision=SupervisionConfig(sup.getfloat("tau"), sup.get("strategy"), sup.getfloat("gauss_sigma")),
            fusion=FusionConfig(fus.getfloat("a"), fus.getfloat("b"), float(scale) if scale else None),
            losses=LossWeights(*(los.getfloat(k) for k in
                                 ("lambda_l1", "lambda_iou", "lambda_saliency", "lambda_cls", "margin_delta"))),
            noise=NoiseSpec(noi.get("kind"), noi.getfloat("sigma"), noi.getfloat("lo"), noi.getfloat("hi"), seed),
            llm=LLMSettings(llm.get("model_id"), llm.getfloat("temperature"), llm.getint("max_tokens"),
                            llm.getboolean("offline"), llm.get("prompt_version"), llm.getfloat("noise_fraction")),
            r1_thresholds=_floats(parser.get("metrics", "r1_thresholds")),
            map_thresholds=_floats(parser.get("metrics", "map_thresholds")) or DEFAULT_MAP_THRESHOLDS,
            seed=seed,
            jobs=run.getint("jobs"),
            strict=None if strict_text == "auto" else _parse_bool(strict_text),
        )
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    for mu in cfg.r1_thresholds + cfg.map_thresholds:
        if not 0 < mu <= 1:
            raise ConfigError(f"IoU threshold {mu} outside (0, 1]")
    return cfg
