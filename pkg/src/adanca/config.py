"""``key = value`` run configuration with a closed key set."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

from . import __version__
from .errors import ConfigError
from .nca import AdaNCAConfig
from .vit import VitConfig


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _pair(v: str) -> tuple[int, int]:
    a, b = (int(x) for x in re.split(r"[,\s]+", v.strip().strip("[]()")) if x)
    return a, b


BASE_KEYS = {
    "seed": (int, 0),
    "vit.image_size": (int, 32),
    "vit.patch_size": (int, 4),
    "vit.embed_dim": (int, 64),
    "vit.depth": (int, 6),
    "vit.heads": (int, 4),
    "vit.mlp_ratio": (float, 5.0),
    "vit.num_classes": (int, 10),
    "vit.drop_path_rate": (float, 0.1),
    "optim.lr": (float, 0.05),
    "optim.momentum": (float, 0.9),
    "optim.weight_decay": (float, 5e-4),
    "optim.epochs": (int, 10),
    "optim.batch_size": (int, 64),
    "optim.label_smoothing": (float, 0.1),
    "optim.warmup_epochs": (float, 1.0),
    "optim.clip_norm": (float, 5.0),
    "data.train": (str, ""),
    "data.test": (str, ""),
    "attack.epsilon": (float, 1.0),
    "attack.step_size": (float, 0.5),
    "attack.steps": (int, 5),
}

ADANCA_KEYS = {
    "position": int,
    "steps": _pair,
    "test_step": int,
    "keep_prob": float,
    "kernel_count": int,
    "scale_count": int,
    "drop_path_rate": float,
    "recur": _bool,
    "stocu": _bool,
    "rands": _bool,
    "dynin": _bool,
}

_ADANCA_RE = re.compile(r"^adanca\.(\d+)\.([a-z_]+)$")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in BASE_KEYS.items()})
    adanca: dict = field(default_factory=dict)  # index -> {key: value}

    def set(self, key: str, raw: str, where: str = "override"):
        key = key.strip()
        try:
            if key in BASE_KEYS:
                self.values[key] = BASE_KEYS[key][0](raw.strip())
                return
            m = _ADANCA_RE.match(key)
            if m and m.group(2) in ADANCA_KEYS:
                self.adanca.setdefault(int(m.group(1)), {})[m.group(2)] = ADANCA_KEYS[m.group(2)](raw)
                return
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
        raise ConfigError(f"{where}: unknown config key {key!r}")

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = line.split("=", 1)
            cfg.set(key, raw, f"{source}:{lineno}")
        return cfg

    @classmethod
    def load(cls, path, overrides=(), env=None) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            cfg = cls.parse(fh.read(), str(path))
        cfg.apply_overrides(overrides, env)
        return cfg

    def apply_overrides(self, overrides=(), env=None):
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must be key=value, got {item!r}")
            k, v = item.split("=", 1)
            self.set(k, v)
        env = os.environ if env is None else env
        if env.get("ADANCA_SEED"):
            self.set("seed", env["ADANCA_SEED"], "ADANCA_SEED")
        return self

    def __getitem__(self, key):
        return self.values[key]

    def vit_config(self) -> VitConfig:
        v = self.values
        return VitConfig(image_size=v["vit.image_size"], patch_size=v["vit.patch_size"],
                         embed_dim=v["vit.embed_dim"], depth=v["vit.depth"], heads=v["vit.heads"],
                         mlp_ratio=v["vit.mlp_ratio"], num_classes=v["vit.num_classes"],
                         drop_path_rate=v["vit.drop_path_rate"])

    def adaptor_specs(self, vit: VitConfig | None = None) -> list[tuple[int, AdaNCAConfig]]:
        vit = vit or self.vit_config()
        specs = []
        for idx in sorted(self.adanca):
            entry = dict(self.adanca[idx])
            if "position" not in entry:
                raise ConfigError(f"adanca.{idx}.position is required")
            pos = entry.pop("position")
            if "steps" in entry:
                entry["step_range"] = entry.pop("steps")
            if "drop_path_rate" not in entry:
                entry["drop_path_rate"] = 0.0 if pos == 0 else vit.drop_path_schedule[min(pos, vit.depth) - 1]
            specs.append((pos, AdaNCAConfig(channels=vit.embed_dim, **entry)))
        return specs

    def to_text(self, extra: dict | None = None) -> str:
        lines = [f"# adanca {__version__}"]
        for k in BASE_KEYS:
            lines.append(f"{k} = {_fmt(self.values[k])}")
        for idx in sorted(self.adanca):
            for k, v in self.adanca[idx].items():
                lines.append(f"adanca.{idx}.{k} = {_fmt(v)}")
        for k, v in (extra or {}).items():
            lines.append(f"# {k}: {v}")
        return "\n".join(lines) + "\n"


def model_config_text(vit: VitConfig, adaptors: list[tuple[int, AdaNCAConfig]]) -> str:
    """Architecture-only config (embedded in checkpoints)."""
    lines = [
        f"vit.image_size = {vit.image_size}", f"vit.patch_size = {vit.patch_size}",
        f"vit.embed_dim = {vit.embed_dim}", f"vit.depth = {vit.depth}", f"vit.heads = {vit.heads}",
        f"vit.mlp_ratio = {vit.mlp_ratio}", f"vit.num_classes = {vit.num_classes}",
        f"vit.drop_path_rate = {vit.drop_path_rate}",
    ]
    for k, (pos, c) in enumerate(adaptors):
        lines += [
            f"adanca.{k}.position = {pos}", f"adanca.{k}.steps = {c.step_range[0]},{c.step_range[1]}",
            f"adanca.{k}.test_step = {c.test_step}", f"adanca.{k}.keep_prob = {c.keep_prob!r}",
            f"adanca.{k}.kernel_count = {c.kernel_count}", f"adanca.{k}.scale_count = {c.scale_count}",
            f"adanca.{k}.drop_path_rate = {c.drop_path_rate!r}",
        ] + [f"adanca.{k}.{t} = {_fmt(getattr(c, t))}" for t in ("recur", "stocu", "rands", "dynin")]
    return "\n".join(lines) + "\n"
