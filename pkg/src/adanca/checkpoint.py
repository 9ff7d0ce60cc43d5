"""Model checkpoints in the ANCT container.

Parameter names follow the module tree (``blocks.0.attn.qkv.weight``);
adaptor parameters live under ``adanca.<position>.`` and the architecture is
embedded as the ``__config__`` text entry.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .config import RunConfig, model_config_text
from .errors import ConfigError, FormatError
from .numerics.rng import Rng
from .store import entry_text, read_store, text_entry, write_store
from .vit import HostModel

CONFIG_ENTRY = "__config__"


def _external_name(name: str) -> str:
    return "adanca." + name[len("adaptors."):] if name.startswith("adaptors.") else name


def _internal_name(name: str) -> str:
    return "adaptors." + name[len("adanca."):] if name.startswith("adanca.") else name


def model_state(model: HostModel) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((_external_name(k), v) for k, v in model.state_dict().items())


def save_checkpoint(model: HostModel, path):
    specs = [(int(k), a.cfg) for k, a in model.adaptors.items()]
    entries = OrderedDict([(CONFIG_ENTRY, text_entry(model_config_text(model.cfg, specs)))])
    entries.update(model_state(model))
    write_store(path, entries)


def build_model(cfg_text: str) -> HostModel:
    run = RunConfig.parse(cfg_text, CONFIG_ENTRY)
    vit = run.vit_config()
    model = HostModel(vit, Rng(0))
    for pos, acfg in run.adaptor_specs(vit):
        model.insert_adanca(pos, acfg)
    return model


def load_checkpoint(path) -> HostModel:
    entries = read_store(path)
    if CONFIG_ENTRY not in entries:
        raise FormatError(f"{path}: missing {CONFIG_ENTRY!r} entry")
    try:
        model = build_model(entry_text(entries.pop(CONFIG_ENTRY)))
    except (ConfigError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: invalid embedded config: {exc}") from exc
    expected = set(model_state(model))
    got = set(entries)
    if expected != got:
        raise FormatError(f"{path}: tensor names do not match the embedded config; "
                          f"missing={sorted(expected - got)[:5]} unexpected={sorted(got - expected)[:5]}")
    state = {_internal_name(k): v for k, v in entries.items()}
    own = model.state_dict()
    for k, v in state.items():
        if v.shape != own[k].shape or v.dtype != own[k].dtype:
            raise FormatError(f"{path}: {_external_name(k)} is {v.dtype}{v.shape}, "
                              f"expected {own[k].dtype}{own[k].shape}")
    model.load_state_dict(state)
    model.eval()
    return model
