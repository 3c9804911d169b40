"""Plain-text ``key = value`` configuration for the FMS and its capability
records.

Recognised keys::

    order_count, transport_time, cnc_time, assembly_time, seed,
    carriers               comma-separated transport resources
    failure_probability    enables the CNC failure model when present
    repair_time            ms the CNC stays down after a failure
    capability.<resource>  comma-separated capability names
    <anything else>        kept verbatim in ``extra`` (controller settings)

Lines starting with ``#`` are comments.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .model import FailureModel, FmsConfig, InvalidConfig

_INT_KEYS = ("order_count", "transport_time", "cnc_time", "assembly_time", "seed")


@dataclass
class LoadedConfig:
    fms: FmsConfig
    capabilities: dict[str, tuple[str, ...]] = field(default_factory=dict)
    extra: dict[str, str] = field(default_factory=dict)


def parse_config(text: str, base: FmsConfig | None = None) -> LoadedConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        values[k] = v
    cfg = base or FmsConfig()
    kw: dict = {}
    caps: dict[str, tuple[str, ...]] = {}
    extra: dict[str, str] = {}
    try:
        for k, v in values.items():
            if k in _INT_KEYS:
                kw[k] = int(v)
            elif k == "carriers":
                kw[k] = tuple(s.strip() for s in v.split(",") if s.strip())
            elif k.startswith("capability."):
                caps[k.split(".", 1)[1]] = tuple(s.strip() for s in v.split(",") if s.strip())
            elif k not in ("failure_probability", "repair_time"):
                extra[k] = v
        cfg = replace(cfg, **kw)
        if "failure_probability" in values or "repair_time" in values:
            prev = cfg.failure or FailureModel(rng_seed=cfg.seed)
            cfg = replace(cfg, failure=FailureModel(
                prev.target_resource,
                float(values.get("failure_probability", prev.probability)),
                int(values.get("repair_time", prev.repair_time)),
                cfg.seed,
            ))
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    return LoadedConfig(cfg, caps, extra)


def load_config(path: str | Path, base: FmsConfig | None = None) -> LoadedConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def dump_config(cfg: FmsConfig) -> str:
    lines = [
        f"order_count = {cfg.order_count}",
        f"transport_time = {cfg.transport_time}",
        f"cnc_time = {cfg.cnc_time}",
        f"assembly_time = {cfg.assembly_time}",
        f"seed = {cfg.seed}",
        f"carriers = {', '.join(cfg.carriers)}",
    ]
    if cfg.failure is not None:
        lines.append(f"failure_probability = {cfg.failure.probability}")
        lines.append(f"repair_time = {cfg.failure.repair_time}")
    return "\n".join(lines) + "\n"
