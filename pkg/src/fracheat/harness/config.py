"""Plain-text experiment configuration: ``key = value`` lines under ``[section]`` headers."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("sample", "moments", "kernel", "renorm", "levy", "solve", "converge", "besov")


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    """'3..6' or '3, 4, 7'."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(v) for v in text.replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _words(text: str) -> tuple[str, ...]:
    return tuple(v for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    """Groups separated by ';', numbers by spaces or commas."""
    return tuple(_floats(g) for g in text.split(";") if g.strip())


_PARSE = {int: int, float: float, str: str.strip, bool: _bool,
          "ints": _ints, "floats": _floats, "words": _words, "points": _points}

# section -> key -> (type, default); default None means "required when used"
SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {"kind": (str, None), "seed": (int, 0), "out": (str, "out")},
    "sheet": {
        "H1": ("floats", None), "H2": ("floats", None), "n": (int, 8), "m": (int, 8),
        "time_inner_exp": (int, 10), "time_per_octave": (int, 8),
        "time_max_spacing": (float, float("inf")), "time_uniform_until": (float, float("inf")),
        "time_far_per_octave": (int, 8),
        "space_inner_exp": (int, 10), "space_per_octave": (int, 8),
        "space_max_spacing": (float, float("inf")), "space_uniform_until": (float, float("inf")),
        "space_far_per_octave": (int, 8),
    },
    "kernel": {"n_max": (int, 12), "nt_table": (int, 8192), "nx_table": (int, 512),
               "check_levels": (int, 10), "check_points": (int, 2000),
               "l1_times": ("floats", (1e-3, 2e-3, 5e-3, 1e-2))},
    "grid": {"t_min": (float, 0.0), "t_max": (float, 1.0), "nt": (int, 65),
             "x_min": (float, 0.0), "x_max": (float, 1.0), "nx": (int, 65)},
    "sample": {"fields": ("words", ("sheet",))},
    "moments": {"quantity": (str, None), "points": ("points", ()), "draws": (int, 20000),
                "offsets": ("ints", (1, 2, 3, 4, 5, 6)), "fixed_side": (float, 0.5)},
    "besov": {"fields": ("words", ("noise",)), "levels": ("ints", (0, 1, 2, 3, 4, 5, 6)),
              "region": ("floats", (-4.0, 4.0, -4.0, 4.0)), "cap": (int, 4096)},
    "renorm": {"n": ("ints", (4, 5, 6, 7, 8, 9, 10)), "nodes": ("ints", (24, 32)),
               "limit_check": (bool, False)},
    "levy": {"mode": (str, "chen"), "seeds": (int, 10), "pairs": (int, 100), "probes": (int, 5),
             "variants": ("words", ("canonical", "renormalized")),
             "levels": ("ints", (3, 4, 5, 6)), "samples": (int, 1000), "base": ("floats", (0.5, 0.0)),
             "decay_n": ("ints", ()), "decay_levels": ("ints", ()), "gap": (int, 4)},
    "solver": {"equation": (str, "young"), "F": (str, "bump_sin"), "a": (float, 1.0), "amp": (float, 1.0),
               "slope": (float, 0.0), "psi0": (str, "gauss"), "L": (float, 6.0), "T": (float, 0.25),
               "level": (int, 5), "time_margin": (int, 1), "save_rows": (int, 257),
               "paths": (int, 1), "batch": (int, 100), "levels": ("ints", ()), "gamma": (float, 0.5),
               "holder_region": ("floats", ()), "probe_x": (float, 0.0), "ito_seed": (int, 7),
               "lattice_ht": (float, 16.0), "lattice_hx": (float, 0.5)},
}

REQUIRED: dict[str, tuple[tuple[str, str], ...]] = {
    "sample": (("sheet", "H1"), ("sheet", "H2")),
    "moments": (("sheet", "H1"), ("sheet", "H2"), ("moments", "quantity")),
    "kernel": (),
    "renorm": (("sheet", "H1"), ("sheet", "H2")),
    "levy": (("sheet", "H1"), ("sheet", "H2")),
    "solve": (("sheet", "H1"), ("sheet", "H2")),
    "converge": (("sheet", "H1"), ("sheet", "H2"), ("solver", "levels")),
    "besov": (("sheet", "H1"), ("sheet", "H2")),
}

CHOICES = {
    ("moments", "quantity"): ("covariance", "increment", "test_curve"),
    ("levy", "mode"): ("chen", "scan"),
    ("solver", "equation"): ("young", "renormalized", "ito", "compare"),
    ("solver", "F"): ("bump_sin", "bump_affine", "zero"),
    ("solver", "psi0"): ("gauss", "one", "zero"),
}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(_format(g) for g in v)
        return ", ".join(_format(e) for e in v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    out: str
    sections: dict = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]):
        return self.sections[key[0]][key[1]]

    def section(self, name: str) -> dict:
        return self.sections[name]

    def hurst_pairs(self) -> list[tuple[float, float]]:
        h1, h2 = self[("sheet", "H1")] or (), self[("sheet", "H2")] or ()
        if len(h1) != len(h2):
            raise ConfigError("H1 and H2 lists differ in length")
        return list(zip(h1, h2))

    def replace(self, seed: int | None = None, out: str | None = None) -> "ExperimentConfig":
        secs = {k: dict(v) for k, v in self.sections.items()}
        if seed is not None:
            secs["experiment"]["seed"] = int(seed)
        if out is not None:
            secs["experiment"]["out"] = str(out)
        e = secs["experiment"]
        return ExperimentConfig(e["kind"], e["seed"], e["out"], secs)

    def to_text(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for key in keys:
                v = self.sections[sec][key]
                if v is None:
                    continue
                lines.append(f"{key} = {_format(v)}")
            lines.append("")
        return "\n".join(lines)


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    secs = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            typ = SCHEMA[sec][key][0]
            try:
                secs[sec][key] = _PARSE[typ](raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from exc
    cfg_kind = secs["experiment"]["kind"]
    if kind is not None:
        if cfg_kind is not None and cfg_kind != kind:
            raise ConfigError(f"config kind {cfg_kind!r} does not match subcommand {kind!r}")
        secs["experiment"]["kind"] = cfg_kind = kind
    if cfg_kind not in KINDS:
        raise ConfigError(f"experiment kind must be one of {', '.join(KINDS)}; got {cfg_kind!r}")
    for sec, key in REQUIRED[cfg_kind]:
        if secs[sec][key] in (None, ()):
            raise ConfigError(f"kind {cfg_kind!r} requires [{sec}] {key}")
    for (sec, key), allowed in CHOICES.items():
        v = secs[sec][key]
        if v is not None and v not in allowed:
            raise ConfigError(f"[{sec}] {key} must be one of {', '.join(allowed)}; got {v!r}")
    e = secs["experiment"]
    cfg = ExperimentConfig(cfg_kind, e["seed"], e["out"], secs)
    if secs["sheet"]["H1"] is not None:
        for h1, h2 in cfg.hurst_pairs():
            if not (0 < h1 < 1 and 0 < h2 < 1):
                raise ConfigError(f"Hurst indices must lie in (0, 1); got ({h1}, {h2})")
    return cfg


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, kind)
