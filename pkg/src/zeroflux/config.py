"""Flat ``section.key = value`` run configuration.

One assignment per line; ``#`` starts a comment; lists are comma separated.
Parsing collects every problem it finds and raises :class:`ConfigError`
with the full list, so a user can fix a file in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import (BUILTIN_PARAMS, InitialData, InvalidModelError, Problem, check_problem,
                    make_builtin)
from .solver import FLUX_SCHEMES, SolverConfig

REQUIRED = ("model.name", "grid.n", "solver.t_end")
ORACLES = ("heat", "fine_grid", "self")
TOLERANCE_KEYS = ("steady", "range", "mass", "contraction", "order_parabolic",
                  "order_degenerate")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _float(s):
    return float(s)


def _int(s):
    return int(s)


def _str(s):
    return s


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _list(conv):
    def parse(s):
        return [conv(p.strip()) for p in s.split(",") if p.strip()]
    parse.__name__ = f"list of {conv.__name__.lstrip('_')}"
    return parse


def _ge0(name):
    def check(v):
        return None if v >= 0 else f"{name} must be ≥ 0"
    return check


def _gt0(name):
    def check(v):
        return None if v > 0 else f"{name} must be > 0"
    return check


def _all_gt0(name):
    def check(v):
        return None if all(x > 0 for x in v) else f"{name} entries must be > 0"
    return check


def _choice(name, options):
    def check(v):
        return None if v in options else f"{name} must be one of {', '.join(options)}"
    return check


# key -> (parser, default, validator); default None means "not set"
SCHEMA = {
    "model.name": (_str, None, _choice("model.name", tuple(BUILTIN_PARAMS))),
    "model.dim": (_int, 1, _choice("model.dim", (1, 2))),
    "model.T": (_float, None, _gt0("model.T")),
    "domain.lo": (_list(_float), None, None),
    "domain.hi": (_list(_float), None, None),
    "grid.n": (_list(_int), None, _all_gt0("grid.n")),
    "initial.kind": (_str, None, _choice("initial.kind", ("constant", "step", "cosine", "file"))),
    "initial.value": (_float, None, None),
    "initial.left": (_float, None, None),
    "initial.right": (_float, None, None),
    "initial.position": (_float, None, None),
    "initial.axis": (_int, 0, None),
    "initial.coeffs": (_list(_float), None, None),
    "initial.file": (_str, None, None),
    "solver.eps": (_float, 0.0, _ge0("eps")),
    "solver.cfl_safety": (_float, 0.5, lambda v: None if 0 < v <= 1
                          else "cfl_safety must lie in (0, 1]"),
    "solver.flux_scheme": (_str, "engquist_osher", _choice("flux_scheme", FLUX_SCHEMES)),
    "solver.t_end": (_float, None, _gt0("t_end")),
    "solver.snapshots": (_int, 11, lambda v: None if v >= 2 else "snapshots must be ≥ 2"),
    "solver.max_steps": (_int, 10_000_000, _gt0("max_steps")),
    "output.dir": (_str, "out", None),
    "output.figures": (_bool, True, None),
    "verify.scenarios": (_list(_str), ["heat", "batch_sedimentation", "zero_flux_conservation"],
                         lambda v: None if all(s in BUILTIN_PARAMS for s in v)
                         else f"verify.scenarios entries must be among {sorted(BUILTIN_PARAMS)}"),
    "verify.seed": (_int, 0, None),
    "verify.pairs": (_int, 20, _ge0("pairs")),
    "verify.random_fields": (_int, 200, _ge0("random_fields")),
    "verify.steady_steps": (_int, 1000, _ge0("steady_steps")),
    "verify.contraction_t_end": (_float, 0.1, _gt0("contraction_t_end")),
    "verify.eps_schedule": (_list(_float), [], None),
    "verify.fixture": (_str, "none", _choice("verify.fixture", ("none", "dirichlet"))),
    "converge.levels": (_list(_int), [], None),
    "converge.oracle": (_str, "self", _choice("converge.oracle", ORACLES)),
    "entropy.k_count": (_int, 21, lambda v: None if v >= 2 else "k_count must be ≥ 2"),
    "entropy.delta_factors": (_list(_float), [8.0, 4.0, 2.0],
                              lambda v: None if len(v) >= 3 and all(x >= 2 for x in v)
                              else "delta_factors needs ≥ 3 entries, each ≥ 2"),
}
for _name, _defaults in BUILTIN_PARAMS.items():
    for _p in _defaults:
        SCHEMA.setdefault(f"model.{_p}", (_float, None, None))
for _t in TOLERANCE_KEYS:
    SCHEMA[f"tol.{_t}"] = (_float, None, _ge0(_t))


@dataclass
class RunConfig:
    values: dict
    explicit: set = field(default_factory=set)
    source: Path | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output.dir"])

    @property
    def grid_n(self):
        n = self.values["grid.n"]
        return n[0] if len(n) == 1 else tuple(n)

    def model_params(self, name: str | None = None) -> dict:
        name = name or self.values["model.name"]
        p = {k: self.values[f"model.{k}"] for k in BUILTIN_PARAMS[name]
             if self.values.get(f"model.{k}") is not None}
        p["dim"] = self.values["model.dim"]
        p["T"] = self.get("model.T", self.values["solver.t_end"])
        if self.values.get("domain.lo") is not None:
            p["lo"] = tuple(self.values["domain.lo"])
        if self.values.get("domain.hi") is not None:
            p["hi"] = tuple(self.values["domain.hi"])
        return p

    def initial_data(self) -> InitialData | None:
        kind = self.values.get("initial.kind")
        if kind is None:
            return None
        v = self.values
        if kind == "constant":
            return InitialData("constant", {"value": v["initial.value"]})
        if kind == "step":
            return InitialData("step", {"left": v["initial.left"], "right": v["initial.right"],
                                        "position": v["initial.position"],
                                        "axis": v["initial.axis"]})
        if kind == "cosine":
            return InitialData("cosine", {"coeffs": v["initial.coeffs"]})
        from .csvio import read_snapshot_values
        path = Path(v["initial.file"])
        if not path.is_absolute() and self.source is not None:
            path = self.source.parent / path
        return InitialData("file", {"values": read_snapshot_values(path)})

    def problem(self, name: str | None = None) -> Problem:
        """Build and structurally validate the configured problem."""
        own = name is None or name == self.values["model.name"]
        name = name or self.values["model.name"]
        params = self.model_params(name) if own else {
            "dim": self.values["model.dim"], "T": self.values["solver.t_end"]}
        if own and self.initial_data() is not None:
            params["initial"] = self.initial_data()
        try:
            problem = make_builtin(name, params)
            check_problem(problem)
        except InvalidModelError as exc:
            raise ConfigError([str(exc)]) from exc
        return problem

    def solver_config(self, t_end: float | None = None) -> SolverConfig:
        t_end = self.values["solver.t_end"] if t_end is None else t_end
        return SolverConfig.uniform(
            t_end, self.values["solver.snapshots"], eps=self.values["solver.eps"],
            cfl_safety=self.values["solver.cfl_safety"],
            flux_scheme=self.values["solver.flux_scheme"],
            max_steps=self.values["solver.max_steps"])

    def tolerances(self) -> dict:
        return {t: self.values[f"tol.{t}"] for t in TOLERANCE_KEYS
                if self.values.get(f"tol.{t}") is not None}

    def echo(self) -> dict:
        """Every explicitly set key with its typed value, in schema order."""
        return {k: self.values[k] for k in SCHEMA if k in self.explicit}


def parse_config(text: str, source=None) -> RunConfig:
    errors: list[str] = []
    seen: dict[str, int] = {}
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} "
                          f"(first set on line {seen[key]}, again on line {lineno})")
            continue
        seen[key] = lineno
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        raw[key] = (value, lineno)

    values = {k: entry[1] for k, entry in SCHEMA.items()}
    for key, (value, lineno) in raw.items():
        conv, _, check = SCHEMA[key]
        try:
            typed = conv(value)
        except ValueError:
            errors.append(f"line {lineno}: {key} expects {conv.__name__.lstrip('_')}, "
                          f"got {value!r}")
            continue
        msg = check(typed) if check is not None else None
        if msg:
            errors.append(f"line {lineno}: {msg}")
            continue
        values[key] = typed

    for key in REQUIRED:
        if key not in raw:
            errors.append(f"missing required key {key!r}")

    name = values.get("model.name")
    if name in BUILTIN_PARAMS:
        for key in raw:
            if key.startswith("model.") and key[6:] in _all_model_params() \
                    and key[6:] not in BUILTIN_PARAMS[name]:
                errors.append(f"line {raw[key][1]}: {key} is not a parameter of {name}")
    kind = values.get("initial.kind")
    needs = {"constant": ("value",), "step": ("left", "right", "position"),
             "cosine": ("coeffs",), "file": ("file",)}
    for p in needs.get(kind, ()):
        if values.get(f"initial.{p}") is None:
            errors.append(f"initial.kind = {kind} requires initial.{p}")
    if values.get("grid.n") and len(values["grid.n"]) not in (1, values["model.dim"]):
        errors.append("grid.n must give one count or one per axis")

    if errors:
        raise ConfigError(errors)
    return RunConfig(values, set(raw), Path(source) if source is not None else None)


def _all_model_params() -> set:
    return {p for d in BUILTIN_PARAMS.values() for p in d}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    return parse_config(text, source=path)
