"""Experiment configuration files: INI sections with arithmetic values."""

from __future__ import annotations

import ast
import configparser
import hashlib
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..geometry import Annulus, Disk, Ellipse, PoleConfiguration, Rectangle
from ..mesh import GradingSpec

KINDS = ("limit", "perturbed-sweep", "potential-sweep", "blowup", "scan-zeta", "twopole", "hardy", "report")
DEFAULT_EPS = tuple(0.2 * 0.5 ** i for i in range(5))


class ConfigError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "sin": math.sin, "cos": math.cos, "atan2": math.atan2}


def evaluate(text: str) -> float:
    """Arithmetic on numbers, pi, e and a few math functions; nothing else is evaluated."""
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                and not node.keywords):
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ConfigError(f"unsupported expression in {text!r}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse {text!r}") from exc
    return float(ev(tree))


def number_list(text: str):
    text = text.strip()
    if not text:
        return []
    return [evaluate(p) for p in text.replace(";", ",").split(",") if p.strip()]


@dataclass
class ExperimentConfig:
    kind: str
    domain: object = None
    poles: PoleConfiguration | None = None
    index: int = 1
    eps: tuple = DEFAULT_EPS
    h: float = 0.05
    grading: GradingSpec = field(default_factory=GradingSpec)
    tol: float = 1e-10
    nev: int = 4
    richardson: bool = False
    sections: dict = field(default_factory=dict)   # raw extra sections, e.g. profile, reference
    source: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.index < 1:
            raise ConfigError("eigenvalue index must be >= 1")
        eps = tuple(float(e) for e in self.eps)
        if any(not (0.0 < e <= 1.0) for e in eps):
            raise ConfigError("eps values must lie in (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        self.eps = eps
        if self.h <= 0:
            raise ConfigError("mesh h must be positive")

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def value(self, section: str, key: str, default=None):
        raw = self.section(section).get(key)
        if raw is None:
            return default
        try:
            return evaluate(raw)
        except ConfigError:
            return raw

    def with_overrides(self, h: float | None = None, eps=None) -> "ExperimentConfig":
        cfg = self
        if h is not None:
            cfg = replace(cfg, h=float(h))
        if eps:
            cfg = replace(cfg, eps=tuple(float(e) for e in eps))
        return cfg

    def canonical(self) -> str:
        """Stable text of every setting that influences the results."""
        lines = [f"kind={self.kind}", f"domain={self.domain!r}", f"poles={self.poles!r}",
                 f"index={self.index}", "eps=" + ",".join(repr(e) for e in self.eps),
                 f"h={self.h!r}", f"grading={self.grading!r}", f"tol={self.tol!r}",
                 f"nev={self.nev}", f"richardson={self.richardson}"]
        for name in sorted(self.sections):
            for key in sorted(self.sections[name]):
                lines.append(f"{name}.{key}={self.sections[name][key].strip()}")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _domain(sec) -> object:
    if not sec:
        return None
    kind = sec.get("type", "rectangle").strip().lower()
    g = lambda k, d=None: evaluate(sec[k]) if k in sec else d
    if kind == "rectangle":
        return Rectangle(g("xmin", -0.5), g("xmax", 0.5), g("ymin", -0.5), g("ymax", 0.5))
    if kind == "ellipse":
        return Ellipse(g("a", 1.0), g("b", 1.0))
    if kind == "disk":
        return Disk(g("radius", 1.0))
    if kind == "annulus":
        return Annulus(g("r_in", 1.0), g("r_out", 2.0))
    raise ConfigError(f"unknown domain type {kind!r}")


def _poles(sec) -> PoleConfiguration | None:
    if not sec:
        return None
    try:
        return PoleConfiguration(int(evaluate(sec.get("k1", "0"))), int(evaluate(sec.get("k2", "0"))),
                                 number_list(sec.get("angles", "")), number_list(sec.get("radii", "")),
                                 evaluate(sec.get("R", "0.5")))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [poles] block: {exc}") from exc


def _flag(text: str) -> bool:
    return text.strip().lower() in ("1", "yes", "true", "on")


def parse_config(text: str, source: str = "") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    sec = {s: dict(cp[s]) for s in cp.sections()}
    exp = sec.pop("experiment", {})
    if "kind" not in exp:
        raise ConfigError("[experiment] needs a kind")
    mesh = sec.pop("mesh", {})
    solver = sec.pop("solver", {})
    gd = GradingSpec()
    grading = GradingSpec(q=evaluate(mesh.get("q", repr(gd.q))), depth=int(evaluate(mesh.get("depth", repr(gd.depth)))),
                          ratio=evaluate(mesh.get("ratio", repr(gd.ratio))),
                          min_angle=evaluate(mesh.get("min_angle", repr(gd.min_angle))))
    kw = dict(kind=exp["kind"].strip(), domain=_domain(sec.pop("domain", {})), poles=_poles(sec.pop("poles", {})),
              grading=grading, sections=sec, source=source)
    if "index" in exp:
        kw["index"] = int(evaluate(exp["index"]))
    if "eps" in exp:
        kw["eps"] = tuple(number_list(exp["eps"]))
    if "h" in mesh:
        kw["h"] = evaluate(mesh["h"])
    if "richardson" in mesh:
        kw["richardson"] = _flag(mesh["richardson"])
    if "tol" in solver:
        kw["tol"] = evaluate(solver["tol"])
    if "nev" in solver:
        kw["nev"] = int(evaluate(solver["nev"]))
    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text, str(p))
