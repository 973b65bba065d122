"""Run configuration: a TOML file with a fixed schema.

Example::

    [problem]
    preset = "custom"          # example1 | example1-literal | example2..4 | custom
    geometry = "fichera"       # custom only
    T = 0.1
    k = 2
    l = 4

    [sigma]                    # custom only
    kind = "arctan"            # constant | arctan | tabulated

    [data]                     # custom only; expressions in x1, x2, x3, t
    g_phi = "10*(x1 + 1)"

    [boundary]                 # custom only; Dirichlet tags per field
    temperature = [1, 7]
    potential = [1, 7]

Every section is optional.  ``serialize`` writes the full schema back so
``parse(serialize(cfg)) == cfg``.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli

from .fem import CutoffBounds
from .linalg import SolverConfig
from .mesh import FICHERA_TAGS, UNIT_CUBE_TAGS, BoundaryPartition, fichera_mesh, unit_cube_mesh
from .presets import PRESETS, Preset, get_preset
from .solver import FixedPointConfig, ProblemData, SigmaModel

K_MAX = 6
L_MAX = 12


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": (np.sin, 1), "cos": (np.cos, 1), "exp": (np.exp, 1), "arctan": (np.arctan, 1),
          "pow": (np.power, 2), "min": (np.minimum, 2), "max": (np.maximum, 2)}
_NAMES = ("x1", "x2", "x3", "t", "pi")


class Expression:
    """Arithmetic expression over x1, x2, x3, t; evaluated as ``expr(x, t)``."""

    def __init__(self, source: str):
        self.source = str(source)
        try:
            tree = ast.parse(self.source.strip(), mode="eval")
        except SyntaxError as e:
            raise ConfigError(f"cannot parse expression {source!r}: {e.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name) and node.id in _NAMES:
            pass
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and not node.keywords:
            if len(node.args) != _FUNCS[node.func.id][1]:
                raise ConfigError(f"{node.func.id} takes {_FUNCS[node.func.id][1]} argument(s)")
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError(f"unsupported construct {ast.dump(node)[:40]!r} in {self.source!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        func = _FUNCS[node.func.id][0]
        return func(*[self._eval(a, env) for a in node.args])

    def __call__(self, x, t=0.0):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        env = {"x1": x[:, 0], "x2": x[:, 1], "x3": x[:, 2], "t": float(t), "pi": math.pi}
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(x),)).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.source == self.source


# ---------------------------------------------------------------- schema

@dataclass
class ProblemSection:
    preset: str = "example1"
    geometry: str = ""
    T: float = 0.0  # 0 keeps the preset value
    k: int = 1
    l: int = 1


@dataclass
class SigmaSection:
    kind: str = "constant"
    value: float = 1.0
    u: list = field(default_factory=list)
    s: list = field(default_factory=list)


@dataclass
class DataSection:
    g_u: str = "0"
    g_phi: str = "0"
    u0: str = "0"
    f: str = ""
    g_N: str = ""


@dataclass
class BoundarySection:
    temperature: list = field(default_factory=list)
    potential: list = field(default_factory=list)


@dataclass
class ClampSection:
    a: float = -math.inf
    b: float = math.inf


@dataclass
class SolverSection:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iter: int = 0  # 0 means 10 n
    preconditioner: str = "jacobi"
    fp_tol: float = 1e-10
    fp_max_iter: int = 50


@dataclass
class ConvergenceSection:
    k_min: int = 1
    k_max: int = 3
    l_rule: str = "l=k"  # or "fixed"
    reference_k: int = 0  # 0: compare with the exact solution


@dataclass
class AdaptSection:
    theta: float = 0.5
    max_vertices: int = 1400
    tol: float = 1e-3
    max_refinements_per_step: int = 8
    dual_weight: str = "recovery"
    baseline_k: int = 0  # 0: no uniform baseline
    reference_k: int = 0


@dataclass
class OutputSection:
    dir: str = "out"
    vtk: bool = True
    plots: bool = True
    seed: int = 0


SECTIONS = {"problem": ProblemSection, "sigma": SigmaSection, "data": DataSection,
            "boundary": BoundarySection, "clamp": ClampSection, "solver": SolverSection,
            "convergence": ConvergenceSection, "adapt": AdaptSection, "output": OutputSection}


@dataclass
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    sigma: SigmaSection = field(default_factory=SigmaSection)
    data: DataSection = field(default_factory=DataSection)
    boundary: BoundarySection = field(default_factory=BoundarySection)
    clamp: ClampSection = field(default_factory=ClampSection)
    solver: SolverSection = field(default_factory=SolverSection)
    convergence: ConvergenceSection = field(default_factory=ConvergenceSection)
    adapt: AdaptSection = field(default_factory=AdaptSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self):
        p = self.problem
        if p.preset not in PRESETS and p.preset != "custom":
            raise ConfigError(f"[problem] preset: unknown {p.preset!r}")
        if p.preset == "custom" and p.geometry not in ("unit_cube", "fichera"):
            raise ConfigError("[problem] geometry: must be unit_cube or fichera for custom data")
        if not 0 <= p.k <= K_MAX:
            raise ConfigError(f"[problem] k: {p.k} outside [0, {K_MAX}]")
        if not 0 <= p.l <= L_MAX:
            raise ConfigError(f"[problem] l: {p.l} outside [0, {L_MAX}]")
        if p.T < 0:
            raise ConfigError("[problem] T: must be positive")
        if self.sigma.kind not in ("constant", "arctan", "tabulated"):
            raise ConfigError(f"[sigma] kind: unknown {self.sigma.kind!r}")
        if self.clamp.a > self.clamp.b:
            raise ConfigError("[clamp] a: exceeds b")
        if self.convergence.l_rule not in ("l=k", "fixed"):
            raise ConfigError("[convergence] l_rule: must be 'l=k' or 'fixed'")
        c = self.convergence
        if not 0 <= c.k_min <= c.k_max <= K_MAX:
            raise ConfigError("[convergence] k_min/k_max: need 0 <= k_min <= k_max <= K_MAX")
        if c.reference_k and c.reference_k <= c.k_max:
            raise ConfigError("[convergence] reference_k: must exceed k_max")
        if not 0 < self.adapt.theta <= 1:
            raise ConfigError("[adapt] theta: must lie in (0, 1]")
        if self.adapt.dual_weight not in ("recovery", "refined"):
            raise ConfigError("[adapt] dual_weight: recovery or refined")
        if self.solver.preconditioner not in ("jacobi", "none"):
            raise ConfigError("[solver] preconditioner: jacobi or none")
        if p.preset == "custom":
            for f in fields(DataSection):
                src = getattr(self.data, f.name)
                if src:
                    try:
                        Expression(src)
                    except ConfigError as e:
                        raise ConfigError(f"[data] {f.name}: {e}") from None
        return self

    # -- building runtime objects

    def build_preset(self) -> Preset:
        p = self.problem
        if p.preset != "custom":
            preset = get_preset(p.preset)
        else:
            preset = self._custom_preset()
        if p.T > 0:
            preset.T = p.T
        if math.isfinite(self.clamp.a) or math.isfinite(self.clamp.b):
            preset.data.clamp = CutoffBounds(self.clamp.a, self.clamp.b)
        return preset

    def _custom_preset(self) -> Preset:
        geometry = self.problem.geometry
        mesh = unit_cube_mesh(0) if geometry == "unit_cube" else fichera_mesh(0)
        tags = set(mesh.tags)
        d_u = set(self.boundary.temperature) or tags
        d_phi = set(self.boundary.potential) or tags
        for name, d in (("temperature", d_u), ("potential", d_phi)):
            if not d <= tags:
                raise ConfigError(f"[boundary] {name}: unknown tags {sorted(d - tags)}")
        d = self.data

        def expr(src):
            return Expression(src) if src else None

        data = ProblemData(
            sigma=self.sigma_model(),
            partition_u=BoundaryPartition.from_dirichlet(mesh, "temperature", d_u),
            partition_phi=BoundaryPartition.from_dirichlet(mesh, "potential", d_phi),
            g_u=expr(d.g_u) or 0.0, g_phi=expr(d.g_phi) or 0.0, u0=expr(d.u0) or 0.0,
            f=expr(d.f), g_N=expr(d.g_N), name="custom",
        )
        return Preset("custom", geometry, data, self.problem.T or 0.1)

    def sigma_model(self) -> SigmaModel:
        s = self.sigma
        if s.kind == "constant":
            if s.value <= 0:
                raise ConfigError("[sigma] value: must be positive")
            return SigmaModel.constant(s.value)
        if s.kind == "arctan":
            return SigmaModel.arctan()
        if len(s.u) != len(s.s) or len(s.u) < 2:
            raise ConfigError("[sigma] u, s: tables of equal length >= 2 required")
        try:
            model = SigmaModel.tabulated(s.u, s.s)
        except ValueError as e:
            raise ConfigError(f"[sigma] u: {e}") from None
        if model.lower <= 0:
            raise ConfigError("[sigma] s: values must be positive")
        return model

    def fixed_point(self) -> FixedPointConfig:
        s = self.solver
        lin = SolverConfig(rel_tol=s.rel_tol, abs_tol=s.abs_tol, max_iter=s.max_iter or None,
                           preconditioner=s.preconditioner)
        return FixedPointConfig(tol=s.fp_tol, max_iter=s.fp_max_iter, linear=lin)


def tag_names(geometry: str) -> dict:
    return UNIT_CUBE_TAGS if geometry == "unit_cube" else FICHERA_TAGS


# ---------------------------------------------------------------- parse / serialize

def _coerce(section: str, key: str, value, default):
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return list(value)
    raise ConfigError(f"{where}: unsupported type")


def from_dict(raw: dict) -> RunConfig:
    cfg = RunConfig()
    for section, values in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"[{section}]: unknown section")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}]: expected a table")
        target = getattr(cfg, section)
        known = {f.name: f for f in fields(target)}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"[{section}] {key}: unknown key")
            setattr(target, key, _coerce(section, key, value, getattr(target, key)))
    return cfg.validate()


def parse(text: str) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}") from None
    return from_dict(raw)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse(text)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def serialize(cfg: RunConfig) -> str:
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for key, value in asdict(getattr(cfg, section)).items():
            out.append(f"{key} = {_toml_value(value)}")
        out.append("")
    return "\n".join(out)
