"""Problem definitions, the built-in fixtures and their YAML form.

A problem file states only deviations from the defaults; every value of the
parameter table is a default of the corresponding dataclass.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .adjoint import ObjectiveSpec, Spring
from .fem import MaterialParams
from .masks import MaskBounds, MaskSet
from .mesh import HexMesh, generate_mesh
from .optimizer import OptimizerConfig
from .pressure import PressureModelParams
from .smoothing import SmoothingConfig

SIDES = ("bottom", "top", "left", "right")
BUILTINS = ("ddomain1", "ddomain2", "arch", "piston", "inverter", "gripper")


class ProblemError(ValueError):
    """Invalid problem definition; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class Selector:
    """Nodes on part of one side (fractions along it) or the node nearest a point."""

    side: str | None = None
    lo: float = 0.0
    hi: float = 1.0
    point: tuple[float, float] | None = None

    def __post_init__(self):
        if (self.side is None) == (self.point is None):
            raise ValueError("selector needs exactly one of 'side' or 'point'")
        if self.side is not None and self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError("selector range must satisfy 0 <= lo <= hi <= 1")

    def nodes(self, mesh: HexMesh) -> np.ndarray:
        lx, ly = mesh.domain
        if self.point is not None:
            x, y = self.point
            slack = mesh.cell_width
            if not (-slack <= x <= lx + slack and -slack <= y <= ly + slack):
                raise ValueError(f"point {self.point} lies outside the domain")
            d = np.hypot(mesh.nodes[:, 0] - x, mesh.nodes[:, 1] - y)
            return np.array([int(np.argmin(d))])
        ids = mesh.side_nodes(self.side)
        along = mesh.nodes[ids, 0] / lx if self.side in ("bottom", "top") else mesh.nodes[ids, 1] / ly
        tol = 1e-9
        ids = ids[(along >= self.lo - tol) & (along <= self.hi + tol)]
        if ids.size == 0:
            raise ValueError(f"selector {self} matches no node")
        return ids

    def overlaps(self, other: "Selector") -> bool:
        if self.side is None or other.side is None or self.side != other.side:
            return False
        return max(self.lo, other.lo) < min(self.hi, other.hi)


@dataclass(frozen=True)
class Support:
    at: Selector
    dofs: str = "xy"

    def __post_init__(self):
        if self.dofs not in ("x", "y", "xy"):
            raise ValueError("dofs must be 'x', 'y' or 'xy'")


@dataclass(frozen=True)
class PassiveRegion:
    """Axis-aligned rectangle (metres) whose elements are held solid or void."""

    x0: float
    y0: float
    x1: float
    y1: float
    solid: bool = True

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("passive region must have positive extent")

    def elements(self, mesh: HexMesh) -> np.ndarray:
        c = mesh.centroids()
        # Half-open so that touching rectangles never share an element.
        inside = (c[:, 0] >= self.x0) & (c[:, 0] < self.x1) & (c[:, 1] >= self.y0) & (c[:, 1] < self.y1)
        return np.flatnonzero(inside)


@dataclass(frozen=True)
class SpringSpec:
    at: Selector
    direction: tuple[float, float]
    stiffness: float

    def __post_init__(self):
        if self.stiffness <= 0:
            raise ValueError("spring stiffness must be positive")


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "compliance"
    chi: float = 1.0
    output: Selector | None = None
    direction: tuple[float, float] = (1.0, 0.0)


@dataclass(frozen=True)
class MaskConfig:
    radius_factor: float = 30.0  # mR in units of the element edge length
    f_l: float = 0.001
    f_u: float = 1.0
    alpha: tuple[float, float] = (1.0, 30.0)
    gamma: tuple[float, float] = (1.0, 30.0)
    alpha0: float = 1.0
    gamma0: float = 1.0

    def __post_init__(self):
        if not 0 < self.f_l < self.f_u:
            raise ValueError("need 0 < f_l < f_u")
        for lo, hi in (self.alpha, self.gamma):
            if not 0 < lo <= hi:
                raise ValueError("alpha/gamma bounds must satisfy 0 < lower <= upper")
        if not self.alpha[0] <= self.alpha0 <= self.alpha[1]:
            raise ValueError("initial alpha outside its bounds")
        if not self.gamma[0] <= self.gamma0 <= self.gamma[1]:
            raise ValueError("initial gamma outside its bounds")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    n_ex: int
    n_ey: int
    L_x: float
    L_y: float
    supports: tuple[Support, ...] = ()
    symmetry: str | None = None  # side carrying a roller (normal displacement zero)
    pressure_inlet: tuple[Selector, ...] = ()
    zero_pressure: tuple[Selector, ...] = ()
    passive: tuple[PassiveRegion, ...] = ()
    springs: tuple[SpringSpec, ...] = ()
    objective: ObjectiveConfig = ObjectiveConfig()
    V_star: float = 0.2
    delta: float | None = None
    masks: MaskConfig = MaskConfig()
    pressure: PressureModelParams = PressureModelParams()
    material: MaterialParams = MaterialParams()
    optimizer: OptimizerConfig = OptimizerConfig()
    smoothing: SmoothingConfig = SmoothingConfig()
    analysis_density: float = 0.01  # background density for analysis-only runs
    notes: str = ""

    def __post_init__(self):
        if int(self.n_ex) != self.n_ex or int(self.n_ey) != self.n_ey or self.n_ex < 1 or self.n_ey < 1:
            raise ValueError("element counts must be positive integers")
        if not (self.L_x > 0 and self.L_y > 0):
            raise ValueError("domain lengths must be positive")
        if self.symmetry is not None and self.symmetry not in SIDES:
            raise ValueError(f"unknown symmetry side {self.symmetry!r}")
        if not 0 < self.V_star <= 1:
            raise ValueError("V_star must lie in (0, 1]")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 <= self.analysis_density <= 1:
            raise ValueError("analysis_density must lie in [0, 1]")
        if not self.pressure_inlet:
            raise ValueError("at least one pressure inlet selector is required")
        for a in self.pressure_inlet:
            for b in self.zero_pressure:
                if a == b or a.overlaps(b):
                    raise ValueError(f"inlet {a} overlaps zero-pressure {b}")
        if self.objective.kind == "multicriteria" and self.objective.output is None:
            raise ValueError("mechanism objective needs an output selector")

    def with_mesh(self, n_ex: int, n_ey: int) -> "ProblemSpec":
        return replace(self, n_ex=n_ex, n_ey=n_ey)


@dataclass
class Setup:
    """A problem resolved on a concrete mesh."""

    spec: ProblemSpec
    mesh: HexMesh
    fixed_dofs: np.ndarray
    pressure_bc: dict[int, float]
    springs: tuple[Spring, ...]
    objective: ObjectiveSpec
    solid_elements: np.ndarray
    void_elements: np.ndarray
    bc_nodes: np.ndarray = field(repr=False)

    def apply_passive(self, rho) -> np.ndarray:
        rho = np.array(rho, dtype=float)
        rho[self.solid_elements] = 1.0
        rho[self.void_elements] = 0.0
        return rho

    @property
    def passive_elements(self) -> np.ndarray:
        return np.union1d(self.solid_elements, self.void_elements)

    def analysis_density(self) -> np.ndarray:
        return self.apply_passive(np.full(self.mesh.n_el, self.spec.analysis_density))

    def mask_bounds(self) -> MaskBounds:
        m = self.spec.masks
        return MaskBounds(mR=m.radius_factor * self.mesh.mean_edge_length, f_l=m.f_l, f_u=m.f_u,
                          alpha=m.alpha, gamma=m.gamma)

    def initial_masks(self, n_mx: int | None = None, n_my: int | None = None) -> MaskSet:
        opt = self.spec.optimizer
        m = self.spec.masks
        return MaskSet.grid(n_mx or opt.n_mx, n_my or opt.n_my, self.mesh.domain, self.mask_bounds(),
                            alpha=m.alpha0, gamma=m.gamma0)


def _unit(direction) -> tuple[float, float]:
    d = np.asarray(direction, float)
    n = np.linalg.norm(d)
    if n == 0:
        raise ValueError("direction must be nonzero")
    return tuple(float(v) for v in d / n)


def resolve(spec: ProblemSpec, mesh: HexMesh | None = None) -> Setup:
    """Map selectors to nodes, DOFs and elements on the problem mesh."""
    mesh = mesh or generate_mesh(spec.n_ex, spec.n_ey, spec.L_x, spec.L_y)
    fixed = []
    for s in spec.supports:
        nodes = s.at.nodes(mesh)
        if "x" in s.dofs:
            fixed.append(2 * nodes)
        if "y" in s.dofs:
            fixed.append(2 * nodes + 1)
    if spec.symmetry is not None:
        nodes = mesh.side_nodes(spec.symmetry)
        fixed.append(2 * nodes + (1 if spec.symmetry in ("bottom", "top") else 0))
    fixed_dofs = np.unique(np.concatenate(fixed)) if fixed else np.zeros(0, dtype=np.int64)

    inlet = np.unique(np.concatenate([s.nodes(mesh) for s in spec.pressure_inlet]))
    zero = (np.unique(np.concatenate([s.nodes(mesh) for s in spec.zero_pressure]))
            if spec.zero_pressure else np.zeros(0, dtype=np.int64))
    zero = np.setdiff1d(zero, inlet)  # shared corner nodes stay at the inlet pressure
    bc = {int(n): spec.pressure.p_in for n in inlet}
    bc.update({int(n): 0.0 for n in zero})

    springs = tuple(
        Spring(int(s.at.nodes(mesh)[0]), _unit(s.direction), s.stiffness) for s in spec.springs
    )
    o = spec.objective
    if o.kind == "multicriteria":
        objective = ObjectiveSpec("multicriteria", o.chi, int(o.output.nodes(mesh)[0]), _unit(o.direction))
    else:
        objective = ObjectiveSpec(o.kind, o.chi)

    solid = [r.elements(mesh) for r in spec.passive if r.solid]
    void = [r.elements(mesh) for r in spec.passive if not r.solid]
    solid = np.unique(np.concatenate(solid)) if solid else np.zeros(0, dtype=np.int64)
    void = np.unique(np.concatenate(void)) if void else np.zeros(0, dtype=np.int64)
    if np.intersect1d(solid, void).size:
        raise ValueError("solid and void passive regions overlap")
    bc_nodes = np.unique(np.concatenate([fixed_dofs // 2, inlet, zero]))
    return Setup(spec, mesh, fixed_dofs, bc, springs, objective, solid, void, bc_nodes)


# --------------------------------------------------------------------------
# Built-in fixtures. Support extents and inlet/outlet edges are read off
# drawings, so they are approximations of the original set-ups.


def _side(side, lo=0.0, hi=1.0):
    return Selector(side=side, lo=lo, hi=hi)


def builtin(name: str) -> ProblemSpec:
    if name not in BUILTINS:
        raise ProblemError(f"unknown built-in problem {name!r}; choose from {', '.join(BUILTINS)}")
    if name in ("ddomain1", "ddomain2"):
        lx, ly = 0.2 * np.cos(np.pi / 6), 0.2 * np.sin(np.pi / 6)
        common = dict(n_ex=80, n_ey=60, L_x=lx, L_y=ly,
                      supports=(Support(_side("bottom", 0.0, 0.05)), Support(_side("bottom", 0.95, 1.0))),
                      pressure_inlet=(_side("bottom"),), analysis_density=0.01,
                      notes="analysis fixture; supports approximate")
        if name == "ddomain1":
            return ProblemSpec(name=name, zero_pressure=(_side("top"), _side("left"), _side("right")), **common)
        layers = (PassiveRegion(-ly, 0.3 * ly, lx + ly, 0.4 * ly, True),
                  PassiveRegion(-ly, 0.6 * ly, lx + ly, 0.7 * ly, True))
        return ProblemSpec(name=name, zero_pressure=(_side("top"),), passive=layers, **common)

    if name == "arch":
        return ProblemSpec(
            name=name, n_ex=200, n_ey=100, L_x=0.2, L_y=0.1,
            supports=(Support(_side("bottom", 0.0, 0.05)), Support(_side("bottom", 0.95, 1.0))),
            pressure_inlet=(_side("bottom"),),
            zero_pressure=(_side("top"), _side("left"), _side("right")),
            V_star=0.2, delta=0.003,
            optimizer=OptimizerConfig(max_iters=500, step=0.03, n_mx=20, n_my=10),
            smoothing=SmoothingConfig(beta=0),
            notes="support extents approximate",
        )
    if name == "piston":
        fast = PressureModelParams(beta_K=12, beta_D=12, eta_K=0.25, eta_D=0.25)
        return ProblemSpec(
            name=name, n_ex=120, n_ey=80, L_x=0.06, L_y=0.04,
            supports=(Support(_side("bottom", 0.0, 0.1)),),
            symmetry="right",
            pressure_inlet=(_side("top"),),
            zero_pressure=(_side("bottom"),),
            V_star=0.3, delta=0.003,
            masks=MaskConfig(alpha=(1.0, 40.0), gamma=(1.0, 20.0)),
            pressure=fast,
            optimizer=OptimizerConfig(max_iters=500, step=0.025, n_mx=10, n_my=10),
            notes="symmetric half; support extents approximate",
        )
    lx, ly = 0.2, 0.1
    if name == "inverter":
        return ProblemSpec(
            name=name, n_ex=200, n_ey=100, L_x=lx, L_y=ly,
            supports=(Support(_side("left", 0.9, 1.0)),),
            symmetry="bottom",
            pressure_inlet=(_side("left", 0.0, 0.9),),
            zero_pressure=(_side("right"), _side("top")),
            springs=(SpringSpec(Selector(point=(lx, 0.0)), (-1.0, 0.0), 1e4),),
            objective=ObjectiveConfig("multicriteria", 1.0, Selector(point=(lx, 0.0)), (-1.0, 0.0)),
            V_star=0.2, delta=0.005,
            masks=MaskConfig(alpha=(1.0, 60.0), gamma=(1.0, 50.0)),
            pressure=PressureModelParams(beta_K=12, beta_D=12, eta_K=0.25, eta_D=0.25),
            optimizer=OptimizerConfig(max_iters=600, step=0.01, n_mx=20, n_my=10),
            notes="symmetric half; support extents approximate",
        )
    # gripper
    seat = PassiveRegion(0.9 * lx, -ly, 2 * lx, lx / 10, solid=False)
    jaw = PassiveRegion(0.9 * lx, lx / 10, 2 * lx, lx / 10 + lx / 40, solid=True)
    out = Selector(point=(lx, lx / 10))
    return ProblemSpec(
        name=name, n_ex=200, n_ey=100, L_x=lx, L_y=ly,
        supports=(Support(_side("left", 0.9, 1.0)),),
        symmetry="bottom",
        pressure_inlet=(_side("left", 0.0, 0.9),),
        zero_pressure=(_side("right"), _side("top")),
        passive=(seat, jaw),
        springs=(SpringSpec(out, (0.0, -1.0), 5e4),),
        objective=ObjectiveConfig("multicriteria", 1.0, out, (0.0, -1.0)),
        V_star=0.25, delta=0.005,
        masks=MaskConfig(alpha=(1.0, 60.0), gamma=(1.0, 20.0)),
        pressure=PressureModelParams(beta_K=10, beta_D=10, eta_K=0.25, eta_D=0.25),
        optimizer=OptimizerConfig(max_iters=600, step=0.01, n_mx=12, n_my=12),
        notes="symmetric half; support extents approximate",
    )


# --------------------------------------------------------------------------
# YAML form


_SECTIONS = {
    "objective": ObjectiveConfig,
    "masks": MaskConfig,
    "pressure": PressureModelParams,
    "material": MaterialParams,
    "optimizer": OptimizerConfig,
    "smoothing": SmoothingConfig,
}
_LISTS = {
    "supports": Support,
    "pressure_inlet": Selector,
    "zero_pressure": Selector,
    "passive": PassiveRegion,
    "springs": SpringSpec,
}


def _plain(node, lines, path=()):
    """YAML node tree to Python values, recording the line of every path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ProblemError(f"duplicate key {key!r}", k.start_mark.line + 1)
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _plain(v, lines, path + (key,))
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, lines, path + (i,)) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _build(cls, data, lines, path):
    line = lines.get(path)
    if not isinstance(data, dict):
        raise ProblemError(f"{'.'.join(map(str, path)) or 'document'} must be a mapping", line)
    known = {f.name for f in fields(cls)}
    aliases = {"from": "lo", "to": "hi"} if cls is Selector else {}
    kwargs = {}
    for key, value in data.items():
        name = aliases.get(key, key)
        if name not in known:
            raise ProblemError(f"unknown key {key!r} in {cls.__name__}", lines.get(path + (key,)))
        sub = path + (key,)
        if cls is Support and name == "at" or cls is SpringSpec and name == "at" or \
                cls is ObjectiveConfig and name == "output":
            value = None if value is None else _build(Selector, value, lines, sub)
        elif isinstance(value, list) and name not in _LISTS:
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ProblemError(f"{cls.__name__}: {exc}", line) from exc


def parse_problem(text: str) -> ProblemSpec:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ProblemError(f"YAML syntax error: {exc}", mark.line + 1 if mark else None) from exc
    if root is None:
        raise ProblemError("empty problem file", 1)
    lines: dict = {}
    data = _plain(root, lines)
    if not isinstance(data, dict):
        raise ProblemError("problem file must be a mapping", 1)
    base = None
    if "base" in data:
        base = builtin(data.pop("base"))
    kwargs = {}
    known = {f.name for f in fields(ProblemSpec)}
    for key, value in data.items():
        line = lines.get((key,))
        if key not in known:
            raise ProblemError(f"unknown key {key!r}", line)
        if key in _SECTIONS:
            merged = dict(_as_dict(getattr(base, key))) if base is not None else {}
            merged.update(value or {})
            kwargs[key] = _build(_SECTIONS[key], merged, lines, (key,))
        elif key in _LISTS:
            if not isinstance(value, list):
                raise ProblemError(f"{key} must be a list", line)
            kwargs[key] = tuple(_build(_LISTS[key], v, lines, (key, i)) for i, v in enumerate(value))
        else:
            kwargs[key] = value
    try:
        if base is not None:
            return replace(base, **kwargs)
        return ProblemSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ProblemError(str(exc), 1) from exc


def load_problem(source) -> ProblemSpec:
    """A built-in name or the path of a YAML problem file."""
    if isinstance(source, str) and source in BUILTINS:
        return builtin(source)
    path = Path(source)
    if not path.exists():
        raise ProblemError(f"{source!r} is neither a built-in problem nor a file")
    return parse_problem(path.read_text())


def _as_dict(obj):
    """Dataclass to plain YAML-friendly values (tuples become lists)."""
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in fields(obj):
            out[f.name] = _as_dict(getattr(obj, f.name))
        return out
    if isinstance(obj, (tuple, list)):
        return [_as_dict(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def dump_problem(spec: ProblemSpec) -> str:
    return yaml.safe_dump(_as_dict(spec), sort_keys=False)


def save_problem(spec: ProblemSpec, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, dump_problem(spec))
