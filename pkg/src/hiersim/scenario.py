"""Declarative scenario files and the end-to-end pipeline they drive.

A scenario is one JSON document (schema ``hiersim-scenario-1``) with explicit
matrix literals. It names the concrete and abstract systems, optional
certificate overrides, the disturbance, the regime whose bound is used for
planning and checking, and optionally a planar workspace.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import matkit
from .errors import ScenarioError
from .planner import Workspace, build_prm, path_to_control, point_rect_distance, shortcut_path, shortest_path, tighten_path
from .simcore import DisturbanceRealization, PiecewiseConstantSignal, Trace, check_bound, simulate
from .synthesis import (
    DisturbanceSpec,
    LinearSystem,
    RobustCertificate,
    VerificationReport,
    error_bound,
    simulation_value,
    synthesize,
    verify_certificate,
)

SCENARIO_SCHEMA = "hiersim-scenario-1"
REGIMES = ("none", "bounded", "impulse")
PRESET_PREFIX = "preset:"

_PLANNER_DEFAULTS = {"n_samples": 500, "k_neighbors": 10, "seed": 0, "shortcut": True, "tighten": True, "ramp_time": 0.1}
_SIM_DEFAULTS = {"dt": 0.02, "T": None, "settle": 20.0}


def _matrix(doc: dict, key: str, where: str, required: bool = True):
    if key not in doc or doc[key] is None:
        if required:
            raise ScenarioError(f"{where}: missing matrix {key!r}")
        return None
    try:
        return matkit.as_matrix(doc[key], f"{where}.{key}")
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{where}.{key}: {exc}") from None


def _system(doc: dict, where: str, role: str) -> LinearSystem:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{where} must be an object with A, B, C")
    try:
        return LinearSystem(_matrix(doc, "A", where), _matrix(doc, "B", where), _matrix(doc, "C", where), role)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


@dataclass
class Scenario:
    """Parsed scenario. ``doc`` keeps the original JSON for round-tripping."""

    doc: dict
    name: str
    sys1: LinearSystem
    sys2: LinearSystem
    overrides: dict
    lqr: dict
    disturbance: dict
    bound_regime: str
    u_max: float
    workspace: Workspace | None
    planner: dict
    sim: dict
    seed: int
    initial: dict
    input: dict
    verify_samples: int

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario must be a JSON object")
        if doc.get("schema") != SCENARIO_SCHEMA:
            raise ScenarioError(f"scenario schema must be {SCENARIO_SCHEMA!r}, got {doc.get('schema')!r}")
        sys1 = _system(doc.get("concrete"), "concrete", "concrete")
        sys2 = _system(doc.get("abstract"), "abstract", "abstract")
        if sys1.m != sys2.m:
            raise ScenarioError(f"output dimensions differ: concrete {sys1.m}, abstract {sys2.m}")

        ov = doc.get("overrides") or {}
        overrides = {k: _matrix(ov, k, "overrides", required=False) for k in ("K", "P", "Q", "R")}
        overrides["lambda"] = ov.get("lambda")
        lqr_doc = doc.get("lqr") or {}
        lqr = {k: _matrix(lqr_doc, k, "lqr", required=False) for k in ("state_weight", "input_weight")}

        dist = dict(doc.get("disturbance") or {"kind": "none"})
        kind = dist.get("kind", "none")
        if kind not in REGIMES:
            raise ScenarioError(f"disturbance.kind must be one of {REGIMES}, got {kind!r}")
        dist["kind"] = kind
        B_d = _matrix(dist, "B_d", "disturbance", required=kind != "none")
        if B_d is not None and B_d.shape[0] != sys1.n:
            raise ScenarioError(f"disturbance.B_d must have {sys1.n} rows, got {B_d.shape[0]}")
        dist["B_d"] = B_d

        regime = doc.get("bound_regime", "auto")
        regime = kind if regime == "auto" else regime
        if regime not in REGIMES:
            raise ScenarioError(f"bound_regime must be 'auto' or one of {REGIMES}, got {regime!r}")

        try:
            u_max = float(doc["u_max"])
        except (KeyError, TypeError, ValueError):
            raise ScenarioError("u_max must be given as a number") from None
        if not (u_max > 0 and math.isfinite(u_max)):
            raise ScenarioError("u_max must be positive")

        workspace = None
        if doc.get("workspace") is not None:
            w = doc["workspace"]
            try:
                workspace = Workspace(
                    bounds=tuple(w["bounds"]), obstacles=tuple(tuple(r) for r in w.get("obstacles", [])),
                    start=tuple(w["start"]), goal=tuple(w["goal"]), goal_radius=float(w.get("goal_radius", 0.5)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"workspace: {exc}") from None
            if sys2.m != 2:
                raise ScenarioError("planning needs a 2-D output space")

        planner = {**_PLANNER_DEFAULTS, **(doc.get("planner") or {})}
        sim = {**_SIM_DEFAULTS, **(doc.get("sim") or {})}
        if workspace is None and sim["T"] is None:
            raise ScenarioError("sim.T is required when no workspace is given")
        return cls(
            doc=copy.deepcopy(doc), name=str(doc.get("name", "scenario")), sys1=sys1, sys2=sys2,
            overrides=overrides, lqr=lqr, disturbance=dist, bound_regime=regime, u_max=u_max,
            workspace=workspace, planner=planner, sim=sim, seed=int(doc.get("seed", 0)),
            initial=doc.get("initial") or {}, input=doc.get("input") or {"type": "zero"},
            verify_samples=int(doc.get("verify_samples", 1000)),
        )

    def with_seed(self, seed: int) -> "Scenario":
        doc = copy.deepcopy(self.doc)
        doc["seed"] = int(seed)
        doc.setdefault("planner", {})["seed"] = int(seed)
        return Scenario.from_dict(doc)

    # ------------------------------------------------------------ derived quantities

    @property
    def B_d(self):
        return self.disturbance["B_d"]

    def b_max(self) -> float:
        if "b_max" in self.disturbance:
            return float(self.disturbance["b_max"])
        return matkit.spectral_norm(self.B_d) if self.B_d is not None else 0.0

    def t_dwell(self) -> float:
        d = self.disturbance
        return float(d.get("t_dwell", d.get("period", math.nan)))

    def spec_for(self, regime: str) -> DisturbanceSpec | None:
        """Bound assumptions for ``regime``, or None when the scenario lacks the parameters."""
        d = self.disturbance
        if regime == "none":
            return DisturbanceSpec.none()
        if self.B_d is None:
            return None
        if regime == "bounded":
            return DisturbanceSpec.bounded(float(d.get("d_max", 1.0)))
        if regime == "impulse":
            t = self.t_dwell()
            return DisturbanceSpec.impulse(self.b_max(), t) if t > 0 else None
        raise ScenarioError(f"unknown regime {regime!r}")

    def initial_states(self, cert: RobustCertificate) -> tuple[np.ndarray, np.ndarray]:
        if "x2" in self.initial:
            x2 = np.asarray(self.initial["x2"], dtype=float).reshape(-1)
        elif self.workspace is not None:
            x2 = matkit.least_squares(self.sys2.C, np.array(self.workspace.start))
        else:
            x2 = np.zeros(self.sys2.n)
        x1 = np.asarray(self.initial["x1"], dtype=float).reshape(-1) if "x1" in self.initial else cert.P @ x2
        if x1.size != self.sys1.n or x2.size != self.sys2.n:
            raise ScenarioError("initial state dimensions do not match the systems")
        return x1, x2

    def V0(self, cert: RobustCertificate) -> float:
        x1, x2 = self.initial_states(cert)
        return simulation_value(cert, x1, x2)

    def eps(self, cert: RobustCertificate, regime: str | None = None) -> float:
        regime = self.bound_regime if regime is None else regime
        spec = self.spec_for(regime)
        if spec is None:
            raise ScenarioError(f"scenario has no parameters for the {regime!r} bound")
        return error_bound(cert, self.V0(cert), self.u_max, spec)

    def all_eps(self, cert: RobustCertificate) -> dict[str, float]:
        return {r: self.eps(cert, r) for r in REGIMES if self.spec_for(r) is not None}

    def realization(self, T: float, dt: float) -> DisturbanceRealization:
        d = self.disturbance
        kind = d["kind"]
        if kind == "none":
            return DisturbanceRealization.none()
        if kind == "impulse":
            real = DisturbanceRealization.impulse_train(self.B_d, float(d.get("period", 2.5)), T, d.get("first"))
            real.conforms_to(DisturbanceSpec.impulse(self.b_max(), self.t_dwell()))
            return real
        d_max = float(d.get("d_max", 1.0))
        sig = d.get("signal") or {"type": "constant", "value": [d_max] * self.B_d.shape[1]}
        stype = sig.get("type", "constant")
        if stype == "constant":
            signal = PiecewiseConstantSignal.constant(sig["value"])
        elif stype == "random":
            hold = float(sig.get("hold", 10 * dt))
            signal = PiecewiseConstantSignal.random(np.random.default_rng(self.seed), self.B_d.shape[1], d_max, hold, T)
        elif stype == "worst_case":
            raise ScenarioError("worst_case signals need a certificate; use realization_for")
        else:
            raise ScenarioError(f"unknown signal type {stype!r}")
        real = DisturbanceRealization.bounded(self.B_d, signal)
        real.conforms_to(DisturbanceSpec.bounded(d_max))
        return real

    def realization_for(self, cert: RobustCertificate, T: float, dt: float) -> DisturbanceRealization:
        sig = self.disturbance.get("signal") or {}
        if self.disturbance["kind"] == "bounded" and sig.get("type") == "worst_case":
            d_max = float(self.disturbance.get("d_max", 1.0))
            return DisturbanceRealization.bounded(self.B_d, PiecewiseConstantSignal.worst_case(cert, self.B_d, d_max))
        return self.realization(T, dt)


def load_scenario(source) -> Scenario:
    """Load a scenario from a path or from ``preset:<name>``."""
    if isinstance(source, dict):
        return Scenario.from_dict(source)
    text = str(source)
    if text.startswith(PRESET_PREFIX):
        return Scenario.from_dict(preset(text[len(PRESET_PREFIX):]))
    try:
        doc = json.loads(Path(text).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {text!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {text!r} is not valid JSON: {exc}") from None
    return Scenario.from_dict(doc)


# ---------------------------------------------------------------- presets

def preset_names() -> list[str]:
    base = resources.files("hiersim") / "presets"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def preset(name: str) -> dict:
    base = resources.files("hiersim") / "presets"
    if name in CORRIDOR_EXPERIMENTS:
        return corridor_experiment(name)
    f = base / f"{name}.json"
    if not f.is_file():
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(preset_names() + list(CORRIDOR_EXPERIMENTS))}")
    return json.loads(f.read_text(encoding="utf-8"))


# name -> (disturbance kind, regime used for planning and checking)
CORRIDOR_EXPERIMENTS = {
    "nominal": ("none", "none"),
    "bounded_naive": ("bounded", "none"),
    "bounded_corrected": ("bounded", "bounded"),
    "impulse_naive": ("impulse", "none"),
    "impulse_corrected": ("impulse", "impulse"),
}

# Published bounds for the same experiment, listed next to ours in the summary.
PUBLISHED_EPS = {"none": 0.2258, "bounded": 0.6767, "impulse": 0.678}


def corridor_experiment(name: str) -> dict:
    kind, regime = CORRIDOR_EXPERIMENTS[name]
    doc = preset("corridor")
    doc["name"] = f"corridor_{name}"
    doc["disturbance"]["kind"] = kind
    doc["bound_regime"] = regime
    return doc


# ---------------------------------------------------------------- pipeline

def build_certificate(scn: Scenario, verify: bool = True) -> tuple[RobustCertificate, VerificationReport | None]:
    ov = scn.overrides
    cert = synthesize(
        scn.sys1, scn.sys2, K=ov["K"], lam=ov["lambda"],
        state_weight=scn.lqr["state_weight"], input_weight=scn.lqr["input_weight"],
        B_d=scn.B_d, P=ov["P"], Q=ov["Q"], R=ov["R"],
    )
    report = None
    if verify:
        report = verify_certificate(cert, scn.sys1, scn.sys2, n_samples=scn.verify_samples,
                                    rng_seed=scn.seed, B_d=scn.B_d)
    return cert, report


def check_single_integrator(scn: Scenario) -> None:
    """Planning assumes ``y2' = u2``, i.e. ``A2 = 0`` and ``C2 B2 = I``."""
    if np.any(scn.sys2.A != 0) or not np.allclose(scn.sys2.C @ scn.sys2.B, np.eye(2), atol=1e-12):
        raise ScenarioError("planning requires an abstract single integrator (A2 = 0, C2 B2 = I)")


@dataclass
class PlanResult:
    eps: float
    regime: str
    waypoints: np.ndarray
    raw_waypoints: np.ndarray
    profile: object
    n_nodes: int
    n_edges: int

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "regime": self.regime,
            "waypoints": self.waypoints.tolist(),
            "roadmap_waypoints": self.raw_waypoints.tolist(),
            "roadmap": {"nodes": self.n_nodes, "edges": self.n_edges},
            "u2": self.profile.describe(),
        }


def plan(scn: Scenario, cert: RobustCertificate) -> PlanResult:
    if scn.workspace is None:
        raise ScenarioError("scenario has no workspace to plan in")
    check_single_integrator(scn)
    eps = scn.eps(cert)
    ws = scn.workspace.with_clearance(eps)
    p = scn.planner
    roadmap = build_prm(ws, int(p["n_samples"]), int(p["k_neighbors"]), int(p["seed"]))
    raw = shortest_path(roadmap)
    waypoints = shortcut_path(raw, ws) if p.get("shortcut", True) else raw
    if p.get("tighten", True):
        waypoints = tighten_path(waypoints, ws)
    profile = path_to_control(waypoints, scn.u_max, float(p["ramp_time"]))
    return PlanResult(eps, scn.bound_regime, waypoints, raw, profile, len(roadmap.nodes), len(roadmap.edges))


def profile_from_plan(scn: Scenario, plan_doc: dict):
    u = plan_doc["u2"]
    return path_to_control(np.asarray(plan_doc["waypoints"], dtype=float), float(u["u_max"]), float(u["ramp_time"]))


def constant_input(scn: Scenario):
    spec = scn.input
    if spec.get("type", "zero") == "zero":
        value = np.zeros(scn.sys2.p)
    elif spec["type"] == "constant":
        value = np.asarray(spec["value"], dtype=float).reshape(-1)
        if value.size != scn.sys2.p or np.linalg.norm(value) > scn.u_max * (1 + 1e-12):
            raise ScenarioError("input.value must have the abstract input size and norm <= u_max")
    else:
        raise ScenarioError(f"unknown input type {spec['type']!r}")
    return lambda t: value


@dataclass
class RunResult:
    trace: Trace
    report: dict


def run(scn: Scenario, cert: RobustCertificate, profile=None) -> RunResult:
    """Simulate the scenario and assemble the report (without timing)."""
    eps = scn.eps(cert)
    dt = float(scn.sim["dt"])
    if profile is not None:
        T = scn.sim["T"] if scn.sim["T"] is not None else profile.duration + float(scn.sim["settle"])
        u2 = profile
    else:
        T, u2 = scn.sim["T"], constant_input(scn)
    T = float(T)
    x1, x2 = scn.initial_states(cert)
    real = scn.realization_for(cert, T, dt)
    trace = simulate(scn.sys1, scn.sys2, cert, u2, x1, x2, real, dt, T, eps)
    rep = check_bound(trace, eps)
    report = {
        "scenario": scn.name,
        "regime": scn.bound_regime,
        "disturbance": scn.disturbance["kind"],
        "eps": eps,
        "max_error": rep.max_error,
        "margin": rep.margin,
        "tol_num": rep.tol_num,
        "n_violations": len(rep.violations),
        "violations": [{"t": t, "error": e} for t, e in rep.violations],
        "impulse_events": [
            {"t_requested": ev.t_requested, "t": ev.t_grid, "V_minus": ev.V_minus, "V_plus": ev.V_plus,
             "snap_error": ev.snap_error}
            for ev in trace.impulse_events
        ],
        "V0": simulation_value(cert, x1, x2),
        "u_max": scn.u_max,
        "dt": dt,
        "T": T,
    }
    if scn.workspace is not None:
        ws = scn.workspace
        final = trace.y1[-1]
        dist = float(np.hypot(*(final - np.array(ws.goal))))
        report["final_goal_distance"] = dist
        report["goal_reached"] = dist <= ws.goal_radius + eps
        report["collision_samples"] = int(sum(
            any(point_rect_distance(y, r) == 0.0 for r in ws.obstacles) for y in trace.y1
        ))
    return RunResult(trace, report)
