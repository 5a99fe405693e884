"""Strict JSON configuration for the command-line front end.

A config document is one JSON object selecting a command and supplying
its data.  Parsing is strict: unknown keys are rejected (top level and
nested), every numeric range is checked before any solve, and ALL
violations are collected into a single ValidationError rather than
stopping at the first.  Defaults (relaxation factor 1.5, tolerance
1e-10, iteration cap 100000, ramp penalty, the standard epsilon and
order lists) are applied only where a command uses them, and every
defaulted field is recorded on the parsed config so the front end can
echo it -- nothing defaults silently.

Document layout by key:

    command     one of solve, solve2, membranes, penalize, sweep-s,
                kernel-ka, capacity, verify
    domain      [x_lo, x_hi]
    s           order in (0,1)
    n           interior node count
    kernel      {"name": "fractional"} or {"name": "scaled", "alpha": a}
    data        {"f_sharp": expr-or-nodal-array, "f_vec": expr}
    obstacles   {"lower": expr-or-array-or-null, "upper": ...}
    membranes   list of per-layer f_sharp specs (membranes command)
    solver      {"omega", "tol", "max_iter", "penalty", "epsilon"}
    s_list      ascending orders (sweep-s command)
    set         list of [lo, hi] closed intervals (capacity command)
    field       {"name": "constant"|"plateau", ...} (kernel-ka command)
    pairs       list of [x, y] evaluation pairs (kernel-ka command)
    output      directory for artifacts (optional everywhere)

Functions and obstacles are expression strings over x (see the
expressions module for the grammar) or nodal arrays of length n.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import MAX_DOFS
from .errors import ValidationError
from .expressions import compile_expression
from .kernels import (CoefficientField, constant_field,
                      fractional_laplacian_kernel, plateau_field,
                      scaled_fractional_kernel)
from .meshes import IntervalMesh

__all__ = ["ExperimentConfig", "parse_config", "emit_config",
           "COMMANDS", "KERNEL_NAMES", "FIELD_NAMES"]

COMMANDS = ("solve", "solve2", "membranes", "penalize", "sweep-s",
            "kernel-ka", "capacity", "verify")
KERNEL_NAMES = ("fractional", "scaled")
FIELD_NAMES = ("constant", "plateau")

_DEFAULT_OMEGA = 1.5
_DEFAULT_TOL = 1e-10
_DEFAULT_MAX_ITER = 100_000
_DEFAULT_PENALTY = "ramp"
_DEFAULT_EPSILON = (0.1, 0.05, 0.025)
_DEFAULT_S_LIST = (0.6, 0.7, 0.8, 0.9, 0.95, 0.99)

_PLATEAU_KEYS = ("background", "height", "rise_lo", "flat_lo",
                 "flat_hi", "rise_hi")

# which top-level keys each command accepts beyond "command"/"output"
_SCHEMAS = {
    "solve": {"required": ("domain", "s", "n", "obstacles"),
              "optional": ("kernel", "data", "solver")},
    "solve2": {"required": ("domain", "s", "n", "obstacles"),
               "optional": ("kernel", "data", "solver")},
    "membranes": {"required": ("domain", "s", "n", "membranes"),
                  "optional": ("kernel", "solver")},
    "penalize": {"required": ("domain", "s", "n", "obstacles"),
                 "optional": ("kernel", "data", "solver")},
    "sweep-s": {"required": ("domain", "n", "obstacles"),
                "optional": ("data", "s_list")},
    "kernel-ka": {"required": ("s", "field", "pairs"), "optional": ()},
    "capacity": {"required": ("domain", "s", "n", "set"),
                 "optional": ("kernel", "solver")},
    "verify": {"required": (), "optional": ()},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One validated experiment: a command plus everything it consumes.

    ``defaulted`` lists the dotted paths of fields that were filled in
    by defaults; it is excluded from equality so that a config
    round-trips through emit_config/parse_config.
    """

    command: str
    domain: Optional[tuple] = None
    s: Optional[float] = None
    n: Optional[int] = None
    kernel: Optional[dict] = None
    f_sharp: object = None
    f_vec: Optional[str] = None
    lower: object = None
    upper: object = None
    membranes: Optional[tuple] = None
    omega: Optional[float] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    penalty: Optional[str] = None
    epsilon: Optional[tuple] = None
    s_list: Optional[tuple] = None
    set_intervals: Optional[tuple] = None
    field_spec: Optional[dict] = None
    pairs: Optional[tuple] = None
    output: Optional[str] = None
    defaulted: tuple = field(default=(), compare=False)

    # -- builders ---------------------------------------------------------
    def mesh(self) -> IntervalMesh:
        return IntervalMesh(self.domain[0], self.domain[1], self.n)

    def build_kernel(self, s=None):
        s = self.s if s is None else s
        if self.kernel is None or self.kernel["name"] == "fractional":
            return fractional_laplacian_kernel(s)
        return scaled_fractional_kernel(s, self.kernel["alpha"])

    def build_field(self) -> CoefficientField:
        spec = dict(self.field_spec)
        name = spec.pop("name")
        if name == "constant":
            return constant_field(spec["value"])
        return plateau_field(**spec)

    @staticmethod
    def data_fn(spec):
        """Expression string -> callable; nodal array -> ndarray; None."""
        if spec is None:
            return None
        if isinstance(spec, str):
            return compile_expression(spec)
        return np.asarray(spec, dtype=float)


# -- validation helpers ---------------------------------------------------

def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _num(doc, key, problems, path=""):
    v = doc[key]
    if not _is_num(v) or not np.isfinite(v):
        problems.append(f"{path}{key} must be a finite number, got {v!r}")
        return None
    return float(v)


def _check_unknown(doc, allowed, problems, path=""):
    for key in doc:
        if key not in allowed:
            problems.append(f"unknown key {path}{key!r}")


def _check_s(value, problems, label="s"):
    if not _is_num(value) or not (0.0 < value < 1.0):
        problems.append(f"{label} must lie in (0,1)")
        return None
    return float(value)


def _check_expr_or_array(spec, n, problems, label):
    """Validate one data/obstacle spec; return normalized value."""
    if isinstance(spec, str):
        try:
            compile_expression(spec)
        except ValidationError as exc:
            problems.extend(f"{label}: {p}" for p in exc.problems)
        return spec
    if isinstance(spec, list):
        if not all(_is_num(v) and np.isfinite(v) for v in spec):
            problems.append(f"{label} array must contain finite numbers")
            return None
        if n is not None and len(spec) != n:
            problems.append(
                f"{label} array has {len(spec)} entries but n = {n}"
            )
            return None
        return tuple(float(v) for v in spec)
    problems.append(
        f"{label} must be an expression string or a nodal array, "
        f"got {type(spec).__name__}"
    )
    return None


def _parse_kernel(doc, problems):
    if not isinstance(doc, dict):
        problems.append("kernel must be an object with a 'name'")
        return None
    name = doc.get("name")
    if name not in KERNEL_NAMES:
        problems.append(
            f"unknown kernel {name!r}; available: {', '.join(KERNEL_NAMES)}"
        )
        return None
    if name == "fractional":
        _check_unknown(doc, ("name",), problems, "kernel.")
        return {"name": "fractional"}
    _check_unknown(doc, ("name", "alpha"), problems, "kernel.")
    if "alpha" not in doc:
        problems.append("kernel 'scaled' requires a positive alpha")
        return None
    alpha = _num(doc, "alpha", problems, "kernel.")
    if alpha is not None and alpha <= 0.0:
        problems.append(f"kernel.alpha must be positive, got {alpha}")
        return None
    return {"name": "scaled", "alpha": alpha}


def _parse_field(doc, problems):
    if not isinstance(doc, dict):
        problems.append("field must be an object with a 'name'")
        return None
    name = doc.get("name")
    if name not in FIELD_NAMES:
        problems.append(
            f"unknown field {name!r}; available: {', '.join(FIELD_NAMES)}"
        )
        return None
    if name == "constant":
        _check_unknown(doc, ("name", "value"), problems, "field.")
        if "value" not in doc:
            problems.append("field 'constant' requires a value")
            return None
        value = _num(doc, "value", problems, "field.")
        if value is None or value <= 0.0:
            problems.append("field.value must be positive")
            return None
        return {"name": "constant", "value": value}
    _check_unknown(doc, ("name",) + _PLATEAU_KEYS, problems, "field.")
    out = {"name": "plateau"}
    vals = {}
    for key in _PLATEAU_KEYS:
        if key in doc:
            v = _num(doc, key, problems, "field.")
            if v is None:
                return None
            out[key] = vals[key] = v
    defaults = dict(zip(_PLATEAU_KEYS, (0.01, 50.0, 0.9, 1.0, 1.5, 1.6)))
    full = {**defaults, **vals}
    if full["background"] <= 0.0 or full["height"] <= 0.0:
        problems.append("field background and height must be positive")
    if not (full["rise_lo"] < full["flat_lo"] < full["flat_hi"]
            < full["rise_hi"]):
        problems.append(
            "field breakpoints must satisfy rise_lo < flat_lo < flat_hi "
            "< rise_hi"
        )
    return out


def _parse_solver(doc, command, problems, defaulted):
    allowed = ["omega", "tol", "max_iter"]
    if command == "penalize":
        allowed += ["penalty", "epsilon"]
    _check_unknown(doc, allowed, problems, "solver.")
    out = {}

    if "omega" in doc:
        omega = _num(doc, "omega", problems, "solver.")
        if omega is not None and not (0.0 < omega < 2.0):
            problems.append(f"solver.omega must lie in (0,2), got {omega}")
        out["omega"] = omega
    else:
        out["omega"] = _DEFAULT_OMEGA
        defaulted.append("solver.omega")

    if "tol" in doc:
        tol = _num(doc, "tol", problems, "solver.")
        if tol is not None and tol <= 0.0:
            problems.append(f"solver.tol must be positive, got {tol}")
        out["tol"] = tol
    else:
        out["tol"] = _DEFAULT_TOL
        defaulted.append("solver.tol")

    if "max_iter" in doc:
        mi = doc["max_iter"]
        if not isinstance(mi, int) or isinstance(mi, bool) or mi < 1:
            problems.append(
                f"solver.max_iter must be a positive integer, got {mi!r}"
            )
            out["max_iter"] = None
        else:
            out["max_iter"] = mi
    else:
        out["max_iter"] = _DEFAULT_MAX_ITER
        defaulted.append("solver.max_iter")

    if command == "penalize":
        if "penalty" in doc:
            pen = doc["penalty"]
            if pen not in ("ramp", "rational", "arctan"):
                problems.append(
                    f"solver.penalty must be one of ramp, rational, "
                    f"arctan; got {pen!r}"
                )
            out["penalty"] = pen
        else:
            out["penalty"] = _DEFAULT_PENALTY
            defaulted.append("solver.penalty")
        if "epsilon" in doc:
            eps = doc["epsilon"]
            if (not isinstance(eps, list) or not eps
                    or not all(_is_num(e) and 0.0 < e for e in eps)):
                problems.append(
                    "solver.epsilon must be a nonempty list of positive "
                    "numbers"
                )
                out["epsilon"] = None
            else:
                out["epsilon"] = tuple(float(e) for e in eps)
        else:
            out["epsilon"] = _DEFAULT_EPSILON
            defaulted.append("solver.epsilon")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Validate one JSON config document into an ExperimentConfig.

    Malformed JSON raises immediately with the parser's location; an
    invalid document raises one ValidationError carrying every
    violation found.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"config is not valid JSON: line {exc.lineno} column "
            f"{exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")

    problems = []
    defaulted = []
    command = doc.get("command")
    if command not in COMMANDS:
        raise ValidationError(
            [f"command must be one of {', '.join(COMMANDS)}; "
             f"got {command!r}"]
        )
    schema = _SCHEMAS[command]
    allowed = ("command", "output") + schema["required"] + schema["optional"]
    _check_unknown(doc, allowed, problems)
    for key in schema["required"]:
        if key not in doc:
            problems.append(f"command {command!r} requires {key!r}")

    fields = {"command": command}

    if "output" in doc:
        if not isinstance(doc["output"], str) or not doc["output"]:
            problems.append("output must be a nonempty path string")
        else:
            fields["output"] = doc["output"]

    if "domain" in doc and "domain" in allowed:
        dom = doc["domain"]
        if (not isinstance(dom, list) or len(dom) != 2
                or not all(_is_num(v) and np.isfinite(v) for v in dom)):
            problems.append("domain must be [x_lo, x_hi] with finite numbers")
        elif not dom[0] < dom[1]:
            problems.append(
                f"domain must satisfy x_lo < x_hi, got {dom[0]} >= {dom[1]}"
            )
        else:
            fields["domain"] = (float(dom[0]), float(dom[1]))

    if "s" in doc and "s" in allowed:
        s = _check_s(doc["s"], problems)
        if s is not None:
            fields["s"] = s

    n = None
    if "n" in doc and "n" in allowed:
        n_raw = doc["n"]
        if (not isinstance(n_raw, int) or isinstance(n_raw, bool)
                or not 1 <= n_raw <= MAX_DOFS):
            problems.append(
                f"n must be an integer in [1, {MAX_DOFS}], got {n_raw!r}"
            )
        else:
            fields["n"] = n = n_raw

    if "kernel" in allowed:
        if "kernel" in doc:
            kern = _parse_kernel(doc["kernel"], problems)
            if kern is not None:
                fields["kernel"] = kern
        else:
            fields["kernel"] = {"name": "fractional"}
            defaulted.append("kernel")

    if "data" in doc and "data" in allowed:
        data = doc["data"]
        if not isinstance(data, dict):
            problems.append("data must be an object")
        else:
            _check_unknown(data, ("f_sharp", "f_vec"), problems, "data.")
            if data.get("f_sharp") is not None:
                fields["f_sharp"] = _check_expr_or_array(
                    data["f_sharp"], n, problems, "data.f_sharp")
            if data.get("f_vec") is not None:
                fv = data["f_vec"]
                if not isinstance(fv, str):
                    problems.append("data.f_vec must be an expression string")
                else:
                    _check_expr_or_array(fv, n, problems, "data.f_vec")
                    fields["f_vec"] = fv

    if "obstacles" in doc and "obstacles" in allowed:
        obs = doc["obstacles"]
        if not isinstance(obs, dict):
            problems.append("obstacles must be an object")
        else:
            _check_unknown(obs, ("lower", "upper"), problems, "obstacles.")
            lower = obs.get("lower")
            upper = obs.get("upper")
            if lower is not None:
                fields["lower"] = _check_expr_or_array(
                    lower, n, problems, "obstacles.lower")
            if upper is not None:
                fields["upper"] = _check_expr_or_array(
                    upper, n, problems, "obstacles.upper")
            if command in ("solve", "penalize", "sweep-s"):
                if lower is None:
                    problems.append(
                        f"command {command!r} requires obstacles.lower"
                    )
                if upper is not None:
                    problems.append(
                        f"command {command!r} takes no upper obstacle"
                    )
            if command == "solve2" and (lower is None or upper is None):
                problems.append(
                    "command 'solve2' requires both obstacles.lower and "
                    "obstacles.upper"
                )

    if "membranes" in doc and "membranes" in allowed:
        mem = doc["membranes"]
        if not isinstance(mem, list) or len(mem) < 2:
            problems.append("membranes must be a list of at least two loads")
        else:
            layers = tuple(
                _check_expr_or_array(mspec, n, problems, f"membranes[{j}]")
                for j, mspec in enumerate(mem)
            )
            if all(layer is not None for layer in layers):
                fields["membranes"] = layers

    if "solver" in allowed:
        sdoc = doc.get("solver", {})
        if not isinstance(sdoc, dict):
            problems.append("solver must be an object")
        else:
            fields.update(_parse_solver(sdoc, command, problems, defaulted))

    if "s_list" in allowed:
        if "s_list" in doc:
            sl = doc["s_list"]
            if not isinstance(sl, list) or len(sl) < 2:
                problems.append("s_list must be a list of at least two orders")
            else:
                vals = [_check_s(v, problems, f"s_list[{j}]")
                        for j, v in enumerate(sl)]
                if all(v is not None for v in vals):
                    if any(b <= a for a, b in zip(vals, vals[1:])):
                        problems.append("s_list must be strictly ascending")
                    else:
                        fields["s_list"] = tuple(vals)
        else:
            fields["s_list"] = _DEFAULT_S_LIST
            defaulted.append("s_list")

    if "set" in doc and "set" in allowed:
        sets = doc["set"]
        if (not isinstance(sets, list) or not sets
                or not all(isinstance(iv, list) and len(iv) == 2
                           and all(_is_num(v) and np.isfinite(v) for v in iv)
                           for iv in sets)):
            problems.append("set must be a nonempty list of [lo, hi] pairs")
        else:
            ivs = tuple((float(a), float(b)) for a, b in sets)
            for j, (a, b) in enumerate(ivs):
                if a > b:
                    problems.append(f"set[{j}] has lo > hi")
            for (_, b1), (a2, _) in zip(ivs, ivs[1:]):
                if a2 <= b1:
                    problems.append(
                        "set intervals must be sorted and pairwise disjoint"
                    )
                    break
            fields["set_intervals"] = ivs

    if "field" in doc and "field" in allowed:
        fspec = _parse_field(doc["field"], problems)
        if fspec is not None:
            fields["field_spec"] = fspec

    if "pairs" in doc and "pairs" in allowed:
        prs = doc["pairs"]
        if (not isinstance(prs, list) or not prs
                or not all(isinstance(p, list) and len(p) == 2
                           and all(_is_num(v) and np.isfinite(v) for v in p)
                           for p in prs)):
            problems.append("pairs must be a nonempty list of [x, y] pairs")
        else:
            for j, (px, py) in enumerate(prs):
                if px == py:
                    problems.append(f"pairs[{j}] has x = y = {px}")
            fields["pairs"] = tuple((float(px), float(py)) for px, py in prs)

    if problems:
        raise ValidationError(problems)
    return ExperimentConfig(**fields, defaulted=tuple(defaulted))


def emit_config(cfg: ExperimentConfig) -> str:
    """Serialize a config back to canonical JSON (defaults made explicit).

    parse_config(emit_config(cfg)) == cfg for every valid config.
    """
    doc = {"command": cfg.command}
    if cfg.output is not None:
        doc["output"] = cfg.output
    if cfg.domain is not None:
        doc["domain"] = list(cfg.domain)
    if cfg.s is not None:
        doc["s"] = cfg.s
    if cfg.n is not None:
        doc["n"] = cfg.n
    if cfg.kernel is not None:
        doc["kernel"] = dict(cfg.kernel)
    data = {}
    if cfg.f_sharp is not None:
        data["f_sharp"] = (cfg.f_sharp if isinstance(cfg.f_sharp, str)
                           else list(cfg.f_sharp))
    if cfg.f_vec is not None:
        data["f_vec"] = cfg.f_vec
    if data:
        doc["data"] = data
    obstacles = {}
    for side, spec in (("lower", cfg.lower), ("upper", cfg.upper)):
        if spec is not None:
            obstacles[side] = spec if isinstance(spec, str) else list(spec)
    if obstacles:
        doc["obstacles"] = obstacles
    if cfg.membranes is not None:
        doc["membranes"] = [m if isinstance(m, str) else list(m)
                            for m in cfg.membranes]
    if cfg.omega is not None:
        solver = {"omega": cfg.omega, "tol": cfg.tol,
                  "max_iter": cfg.max_iter}
        if cfg.penalty is not None:
            solver["penalty"] = cfg.penalty
        if cfg.epsilon is not None:
            solver["epsilon"] = list(cfg.epsilon)
        doc["solver"] = solver
    if cfg.s_list is not None:
        doc["s_list"] = list(cfg.s_list)
    if cfg.set_intervals is not None:
        doc["set"] = [list(iv) for iv in cfg.set_intervals]
    if cfg.field_spec is not None:
        doc["field"] = dict(cfg.field_spec)
    if cfg.pairs is not None:
        doc["pairs"] = [list(p) for p in cfg.pairs]
    return json.dumps(doc, indent=2, sort_keys=True)
