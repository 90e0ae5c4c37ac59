"""Run configuration: a YAML document with nested sections.

Example::

    field:
      E: [[2.0, 0.0], [0.0, 1.25]]
      D: [[0.4, 0.0], [0.0, 0.6]]
      alpha: 1.5
      variant: moving_average        # or harmonizable
      kernel: {kind: sum_powers, gammas: [0.5, 0.8], beta: 1.0}
    quad: {angular: 16, radial_per_shell: 4, tail_tol: 1.0e-4}
    points: [[0.5, 0.0], [0.0, 0.5]]      # or {grid: {lo: [..], hi: [..], n: [..]}}
    n_rep: 2000
    seed: 1
    threads: 1
    output: {dir: out}
    verify: {r: 2.0, n_rep: 20000, d_factor: 1.0}

Matrices are row-major nested lists. The canonical form is the parsed
document with every section filled from defaults, keys sorted; its SHA-256
(``output`` and ``threads`` excluded, since neither changes any number) is
the run digest.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import homog
from .cells import QuadratureSpec
from .errors import ConfigError, DomainError
from .fields import FieldSpec

VERIFY_DEFAULTS = {
    "r": 2.0,
    "h": None,
    "n_rep": 20000,
    "d_factor": 1.0,
    "theta_seed": 0,
    "n_probes": 100,
    "n_mc": 1000000,
    "lebesgue_r": 2.0,
    "r_grid_small": [1e-6, 1e-2],
    "r_grid_large": [1e2, 1e6],
    "grid_points": 41,
    "rungs": 3,
}

_FIELD_KEYS = {"E", "D", "alpha", "variant", "kernel"}
_TOP_KEYS = {"field", "quad", "points", "n_rep", "seed", "threads", "output", "verify"}
_QUAD_KEYS = set(QuadratureSpec.__dataclass_fields__)


def _matrix(value, name):
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"{name} must be a square matrix (nested list), got shape {a.shape}")
    return a


def _grid_points(g):
    lo = np.asarray(g["lo"], dtype=np.float64)
    hi = np.asarray(g["hi"], dtype=np.float64)
    n = np.broadcast_to(np.asarray(g.get("n", 5), dtype=int), lo.shape)
    axes = [np.linspace(a, b, k) for a, b, k in zip(lo, hi, n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), tuple(int(k) for k in n)


@dataclass
class RunConfig:
    field: dict
    quad: dict = field(default_factory=dict)
    points: object = None
    n_rep: int = 1000
    seed: int = 0
    threads: int = 1
    output: dict = field(default_factory=lambda: {"dir": "out"})
    verify: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    # -- construction ----------------------------------------------------

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        extra = set(doc) - _TOP_KEYS
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "field" not in doc:
            raise ConfigError("config needs a 'field' section")
        doc = copy.deepcopy(doc)
        return cls(field=doc["field"], quad=doc.get("quad") or {},
                   points=doc.get("points"), n_rep=doc.get("n_rep", 1000),
                   seed=doc.get("seed", 0), threads=doc.get("threads", 1),
                   output=doc.get("output") or {"dir": "out"},
                   verify=doc.get("verify") or {})

    def validate(self):
        f = self.field
        if not isinstance(f, dict):
            raise ConfigError("'field' must be a mapping")
        missing = {"E", "D", "alpha", "kernel"} - set(f)
        if missing:
            raise ConfigError(f"field section is missing {sorted(missing)}")
        extra = set(f) - _FIELD_KEYS
        if extra:
            raise ConfigError(f"unknown field keys: {sorted(extra)}")
        f.setdefault("variant", "moving_average")
        f["E"] = _matrix(f["E"], "E").tolist()
        f["D"] = _matrix(f["D"], "D").tolist()
        f["alpha"] = float(f["alpha"])
        k = f["kernel"]
        if not isinstance(k, dict) or k.get("kind") != "sum_powers":
            raise ConfigError("kernel must be {kind: sum_powers, gammas: [...], beta: ...}")
        k["gammas"] = [float(g) for g in np.atleast_1d(k.get("gammas", []))]
        k["beta"] = float(k.get("beta", 1.0))
        extra = set(self.quad) - _QUAD_KEYS
        if extra:
            raise ConfigError(f"unknown quad keys: {sorted(extra)}")
        if isinstance(self.n_rep, bool) or int(self.n_rep) != self.n_rep or self.n_rep < 1:
            raise ConfigError("n_rep must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError("threads must be a positive integer")
        self.n_rep, self.seed, self.threads = int(self.n_rep), int(self.seed), int(self.threads)
        extra = set(self.verify) - set(VERIFY_DEFAULTS)
        if extra:
            raise ConfigError(f"unknown verify keys: {sorted(extra)}")
        for key, val in VERIFY_DEFAULTS.items():
            self.verify.setdefault(key, val)
        self._coerce_verify()
        d = len(f["E"])
        if self.points is None:
            self.points = [[0.5] + [0.0] * (d - 1)]
        pts, _ = self._points()
        if pts.ndim != 2 or pts.shape[1] != d:
            raise ConfigError(f"points must be a list of {d}-vectors")
        if not isinstance(self.output, dict):
            raise ConfigError("'output' must be a mapping")
        self.output.setdefault("dir", "out")

    def _coerce_verify(self):
        # YAML 1.1 reads e.g. 1.0e2 (no exponent sign) as a string
        v = self.verify
        try:
            for key in ("r", "d_factor", "lebesgue_r"):
                v[key] = float(v[key])
            for key in ("n_rep", "n_probes", "n_mc", "grid_points", "rungs", "theta_seed"):
                v[key] = int(float(v[key]))
            for key in ("r_grid_small", "r_grid_large"):
                v[key] = [float(t) for t in v[key]]
                if len(v[key]) != 2 or not 0 < v[key][0] < v[key][1]:
                    raise ValueError(f"{key} must be [lo, hi] with 0 < lo < hi")
            if v["h"] is not None:
                v["h"] = [float(t) for t in np.atleast_1d(v["h"])]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid verify section: {exc}") from exc

    # -- derived objects ---------------------------------------------------

    def _points(self):
        p = self.points
        if isinstance(p, dict):
            if "grid" not in p:
                raise ConfigError("points mapping needs a 'grid' entry")
            return _grid_points(p["grid"])
        return np.atleast_2d(np.asarray(p, dtype=np.float64)), None

    def points_array(self):
        return self._points()[0]

    @property
    def grid_shape(self):
        return self._points()[1]

    def quad_spec(self):
        q = dict(self.quad)
        for key in ("box",):
            if key in q:
                q[key] = tuple(q[key])
        try:
            return QuadratureSpec(**q)
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"invalid quadrature: {exc}") from exc

    def field_spec(self):
        """FieldSpec; invalid fields raise ConfigError naming the violated condition."""
        f = self.field
        try:
            k = homog.sum_powers(f["kernel"]["gammas"], beta=f["kernel"]["beta"])
            return FieldSpec(E=f["E"], D=f["D"], alpha=f["alpha"], kernel=k,
                             variant=f["variant"], quad=self.quad_spec())
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    # -- serialization -----------------------------------------------------

    def canonical(self):
        return {"field": self.field, "quad": dict(sorted(self.quad.items())),
                "points": self.points, "n_rep": self.n_rep, "seed": self.seed,
                "threads": self.threads, "output": self.output,
                "verify": dict(sorted(self.verify.items()))}

    def to_yaml(self):
        return yaml.safe_dump(self.canonical(), sort_keys=True, default_flow_style=None)

    def digest(self):
        doc = self.canonical()
        doc.pop("output")
        doc.pop("threads")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, overrides):
        """Copy with KEY=VALUE overrides applied (dotted keys, YAML values)."""
        doc = copy.deepcopy(self.canonical())
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not KEY=VALUE")
            key, raw = item.split("=", 1)
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError as exc:
                raise ConfigError(f"override {item!r}: {exc}") from exc
            parts = key.strip().split(".")
            node = doc
            for p in parts[:-1]:
                if node.get(p) is None:
                    node[p] = {}
                node = node[p]
                if not isinstance(node, dict):
                    raise ConfigError(f"override {item!r}: {p} is not a section")
            node[parts[-1]] = value
        return RunConfig.from_dict(doc)


def parse_config(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return RunConfig.from_dict(doc)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


__all__ = ["RunConfig", "parse_config", "load_config", "VERIFY_DEFAULTS"]
