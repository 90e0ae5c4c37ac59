"""Command-line front end.

    ossfield simulate --config run.yaml [--seed N] [--threads N] [--override K=V ...] [--out DIR]
    ossfield verify SUITE --config run.yaml [...]
    ossfield plotdata KIND PATH [--out DIR]

Exit codes: 0 pass, 1 verification failure, 2 invalid config, 3 field not
defined (divergent integrability check), 4 I/O failure. No environment
variables are read; all randomness derives from the config's seed.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, fields, io, verify
from .cells import ladder
from .config import load_config
from .errors import ConfigError, DomainError, FieldNotDefinedError, SingularityError
from .linops import mat_pow
from .polar import polar_map
from .stable import ecf_of_projections

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_UNDEFINED, EXIT_IO = 0, 1, 2, 3, 4
SUITES = ("oss", "increments", "proper", "recurrence", "normbound", "lebesgue",
          "integral_cf", "polar")
PLOT_KINDS = ("field_slice", "ecf_panel", "slope_fit")
SAMPLE_NAME = "sample.ossf"


def _say(msg, stream=None):
    print(msg, file=stream or sys.stdout)


def _load(config_path, overrides, seed, threads):
    cfg = load_config(config_path)
    extra = list(overrides or ())
    if seed is not None:
        extra.append(f"seed={int(seed)}")
    if threads is not None:
        extra.append(f"threads={int(threads)}")
    return cfg.with_overrides(extra) if extra else cfg


def _outdir(cfg, out):
    d = out if out is not None else cfg.output["dir"]
    os.makedirs(d, exist_ok=True)
    return d


def _guard(fn):
    """Map library errors onto the exit-code contract."""
    try:
        return fn()
    except ConfigError as exc:
        _say(f"invalid config: {exc}", sys.stderr)
        return EXIT_CONFIG
    except FieldNotDefinedError as exc:
        _say(f"field undefined: {exc}", sys.stderr)
        return EXIT_UNDEFINED
    except (DomainError, SingularityError) as exc:
        _say(f"invalid config: {exc}", sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        _say(f"i/o failure: {exc}", sys.stderr)
        return EXIT_IO


# ----------------------------------------------------------------------------
# simulate


def cmd_simulate(config_path, overrides=(), seed=None, threads=None, out=None):
    """Simulate the configured field; writes sample.ossf and manifest.json."""
    def run():
        cfg = _load(config_path, overrides, seed, threads)
        spec = cfg.field_spec()
        directory = _outdir(cfg, out)
        man = io.RunManifest(config_digest=cfg.digest(), version=__version__,
                             command="simulate")
        t0 = time.perf_counter()
        pts = cfg.points_array()
        ups = []
        for x in pts[np.any(pts != 0, axis=1)]:
            ups.append(fields._upsilon(spec, x, None))
            if not ups[-1].finite:
                raise FieldNotDefinedError(f"field not well defined at point {x.tolist()}")
        man.error_proxies["upsilon_change"] = max([u.changes[-1] for u in ups], default=0.0)
        t1 = time.perf_counter()
        sample = fields.simulate(spec, pts, cfg.n_rep, cfg.seed, threads=cfg.threads,
                                 check=False)
        t2 = time.perf_counter()
        header = {"config_digest": cfg.digest(), "spec_digest": sample.spec_digest,
                  "seed": cfg.seed, "tag": sample.tag, "points": pts.tolist(),
                  "grid_shape": cfg.grid_shape, "n_cells": sample.design.grid.n_cells}
        path = os.path.join(directory, SAMPLE_NAME)
        io.write_sample(path, sample.replicates, header)
        man.add_file(path)
        man.wall_times.update(check=t1 - t0, simulate=t2 - t1,
                              write=time.perf_counter() - t2)
        man.verdicts["simulate"] = "ok"
        man.write(os.path.join(directory, "manifest.json"))
        _say(f"wrote {path} ({cfg.n_rep} replicates x {len(pts)} points)")
        return EXIT_PASS
    return _guard(run)


# ----------------------------------------------------------------------------
# verify suites; each returns (passed, report dict, error proxies)


def _ecf_record(rep):
    d = rep.to_dict()
    d["rows"] = rep.rows()
    return d


def _suite_oss(cfg, spec):
    v = cfg.verify
    claimed = None if v["d_factor"] == 1.0 else v["d_factor"] * spec.D.entries
    rep = verify.oss_mc_test(spec, v["r"], cfg.points_array(), n_rep=v["n_rep"],
                             seed=cfg.seed, threads=cfg.threads, claimed_D=claimed)
    ctrl = verify.oss_negative_control(rep, spec)
    nonzero = np.any(cfg.points_array() != 0)
    passed = rep.passed and (not nonzero or not ctrl.passed)
    return passed, {"test": _ecf_record(rep), "control": _ecf_record(ctrl),
                    "control_detected": not ctrl.passed}, {}


def _shift(cfg, spec):
    h = cfg.verify["h"]
    if h is None:
        h = np.random.default_rng(cfg.seed).standard_normal(spec.d)
    return np.asarray(h, dtype=np.float64).reshape(spec.d)


def _suite_increments(cfg, spec):
    v = cfg.verify
    rep = verify.stationary_increments_mc_test(spec, _shift(cfg, spec), cfg.points_array(),
                                               n_rep=v["n_rep"], seed=cfg.seed,
                                               threads=cfg.threads)
    ctrl = verify.increments_negative_control(rep)
    nonzero = np.any(cfg.points_array() != 0)
    passed = rep.passed and (not nonzero or not ctrl.passed)
    return passed, {"test": _ecf_record(rep), "control": _ecf_record(ctrl),
                    "control_detected": not ctrl.passed}, {}


def _suite_proper(cfg, spec):
    pts = cfg.points_array()
    nz = pts[np.any(pts != 0, axis=1)]
    if len(nz) == 0:
        raise ConfigError("proper suite needs a nonzero evaluation point")
    sample = fields.simulate(spec, nz[:1], max(cfg.n_rep, 1000), cfg.seed,
                             threads=cfg.threads)
    rep = verify.properness_test(sample.replicates[:, 0, :])
    return rep.full, {"verdict": rep.verdict, "point": nz[0].tolist(),
                      "directions": rep.directions.tolist(),
                      "max_deficiency": rep.max_deficiency.tolist(),
                      "se": rep.se.tolist(),
                      "offending": None if rep.offending is None
                      else rep.offending.tolist()}, {}


def _suite_recurrence(cfg, spec):
    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.verify["n_probes"])
    worst, literal = 0.0, 0.0
    for _ in range(n):
        r = float(np.exp(rng.uniform(-2, 2)))
        x = rng.standard_normal(spec.d)
        y = rng.standard_normal((1, spec.d))
        worst = max(worst, fields.recurrence_residual(spec, r, x, y))
        if spec.variant == fields.HARMONIZABLE:
            literal = max(literal, fields.recurrence_residual(spec, r, x, y, "literal"))
    rep = {"max_residual": worst, "threshold": 1e-9, "n_probes": n}
    if spec.variant == fields.HARMONIZABLE:
        rep["literal_max_residual"] = literal
    return worst <= 1e-9, rep, {}


def _suite_normbound(cfg, spec):
    v = cfg.verify
    lo, hi = v["r_grid_small"], v["r_grid_large"]
    k = int(v["grid_points"])
    rep = verify.norm_bound_slopes(spec.D, np.geomspace(lo[0], lo[1], k),
                                   np.geomspace(hi[0], hi[1], k))
    return rep.passed, {"slope_small": rep.slope_small, "slope_large": rep.slope_large,
                        "h": rep.h, "H": rep.H, "slack": rep.slack,
                        "r_grid_small": lo, "r_grid_large": hi,
                        "ok_small": rep.ok_small, "ok_large": rep.ok_large,
                        "within_slack": rep.within_slack}, {}


def _suite_lebesgue(cfg, spec):
    v = cfg.verify
    rep = verify.lebesgue_scaling_check(spec.E, int(v["n_mc"]), seed=cfg.seed,
                                        r=float(v["lebesgue_r"]))
    return rep.passed, {"r": rep.r, "mc_volume": rep.mc_volume, "exact": rep.exact,
                        "rel_error": rep.rel_error, "tolerance": rep.tolerance,
                        "det_residual": rep.det_residual}, {}


def _suite_integral_cf(cfg, spec):
    """Simulated field against exp(-discrete exponent), plus the continuum ladder."""
    pts = cfg.points_array()
    sample = fields.simulate(spec, pts, cfg.n_rep, cfg.seed, threads=cfg.threads)
    th = verify.theta_panel(sample.design, seed=cfg.verify["theta_seed"])
    proj = np.einsum("njm,tjm->nt", sample.replicates, th)
    est, se = ecf_of_projections(proj)
    rep = verify.ECFReport(label="integral_cf", theta_list=th, empirical=est, se=se,
                           theoretical_exponent=sample.design.exponent(th)).finalize()
    quads = ladder(spec.quad, int(cfg.verify["rungs"]))
    pairs = [(x, t) for x, t in zip(pts, th[0])]
    lad = fields.identity_ladder("oss", spec, cfg.verify["r"], pairs, quads)
    return rep.passed, {"test": _ecf_record(rep),
                        "ladder": {"gaps": lad.gaps, "proxies": lad.proxies,
                                   "left": lad.left, "right": lad.right}}, \
        {"cf_exponent_proxy": lad.proxy}


def _suite_polar(cfg, spec):
    rng = np.random.default_rng(cfg.seed)
    pm = polar_map(spec.E)
    d = spec.d
    x = rng.standard_normal((1000, d)) * 10.0 ** rng.uniform(-2, 2, (1000, 1))
    t, direction = pm.decompose(x)
    recon = np.max(np.linalg.norm(pm.compose(t, direction) - x, axis=1)
                   / np.linalg.norm(x, axis=1))
    scal = 0.0
    for r in (0.1, 0.5, 2.0, 10.0):
        t_r = pm.tau(x @ mat_pow(r, spec.E.entries).T)
        scal = max(scal, float(np.max(np.abs(t_r - r * t) / (r * t))))
    rep = {"reconstruction": float(recon), "scaling": scal, "threshold": 1e-8}
    E = spec.E.entries
    a = E[0, 0]
    ok = recon <= 1e-8 and scal <= 1e-8
    if np.allclose(E, a * np.eye(d), rtol=0, atol=0):
        closed = (np.linalg.norm(x, axis=1) / a) ** (1.0 / a)
        rep["closed_form"] = float(np.max(np.abs(t - closed) / closed))
        ok = ok and rep["closed_form"] <= 1e-8
    return ok, rep, {}


_SUITE_FNS = {"oss": _suite_oss, "increments": _suite_increments, "proper": _suite_proper,
              "recurrence": _suite_recurrence, "normbound": _suite_normbound,
              "lebesgue": _suite_lebesgue, "integral_cf": _suite_integral_cf,
              "polar": _suite_polar}


def cmd_verify(suite, config_path, overrides=(), seed=None, threads=None, out=None):
    """Run one verification suite; writes report_<suite>.json and a manifest."""
    if suite not in _SUITE_FNS:
        _say(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}", sys.stderr)
        return EXIT_CONFIG

    def run():
        cfg = _load(config_path, overrides, seed, threads)
        spec = cfg.field_spec()
        directory = _outdir(cfg, out)
        t0 = time.perf_counter()
        passed, report, proxies = _SUITE_FNS[suite](cfg, spec)
        elapsed = time.perf_counter() - t0
        report = {"suite": suite, "passed": bool(passed), "config_digest": cfg.digest(),
                  **report}
        path = os.path.join(directory, f"report_{suite}.json")
        io.write_json(path, report)
        man = io.RunManifest(config_digest=cfg.digest(), version=__version__,
                             command=f"verify {suite}", wall_times={suite: elapsed},
                             error_proxies=proxies,
                             verdicts={suite: "pass" if passed else "fail"})
        man.add_file(path)
        man.write(os.path.join(directory, f"manifest_verify_{suite}.json"))
        _say(f"{suite}: {'PASS' if passed else 'FAIL'} ({path})")
        return EXIT_PASS if passed else EXIT_FAIL
    return _guard(run)


# ----------------------------------------------------------------------------
# plot data


def _field_slice(path):
    head, values = io.read_sample(path)
    pts = np.asarray(head["points"], dtype=np.float64)
    vals = values[0, :, 0]
    cols = [f"x{i + 1}" for i in range(pts.shape[1])] + ["value"]
    return cols, [list(p) + [v] for p, v in zip(pts, vals)]


def _ecf_panel(path):
    rep = io.read_json(path)
    rec = rep.get("test", rep)
    if "rows" not in rec:
        raise ValueError(f"{path} holds no ECF panel")
    return ["theta_index", "re_emp", "im_emp", "se", "theo", "z"], rec["rows"]


def _slope_fit(path):
    rep = io.read_json(path)
    if "slope_small" not in rep:
        raise ValueError(f"{path} is not a normbound report")
    s = rep["slack"]
    return (["regime", "r_lo", "r_hi", "slope", "target_lo", "target_hi"],
            [[0] + list(rep["r_grid_small"]) + [rep["slope_small"], rep["h"] - s, rep["h"] + s],
             [1] + list(rep["r_grid_large"]) + [rep["slope_large"], rep["H"] - s, rep["H"] + s]])


_PLOT_FNS = {"field_slice": _field_slice, "ecf_panel": _ecf_panel, "slope_fit": _slope_fit}


def cmd_plotdata(sample_path, kind, out=None):
    """Write ``<kind>.txt``: whitespace-delimited, one header line, numeric columns."""
    if kind not in _PLOT_FNS:
        _say(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}", sys.stderr)
        return EXIT_CONFIG
    try:
        cols, rows = _PLOT_FNS[kind](sample_path)
        directory = out if out is not None else os.path.dirname(os.path.abspath(sample_path))
        os.makedirs(directory, exist_ok=True)
        target = os.path.join(directory, f"{kind}.txt")
        io.write_table(target, cols, rows)
    except (OSError, ValueError, KeyError) as exc:
        _say(f"i/o failure: {exc}", sys.stderr)
        return EXIT_IO
    _say(f"wrote {target}")
    return EXIT_PASS


# ----------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="ossfield", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--out")

    common(sub.add_parser("simulate", help="simulate the configured field"))
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite")
    common(v)
    pl = sub.add_parser("plotdata", help="emit a plot-ready table")
    pl.add_argument("kind")
    pl.add_argument("path")
    pl.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.override, args.seed, args.threads, args.out)
    if args.command == "verify":
        return cmd_verify(args.suite, args.config, args.override, args.seed, args.threads,
                          args.out)
    return cmd_plotdata(args.path, args.kind, args.out)


if __name__ == "__main__":
    sys.exit(main())
