"""Command-line front end.

Subcommands
-----------
quadric   certify 2-positivity of the hyperquadric curvature operator and
          cross-check the three curvature oracles; JSON report.
ymflow    run the lattice Yang-Mills gradient flow; CSV trace + JSON report.
maxprin   run the flow and check the maximum-principle verdicts (or replay
          a stored trace).
cert      evaluate the integer degree-estimate certificate.

Exit codes: 0 success, 1 certified failure (checks ran, claim false),
2 usage error, 3 numerical guard tripped.  Flags override values from an
optional ``--config file.json`` which overrides built-in defaults; unknown
config keys are rejected.  The environment variable ``CURVFLOW_THREADS``
(positive integer) caps internal parallelism; runs are deterministic for a
fixed seed regardless of its value.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from . import pseudoindex as pidx
from . import quadric, sphere_mesh
from . import ym_lattice as ym
from .spectra import Positivity, PositivityClass

EXIT_OK = 0
EXIT_CERTIFIED_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL_GUARD = 3


class UsageError(Exception):
    pass


def _load_config(path, allowed: dict):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """CLI flags override config-file values override defaults."""
    cfg = _load_config(getattr(args, "config", None), defaults)
    out = dict(defaults)
    out.update(cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def _write_json(path, payload) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _parse_int_list(text: str):
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


# -- quadric ------------------------------------------------------------------

QUADRIC_DEFAULTS = {
    "n": 3,
    "samples": 20000,
    "restarts": 32,
    "iters": 300,
    "seed": 0,
    "out": None,
    "oracle_pairs": 1000,
}

ORACLE_TOL = 1e-9


def cmd_quadric(args) -> int:
    p = _merge(args, QUADRIC_DEFAULTS)
    n = int(p["n"])
    if not 2 <= n <= 16:
        raise UsageError(f"n must be in [2, 16], got {n}")

    cert = quadric.certify_two_positivity(n, restarts=int(p["restarts"]),
                                          iters=int(p["iters"]), seed=int(p["seed"]))

    rng = np.random.default_rng(int(p["seed"]) + 10_000)
    res_trace = 0.0
    res_bracket = 0.0
    for _ in range(int(p["oracle_pairs"])):
        a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        c = quadric.bisectional_closed(a, b)
        res_trace = max(res_trace, abs(c - quadric.bisectional_trace(a, b)))
        res_bracket = max(res_bracket, abs(c - quadric.bisectional_from_bracket(a, b)))

    sweep_min, _ = quadric.nonnegativity_sweep(n, samples=int(p["samples"]),
                                               descents=32, seed=int(p["seed"]))
    eq = quadric.equality_case_vector(n)
    eq_spec = np.linalg.eigvalsh(quadric.curvature_operator(eq).entries)

    report = {
        "n": n,
        "seed": int(p["seed"]),
        "normalization": "unit parameter vector, standard Hermitian frame",
        "min_lambda12": cert.min_lambda12,
        "argmin": {"re": cert.argmin.real.tolist(), "im": cert.argmin.imag.tolist()},
        "spectrum_at_argmin": cert.spectrum.tolist(),
        "equality_case": {"lambda1": float(eq_spec[0]), "lambda2": float(eq_spec[1])},
        "restart_values": cert.restart_values,
        "line_search_failures": cert.line_search_failures,
        "oracle_residuals": {"closed_vs_trace": res_trace, "closed_vs_bracket": res_bracket},
        "nonnegativity_sweep_min": sweep_min,
        "two_positive": bool(cert.certified),
    }
    _write_json(p["out"], report)
    ok = cert.certified and res_trace < ORACLE_TOL and res_bracket < ORACLE_TOL
    return EXIT_OK if ok else EXIT_CERTIFIED_FAILURE


# -- ymflow / maxprin ---------------------------------------------------------

FLOW_DEFAULTS = {
    "level": 3,
    "rank": 2,
    "degrees": "1,1",
    "init": "monopole",
    "eps": 0.0,
    "scramble_seed": None,
    "steps": 2000,
    "tol": 1e-6,
    "step_size": 1e-3,
    "record_every": 25,
    "seed": 0,
    "trace": None,
    "report": None,
}

MAXPRIN_EXTRA = {
    "t_check": 0.1,
    "tol_c": ym.DEFAULT_TOL_C,
    "tol_cprime": ym.DEFAULT_TOL_CPRIME,
    "replay_trace": None,
}


def _build_initial_field(mesh, p) -> ym.GaugeField:
    init = str(p["init"])
    rank = int(p["rank"])
    if init == "monopole":
        degrees = _parse_int_list(p["degrees"])
        if len(degrees) != rank:
            raise UsageError(f"degrees list {degrees} does not match rank {rank}")
        field = ym.monopole_field(mesh, degrees)
    elif init == "quasipositive":
        if rank != 2:
            raise UsageError("quasipositive initial data is rank 2")
        field = ym.quasi_positive_field(mesh)
    else:
        raise UsageError(f"unknown init {init!r} (choose monopole or quasipositive)")
    if p["scramble_seed"] is not None:
        field = ym.gauge_scramble(field, int(p["scramble_seed"]))
    eps = float(p["eps"])
    if eps > 0:
        field = ym.perturb(field, eps, int(p["seed"]))
    return field


def _flow_params(p):
    level = int(p["level"])
    rank = int(p["rank"])
    if level > sphere_mesh.MAX_LEVEL:
        raise UsageError(f"level must be <= {sphere_mesh.MAX_LEVEL}, got {level}")
    if not 1 <= rank <= 8:
        raise UsageError(f"rank must be in [1, 8], got {rank}")
    if float(p["eps"]) < 0:
        raise UsageError("eps must be nonnegative")
    config = ym.FlowConfig(step_size=float(p["step_size"]), max_steps=int(p["steps"]),
                           grad_tol=float(p["tol"]), seed=int(p["seed"]))
    return level, rank, config


def _run_flow_experiment(p):
    level, rank, config = _flow_params(p)
    mesh = sphere_mesh.build_icosphere(level)
    field = _build_initial_field(mesh, p)
    final, trace = ym.run_flow(field, config, record_every=int(p["record_every"]))
    return mesh, final, trace


def _eig_summary(curv: ym.PlaquetteCurvature) -> dict:
    eig = curv.eigenvalues
    return {
        "mean": eig.mean(axis=0).tolist(),
        "std": eig.std(axis=0).tolist(),
        "min": eig.min(axis=0).tolist(),
        "max": eig.max(axis=0).tolist(),
    }


def _energy_monotone(trace: ym.FlowTrace) -> bool:
    energies = [r.energy for r in trace.records]
    return all(b <= a for a, b in zip(energies, energies[1:]))


def cmd_ymflow(args) -> int:
    p = _merge(args, FLOW_DEFAULTS)
    mesh, final, trace = _run_flow_experiment(p)
    if p["trace"] is not None:
        trace.write_csv(p["trace"])

    curv = ym.curvature_field(final)
    summary = ym.splitting_summary(curv)
    verdicts = None
    if final.rank >= 2:
        rep = ym.maxprin_monitor(trace)
        verdicts = {"monotone_ok": rep.monotone_ok, "tol_mp": rep.tol_mp,
                    "quasi_applicable": rep.quasi_applicable,
                    "positive_after_ok": rep.positive_after_ok}
    degrees_constant = len({r.degree for r in trace.records}) == 1
    monotone = _energy_monotone(trace)
    report = {
        "rank": final.rank,
        "level": mesh.level,
        "spacing": mesh.spacing,
        "initial_positivity": (trace.initial_positivity.kind.value
                               if trace.initial_positivity else None),
        "final_eigenvalues_per_face_summary": _eig_summary(curv),
        "splitting_type": list(summary.degrees),
        "integrality_residual": summary.integrality_residual,
        "eig_cross_face_std": summary.eig_std,
        "converged": trace.converged,
        "energy_monotone": monotone,
        "degree_constant": degrees_constant,
        "total_degree": trace.records[-1].degree,
        "maxprin_verdicts": verdicts,
    }
    _write_json(p["report"], report)
    ok = trace.converged and monotone and degrees_constant
    return EXIT_OK if ok else EXIT_CERTIFIED_FAILURE


def _trace_from_json(path) -> ym.FlowTrace:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    records = [ym.FlowRecord(**rec) for rec in doc["records"]]
    positivity = None
    if doc.get("initial_positivity") is not None:
        positivity = PositivityClass(Positivity(doc["initial_positivity"]))
    return ym.FlowTrace(records=records, rank=int(doc.get("rank", 2)),
                        level=int(doc.get("level", -1)),
                        spacing=float(doc.get("spacing", 0.0)),
                        step_size=float(doc.get("step_size", 0.0)),
                        grad_tol=float(doc.get("grad_tol", 0.0)),
                        initial_positivity=positivity,
                        converged=bool(doc.get("converged", False)))


def cmd_maxprin(args) -> int:
    p = _merge(args, {**FLOW_DEFAULTS, **MAXPRIN_EXTRA})
    if int(p["rank"]) < 2:
        raise UsageError("the maximum-principle monitor requires rank >= 2")
    if p["replay_trace"] is not None:
        trace = _trace_from_json(p["replay_trace"])
    else:
        _, _, trace = _run_flow_experiment(p)
        if p["trace"] is not None:
            trace.write_csv(p["trace"])
    rep = ym.maxprin_monitor(trace, c=float(p["tol_c"]), cprime=float(p["tol_cprime"]),
                             t_check=float(p["t_check"]))
    report = {
        "tol_mp": rep.tol_mp,
        "tolerance_constants": {"c": rep.c, "cprime": rep.cprime},
        "initial_min_lambda12": rep.initial_min,
        "worst_drop": rep.worst_drop,
        "verdict1_monotone": rep.monotone_ok,
        "initial_positivity": (trace.initial_positivity.kind.value
                               if trace.initial_positivity else None),
        "verdict2_applicable": rep.quasi_applicable,
        "verdict2_positive_after": rep.positive_after_ok,
        "t_check": rep.t_check,
        "passed": rep.passed,
    }
    _write_json(p["report"], report)
    return EXIT_OK if rep.passed else EXIT_CERTIFIED_FAILURE


# -- cert ----------------------------------------------------------------------

CERT_DEFAULTS = {"n": None, "splitting": None, "k": 0, "out": None}


def cmd_cert(args) -> int:
    p = _merge(args, CERT_DEFAULTS)
    if p["n"] is None or p["splitting"] is None:
        raise UsageError("cert requires --n and --splitting")
    degrees = _parse_int_list(p["splitting"])
    n = int(p["n"])
    try:
        certificate = pidx.check_certificate(sorted(degrees), k=int(p["k"]), n=n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write_json(p["out"], certificate.to_json_dict())
    return EXIT_OK if certificate.verdict else EXIT_CERTIFIED_FAILURE


# -- parser ---------------------------------------------------------------------


def _add_flow_arguments(sub):
    sub.add_argument("--level", type=int)
    sub.add_argument("--rank", type=int)
    sub.add_argument("--degrees", type=str)
    sub.add_argument("--init", type=str, choices=["monopole", "quasipositive"])
    sub.add_argument("--eps", type=float)
    sub.add_argument("--scramble-seed", dest="scramble_seed", type=int)
    sub.add_argument("--steps", type=int)
    sub.add_argument("--tol", type=float)
    sub.add_argument("--step-size", dest="step_size", type=float)
    sub.add_argument("--record-every", dest="record_every", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--trace", type=str)
    sub.add_argument("--report", type=str)
    sub.add_argument("--config", type=str)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvflow",
                                     description="curvature positivity and "
                                                 "Yang-Mills flow verification suite")
    subs = parser.add_subparsers(dest="command", required=True)

    q = subs.add_parser("quadric", help="certify 2-positivity of the hyperquadric")
    q.add_argument("--n", type=int)
    q.add_argument("--samples", type=int)
    q.add_argument("--restarts", type=int)
    q.add_argument("--iters", type=int)
    q.add_argument("--oracle-pairs", dest="oracle_pairs", type=int)
    q.add_argument("--seed", type=int)
    q.add_argument("--out", type=str)
    q.add_argument("--config", type=str)
    q.set_defaults(func=cmd_quadric)

    y = subs.add_parser("ymflow", help="run the lattice Yang-Mills gradient flow")
    _add_flow_arguments(y)
    y.set_defaults(func=cmd_ymflow)

    m = subs.add_parser("maxprin", help="maximum-principle monitor for the flow")
    _add_flow_arguments(m)
    m.add_argument("--t-check", dest="t_check", type=float)
    m.add_argument("--tol-c", dest="tol_c", type=float)
    m.add_argument("--tol-cprime", dest="tol_cprime", type=float)
    m.add_argument("--replay-trace", dest="replay_trace", type=str)
    m.set_defaults(func=cmd_maxprin)

    c = subs.add_parser("cert", help="degree-estimate certificate")
    c.add_argument("--n", type=int)
    c.add_argument("--splitting", type=str)
    c.add_argument("--k", type=int)
    c.add_argument("--out", type=str)
    c.add_argument("--config", type=str)
    c.set_defaults(func=cmd_cert)
    try:
        # let values like "-1,2,2" pass as arguments rather than flags
        c._negative_number_matcher = re.compile(r"^-\d+(?:,-?\d+)*$")
    except AttributeError:
        pass
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        quadric.thread_count()      # validate CURVFLOW_THREADS early
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ym.CurvatureExtractionError as exc:
        print(f"numerical guard: {exc} (face {exc.face})", file=sys.stderr)
        return EXIT_NUMERICAL_GUARD
    except (ym.FlowStepError, ym.DegreeQuantizationError,
            sphere_mesh.FluxQuantizationError, sphere_mesh.GeometryError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_GUARD


if __name__ == "__main__":
    sys.exit(main())
