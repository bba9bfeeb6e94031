"""Batch command line front end.

Every subcommand produces long-format rows with the columns in
:data:`CSV_COLUMNS` plus a summary with named checks.  JSON output mirrors the
CSV rows and adds metadata (grid, tolerances, versions).  Exit status is 0
on success, 2 for configuration errors and 3 for numerical failures or
failed checks.

Configuration files hold ``key = value`` lines; ``#`` starts a comment and
keys use the long flag names (dashes or underscores).  Flags given on the
command line override file values.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy

from . import __version__
from . import s2_spectral as s2

CSV_COLUMNS = [
    "experiment",
    "quantity",
    "component",
    "r",
    "t",
    "value",
    "error",
    "solver_residual",
    "iterations",
]

MODELS = ("minkowski", "schwarzschild", "boosted-schwarzschild", "kerr")
SUBCOMMANDS = (
    "selftest",
    "quasilocal",
    "adm",
    "total",
    "kerr-invariance",
    "evolve-check",
    "slow-decay",
    "constraint-check",
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration; the message names the field."""


class CheckFailure(RuntimeError):
    """A named invariant failed during a run."""


# --- configuration ----------------------------------------------------------


@dataclass
class RunConfig:
    model: str = "schwarzschild"
    mass: float = 1.0
    beta: float = 0.0
    spin: float = 0.0
    t: float = 0.0
    lmax: int = 12
    r: float = 100.0
    sweep: str = "50:1600:8"
    dt: float | None = None
    tol: float = 1e-8
    csv: str | None = None
    json: str | None = None

    def radii(self):
        lo, hi, n = parse_sweep(self.sweep)
        return np.geomspace(lo, hi, n)

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {', '.join(MODELS)}, got {self.model!r}")
        if not self.mass > 0:
            raise ConfigError("mass: must be positive")
        if not abs(self.beta) < 1:
            raise ConfigError("beta: must satisfy |beta| < 1")
        if not abs(self.spin) < self.mass:
            raise ConfigError("spin: must satisfy |spin| < mass")
        if not 4 <= self.lmax <= 40:
            raise ConfigError("lmax: must be between 4 and 40")
        if not self.r > 0:
            raise ConfigError("r: must be positive")
        if not 0 < self.tol < 1:
            raise ConfigError("tol: must lie in (0, 1)")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt: must be positive")
        lo, hi, n = parse_sweep(self.sweep)
        if lo * 1.0 < 10 * self.mass:
            raise ConfigError("sweep: smallest radius must be at least 10 * mass")
        return self

    def build_model(self):
        from .spacetime_samplers import model_from_name

        return model_from_name(self.model, mass=self.mass, beta=self.beta, spin=self.spin)


def parse_sweep(text):
    """``min:max:count`` for a log-spaced sweep."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"sweep: expected min:max:count, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    if not 0 < lo < hi or n < 5:
        raise ConfigError("sweep: need 0 < min < max and at least 5 radii")
    return lo, hi, n


def _coerce(name, raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"{name}: unknown configuration key")
    kind = types[name]
    if raw is None or (isinstance(raw, str) and raw.lower() == "none"):
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    return str(raw)


def read_config_file(path):
    """Key-value pairs from a configuration file."""
    out = {}
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"config: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def build_config(args):
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _coerce(f.name, v)
    return RunConfig(**values).validate()


# --- output -----------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def row(experiment, quantity, value, component="", r=None, t=None, error=None,
        solver_residual=None, iterations=None):
    return dict(
        experiment=experiment,
        quantity=quantity,
        component=component,
        r=r,
        t=t,
        value=value,
        error=error,
        solver_residual=solver_residual,
        iterations=iterations,
    )


def vector_rows(experiment, quantity, vec, errors=None, **kw):
    vec = np.ravel(vec)
    errs = [None] * len(vec) if errors is None else np.ravel(errors)
    return [row(experiment, quantity, float(v), component=str(i), error=None if e is None else float(e), **kw)
            for i, (v, e) in enumerate(zip(vec, errs))]


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rw in rows:
        w.writerow([_fmt(rw.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def metadata(cfg, command):
    return dict(
        command=command,
        config=asdict(cfg),
        grid=dict(lmax=cfg.lmax, nlat=cfg.lmax + 1, nphi=2 * cfg.lmax + 2),
        versions=dict(quasilocal=__version__, numpy=np.__version__, scipy=scipy.__version__),
    )


# --- checks -------------------------------------------------------------------


def check(name, value, tol, ok=None):
    value = float(value)
    ok = (abs(value) <= tol) if ok is None else bool(ok)
    return dict(name=name, value=value, tolerance=float(tol), passed=ok)


def _failures(checks):
    return [c["name"] for c in checks if not c["passed"]]


# --- subcommands ----------------------------------------------------------------


def _monomial_integral(a, b, c):
    """Exact ``int x^a y^b z^c dS`` over the unit sphere."""
    from scipy.special import gamma

    if a % 2 or b % 2 or c % 2:
        return 0.0
    ha, hb, hc = (a + 1) / 2, (b + 1) / 2, (c + 1) / 2
    return 2 * gamma(ha) * gamma(hb) * gamma(hc) / gamma(ha + hb + hc)


def selftest_checks(lmaxes=(8, 16), seed=0):
    """Spectral substrate and Minkowski checks used by ``selftest``."""
    from .conserved_quantities import dual_element, random_lorentz, translate_embedding_law
    from .spacetime_samplers import Minkowski, coordinate_sphere_surface_data
    from .conserved_quantities import evaluate, lorentz_generators
    from .surface_geometry import Embedding31, embedded_surface, quasilocal_energy

    rng = np.random.default_rng(seed)
    checks = []
    for L in lmaxes:
        g = s2.build_grid(L)
        x, y, z = g.xt
        err = 0.0
        for a in range(L + 1):
            for b in range(L + 1 - a):
                c = L - a - b
                err = max(err, abs(g.integrate(x**a * y**b * z**c) - _monomial_integral(a, b, c)))
        checks.append(check(f"quadrature_exactness_l{L}", err, 1e-12))
        B = g.real_basis()
        gram = np.einsum("kab,nab,ab->kn", B, B, g.weights)
        checks.append(check(f"orthonormality_l{L}", np.max(np.abs(gram - np.eye(g.nbasis))), 1e-12))
        rnd = s2.round_metric(g)
        deg = g.real_degrees()
        eig = max(float(np.max(np.abs(s2.laplace_beltrami(g, rnd, B[k]) + deg[k] * (deg[k] + 1) * B[k])))
                  for k in range(g.nbasis))
        checks.append(check(f"laplacian_eigenvalues_l{L}", eig, 1e-9 * L * L))
        pert = 0.05 * rng.normal(size=4)
        f = 1 + pert[0] * g.ylm(2, 0) + pert[1] * g.ylm(2, 1) + pert[2] * g.ylm(3, -2) + pert[3] * g.ylm(1, 1)
        sigma = f**2 * rnd
        K = s2.gauss_curvature(g, sigma)
        gb = s2.integrate(g, K, sigma) - 4 * np.pi
        checks.append(check(f"gauss_bonnet_l{L}", gb, 1e-9))
        kern = max(float(np.max(np.abs(s2.laplace_beltrami(g, rnd, g.xt[i]) + 2 * g.xt[i]))) for i in range(3))
        checks.append(check(f"helmholtz_kernel_l{L}", kern, 1e-10))
        u, mom = s2.solve_helmholtz_plus2(g, g.xt[2] + g.ylm(3, 1))
        resid = s2.laplacian_round(g, u) + 2 * u - g.ylm(3, 1)
        checks.append(check(f"helmholtz_solve_l{L}", np.max(np.abs(resid)), 1e-10))
        checks.append(check(f"helmholtz_moment_l{L}", mom[2] - 4 * np.pi / 3, 1e-12))
    g = s2.build_grid(12)
    for r in (1.0, 10.0, 100.0):
        data = coordinate_sphere_surface_data(Minkowski(), 0.0, r, g)
        emb = Embedding31(np.concatenate([np.zeros((1,) + g.shape), r * g.xt]), np.array([1.0, 0, 0, 0]))
        d = dual_element(g, data, emb)
        e = quasilocal_energy(g, data, emb)
        size = max(abs(e), np.max(np.abs(d.Phi)), np.max(np.abs(d.p)))
        checks.append(check(f"minkowski_vanishing_r{r:g}", size, 1e-8 * max(1.0, r)))
    # a perturbed ellipsoid in the t = 0 slice is its own reference
    Xs = (1 + 0.05 * g.ylm(2, 0) + 0.02 * g.ylm(3, 1)) * 5.0 * g.xt
    X = np.concatenate([np.zeros((1,) + g.shape), Xs])
    data = embedded_surface(g, X).surface_data()
    emb = Embedding31(X, np.array([1.0, 0, 0, 0]))
    d = dual_element(g, data, emb)
    size = max(abs(quasilocal_energy(g, data, emb)), np.max(np.abs(d.Phi)), np.max(np.abs(d.p)))
    checks.append(check("minkowski_vanishing_ellipsoid", size, 5e-8))
    # physical data from a different surface make the quantities nonzero
    f0 = 0.3 * g.ylm(2, 1)
    other = embedded_surface(g, np.concatenate([0.5 * f0[None], Xs])).surface_data()
    emb = Embedding31(np.concatenate([f0[None], Xs]), np.array([1.0, 0, 0, 0]))
    _, dev = translate_embedding_law(g, other, emb, rng.normal(size=4))
    checks.append(check("translation_law", dev, 1e-9))
    A = random_lorentz(rng)
    emb2 = Embedding31(np.einsum("mn,n...->m...", A, emb.X), A @ emb.T0)
    eq = max(abs(evaluate(g, other, emb, K) - evaluate(g, other, emb2, K.transform(A)))
             for K in lorentz_generators())
    checks.append(check("lorentz_equivariance", eq, 1e-9))
    return checks


def cmd_selftest(cfg):
    t0 = time.perf_counter()
    checks = selftest_checks()
    elapsed = time.perf_counter() - t0
    checks.append(check("runtime_seconds", elapsed, 120.0))
    rows = [row("selftest", c["name"], c["value"], error=c["tolerance"]) for c in checks]
    return rows, dict(checks=checks)


def cmd_quasilocal(cfg):
    from .conserved_quantities import dual_element
    from .optimal_embedding import solve_optimal_finite_r
    from .spacetime_samplers import coordinate_sphere_surface_data
    from .surface_geometry import Embedding31, quasilocal_energy

    model = cfg.build_model()
    g = s2.build_grid(cfg.lmax)
    data = coordinate_sphere_surface_data(model, cfg.t, cfg.r, g)
    init = Embedding31(np.concatenate([np.zeros((1,) + g.shape), cfg.r * g.xt]), np.array([1.0, 0, 0, 0]))
    emb = solve_optimal_finite_r(g, data, init, tol=cfg.tol, scale=model.mass_scale)
    E = quasilocal_energy(g, data, emb)
    d = dual_element(g, data, emb)
    kw = dict(r=cfg.r, t=cfg.t, solver_residual=emb.info["residual"], iterations=emb.info["iterations"])
    rows = [row("quasilocal", "E", E, **kw)]
    rows += vector_rows("quasilocal", "T0", emb.T0, **kw)
    rows += vector_rows("quasilocal", "p", d.p, **kw)
    rows += vector_rows("quasilocal", "Phi", d.Phi, **kw)
    summary = dict(E=E, T0=emb.T0, p=d.p, Phi=d.Phi, iterations=emb.info["iterations"],
                   residual=emb.info["residual"], threshold=emb.info["threshold"])
    return rows, summary


def _table_rows(experiment, q):
    rows = []
    for rec in q.table:
        kw = dict(r=rec["r"], t=rec["t"], solver_residual=rec["residual"], iterations=rec["iterations"])
        rows += vector_rows(experiment, "J_r", rec["values"][:3], **kw)
        rows += vector_rows(experiment, "Cm_r", rec["values"][3:], **kw)
        rows += vector_rows(experiment, "p_r", rec["p"], **kw)
    return rows


def _totals(cfg):
    from .asymptotics_evolution import total_quantities

    model = cfg.build_model()
    g = s2.build_grid(cfg.lmax)
    return total_quantities(model, cfg.radii(), g, cfg.t, tol=cfg.tol)


def cmd_adm(cfg):
    q = _totals(cfg)
    lead = q.diagnostics["adm_leading"]
    rows = _table_rows("adm", q)
    rows.append(row("adm", "e", q.adm.e, t=cfg.t, error=float(q.diagnostics["p_err"][0])))
    rows += vector_rows("adm", "p", q.adm.p, q.diagnostics["p_err"][1:], t=cfg.t)
    rows.append(row("adm", "m", q.adm.m, t=cfg.t))
    rows.append(row("adm", "e_leading", lead.e, t=cfg.t))
    rows += vector_rows("adm", "p_leading", lead.p, t=cfg.t)
    dev = max(abs(q.adm.e - lead.e), float(np.max(np.abs(q.adm.p - lead.p))))
    checks = [check("adm_two_routes", dev, 1e-6 * cfg.mass)]
    return rows, dict(e=q.adm.e, p=q.adm.p, m=q.adm.m, leading=asdict(lead), checks=checks)


def cmd_total(cfg):
    q = _totals(cfg)
    rows = _table_rows("total", q)
    rows += vector_rows("total", "C", q.C, q.C_err, t=cfg.t)
    rows += vector_rows("total", "J", q.J, q.J_err, t=cfg.t)
    rows.append(row("total", "m", q.adm.m, t=cfg.t))
    summary = dict(C=q.C, C_err=q.C_err, J=q.J, J_err=q.J_err, e=q.adm.e, p=q.adm.p, m=q.adm.m,
                   rho_moment=q.diagnostics["rho_moment"], curl_moment=q.diagnostics["curl_moment"])
    return rows, summary


def cmd_kerr_invariance(cfg):
    from .asymptotics_evolution import kerr_invariance_experiment
    from .conserved_quantities import komar_angular_momentum

    if cfg.model != "kerr":
        raise ConfigError("model: kerr-invariance needs model = kerr")
    g = s2.build_grid(cfg.lmax)
    radii = cfg.radii()
    rep = kerr_invariance_experiment(cfg.mass, cfg.spin, radii, g)
    komar = komar_angular_momentum(g, cfg.mass, cfg.spin, float(radii[-1]))
    rows = []
    for name, prof in rep["profiles"].items():
        for R, vals in zip(radii, prof["per_radius"]):
            rows += vector_rows("kerr-invariance", f"J_r[{name}]", vals[:3], r=R)
        rows += vector_rows("kerr-invariance", f"J[{name}]", prof["J"], prof["J_err"])
    rows.append(row("kerr-invariance", "komar", komar))
    scale = max(abs(komar), 1e-12)
    checks = [check("profile_agreement", rep["max_deviation"] / scale, 1e-3)]
    for name, prof in rep["profiles"].items():
        checks.append(check(f"komar_{name}", (prof["J"][2] - komar) / scale, 1e-3))
    return rows, dict(komar=komar, max_deviation=rep["max_deviation"], checks=checks)


def cmd_evolve_check(cfg):
    from .asymptotics_evolution import evolution_identities

    model = cfg.build_model()
    g = s2.build_grid(cfg.lmax)
    ev = evolution_identities(model, cfg.radii(), g, cfg.t, cfg.dt)
    rows = []
    for t, C, J in zip(ev["times"], ev["C"], ev["J"]):
        rows += vector_rows("evolve-check", "C", C, t=t)
        rows += vector_rows("evolve-check", "J", J, t=t)
    rows += vector_rows("evolve-check", "dC_dt", ev["dC"], t=cfg.t)
    rows += vector_rows("evolve-check", "dJ_dt", ev["dJ"], t=cfg.t)
    rows += vector_rows("evolve-check", "p_over_e", ev["p_over_e"], t=cfg.t)
    rows += vector_rows("evolve-check", "h0_m3_moment_rate", ev["h0_m3_drift"], t=cfg.t)
    rows += vector_rows("evolve-check", "h_m3_moment_rate", ev["h_m3_rate"], t=cfg.t)
    scale = cfg.mass
    checks = [
        check("dC_equals_p_over_e", np.max(np.abs(ev["dC"] - ev["p_over_e"])), 1e-3),
        check("dJ_vanishes", np.max(np.abs(ev["dJ"])), 1e-3 * scale),
        check("h_m3_rate_equals_minus_p", np.max(np.abs(ev["h_m3_rate"] - ev["minus_p"])), 1e-3 * scale),
    ]
    return rows, dict(dC=ev["dC"], dJ=ev["dJ"], p_over_e=ev["p_over_e"], checks=checks)


def cmd_slow_decay(cfg):
    from .asymptotics_evolution import slow_decay_growth_check

    model = cfg.build_model()
    g = s2.build_grid(cfg.lmax)
    rep = slow_decay_growth_check(model, cfg.radii(), g, cfg.t)
    rows = []
    for R, a, b in zip(rep["radii"], rep["h_moment"], rep["j_moment"]):
        rows.append(row("slow-decay", "h_moment", a, r=R, t=cfg.t))
        rows.append(row("slow-decay", "j_moment", b, r=R, t=cfg.t))
    rows.append(row("slow-decay", "h_exponent", rep["h_exponent"], t=cfg.t))
    rows.append(row("slow-decay", "j_exponent", rep["j_exponent"], t=cfg.t))
    checks = [
        check("h_growth_at_most_log", rep["h_exponent"], 0.1, ok=rep["h_exponent"] < 0.1),
        check("j_growth_at_most_log", rep["j_exponent"], 0.1, ok=rep["j_exponent"] < 0.1),
    ]
    return rows, dict(h_exponent=rep["h_exponent"], j_exponent=rep["j_exponent"], checks=checks)


def cmd_constraint_check(cfg):
    from .spacetime_samplers import constraint_divergence_check

    model = cfg.build_model()
    g = s2.build_grid(cfg.lmax)
    rep = constraint_divergence_check(model, cfg.radii(), g, cfg.t)
    rows = []
    for R, a, b in zip(rep["radii"], rep["radial_error"], rep["angular_error"]):
        rows.append(row("constraint-check", "radial_truncation", a, r=R, t=cfg.t))
        rows.append(row("constraint-check", "angular_truncation", b, r=R, t=cfg.t))
    rows.append(row("constraint-check", "radial_exponent", rep["radial_exponent"], t=cfg.t))
    rows.append(row("constraint-check", "angular_exponent", rep["angular_exponent"], t=cfg.t))
    rows.append(row("constraint-check", "extraction_residual", rep["extraction_residual"], t=cfg.t))
    checks = [check("extraction_residual", rep["extraction_residual"], 1e-6 * cfg.mass)]
    for key, target in (("radial_exponent", -4.0), ("angular_exponent", -3.0)):
        val = rep[key]
        if np.isfinite(val):
            checks.append(check(key, val - target, 0.2))
    return rows, dict(radial_exponent=rep["radial_exponent"], angular_exponent=rep["angular_exponent"],
                      checks=checks)


COMMANDS = {
    "selftest": cmd_selftest,
    "quasilocal": cmd_quasilocal,
    "adm": cmd_adm,
    "total": cmd_total,
    "kerr-invariance": cmd_kerr_invariance,
    "evolve-check": cmd_evolve_check,
    "slow-decay": cmd_slow_decay,
    "constraint-check": cmd_constraint_check,
}


# --- entry point ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="quasilocal", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--model", help=f"one of {', '.join(MODELS)}")
    p.add_argument("--mass")
    p.add_argument("--beta", help="boost velocity along x3")
    p.add_argument("--spin", help="Kerr parameter a")
    p.add_argument("--t", help="slice time")
    p.add_argument("--lmax")
    p.add_argument("--r", help="sphere radius for quasilocal")
    p.add_argument("--sweep", help="log-spaced radii min:max:count")
    p.add_argument("--dt", help="time step of the five-point stencil")
    p.add_argument("--tol", help="optimal embedding tolerance")
    p.add_argument("--csv", help="write CSV rows to this path")
    p.add_argument("--json", help="write JSON to this path")
    return p


def _numeric_errors():
    from .asymptotics_evolution import MomentError
    from .isometric_embedding import EmbeddingError
    from .optimal_embedding import OptimalEmbeddingError
    from .surface_geometry import SurfaceGeometryError

    return (MomentError, EmbeddingError, OptimalEmbeddingError, SurfaceGeometryError, s2.MetricError,
            np.linalg.LinAlgError, CheckFailure)


def run(command, cfg, out=None):
    """Run one subcommand; returns the exit status."""
    out = sys.stdout if out is None else out
    numeric = _numeric_errors()
    try:
        rows, summary = COMMANDS[command](cfg)
    except numeric as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = rows_to_csv(rows)
    doc = dict(metadata=metadata(cfg, command), rows=_jsonable(rows), summary=_jsonable(summary))
    if cfg.csv:
        with open(cfg.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if cfg.json:
        with open(cfg.json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
    out.write(json.dumps(doc["summary"], indent=2, sort_keys=True) + "\n")
    failed = _failures(summary.get("checks", []))
    if failed:
        print("failed invariant: " + ", ".join(failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
