"""
Command-line front end.

    nearby-orbit run <config.yaml>      run one scenario
    nearby-orbit sweep <config.yaml>    run the scenario in hbar_sweep mode
    nearby-orbit selftest [--out DIR]   audits and smoke checks

Outputs go to <root>/<output.dir>, where <root> is $NEARBY_ORBIT_OUTPUT_ROOT
or the current directory. Exit codes: 0 all checks passed, 1 a check failed
(or a selftest audit was inconclusive), 2 invalid config (nothing written),
3 numerical failure (only diagnostic.json and the manifest are written).
"""

import argparse
import csv
import datetime
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ScenarioError, load_scenario, make_hamiltonian
from .flows import DivergedError, flow
from .gaussians import (
    ConventionAuditError,
    NotSiegelError,
    SqueezedState,
    UnderResolvedWarning,
    audit_fm,
    audit_wsqu,
    fm_convention,
    gaussian_inner,
    to_grid,
    wigner,
    wigner_moyal_cross,
    wsqu_convention,
)
from .grid import GridField
from .metaplectic import ConditioningError, DegenerateMaslovError, PhaseInferenceError
from .oracles import wigner_moyal_quadrature
from .phase_space import (
    UnderResolvedError,
    WindowFunction,
    audit_hwp,
    hwp_convention,
    phase_space_grid,
    t_ph,
    transform_gaussian,
    u_ph_propagate,
    wavepacket_transform,
)
from .propagator import (
    ReferenceUnderResolved,
    compare_with_reference,
    error_vs_reference,
    propagate_coherent,
    propagate_general,
)
from .reference import SplitStepConfig, WrapAroundError, split_step
from .selftest import run_selftest
from .symplectic import SingularSMinusIError, symplectic_defect

OUTPUT_ROOT_ENV = "NEARBY_ORBIT_OUTPUT_ROOT"

NUMERICAL_ERRORS = (
    DivergedError,
    WrapAroundError,
    ReferenceUnderResolved,
    UnderResolvedError,
    UnderResolvedWarning,
    ConditioningError,
    PhaseInferenceError,
    SingularSMinusIError,
    DegenerateMaslovError,
    ConventionAuditError,
    NotSiegelError,
    np.linalg.LinAlgError,
)


def _output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, os.getcwd()))


def _versions():
    return {
        "nearby_orbit": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(directory):
    directory = Path(directory)
    files = sorted(p for p in directory.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = [
        {"path": p.relative_to(directory).as_posix(), "sha256": _sha256(p), "bytes": p.stat().st_size}
        for p in files
    ]
    (directory / "manifest.json").write_text(_dump_json({"files": entries}))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _check(name, value, tol):
    value = float(value)
    return {"name": name, "value": value, "tol": tol, "pass": bool(value <= tol)}


def _state(spec, hbar):
    """Single normalised state; its weight is a global phase and must have modulus 1."""
    if abs(abs(spec.weight) - 1.0) > 1e-9:
        raise ScenarioError(f"weight {spec.weight} of a single state must have modulus 1")
    return SqueezedState(spec.z0, spec.M, phase=spec.weight, hbar=hbar, normalized=True)


def _superposition(specs, hbar):
    """(weight, normalised state) pairs of a superposition."""
    return [(s.weight, SqueezedState(s.z0, s.M, hbar=hbar)) for s in specs]


# modes


def _mode_coherent(sc, out):
    H = make_hamiltonian(sc.hamiltonian, sc.params, sc.n)
    st = _state(sc.state[0], sc.hbar)
    res = propagate_coherent(H, st, sc.T, sc.dt)
    res.to_csv(out / "states.csv")
    res.trajectory.to_csv(out / "trajectory.csv")
    fin = res.state_out
    rel = gaussian_inner(fin, st) / gaussian_inner(st, st)
    results = {
        "final_center": fin.center,
        "final_M": fin.M,
        "final_phase": fin.phase,
        "gamma": res.gamma,
        "center_change": float(np.max(np.abs(fin.center - st.center))),
        "M_change": float(np.max(np.abs(fin.M - st.M))),
        "relative_phase": rel,
        "branch_winding": res.element.branch.winding,
        "flow": {k: v for k, v in res.diagnostics.items() if k != "gamma_samples"},
    }
    checks = [_check("symplectic defect of S_T", symplectic_defect(res.monodromy), 1e-10)]
    if sc.reference and H.potential is not None and sc.n == 1:
        times, err, ref_final, _ = compare_with_reference(H, st, sc.T, sc.dt, sc.samples)
        _write_csv(out / "reference.csv", ["t", "error"], zip(times, err))
        ref_rel = ref_final.inner(to_grid(st, ref_final)) / gaussian_inner(st, st)
        results["reference_error_sup"] = float(err.max())
        results["reference_relative_phase"] = complex(ref_rel)
        results["phase_mismatch"] = float(abs(rel - ref_rel))
        if sc.tolerance is not None:
            checks.append(_check("L2 error against split-step", err.max(), sc.tolerance))
    return results, checks


def _mode_general(sc, out):
    if sc.n != 1:
        raise ScenarioError("general mode is implemented for n = 1")
    H = make_hamiltonian(sc.hamiltonian, sc.params)
    L = sc.grid.get("half_width", 8.0)
    N = sc.grid.get("count", 1024)
    grid = GridField.symmetric(L, N)
    terms = _superposition(sc.state, sc.hbar)
    psi0 = to_grid(terms, grid)
    final = propagate_general(H, psi0, sc.T, sc.dt, sc.hbar)
    final.save(out / "final.grid")
    results = {"terms": final.meta.get("terms"), "norm_initial": psi0.norm(), "norm_final": final.norm()}
    checks = []
    if sc.reference and H.potential is not None:
        # the reference needs its own step: kinetic phase per step below pi / 2
        spacing = 2 * L / N
        dt_ref = min(sc.dt, 0.5 * np.pi * 2 * H.mass / (sc.hbar * (np.pi / spacing) ** 2))
        results["reference_dt"] = dt_ref
        try:
            cfg = SplitStepConfig(L, N, sc.hbar, dt_ref, sc.T, H.potential, mass=H.mass)
            ref, _ = split_step(psi0, cfg)
        except (ValueError, WrapAroundError) as exc:
            raise ReferenceUnderResolved(str(exc)) from exc
        ref.save(out / "reference.grid")
        err = (final - ref).norm() / psi0.norm()
        results["reference_error"] = err
        if sc.tolerance is not None:
            checks.append(_check("relative L2 error against split-step", err, sc.tolerance))
    return results, checks


def _mode_phase_space(sc, out):
    if sc.n != 1:
        raise ScenarioError("phase_space mode is implemented for n = 1")
    H = make_hamiltonian(sc.hamiltonian, sc.params)
    st = _state(sc.state[0], sc.hbar)
    radius = float(np.max(np.linalg.norm(flow(H, st.center, sc.T, sc.dt).points, axis=-1)))
    grid = phase_space_grid(
        sc.hbar,
        radius=radius,
        count=sc.phase_space.get("count", 128),
        half_width=sc.phase_space.get("half_width"),
    )
    window = WindowFunction.standard(sc.hbar)
    Psi0 = transform_gaussian(st, window, grid)
    if Psi0.edge_mass() > 1e-8:
        raise UnderResolvedError(f"phase-space grid truncates the initial packet (edge mass {Psi0.edge_mass():.1e})")
    Psi = u_ph_propagate(H, Psi0, st.center, sc.T, sc.dt)
    Psi.save(out / "ps_final.grid")
    conf = propagate_coherent(H, st, sc.T, sc.dt).state_out
    lifted = transform_gaussian(conf, window, grid)
    resid = (Psi - lifted).norm() / Psi0.norm()
    tol = sc.tolerance if sc.tolerance is not None else 1e-3
    hw = hwp_convention()
    results = {
        "propa_residual": resid,
        "norm_initial": Psi0.norm(),
        "norm_final": Psi.norm(),
        "hwp": {"hwp_convention": hw["hwp_convention"], "residuals": hw["residuals"]},
        "grid": {"half_width": -grid.origin[0], "count": grid.shape[0]},
    }
    return results, [_check("phase-space propagator vs lifted configuration result", resid, tol)]


def _mode_sweep(sc, out):
    if sc.n != 1:
        raise ScenarioError("hbar_sweep is implemented for n = 1")
    H = make_hamiltonian(sc.hamiltonian, sc.params)
    spec = sc.state[0]
    table = error_vs_reference(H, spec.z0, spec.M, sc.hbar_list, sc.T, sc.dt, sc.samples)
    table.to_csv(out / "sweep.csv")
    rows = [(h, t, e) for h, errs in zip(table.hbar, table.errors) for t, e in zip(table.sample_times, errs)]
    _write_csv(out / "errors.csv", ["hbar", "t", "error"], rows)
    lo, hi = sc.slope_range
    results = {
        "slope": table.slope,
        "monotone": table.monotone,
        "hbar": table.hbar,
        "sup_error": table.sup_error,
        "final_error": table.final_error,
    }
    checks = [
        {"name": "log-log slope in range", "value": table.slope, "tol": [lo, hi], "pass": bool(lo <= table.slope <= hi)},
        {"name": "errors decrease with hbar (10% slack)", "value": table.monotone, "tol": None, "pass": table.monotone},
    ]
    return results, checks


def _random_pair(rng, hbar):
    def one():
        return SqueezedState.from_XY(
            rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0, 2), hbar=hbar
        )

    return one(), one()


def _mode_wigner(sc, out):
    hbar = sc.hbar if sc.hbar is not None else 1.0
    rng = np.random.default_rng(sc.seed)
    rows = []
    worst_cross = worst_diag = 0.0
    for k in range(sc.pairs):
        a, b = _random_pair(rng, hbar)
        zs = rng.uniform(-2.0, 2.0, size=(sc.points, 2)) * np.sqrt(hbar)
        closed = wigner_moyal_cross(a, b, zs)
        quad = wigner_moyal_quadrature(a, b, zs, hbar)
        diag = wigner(a, zs)
        diag_q = wigner_moyal_quadrature(a, a, zs, hbar)
        worst_cross = max(worst_cross, float(np.max(np.abs(closed - quad))))
        worst_diag = max(worst_diag, float(np.max(np.abs(diag - diag_q))))
        for z, c, q in zip(zs, closed, quad):
            rows.append((k, z[0], z[1], c.real, c.imag, q.real, q.imag))
    _write_csv(out / "wigner.csv", ["pair", "x", "p", "closed_re", "closed_im", "quad_re", "quad_im"], rows)
    tol = sc.tolerance if sc.tolerance is not None else 1e-6
    results = {"max_cross_error": worst_cross, "max_wigner_error": worst_diag, "fm": fm_convention()["selected"]}
    checks = [
        _check("cross-Wigner closed form vs quadrature", worst_cross, tol),
        _check("Wigner closed form vs quadrature", worst_diag, tol),
    ]
    return results, checks


def _mode_audit(sc, out):
    hbar = sc.hbar if sc.hbar is not None else 0.1
    audits = {"fm": audit_fm(), "wsqu": audit_wsqu(), "hwp": audit_hwp()}
    (out / "audit.json").write_text(_dump_json(audits))
    rng = np.random.default_rng(sc.seed)
    grid = phase_space_grid(hbar, radius=2.0, count=sc.phase_space.get("count", 128))
    xg = GridField.symmetric(8.0 * np.sqrt(hbar) + 2.0, 2048)
    window = WindowFunction.standard(hbar)
    worst12 = worst_parseval = worst14 = 0.0
    for _ in range(sc.pairs):
        a, b = _random_pair(rng, hbar)
        Ua = wavepacket_transform(to_grid(a, xg), window, grid)
        Ub = wavepacket_transform(to_grid(b, xg), window, grid)
        Ca = transform_gaussian(a, window, grid)
        worst12 = max(worst12, (Ua - Ca).norm() / Ca.norm())
        worst_parseval = max(worst_parseval, abs(Ua.inner(Ub) - gaussian_inner(a, b)))
        z0 = rng.uniform(-0.5, 0.5, 2)
        x = xg.coords(0)
        shifted = np.exp(1j * (z0[1] * x - 0.5 * z0[1] * z0[0]) / hbar) * a(x - z0[0])
        rhs = wavepacket_transform(xg.with_values(shifted), window, grid)
        worst14 = max(worst14, (t_ph(z0, Ua) - rhs).norm())
    results = {
        "conventions": {
            "fm": audits["fm"].get("selected"),
            "wsqu": audits["wsqu"].get("selected"),
            "hwp": audits["hwp"]["hwp_convention"],
        },
        "transform_vs_cross_wigner": worst12,
        "parseval": worst_parseval,
        "intertwining": worst14,
    }
    checks = [
        {"name": f"{k} audit conclusive", "value": bool(v["conclusive"]), "tol": None, "pass": bool(v["conclusive"])}
        for k, v in audits.items()
    ]
    checks += [
        _check("wave-packet transform vs cross-Wigner (relative)", worst12, 1e-6),
        _check("isometry", worst_parseval, 1e-4),
        _check("intertwining residual", worst14, 1e-3),
    ]
    return results, checks


MODES = {
    "coherent": _mode_coherent,
    "general": _mode_general,
    "phase_space": _mode_phase_space,
    "hbar_sweep": _mode_sweep,
    "wigner": _mode_wigner,
    "transform-audit": _mode_audit,
}


def _conventions():
    return {"fm": fm_convention()["selected"], "wsqu": wsqu_convention(), "hwp": hwp_convention()["hwp_convention"]}


def _replace_dir(staging, final):
    final = Path(final)
    if final.exists():
        shutil.rmtree(final)
    os.replace(staging, final)


def run_scenario(config_path, mode=None, stream=None):
    """Validate, run and write one scenario; returns the exit code."""
    stream = sys.stdout if stream is None else stream
    try:
        sc = load_scenario(config_path, mode=mode)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    final = _output_root() / sc.output_dir
    final.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{final.name}.", dir=final.parent))
    with open(config_path, "rb") as fh:
        config_sha = hashlib.sha256(fh.read()).hexdigest()
    summary = {
        "name": sc.name,
        "mode": sc.mode,
        "schema_version": sc.raw["schema_version"],
        "seed": sc.seed,
        "config_sha256": config_sha,
        "versions": _versions(),
        "timestamp": _timestamp(),
    }
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", UnderResolvedWarning)
            results, checks = MODES[sc.mode](sc, staging)
            summary["conventions"] = _conventions()
    except ScenarioError as exc:
        shutil.rmtree(staging)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        shutil.rmtree(staging)
        staging.mkdir()
        diag = {**summary, "error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, DivergedError):
            diag["t_last"] = exc.t_last
        (staging / "diagnostic.json").write_text(_dump_json(diag))
        _write_manifest(staging)
        _replace_dir(staging, final)
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    summary["results"] = results
    summary["checks"] = checks
    summary["pass"] = all(c["pass"] for c in checks)
    (staging / "summary.json").write_text(_dump_json(summary))
    _write_manifest(staging)
    _replace_dir(staging, final)
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']}", file=stream)
    print(f"outputs in {final}", file=stream)
    return 0 if summary["pass"] else 1


def run_selftest_cli(out_dir=None, audit_tol=1e-6, stream=None):
    stream = sys.stdout if stream is None else stream
    out = Path(out_dir) if out_dir is not None else _output_root() / "nearby-orbit-out" / "selftest"
    report, ok = run_selftest(audit_tol=audit_tol)
    report = {"timestamp": _timestamp(), "versions": _versions(), **report}
    out.mkdir(parents=True, exist_ok=True)
    (out / "selftest.json").write_text(_dump_json(report))
    _write_manifest(out)
    for name, conv in report["conventions"].items():
        print(f"audit {name}: {conv if conv is not None else 'INCONCLUSIVE'}", file=stream)
    for c in report["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}", file=stream)
    return 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="nearby-orbit", description="Nearby-orbit semiclassical propagation runs.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("config")
    s = sub.add_parser("sweep", help="run a scenario file in hbar_sweep mode")
    s.add_argument("config")
    t = sub.add_parser("selftest", help="convention audits and smoke checks")
    t.add_argument("--out", default=None, help="directory for selftest.json")
    t.add_argument("--audit-tol", type=float, default=1e-6, help=argparse.SUPPRESS)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_scenario(args.config)
    if args.command == "sweep":
        return run_scenario(args.config, mode="hbar_sweep")
    return run_selftest_cli(args.out, args.audit_tol)


if __name__ == "__main__":
    sys.exit(main())
