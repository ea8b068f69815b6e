"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error,
1 any other package error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from bookend import plotting
from bookend.determinant import fci_space, from_bitstring
from bookend.eigensolver import SubspaceWavefunction, fci_ground
from bookend.errors import BookendError, NumericalError, ValidationError
from bookend.free_energy import (
    GAUSS_7,
    MBAR_LADDER,
    LambdaSchedule,
    bookend_combine,
    load_ukn_csv,
    mbar_solve,
    ti_integrate,
)
from bookend.hci import hci_solve, write_trace_csv
from bookend.pipeline import (
    atomic_write,
    closed_form_delta,
    draw_samples,
    dump_json,
    load_config,
    resolve_hamiltonian,
    run_pipeline,
)
from bookend.samples import load_count_dict, write_count_dict
from bookend.sqd import SqdConfig, extsqd_extend, sqd_run
from bookend.toy_ensemble import Harmonic, potential_from_dict, sample_windows, write_sample_archive

log = logging.getLogger("bookend")

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    """Write ``payload`` as JSON, or ``rows`` as CSV, to ``--out`` or stdout."""
    if args.format == "csv":
        rows = rows if rows is not None else [{k: v for k, v in payload.items() if not isinstance(v, (list, dict))}]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, list(rows[0]) if rows else [], lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        text = buf.getvalue()
    else:
        text = dump_json(payload)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _sibling(args, suffix: str) -> Path | None:
    """Path next to ``--out`` for a figure or secondary table, or None when printing."""
    if not args.out:
        return None
    out = Path(args.out)
    return out.with_name(f"{out.stem}_{suffix}")


def cmd_fcidump_inspect(args) -> None:
    H = resolve_hamiltonian(args.path)
    payload = {
        "n_orbitals": H.n_orbitals,
        "n_alpha": H.n_alpha,
        "n_beta": H.n_beta,
        "e_nuc": H.e_nuc,
        "two_body_entries": len(H.v),
        "fci_dimension": len(fci_space(H.n_orbitals, H.n_alpha, H.n_beta)),
    }
    _emit(args, payload)


def cmd_fci(args) -> None:
    H = resolve_hamiltonian(args.fcidump)
    energy, psi = fci_ground(H, tol=args.tol)
    _emit(args, {"energy": energy, "dimension": len(psi)})


def cmd_hci(args) -> None:
    H = resolve_hamiltonian(args.fcidump)
    rows, last = [], None
    for eps in sorted(args.epsilon, reverse=True):
        res = hci_solve(H, eps, tol=args.tol)
        rows.append({"epsilon": eps, "energy": res.energy, "dimension": len(res.wavefunction)})
        last = res
    trace_path = _sibling(args, "trace.csv")
    if trace_path is not None:
        buf = io.StringIO()
        write_trace_csv(last.trace, buf)
        atomic_write(trace_path, buf.getvalue())
        plotting.plot_hci_cutoffs([r["epsilon"] for r in rows], [r["energy"] for r in rows],
                                  _sibling(args, "cutoffs.png"))
        plotting.plot_hci_trace(last.trace, _sibling(args, "trace.png"))
    _emit(args, {"rows": rows}, rows)


def cmd_lucj_sample(args) -> None:
    H = resolve_hamiltonian(args.fcidump)
    sampler = {"kind": "exact" if args.exact else "lucj", "shots": args.shots, "noise": args.noise,
               "reps": args.reps, "magnitude": args.magnitude, "pattern": args.pattern}
    if args.params:
        sampler["params"] = args.params
    samples = draw_samples(H, sampler, args.seed)
    buf = io.StringIO()
    write_count_dict(samples, buf)
    if args.out:
        atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def cmd_sqd(args) -> None:
    H = resolve_hamiltonian(args.fcidump)
    samples = load_count_dict(args.samples, H.n_orbitals)
    config = SqdConfig(
        n_batches=args.batches,
        batch_size=args.batch_size,
        score_iterations=args.score_iterations,
        tol=args.tol,
        seed=args.seed,
        ext_cutoff=args.ext_cutoff,
        exponent=args.exponent,
        threads=args.threads,
    )
    result = sqd_run(H, samples, config)
    payload = result.to_json()
    psi = result.wavefunction
    extensions = []
    for i in range(args.ext_iterations):
        space, energy, psi = extsqd_extend(H, psi, config.ext_cutoff)
        extensions.append({"iteration": i, "energy": energy, "dimension": space.dimension,
                           "bound": space.bound, "within_bound": space.within_bound})
    payload["extensions"] = extensions
    if _sibling(args, "history.png") is not None:
        plotting.plot_sqd_history(result, _sibling(args, "history.png"))
        plotting.plot_occupancies(result, _sibling(args, "occupancies.png"))
    rows = [{"iteration": r.iteration, "min_energy": r.min_energy, "max_dimension": max(r.batch_dimensions)}
            for r in result.rounds]
    _emit(args, payload, rows)


def _read_wavefunction(path: str, n_orbitals: int) -> SubspaceWavefunction:
    data = json.loads(Path(path).read_text())
    coeffs = data.get("wavefunction", data)
    if not isinstance(coeffs, dict) or not coeffs:
        raise ValidationError(f"{path}: expected a bitstring -> coefficient mapping")
    dets = [from_bitstring(k) for k in coeffs]
    c = np.array([float(v) for v in coeffs.values()])
    return SubspaceWavefunction(tuple(dets), c / np.linalg.norm(c), n_orbitals)


def cmd_extsqd(args) -> None:
    H = resolve_hamiltonian(args.fcidump)
    psi = _read_wavefunction(args.wavefunction, H.n_orbitals)
    space, energy, _ = extsqd_extend(H, psi, args.cutoff)
    _emit(args, {"energy": energy, "base_dimension": len(space.base), "dimension": space.dimension,
                 "bound": space.bound, "within_bound": space.within_bound})


def _toy_pair(args):
    if args.u0 or args.u1:
        if not (args.u0 and args.u1):
            raise ValidationError("--u0 and --u1 must be given together")
        return potential_from_dict(json.loads(args.u0)), potential_from_dict(json.loads(args.u1))
    return Harmonic(args.k0), Harmonic(args.k1)


def cmd_ti(args) -> None:
    if args.means is not None:
        means = args.means
    else:
        u0, u1 = _toy_pair(args)
        chains = sample_windows(GAUSS_7, u0, u1, args.beta, args.samples, args.seed, threads=args.threads)
        means = [float(np.mean(u1(c.samples) - u0(c.samples))) for c in chains]
    delta = ti_integrate(GAUSS_7, means)
    if _sibling(args, "integrand.png") is not None:
        plotting.plot_ti_integrand(GAUSS_7, means, _sibling(args, "integrand.png"))
    rows = [{"lambda": l, "weight": w, "mean": m} for l, w, m in zip(GAUSS_7.lambdas, GAUSS_7.weights, means)]
    _emit(args, {"delta": delta, "windows": rows}, rows)


def cmd_mbar(args) -> None:
    data = load_ukn_csv(args.ukn, args.beta)
    result = mbar_solve(data, args.tol, args.max_iter)
    if data.n_states > 1 and _sibling(args, "profile.png") is not None:
        schedule = LambdaSchedule(tuple(np.linspace(0.0, 1.0, data.n_states)))
        plotting.plot_free_energy_profile(schedule, result, _sibling(args, "profile.png"))
    rows = [{"state": k, "free_energy": float(a)} for k, a in enumerate(result.free_energies)]
    _emit(args, result.to_json(), rows)


def cmd_ensemble(args) -> None:
    u0, u1 = _toy_pair(args)
    schedule = LambdaSchedule(tuple(args.lambdas)) if args.lambdas else MBAR_LADDER
    chains = sample_windows(schedule, u0, u1, args.beta, args.samples, args.seed, threads=args.threads)
    windows = [c.samples[:: args.stride] for c in chains]
    buf = io.StringIO()
    write_sample_archive(buf, schedule, u0, u1, args.beta, windows)
    if args.out:
        atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    log.info("acceptance per window: %s", [round(c.acceptance_rate, 3) for c in chains])
    closed = closed_form_delta(u0, u1, args.beta)
    if closed is not None:
        log.info("closed-form end-to-end free energy: %.6f", closed)


def cmd_bookend(args) -> None:
    ddg = bookend_combine(args.ddg_mm, args.complex_a, args.complex_b, args.water_a, args.water_b)
    _emit(args, {"ddg_mm": args.ddg_mm, "complex_a": args.complex_a, "complex_b": args.complex_b,
                 "water_a": args.water_a, "water_b": args.water_b, "ddg_corrected": ddg})


def cmd_run(args) -> None:
    config = load_config(args.config)
    out = args.out or "results"
    manifest = run_pipeline(config, out, base_dir=Path(args.config).parent, threads=args.threads)
    sys.stdout.write(dump_json({"manifest": str(Path(out) / "manifest.json"),
                                "stages": [s["name"] for s in manifest["stages"]]}))


def _common(p: argparse.ArgumentParser, *, seed: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=0, help="root random seed (default 0)")
    p.add_argument("--out", help="output file; figures and secondary tables are written beside it")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int, default=1, help="worker thread cap")


def _toy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k0", type=float, default=1.0, help="harmonic force constant of the initial state")
    p.add_argument("--k1", type=float, default=4.0, help="harmonic force constant of the final state")
    p.add_argument("--u0", help="initial potential as JSON, e.g. '{\"kind\": \"quartic\", \"a\": 1, \"b\": -1}'")
    p.add_argument("--u1", help="final potential as JSON")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10_000, help="Metropolis samples per window")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bookend", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fcidump", help="FCIDUMP utilities")
    fsub = p.add_subparsers(dest="action", required=True)
    q = fsub.add_parser("inspect", help="summarize an FCIDUMP file")
    q.add_argument("path", help="FCIDUMP path or builtin:<name>")
    _common(q, seed=False)
    q.set_defaults(func=cmd_fcidump_inspect)

    p = sub.add_parser("fci", help="exact ground state in the full determinant space")
    p.add_argument("--fcidump", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    _common(p, seed=False)
    p.set_defaults(func=cmd_fci)

    p = sub.add_parser("hci", help="heat-bath selected CI")
    p.add_argument("--fcidump", required=True)
    p.add_argument("--epsilon", type=float, action="append", required=True,
                   help="selection cutoff in Hartree; repeat for a cutoff scan")
    p.add_argument("--tol", type=float, default=1e-8)
    _common(p, seed=False)
    p.set_defaults(func=cmd_hci)

    p = sub.add_parser("lucj", help="LUCJ statevector sampler")
    lsub = p.add_subparsers(dest="action", required=True)
    q = lsub.add_parser("sample", help="draw bitstrings in count_dict format")
    q.add_argument("--fcidump", required=True)
    q.add_argument("--params", help="JSON parameter file; random parameters otherwise")
    q.add_argument("--exact", action="store_true", help="sample the FCI ground state instead")
    q.add_argument("--reps", type=int, default=2)
    q.add_argument("--magnitude", type=float, default=0.1)
    q.add_argument("--pattern", choices=("full", "nearest"), default="full")
    q.add_argument("--shots", type=int, default=10_000)
    q.add_argument("--noise", type=float, default=0.0, help="independent bit-flip probability")
    _common(q)
    q.set_defaults(func=cmd_lucj_sample)

    p = sub.add_parser("sqd", help="sample-based diagonalization with configuration recovery")
    p.add_argument("--fcidump", required=True)
    p.add_argument("--samples", required=True, help="count_dict file")
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--score-iterations", type=int, default=2)
    p.add_argument("--ext-iterations", type=int, default=1)
    p.add_argument("--ext-cutoff", type=float, default=1e-5)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-8)
    _common(p)
    p.set_defaults(func=cmd_sqd)

    p = sub.add_parser("extsqd", help="extend a wavefunction by single excitations")
    p.add_argument("--fcidump", required=True)
    p.add_argument("--wavefunction", required=True, help="SQD result JSON or bitstring->coefficient JSON")
    p.add_argument("--cutoff", type=float, default=1e-5)
    _common(p, seed=False)
    p.set_defaults(func=cmd_extsqd)

    p = sub.add_parser("ti", help="seven-point quadrature thermodynamic integration")
    p.add_argument("--means", type=float, nargs=7, help="window averages of dU/dlambda")
    _toy_args(p)
    _common(p)
    p.set_defaults(func=cmd_ti)

    p = sub.add_parser("mbar", help="MBAR free energies from a u_kn CSV")
    p.add_argument("--ukn", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100_000)
    _common(p, seed=False)
    p.set_defaults(func=cmd_mbar)

    p = sub.add_parser("ensemble", help="Metropolis sampling of mixed toy potentials into a u_kn archive")
    _toy_args(p)
    p.add_argument("--lambdas", type=float, nargs="+", help="coupling windows (default six-window ladder)")
    p.add_argument("--stride", type=int, default=1, help="keep every n-th frame")
    _common(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("bookend", help="close the cycle with end-state corrections")
    p.add_argument("--ddg-mm", type=float, required=True)
    p.add_argument("--complex-a", type=float, default=0.0)
    p.add_argument("--complex-b", type=float, default=0.0)
    p.add_argument("--water-a", type=float, default=0.0)
    p.add_argument("--water-b", type=float, default=0.0)
    _common(p, seed=False)
    p.set_defaults(func=cmd_bookend)

    p = sub.add_parser("run", help="execute a JSON pipeline config")
    p.add_argument("config")
    p.add_argument("--out", help="result bundle directory (default ./results)")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_run, format="json")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BookendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
