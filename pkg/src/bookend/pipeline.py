"""Declarative multi-stage runs with seeded, hash-stamped, reproducible outputs.

A run config is JSON with a schema version, a root seed and an ordered list
of named stages. Each stage writes into its own directory; a manifest
records every file with its SHA-256. Wall-clock timings only go to the log,
so rerunning an unchanged config rewrites byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from bookend import plotting
from bookend.determinant import fci_space
from bookend.eigensolver import DENSE_LIMIT, fci_ground
from bookend.errors import BookendError, ValidationError
from bookend.free_energy import (
    GAUSS_7,
    MBAR_LADDER,
    LambdaSchedule,
    ReducedPotentialMatrix,
    bookend_combine,
    load_ukn_csv,
    mbar_solve,
    ti_integrate,
)
from bookend.hci import hci_solve, write_trace_csv
from bookend.integrals import MolecularHamiltonian, builtin_fixture, load_fcidump
from bookend.lucj_sim import (
    LucjParameters,
    bitflip_noise,
    born_sample,
    exact_state_sample,
    load_parameters,
    lucj_prepare,
)
from bookend.samples import SampleSet, write_count_dict
from bookend.sqd import SqdConfig, extsqd_extend, sqd_run
from bookend.toy_ensemble import (
    Harmonic,
    harmonic_free_energy,
    potential_from_dict,
    sample_windows,
    write_sample_archive,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_potential = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["harmonic", "quartic", "tabulated"]}},
}
_number_or_ref = {
    "oneOf": [
        {"type": "number"},
        {"type": "object", "required": ["stage"], "properties": {"stage": {"type": "string"}},
         "additionalProperties": False},
    ]
}
_lambdas = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1}

STAGE_SCHEMAS: dict[str, dict] = {
    "fci": {"required": ["fcidump"], "properties": {"fcidump": {"type": "string"}}},
    "hci": {
        "required": ["fcidump", "epsilons"],
        "properties": {
            "fcidump": {"type": "string"},
            "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "reference": {"type": "boolean"},
        },
    },
    "sqd": {
        "required": ["fcidump"],
        "properties": {
            "fcidump": {"type": "string"},
            "sampler": {
                "type": "object",
                "properties": {
                    "kind": {"enum": ["exact", "lucj"]},
                    "shots": {"type": "integer", "minimum": 1},
                    "noise": {"type": "number", "minimum": 0, "maximum": 1},
                    "reps": {"type": "integer", "minimum": 0},
                    "magnitude": {"type": "number", "minimum": 0},
                    "pattern": {"enum": ["full", "nearest"]},
                    "params": {"type": "string"},
                },
                "additionalProperties": False,
            },
            "batches": {"type": "integer", "minimum": 1},
            "batch_size": {"type": "integer", "minimum": 1},
            "score_iterations": {"type": "integer", "minimum": 0},
            "ext_iterations": {"type": "integer", "minimum": 0},
            "ext_cutoff": {"type": "number", "minimum": 0},
            "exponent": {"type": "number", "exclusiveMinimum": 0},
            "reference": {"type": "boolean"},
        },
    },
    "ensemble": {
        "required": ["u0", "u1"],
        "properties": {
            "u0": _potential,
            "u1": _potential,
            "lambdas": _lambdas,
            "beta": {"type": "number", "exclusiveMinimum": 0},
            "samples_per_state": {"type": "integer", "minimum": 1},
            "burn_in": {"type": "integer", "minimum": 0},
            "stride": {"type": "integer", "minimum": 1},
        },
    },
    "ti": {
        "required": ["u0", "u1"],
        "properties": {
            "u0": _potential,
            "u1": _potential,
            "beta": {"type": "number", "exclusiveMinimum": 0},
            "samples_per_state": {"type": "integer", "minimum": 1},
            "burn_in": {"type": "integer", "minimum": 0},
            "stride": {"type": "integer", "minimum": 1},
        },
    },
    "mbar": {
        "properties": {
            "input": {"type": "string"},
            "ukn": {"type": "string"},
            "beta": {"type": "number", "exclusiveMinimum": 0},
            "tol": {"type": "number", "exclusiveMinimum": 0},
            "max_iter": {"type": "integer", "minimum": 1},
        },
        "oneOf": [{"required": ["input"]}, {"required": ["ukn"]}],
    },
    "bookend": {
        "required": ["ddg_mm", "complex_a", "complex_b", "water_a", "water_b"],
        "properties": {
            "ddg_mm": {"type": "number"},
            "complex_a": _number_or_ref,
            "complex_b": _number_or_ref,
            "water_a": _number_or_ref,
            "water_b": _number_or_ref,
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "seed", "stages"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "stages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
                    "kind": {"enum": sorted(STAGE_SCHEMAS)},
                    "seed": {"type": "integer", "minimum": 0},
                },
                "allOf": [
                    {"if": {"properties": {"kind": {"const": kind}}}, "then": schema}
                    for kind, schema in STAGE_SCHEMAS.items()
                ],
            },
        },
    },
}


def validate_config(config: Any) -> None:
    """Raise :class:`ValidationError` naming the offending location."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ValidationError(f"config {where}: {err.message}")
    names = [s["name"] for s in config["stages"]]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"config stages: duplicate stage names {dupes}")
    seen: set[str] = set()
    for i, stage in enumerate(config["stages"]):
        for ref in _stage_refs(stage):
            if ref not in seen:
                raise ValidationError(f"config stages/{i}: refers to unknown or later stage {ref!r}")
        seen.add(stage["name"])


def _stage_refs(stage: dict) -> list[str]:
    refs = []
    if stage["kind"] == "mbar" and "input" in stage:
        refs.append(stage["input"])
    if stage["kind"] == "bookend":
        refs += [v["stage"] for k, v in stage.items() if isinstance(v, dict) and "stage" in v]
    return refs


def load_config(path: str | Path) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    validate_config(config)
    return config


def canonical_hash(obj: Any) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def derive_seed(root: int, name: str, index: int) -> int:
    """Stage seed from the root seed, stage name and position."""
    digest = hashlib.sha256(f"{root}:{index}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def atomic_write(path: str | Path, data: str | bytes) -> Path:
    """Write via a temporary sibling and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_hamiltonian(ref: str, base: Path | None = None) -> MolecularHamiltonian:
    """``builtin:<name>`` selects a packaged fixture; anything else is a file path."""
    if ref.startswith("builtin:"):
        return builtin_fixture(ref.split(":", 1)[1])
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    return load_fcidump(path)


@dataclass
class StageContext:
    name: str
    seed: int
    out_dir: Path
    threads: int
    base_dir: Path | None
    results: dict[str, dict]
    files: list[Path] = field(default_factory=list)
    energy_rows: list[dict] = field(default_factory=list)

    def write(self, filename: str, data: str | bytes) -> Path:
        path = atomic_write(self.out_dir / filename, data)
        self.files.append(path)
        return path

    def figure(self, filename: str, render: Callable[[Path], Path]) -> None:
        # Render to a temporary name first, keeping the stage directory free of partial files.
        final = self.out_dir / filename
        tmp = self.out_dir / f".tmp-{filename}"
        render(tmp)
        os.replace(tmp, final)
        self.files.append(final)


def _fci_reference(H: MolecularHamiltonian) -> float | None:
    if len(fci_space(H.n_orbitals, H.n_alpha, H.n_beta)) > DENSE_LIMIT:
        return None
    return fci_ground(H)[0]


def run_fci(stage: dict, ctx: StageContext) -> dict:
    H = resolve_hamiltonian(stage["fcidump"], ctx.base_dir)
    energy, psi = fci_ground(H)
    result = {"energy": energy, "dimension": len(psi)}
    ctx.write("result.json", dump_json(result))
    ctx.energy_rows.append({"method": "FCI", "parameter": "", "energy": energy, "dimension": len(psi)})
    return result


def run_hci(stage: dict, ctx: StageContext) -> dict:
    H = resolve_hamiltonian(stage["fcidump"], ctx.base_dir)
    reference = _fci_reference(H) if stage.get("reference", True) else None
    rows = []
    for eps in sorted(stage["epsilons"], reverse=True):
        res = hci_solve(H, eps)
        buf = io.StringIO()
        write_trace_csv(res.trace, buf, include_time=False)
        ctx.write(f"trace_{eps:.0e}.csv", buf.getvalue())
        rows.append({"epsilon": eps, "energy": res.energy, "dimension": len(res.wavefunction)})
        ctx.energy_rows.append(
            {"method": "HCI", "parameter": f"epsilon={eps!r}", "energy": res.energy,
             "dimension": len(res.wavefunction)}
        )
        last = res
    buf = io.StringIO()
    writer = csv.DictWriter(buf, ["epsilon", "energy", "dimension"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "energy": repr(row["energy"])})
    ctx.write("cutoffs.csv", buf.getvalue())
    ctx.figure(
        "cutoffs.png",
        lambda p: plotting.plot_hci_cutoffs(
            [r["epsilon"] for r in rows], [r["energy"] for r in rows], p, reference=reference
        ),
    )
    ctx.figure("trace.png", lambda p: plotting.plot_hci_trace(last.trace, p, reference=reference))
    result = {"rows": rows, "fci_reference": reference}
    ctx.write("result.json", dump_json(result))
    return result


def draw_samples(H: MolecularHamiltonian, sampler: dict, seed: int, base: Path | None = None) -> SampleSet:
    """Noiseless draw from the exact or LUCJ state, then optional bit-flip noise."""
    prep_seed, sample_seed, noise_seed = np.random.SeedSequence(seed).generate_state(3)
    shots = sampler.get("shots", 10_000)
    if sampler.get("kind", "exact") == "exact":
        samples = exact_state_sample(H, shots, int(sample_seed))
    else:
        if "params" in sampler:
            path = Path(sampler["params"])
            params = load_parameters(base / path if base and not path.is_absolute() else path)
        else:
            params = LucjParameters.random(
                H.n_orbitals, H.n_alpha, H.n_beta,
                reps=sampler.get("reps", 2),
                magnitude=sampler.get("magnitude", 0.1),
                seed=int(prep_seed),
                pattern=sampler.get("pattern", "full"),
            )
        samples = born_sample(lucj_prepare(params), shots, int(sample_seed))
    p = sampler.get("noise", 0.0)
    return bitflip_noise(samples, p, int(noise_seed)) if p > 0 else samples


def run_sqd(stage: dict, ctx: StageContext) -> dict:
    H = resolve_hamiltonian(stage["fcidump"], ctx.base_dir)
    sample_seed, sqd_seed = np.random.SeedSequence(ctx.seed).generate_state(2)
    samples = draw_samples(H, stage.get("sampler", {}), int(sample_seed), ctx.base_dir)
    buf = io.StringIO()
    write_count_dict(samples, buf)
    ctx.write("samples.txt", buf.getvalue())

    config = SqdConfig(
        n_batches=stage.get("batches", 10),
        batch_size=stage.get("batch_size", 1000),
        score_iterations=stage.get("score_iterations", 2),
        ext_cutoff=stage.get("ext_cutoff", 1e-5),
        exponent=stage.get("exponent", 1.0),
        seed=int(sqd_seed),
        threads=ctx.threads,
    )
    result = sqd_run(H, samples, config)
    reference = _fci_reference(H) if stage.get("reference", True) else None
    payload = result.to_json()
    ctx.energy_rows.append({"method": "SQD", "parameter": "", "energy": result.energy,
                            "dimension": result.dimension})

    extensions = []
    psi = result.wavefunction
    for i in range(stage.get("ext_iterations", 1)):
        space, energy, psi = extsqd_extend(H, psi, config.ext_cutoff, dense_limit=config.dense_limit)
        extensions.append({
            "iteration": i,
            "energy": energy,
            "base_dimension": len(space.base),
            "dimension": space.dimension,
            "bound": space.bound,
            "within_bound": space.within_bound,
        })
        ctx.energy_rows.append({"method": "extSQD", "parameter": f"iteration={i}", "energy": energy,
                                "dimension": space.dimension})
    payload["extensions"] = extensions
    payload["fci_reference"] = reference
    ctx.write("result.json", dump_json(payload))
    ctx.figure("history.png", lambda p: plotting.plot_sqd_history(result, p, reference=reference))
    ctx.figure("occupancies.png", lambda p: plotting.plot_occupancies(result, p))
    return {"energy": result.energy, "extended_energy": extensions[-1]["energy"] if extensions else None}


def closed_form_delta(u0, u1, beta: float) -> float | None:
    if isinstance(u0, Harmonic) and isinstance(u1, Harmonic):
        return harmonic_free_energy(u1.k, beta) - harmonic_free_energy(u0.k, beta)
    return None


def run_ensemble(stage: dict, ctx: StageContext) -> dict:
    u0, u1 = potential_from_dict(stage["u0"]), potential_from_dict(stage["u1"])
    schedule = LambdaSchedule(tuple(stage.get("lambdas", MBAR_LADDER.lambdas)))
    beta = stage.get("beta", 1.0)
    chains = sample_windows(
        schedule, u0, u1, beta, stage.get("samples_per_state", 10_000), ctx.seed,
        burn_in=stage.get("burn_in", 1000), threads=ctx.threads,
    )
    stride = stage.get("stride", 1)
    windows = [c.samples[::stride] for c in chains]
    buf = io.StringIO()
    data = write_sample_archive(buf, schedule, u0, u1, beta, windows)
    ctx.write("ukn.csv", buf.getvalue())
    summary = {
        "lambdas": list(schedule.lambdas),
        "counts": data.counts.tolist(),
        "acceptance": [c.acceptance_rate for c in chains],
        "step_size": [c.step_size for c in chains],
        "beta": beta,
        "closed_form_delta": closed_form_delta(u0, u1, beta),
    }
    ctx.write("summary.json", dump_json(summary))
    return {**summary, "_matrix": data, "_schedule": schedule}


def run_mbar(stage: dict, ctx: StageContext) -> dict:
    if "input" in stage:
        upstream = ctx.results[stage["input"]]
        if "_matrix" not in upstream:
            raise ValidationError(f"stage {stage['input']!r} does not produce a u_kn matrix")
        data: ReducedPotentialMatrix = upstream["_matrix"]
        schedule = upstream["_schedule"]
        exact = upstream.get("closed_form_delta")
    else:
        path = Path(stage["ukn"])
        if ctx.base_dir is not None and not path.is_absolute():
            path = ctx.base_dir / path
        data = load_ukn_csv(path, stage.get("beta", 1.0))
        schedule = LambdaSchedule(tuple(np.linspace(0.0, 1.0, data.n_states))) if data.n_states > 1 else None
        exact = None
    result = mbar_solve(data, stage.get("tol", 1e-10), stage.get("max_iter", 100_000))
    payload = result.to_json()
    payload["closed_form_delta"] = exact
    ctx.write("result.json", dump_json(payload))
    if schedule is not None:
        ctx.figure(
            "profile.png", lambda p: plotting.plot_free_energy_profile(schedule, result, p, exact=exact)
        )
    return {"delta": payload["delta_end_to_end"]}


def run_ti(stage: dict, ctx: StageContext) -> dict:
    u0, u1 = potential_from_dict(stage["u0"]), potential_from_dict(stage["u1"])
    beta = stage.get("beta", 1.0)
    chains = sample_windows(
        GAUSS_7, u0, u1, beta, stage.get("samples_per_state", 10_000), ctx.seed,
        burn_in=stage.get("burn_in", 1000), threads=ctx.threads,
    )
    stride = stage.get("stride", 1)
    means = [float(np.mean(u1(c.samples[::stride]) - u0(c.samples[::stride]))) for c in chains]
    delta = ti_integrate(GAUSS_7, means)
    payload = {
        "lambdas": list(GAUSS_7.lambdas),
        "weights": list(GAUSS_7.weights),
        "means": means,
        "delta": delta,
        "beta": beta,
        "closed_form_delta": closed_form_delta(u0, u1, beta),
    }
    ctx.write("result.json", dump_json(payload))
    ctx.figure("integrand.png", lambda p: plotting.plot_ti_integrand(GAUSS_7, means, p))
    return {"delta": delta}


def run_bookend(stage: dict, ctx: StageContext) -> dict:
    def value(key):
        v = stage[key]
        if isinstance(v, dict):
            upstream = ctx.results[v["stage"]]
            if "delta" not in upstream:
                raise ValidationError(f"stage {v['stage']!r} does not produce a free-energy difference")
            return upstream["delta"]
        return float(v)

    corrections = {k: value(k) for k in ("complex_a", "complex_b", "water_a", "water_b")}
    ddg = bookend_combine(
        float(stage["ddg_mm"]), corrections["complex_a"], corrections["complex_b"],
        corrections["water_a"], corrections["water_b"],
    )
    payload = {"ddg_mm": float(stage["ddg_mm"]), **corrections, "ddg_corrected": ddg}
    ctx.write("result.json", dump_json(payload))
    return {"ddg": ddg}


RUNNERS: dict[str, Callable[[dict, StageContext], dict]] = {
    "fci": run_fci,
    "hci": run_hci,
    "sqd": run_sqd,
    "ensemble": run_ensemble,
    "mbar": run_mbar,
    "ti": run_ti,
    "bookend": run_bookend,
}


def _public(result: dict) -> dict:
    return {k: v for k, v in result.items() if not k.startswith("_")}


def run_pipeline(
    config: dict, out_dir: str | Path, *, base_dir: str | Path | None = None, threads: int | None = None
) -> dict:
    """Execute every stage in order and write ``manifest.json``.

    Args:
        config: Parsed run config (validated here).
        out_dir: Result bundle directory.
        base_dir: Directory that relative input paths are resolved against.
        threads: Worker cap, overriding the config's ``threads``.

    Returns:
        The manifest as written.
    """
    validate_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = Path(base_dir) if base_dir is not None else None
    n_threads = threads or config.get("threads", 1)
    results: dict[str, dict] = {}
    stage_records = []
    energy_rows = []
    all_files: list[Path] = []

    for index, stage in enumerate(config["stages"]):
        name = stage["name"]
        seed = stage.get("seed", derive_seed(config["seed"], name, index))
        ctx = StageContext(name, seed, out / name, n_threads, base, results)
        ctx.out_dir.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        try:
            results[name] = RUNNERS[stage["kind"]](stage, ctx)
        except BookendError as exc:
            exc.args = (f"stage {name!r}: {exc}",)
            raise
        except OSError as exc:
            raise type(exc)(exc.errno, f"stage {name!r}: {exc.strerror}", exc.filename) from None
        log.info("stage %s (%s) finished in %.2f s", name, stage["kind"], time.perf_counter() - start)
        stage_records.append({
            "name": name,
            "kind": stage["kind"],
            "seed": seed,
            "config_hash": canonical_hash(stage),
            "result": _public(results[name]),
            "outputs": sorted(p.relative_to(out).as_posix() for p in ctx.files),
        })
        energy_rows += [{"stage": name, **row} for row in ctx.energy_rows]
        all_files += ctx.files

    if energy_rows:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, ["stage", "method", "parameter", "energy", "dimension"],
                                lineterminator="\n")
        writer.writeheader()
        for row in energy_rows:
            writer.writerow({**row, "energy": repr(row["energy"])})
        all_files.append(atomic_write(out / "energies.csv", buf.getvalue()))

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "root_seed": config["seed"],
        "config_hash": canonical_hash(config),
        "stages": stage_records,
        "files": {p.relative_to(out).as_posix(): file_sha256(p) for p in sorted(all_files)},
    }
    atomic_write(out / "manifest.json", dump_json(_jsonable(manifest)))
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
