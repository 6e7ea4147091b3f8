"""Seeded experiment drivers behind the ``nbgrowth`` command line tool.

Every trial draws its own seed from ``(master_seed, n, trial_index)``, so a
run is independent of worker scheduling and any trial can be replayed alone
with :func:`replay_trial`.  Reports are plain dicts with a ``schema_version``
and are byte-identical across runs of the same configuration unless timing
is switched on.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .config_sampler import MultiGraph, SamplingError, format_graph, sample_simple, tangle_free_check
from .degree_model import (
    DegreeDistribution,
    DistributionError,
    derived_constants,
    parse_distribution,
    realize_sequence,
    solve_two_point,
)
from .nb_spectral import ConvergenceError, build_nb_operator, power_iterate, prop51_diagnostics
from .stallings import format_labeled, immerse, subgroup_basis, subgroup_growth_certificate, verify_immersion
from .ugw_sim import (
    martingale_residuals,
    q_convergence_study,
    shuffled_control,
    simulate_Z_batch,
    tail_bound_check,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STATISTICAL = 3
EXIT_CERTIFICATE = 4

COMMANDS = ("density-search", "sweep-n", "gw-validate", "emit-subgroup")

TRIAL_CSV_COLUMNS = ("n", "trial", "seed", "attempts", "lambda1", "abs_error", "success",
                     "tangle_free", "ell", "iterations", "error")
GW_CSV_COLUMNS = ("dist", "suite", "t", "estimate", "expected", "stderr", "n_runs", "seed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    r: int = 2
    alpha: float = 2.0
    eps: float = 0.05
    n: tuple[int, ...] = (100_000,)
    trials: int = 20
    seed: int = 42
    delta0: float = 0.2
    dist: Optional[str] = None  # explicit degree law, overrides the two-point solve
    tolerance: float = 0.1  # growth certificate
    depth: int = 18  # growth certificate
    max_attempts: int = 1000
    gw_runs: int = 100_000
    gw_t_max: int = 8
    q_ell_max: int = 9
    q_runs: int = 500
    control: bool = False  # gw-validate: shuffle generations as a negative control
    timing: bool = False
    workers: int = 1
    out: Optional[str] = None
    csv: Optional[str] = None
    witness: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        if self.r < 2:
            raise ConfigError("r must be >= 2")
        if self.dist is None and not 1.0 < self.alpha < 2 * self.r - 1:
            raise ConfigError(f"alpha must lie in (1, {2 * self.r - 1})")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.delta0 > 0:
            raise ConfigError("delta0 must be positive")
        if not self.n or min(self.n) < 1:
            raise ConfigError("n must be a non-empty list of positive sizes")
        if self.command == "sweep-n" and len(set(self.n)) < 3:
            raise ConfigError("sweep-n needs at least 3 distinct n values")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.q_ell_max < 4:
            raise ConfigError("q_ell_max must be >= 4")
        if self.gw_runs < 1000:
            raise ConfigError("gw_runs must be >= 1000")
        try:
            dist = self.distribution()
        except DistributionError as exc:
            raise ConfigError(str(exc)) from exc
        if self.command != "gw-validate" and dist.support_max > 2 * self.r:
            raise ConfigError(f"degrees must lie in 2..{2 * self.r}")

    def distribution(self) -> DegreeDistribution:
        if self.dist is not None:
            return parse_distribution(self.dist)
        return solve_two_point(self.r, self.alpha)

    @property
    def target(self) -> float:
        """The offspring mean the graphs should approach."""
        return derived_constants(self.distribution())[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        for key in ("out", "csv", "witness", "workers"):
            d.pop(key)  # do not affect results
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if key == "n":
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        if not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(int(float(v)) for v in value)
    if key == "dist" and isinstance(value, dict):
        return ",".join(f"{int(k)}:{float(p)!r}" for k, p in value.items())
    if kind == "int":
        return int(float(value))
    if kind == "float":
        return float(value)
    if kind == "bool":
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    return None if value is None else str(value)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read overrides from a JSON object or ``key = value`` lines (``#`` comments)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip().strip('"').strip("'")
    out = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES or key == "command":
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return out


def make_config(command: str, overrides: Optional[dict] = None, **kwargs) -> ExperimentConfig:
    """Build a config from keyword values, then apply file ``overrides`` on top."""
    values = {k: v for k, v in kwargs.items() if v is not None}
    values.update(overrides or {})
    try:
        return ExperimentConfig(command=command, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def tangle_radius(n: int, a: float, delta0: float) -> int:
    """ell = max(2, floor(delta0 log n / log a))."""
    return max(2, math.floor(delta0 * math.log(n) / math.log(a)))


def parameter_warnings(dist: DegreeDistribution, delta0: float) -> list[str]:
    a, _ = derived_constants(dist)
    k_max = dist.support_max
    if k_max < 2 or a <= 1:
        return []
    eta = math.log(a) / math.log(k_max)
    if delta0 >= eta / 16:
        return [f"delta0 = {delta0:g} is not below eta/16 = {eta / 16:.4g} "
                f"(eta = log a / log k_max = {eta:.4g}); tangle-free radius is outside the proven range"]
    return []


def trial_seed(master_seed: int, n: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, n, index]).generate_state(1, np.uint64)[0])


@dataclass
class TrialRecord:
    index: int
    seed: int
    n: int
    ell: int
    attempts: Optional[int] = None
    lambda1: Optional[float] = None
    abs_error: Optional[float] = None
    success: bool = False
    tangle_free: Optional[bool] = None
    iterations: Optional[int] = None
    error: Optional[str] = None
    wallclock: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def sample_graph(dist: DegreeDistribution, n: int, seed: int, max_attempts: int = 1000) -> MultiGraph:
    return sample_simple(realize_sequence(dist, n), seed, max_attempts=max_attempts)


def replay_trial(dist: DegreeDistribution, n: int, seed: int, eps: float, delta0: float,
                 max_attempts: int = 1000, index: int = 0, timing: bool = False,
                 keep_graph: bool = False):
    """Run one trial from its recorded seed; returns the record (and graph if asked)."""
    a, _ = derived_constants(dist)
    ell = tangle_radius(n, a, delta0)
    rec = TrialRecord(index=index, seed=seed, n=n, ell=ell)
    start = time.perf_counter()
    g = None
    try:
        g = sample_graph(dist, n, seed, max_attempts)
        rec.attempts = g.attempts
        res = power_iterate(build_nb_operator(g), seed=seed)
        rec.lambda1 = res.lambda1
        rec.iterations = res.iterations
        rec.abs_error = abs(res.lambda1 - a)
        rec.success = rec.abs_error <= eps
        rec.tangle_free = tangle_free_check(g, ell)
    except SamplingError as exc:
        rec.attempts = exc.attempts
        rec.error = f"SamplingError: {exc}"
    except (ConvergenceError, ValueError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    if timing:
        rec.wallclock = time.perf_counter() - start
    return (rec, g) if keep_graph else rec


def _run_one(job):
    return replay_trial(*job)


def run_trials(config: ExperimentConfig, n: int) -> list[TrialRecord]:
    dist = config.distribution()
    jobs = [(dist, n, trial_seed(config.seed, n, i), config.eps, config.delta0,
             config.max_attempts, i, config.timing) for i in range(config.trials)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]


def _base_report(config: ExperimentConfig) -> dict:
    dist = config.distribution()
    a, b = derived_constants(dist)
    return {
        "schema_version": SCHEMA_VERSION,
        "command": config.command,
        "config": config.to_dict(),
        "distribution": {str(k): p for k, p in dist.as_dict().items()},
        "a": a,
        "b": b,
        "warnings": parameter_warnings(dist, config.delta0),
    }


def best_trial(records: Sequence[TrialRecord]) -> Optional[TrialRecord]:
    done = [r for r in records if r.abs_error is not None]
    return min(done, key=lambda r: (r.abs_error, r.index)) if done else None


@dataclass
class CommandResult:
    report: dict
    exit_code: int
    csv_rows: list[dict] = field(default_factory=list)
    csv_columns: Sequence[str] = TRIAL_CSV_COLUMNS
    files: dict[str, str] = field(default_factory=dict)  # path -> contents
    witness: Optional[MultiGraph] = None


def _trial_rows(records: Sequence[TrialRecord]) -> list[dict]:
    return [{"n": r.n, "trial": r.index, "seed": r.seed, "attempts": r.attempts, "lambda1": r.lambda1,
             "abs_error": r.abs_error, "success": r.success, "tangle_free": r.tangle_free,
             "ell": r.ell, "iterations": r.iterations, "error": r.error} for r in records]


def density_search(config: ExperimentConfig) -> CommandResult:
    """Sample graphs at the first n and measure how often |lambda1 - alpha| <= eps."""
    n = config.n[0]
    records = run_trials(config, n)
    report = _base_report(config)
    a = report["a"]
    n_success = sum(r.success for r in records)
    report.update({
        "n": n,
        "ell": tangle_radius(n, a, config.delta0),
        "trials": [r.to_dict() for r in records],
        "n_success": n_success,
        "success_fraction": n_success / len(records),
        "tangle_free_fraction": sum(bool(r.tangle_free) for r in records) / len(records),
        "n_errors": sum(r.error is not None for r in records),
    })
    best = best_trial(records)
    witness = None
    files = {}
    if best is not None:
        _, witness = replay_trial(config.distribution(), n, best.seed, config.eps, config.delta0,
                                  config.max_attempts, best.index, keep_graph=True)
        diag = prop51_diagnostics(build_nb_operator(witness), best.ell)
        report["witness"] = {
            "trial": best.index, "seed": best.seed, "n": witness.n, "m": witness.m,
            "lambda1": best.lambda1, "abs_error": best.abs_error,
            "prop51": {"ell": diag.ell, "ratio": diag.ratio, "ratio_over_a_pow_ell": diag.ratio / a ** diag.ell,
                       "cosine": diag.cosine},
        }
        if config.witness:
            files[config.witness] = format_graph(witness)
            report["witness"]["path"] = config.witness
    else:
        report["witness"] = None
    code = EXIT_OK if n_success > 0 else EXIT_STATISTICAL
    return CommandResult(report, code, _trial_rows(records), files=files, witness=witness)


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent increases in a sequence that should weakly decrease."""
    return sum(1 for x, y in zip(values, values[1:]) if y > x)


def sweep_n(config: ExperimentConfig) -> CommandResult:
    """Median |lambda1 - alpha| per n; passes when at most one adjacent increase."""
    grid = sorted(set(config.n))
    report = _base_report(config)
    rows, summary, medians = [], [], []
    for n in grid:
        records = run_trials(config, n)
        errs = [r.abs_error for r in records if r.abs_error is not None]
        med = float(np.median(errs)) if errs else float("nan")
        medians.append(med)
        summary.append({"n": n, "median_abs_error": med, "n_completed": len(errs),
                        "n_success": sum(r.success for r in records)})
        rows.extend(_trial_rows(records))
    inversions = count_inversions(medians)
    passed = all(math.isfinite(m) for m in medians) and inversions <= 1
    report.update({"grid": summary, "inversions": inversions, "passed": passed})
    return CommandResult(report, EXIT_OK if passed else EXIT_STATISTICAL, rows)


Q_TREE_BUDGET = 4_000_000  # expected deepest generation of one Q-study tree


def q_ell_cap(dist: DegreeDistribution, ell_max: int) -> int:
    """Largest ell <= ell_max whose depth-2 ell tree stays within the node budget (at least 4)."""
    a, b = derived_constants(dist)
    fit = math.floor(math.log(Q_TREE_BUDGET / b) / (2 * math.log(a)) + 1)
    return max(4, min(ell_max, fit))


def gw_validate(config: ExperimentConfig) -> CommandResult:
    """Mean law, martingale regression, tail bound and Q study for the configured law."""
    dist = config.distribution()
    a, b = derived_constants(dist)
    label = str(dist)
    report = _base_report(config)
    rows: list[dict] = []

    Z = simulate_Z_batch(dist, config.gw_t_max, config.gw_runs, seed=[config.seed, 0])
    means = Z.mean(axis=0)
    ses = Z.std(axis=0, ddof=1) / math.sqrt(Z.shape[0])
    mean_ok = True
    mean_rows = []
    for t in range(1, config.gw_t_max + 1):
        expected = a ** (t - 1) * b
        dev = abs(means[t] - expected)
        ok = dev <= 3 * ses[t] + 1e-9 * expected
        mean_ok &= bool(ok)
        mean_rows.append({"t": t, "mean": float(means[t]), "expected": expected, "stderr": float(ses[t]),
                          "ok": bool(ok)})
        rows.append({"dist": label, "suite": "mean", "t": t, "estimate": float(means[t]), "expected": expected,
                     "stderr": float(ses[t]), "n_runs": config.gw_runs, "seed": config.seed})

    if config.control:
        Z = shuffled_control(Z, seed=[config.seed, 1])
    mart = martingale_residuals(Z, dist)
    for t, est in mart.per_t.items():
        rows.append({"dist": label, "suite": "martingale", "t": t, "estimate": est.slope, "expected": a,
                     "stderr": est.stderr, "n_runs": config.gw_runs, "seed": config.seed})

    s0 = dist.support_max + 1
    tail = tail_bound_check(dist, [s0, 2 * s0, 4 * s0], config.gw_t_max, config.gw_runs, seed=[config.seed, 2])
    tail_ok = tail.monotone and tail.rates[0] < 0.5
    for s, rate in zip(tail.s_values, tail.rates):
        rows.append({"dist": label, "suite": "tail", "t": s, "estimate": rate, "expected": None,
                     "stderr": math.sqrt(rate * (1 - rate) / tail.n_runs), "n_runs": tail.n_runs,
                     "seed": config.seed})

    q_ell_max = q_ell_cap(dist, config.q_ell_max)
    q = q_convergence_study(dist, q_ell_max, config.q_runs, seed=[config.seed, 3])
    q_ok = q.plateau and q.moments_bounded
    for row in q.rows:
        rows.append({"dist": label, "suite": "q_ratio", "t": row["ell"], "estimate": row["estimate"],
                     "expected": None, "stderr": row["stderr"], "n_runs": row["n_runs"], "seed": config.seed})

    suites = {
        "mean_law": {"passed": mean_ok, "rows": mean_rows},
        "martingale": {
            "passed": mart.passed, "control": config.control, "level": mart.level,
            "pooled": asdict(mart.pooled), "per_t": {str(t): asdict(e) for t, e in mart.per_t.items()},
        },
        "tail_bound": {"passed": tail_ok, "s_values": tail.s_values, "rates": tail.rates,
                       "monotone": tail.monotone, "k_range": tail.k_range},
        "q_study": {"passed": q_ok, "ell_max": q_ell_max, "ells": q.ells, "mean_ratio": q.mean_ratio, "stderr": q.stderr,
                    "normalized": q.normalized, "relative_change": q.relative_change,
                    "plateau": q.plateau, "moments": {str(p): v for p, v in q.moments.items()},
                    "moments_bounded": q.moments_bounded, "zinf_mean": q.zinf_mean},
    }
    passed = all(s["passed"] for s in suites.values())
    report.update({"suites": suites, "passed": passed})
    return CommandResult(report, EXIT_OK if passed else EXIT_STATISTICAL, rows, GW_CSV_COLUMNS)


def emit_subgroup(config: ExperimentConfig) -> CommandResult:
    """Witness graph -> immersion into the bouquet -> free basis -> growth certificate."""
    search = density_search(replace(config, command="density-search"))
    report = _base_report(config)
    report["search"] = {k: search.report[k] for k in ("n", "n_success", "success_fraction", "witness")}
    g = search.witness
    if g is None:
        report["subgroup"] = None
        return CommandResult(report, EXIT_STATISTICAL, search.csv_rows)
    comps = g.connected_components()
    core = g.subgraph(comps[0]) if len(comps) > 1 else g
    labeled = immerse(core, config.r)
    verify_immersion(labeled)
    basis = subgroup_basis(labeled, 0)
    cert = subgroup_growth_certificate(labeled, config.depth, config.tolerance, seed=search.report["witness"]["seed"])
    report["subgroup"] = {
        "component_vertices": core.n,
        "component_edges": core.m,
        "n_components": len(comps),
        "immersion_verified": True,
        "basis": basis.to_dict(),
        "certificate": cert.to_dict(),
    }
    files = dict(search.files)
    if config.out:
        stem = str(Path(config.out).with_suffix(""))
        files[stem + ".labeled.txt"] = format_labeled(labeled)
        files[stem + ".basis.json"] = json.dumps(basis.to_dict(), indent=2, sort_keys=True) + "\n"
        report["subgroup"]["files"] = sorted(files)
    if not cert.passed:
        code = EXIT_CERTIFICATE
    elif search.report["n_success"] == 0:
        code = EXIT_STATISTICAL
    else:
        code = EXIT_OK
    return CommandResult(report, code, search.csv_rows, files=files, witness=g)


RUNNERS = {
    "density-search": density_search,
    "sweep-n": sweep_n,
    "gw-validate": gw_validate,
    "emit-subgroup": emit_subgroup,
}


def run(config: ExperimentConfig) -> CommandResult:
    for w in parameter_warnings(config.distribution(), config.delta0):
        log.warning(w)
    return RUNNERS[config.command](config)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"


def render_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def write_outputs(config: ExperimentConfig, result: CommandResult) -> None:
    if config.out:
        Path(config.out).write_text(render_report(result.report))
    if config.csv:
        Path(config.csv).write_text(render_csv(result.csv_rows, result.csv_columns))
    for path, text in result.files.items():
        Path(path).write_text(text)
