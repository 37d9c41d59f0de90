"""Monte-Carlo evaluation of outage identification.

One run draws a PMU placement per coverage level, then for every outage
scenario perturbs the loads, solves the pre- and post-outage power flows,
adds Gaussian noise to the angle change and runs each method on it.  All
randomness is derived from ``(seed, run, ...)`` through
:class:`numpy.random.SeedSequence`, so a report depends only on its
configuration and not on how runs are scheduled.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .lars import (
    IdentificationResult,
    StandardizedDesign,
    lars_path,
    select_outages,
    standardize,
)
from .mdc import (
    TABLE_THRESHOLDS,
    MdcCatalog,
    augment,
    build_mdc,
    column_correlations,
    diagnosability_sweep,
)
from .netmodel import NetworkModel, count_islands, load_case, remove_lines
from .powerflow import PowerFlowError, SteadyState, solve_power_flow
from .sigmap import PmuPlacement, SignatureMap, build_signature_map, dc_signature_map

log = logging.getLogger(__name__)

__all__ = [
    "NoiseModel",
    "OutageScenario",
    "BenchConfig",
    "Maps",
    "METHODS",
    "sample_placement",
    "outage_line_sets",
    "generate_scenarios",
    "simulate_angles",
    "simulate_measurement",
    "prepare_maps",
    "run_method",
    "score",
    "run_benchmark",
    "noise_sweep",
    "rho_sweep",
    "summarize",
    "report_json",
    "NOISE_LEVELS",
]

METHODS = ("lasso", "corr", "dc")
SINGLE_CANDIDATES = tuple(l for l in range(1, 37) if l != 21)
LOAD_SPREAD = 0.05


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class NoiseModel:
    """Per-bus std ``max(sigma_fraction * |clean change|, floor)``, radians."""

    sigma_fraction: float = 0.05
    floor: float = 1e-6

    def __post_init__(self):
        if self.sigma_fraction < 0 or self.floor < 0:
            raise ValueError("noise parameters must be non-negative")

    def std(self, clean: np.ndarray) -> np.ndarray:
        if self.sigma_fraction == 0:
            return np.zeros_like(clean)
        return np.maximum(self.sigma_fraction * np.abs(clean), self.floor)

    def apply(self, clean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return clean + self.std(clean) * rng.standard_normal(clean.shape)


@dataclass(frozen=True, eq=False)
class OutageScenario:
    lines: tuple[int, ...]
    load_perturbation: np.ndarray
    placement: PmuPlacement | None = None
    noise_seed: int = 0
    observed_dtheta: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.lines)


def sample_placement(
    model: NetworkModel,
    coverage: float,
    seed: int | np.random.Generator = 0,
    pmu_count: int | None = None,
) -> PmuPlacement:
    """``round(coverage * N)`` buses drawn uniformly without replacement.

    ``pmu_count`` overrides the rounded count.
    """
    if not 0 < coverage <= 1:
        raise ValueError("coverage must lie in (0, 1]")
    n = model.n_bus
    k = pmu_count if pmu_count is not None else int(math.floor(coverage * n + 0.5))
    if not 1 <= k <= n:
        raise ValueError(f"placement would hold {k} PMUs for {n} buses")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return PmuPlacement(tuple(int(b) + 1 for b in rng.choice(n, size=k, replace=False)))


def _connected(model: NetworkModel, lines: Iterable[int]) -> bool:
    return count_islands(remove_lines(model, lines))[0] == 1


def outage_line_sets(
    model: NetworkModel,
    kind: str,
    count: int = 100,
    seed: int | np.random.Generator = 0,
    max_attempts: int = 100_000,
) -> list[tuple[int, ...]]:
    """Line sets to trip.

    ``single``: lines 1-36 except 21, keeping those that leave the network
    in one piece.  ``double``: ``count`` distinct unordered pairs drawn
    from all lines, rejecting pairs that island the network.
    """
    if kind == "single":
        cands = [l for l in SINGLE_CANDIDATES if l <= model.n_line]
        return [(l,) for l in cands if _connected(model, [l])]
    if kind != "double":
        raise ValueError(f"unknown scenario kind {kind!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pairs: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    while len(pairs) < count:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                f"found only {len(pairs)} of {count} non-islanding pairs in {max_attempts} draws"
            )
        a, b = sorted(int(x) + 1 for x in rng.choice(model.n_line, size=2, replace=False))
        if (a, b) in seen:
            continue
        seen.add((a, b))
        if _connected(model, (a, b)):
            pairs.append((a, b))
    return pairs


def generate_scenarios(
    model: NetworkModel,
    kind: str,
    count: int = 100,
    seed: int = 0,
    placement: PmuPlacement | None = None,
) -> list[OutageScenario]:
    """Scenarios with one load-perturbation draw each."""
    if count_islands(model)[0] != 1:
        raise ValueError("base network is not connected")
    sets = outage_line_sets(model, kind, count, _rng(seed, 0))
    out = []
    for i, lines in enumerate(sets):
        rng = _rng(seed, 1, i)
        factors = rng.uniform(1 - LOAD_SPREAD, 1 + LOAD_SPREAD, model.n_bus)
        out.append(
            OutageScenario(
                lines=lines,
                load_perturbation=factors,
                placement=placement,
                noise_seed=int(rng.integers(2**63)),
            )
        )
    return out


def simulate_angles(model: NetworkModel, scenario: OutageScenario, tol: float = 1e-8):
    """Clean post- minus pre-outage angles at every bus, or ``None`` if a
    power flow fails."""
    loaded = model.scale_loads(scenario.load_perturbation)
    try:
        pre = solve_power_flow(loaded, tol=tol)
        if not pre.converged:
            return None
        post = solve_power_flow(remove_lines(loaded, scenario.lines), tol=tol)
    except PowerFlowError:
        return None
    if not post.converged:
        return None
    return post.theta - pre.theta


def simulate_measurement(
    model: NetworkModel,
    scenario: OutageScenario,
    noise: NoiseModel = NoiseModel(),
    placement: PmuPlacement | None = None,
) -> np.ndarray | None:
    """Noisy angle change at the scenario's PMU buses (all buses if none)."""
    clean = simulate_angles(model, scenario)
    if clean is None:
        return None
    noisy = noise.apply(clean, np.random.default_rng(scenario.noise_seed))
    placement = placement or scenario.placement
    if placement is None:
        return noisy
    return noisy[placement.rows]


@dataclass(frozen=True, eq=False)
class Maps:
    """AC and DC signature maps plus their MDC catalogs for one placement."""

    ac: SignatureMap
    dc: SignatureMap
    ac_mdc: MdcCatalog
    dc_mdc: MdcCatalog
    ac_design: StandardizedDesign | None = None
    dc_design: StandardizedDesign | None = None


def _quiet_mdc(sig: SignatureMap, rho: float) -> MdcCatalog:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_mdc(sig, rho)


def prepare_maps(
    ac_full: SignatureMap, dc_full: SignatureMap, placement: PmuPlacement, rho: float
) -> Maps:
    ac = ac_full.select(placement)
    dc = dc_full.select(placement)
    return Maps(
        ac, dc, _quiet_mdc(ac, rho), _quiet_mdc(dc, rho), standardize(ac), standardize(dc)
    )


def _lasso(
    sig: SignatureMap, dtheta, max_steps, gamma, top_k, design=None
) -> IdentificationResult:
    if design is None:
        design = standardize(sig)
    steps = max_steps
    if steps is not None:
        steps = min(steps, sig.f.shape[0] - 1, len(design.retained))
    path = lars_path(design, dtheta, steps)
    return select_outages(path, gamma=gamma, top_k=top_k)


def _corr(sig: SignatureMap, dtheta, k: int) -> IdentificationResult:
    f = sig.f
    both = np.column_stack([f, dtheta])
    C, dead = column_correlations(both)
    score = np.abs(C[:-1, -1])
    score[dead[:-1]] = 0.0
    order = np.lexsort((np.arange(score.size), -score))[:k]
    ids = sig.line_ids
    return IdentificationResult(
        selected_lines=tuple(int(ids[i]) for i in order),
        coefficients=tuple(float(score[i]) for i in order),
        path=None,
        selection_rule={"rule": "top_k_correlation", "k": int(k)},
    )


def run_method(
    method: str,
    maps: Maps | SignatureMap,
    dtheta: np.ndarray,
    outage_size: int = 1,
    max_steps: int | None = None,
    gamma: float = 0.3,
    top_k: int | None = None,
) -> IdentificationResult:
    """Identify outaged lines with ``lasso``, ``corr`` or ``dc``.

    ``corr`` keeps the ``outage_size`` lines whose AC signatures correlate
    most strongly (in absolute value) with the measurement; ``dc`` is the
    lasso pipeline on the DC map.  Passing a bare :class:`SignatureMap`
    uses it for whichever method is requested.
    """
    if isinstance(maps, SignatureMap):
        ac = dc = maps
        ac_design = dc_design = None
    else:
        ac, dc = maps.ac, maps.dc
        ac_design, dc_design = maps.ac_design, maps.dc_design
    dtheta = np.asarray(dtheta, dtype=float)
    if dtheta.shape != (ac.f.shape[0],):
        raise ValueError(
            f"measurement has {dtheta.size} entries but the map has {ac.f.shape[0]} rows"
        )
    if method == "lasso":
        return _lasso(ac, dtheta, max_steps, gamma, top_k, ac_design)
    if method == "dc":
        return _lasso(dc, dtheta, max_steps, gamma, top_k, dc_design)
    if method == "corr":
        return _corr(ac, dtheta, outage_size)
    raise ValueError(f"unknown method {method!r}")


def score(
    identified: Sequence[Iterable[int]], truth: Sequence[Iterable[int]], a: int
) -> float:
    """Share of scenarios whose identified set shares exactly ``a`` lines
    with the true set."""
    if len(truth) == 0:
        raise ValueError("no scenarios to score")
    if len(identified) != len(truth):
        raise ValueError("identified and true sets are not aligned")
    hits = sum(len(set(o) & set(t)) == a for o, t in zip(identified, truth))
    return hits / len(truth)


# --------------------------------------------------------------------------
# benchmark driver


@dataclass(frozen=True)
class BenchConfig:
    case: str = "case39"
    coverages: tuple[float, ...] = (0.25, 0.5)
    runs: int = 200
    kinds: tuple[str, ...] = ("single", "double")
    methods: tuple[str, ...] = METHODS
    rho: float = 0.95
    gamma: float = 0.05
    max_steps: int | None = None
    sigma_fraction: float = 0.05
    noise_floor: float = 1e-6
    double_count: int = 100
    pmu_count: int | None = None
    seed: int = 42
    jobs: int = 1

    def validate(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not self.coverages or any(not 0 < c <= 1 for c in self.coverages):
            raise ValueError("coverages must lie in (0, 1]")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.sigma_fraction < 0 or self.noise_floor < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.double_count < 1:
            raise ValueError("double_count must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        for k in self.kinds:
            if k not in ("single", "double"):
                raise ValueError(f"unknown scenario kind {k!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Context:
    model: NetworkModel
    config: BenchConfig
    base: SteadyState
    ac_full: SignatureMap
    dc_full: SignatureMap
    line_sets: dict[str, list[tuple[int, ...]]]


def _context(model: NetworkModel, config: BenchConfig) -> _Context:
    base = solve_power_flow(model)
    if not base.converged:
        raise PowerFlowError("base case power flow did not converge")
    everything = PmuPlacement.all_buses(model.n_bus)
    sets = {}
    for ki, kind in enumerate(config.kinds):
        sets[kind] = outage_line_sets(model, kind, config.double_count, _rng(config.seed, 0, ki))
    return _Context(
        model=model,
        config=config,
        base=base,
        ac_full=build_signature_map(model, base, everything),
        dc_full=dc_signature_map(model, everything),
        line_sets=sets,
    )


def _one_run(
    ctx: _Context,
    run: int,
    levels: Sequence[float] | None = None,
    rhos: Sequence[float] | None = None,
) -> dict:
    """Simulate every scenario of one run.

    The clean angle change and the standard-normal noise draw of a scenario
    are shared by all noise ``levels``; the selection of a method is shared
    by all MDC thresholds ``rhos``.  Sweeps therefore compare levels on
    common random numbers.
    """
    cfg = ctx.config
    model = ctx.model
    levels = (cfg.sigma_fraction,) if levels is None else tuple(levels)
    rhos = (cfg.rho,) if rhos is None else tuple(rhos)
    noises = [NoiseModel(level, cfg.noise_floor) for level in levels]
    maps, catalogs, diag = {}, {}, {}
    for ci, cov in enumerate(cfg.coverages):
        placement = sample_placement(model, cov, _rng(cfg.seed, 1, run, ci), cfg.pmu_count)
        maps[cov] = prepare_maps(ctx.ac_full, ctx.dc_full, placement, rhos[0])
        catalogs[cov] = {
            rho: (_quiet_mdc(maps[cov].ac, rho), _quiet_mdc(maps[cov].dc, rho)) for rho in rhos
        }
        diag[cov] = {rho: catalogs[cov][rho][0].diagnosability for rho in rhos}

    records = []
    for ki, kind in enumerate(cfg.kinds):
        for si, lines in enumerate(ctx.line_sets[kind]):
            rng = _rng(cfg.seed, 2, run, ki, si)
            factors = rng.uniform(1 - LOAD_SPREAD, 1 + LOAD_SPREAD, model.n_bus)
            scen = OutageScenario(lines=lines, load_perturbation=factors)
            clean = simulate_angles(model, scen)
            if clean is None:
                records.append({"run": run, "kind": kind, "lines": list(lines), "feasible": False})
                continue
            z = rng.standard_normal(clean.shape)
            for level, noise in zip(levels, noises):
                noisy = clean + noise.std(clean) * z
                for cov in cfg.coverages:
                    m = maps[cov]
                    obs = noisy[m.ac.placement.rows]
                    for method in cfg.methods:
                        res = run_method(
                            method, m, obs, outage_size=len(lines),
                            max_steps=cfg.max_steps, gamma=cfg.gamma,
                        )
                        for rho in rhos:
                            ac_cat, dc_cat = catalogs[cov][rho]
                            cat = dc_cat if method == "dc" else ac_cat
                            records.append(
                                {
                                    "run": run,
                                    "kind": kind,
                                    "coverage": cov,
                                    "method": method,
                                    "noise": level,
                                    "rho": rho,
                                    "lines": list(lines),
                                    "feasible": True,
                                    "selected": list(res.selected_lines),
                                    "augmented": list(augment(res, cat)),
                                }
                            )
    return {"run": run, "records": records, "diagnosability": diag}


def _run_chunk(args):
    ctx, runs, levels, rhos = args
    return [_one_run(ctx, r, levels, rhos) for r in runs]


def _collect(ctx: _Context, levels=None, rhos=None) -> list[dict]:
    cfg = ctx.config
    runs = list(range(cfg.runs))
    if cfg.jobs > 1:
        chunks = [(ctx, runs[i :: cfg.jobs], levels, rhos) for i in range(cfg.jobs)]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    else:
        results = [_one_run(ctx, r, levels, rhos) for r in runs]
    results.sort(key=lambda r: r["run"])
    return results


def _quartiles(values: Sequence[float]) -> dict:
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "mean": float(v.mean()),
        "min": float(v[0]),
        "max": float(v[-1]),
        "n": int(v.size),
    }


def _per_run_accuracy(run_results: Sequence[dict], noise: float, rho: float):
    per_run: dict = {}
    infeasible = 0
    for rr in run_results:
        groups: dict = {}
        for rec in rr["records"]:
            if not rec["feasible"]:
                infeasible += 1
                continue
            if rec["noise"] != noise or rec["rho"] != rho:
                continue
            key = (rec["kind"], rec["coverage"], rec["method"])
            groups.setdefault(key, []).append(rec)
        for (kind, cov, method), recs in sorted(groups.items()):
            truth = [r["lines"] for r in recs]
            sizes = [1] if kind == "single" else [1, 2]
            for variant, field_ in (("raw", "selected"), ("mdc", "augmented")):
                for a in sizes:
                    acc = score([r[field_] for r in recs], truth, a)
                    per_run.setdefault(kind, {}).setdefault(f"{cov:g}", {}).setdefault(
                        method, {}
                    ).setdefault(variant, {}).setdefault(f"a{a}", []).append(acc)
    return per_run, infeasible


def _stats(per_run: dict) -> dict:
    if isinstance(per_run, list):
        return _quartiles(per_run)
    return {k: _stats(v) for k, v in sorted(per_run.items())}


def summarize(
    run_results: Sequence[dict],
    config: BenchConfig,
    noise: float | None = None,
    rho: float | None = None,
) -> dict:
    """Per-run accuracies and their box-plot statistics.

    ``per_run[kind][coverage][method][variant]["a<a>"]`` lists one accuracy
    per run; ``variant`` is ``raw`` or ``mdc``.  Infeasible scenarios (a
    power flow failed) are left out of the scores and counted.
    """
    noise = config.sigma_fraction if noise is None else noise
    rho = config.rho if rho is None else rho
    per_run, infeasible = _per_run_accuracy(run_results, noise, rho)
    diag = {
        f"{cov:g}": _quartiles([rr["diagnosability"][cov][rho] for rr in run_results])
        for cov in config.coverages
    }
    return {
        "accuracy": _stats(per_run),
        "per_run": per_run,
        "diagnosability": diag,
        "infeasible_scenarios": infeasible,
    }


def _load(config: BenchConfig, model: NetworkModel | None) -> NetworkModel:
    if model is not None:
        return model
    return load_case(config.case)


def run_benchmark(
    config: BenchConfig, model: NetworkModel | None = None, keep_records: bool = False
) -> dict:
    """Run the full protocol and return a JSON-ready report."""
    config.validate()
    ctx = _context(_load(config, model), config)
    results = _collect(ctx)
    summary = summarize(results, config)
    if summary["infeasible_scenarios"]:
        log.warning("%d scenarios skipped: power flow failed", summary["infeasible_scenarios"])
    report = {
        "config": config.to_dict(),
        "counts": {kind: len(sets) for kind, sets in ctx.line_sets.items()},
        "double_pairs": [list(p) for p in ctx.line_sets.get("double", [])],
        **summary,
    }
    if keep_records:
        report["records"] = [rec for rr in results for rec in rr["records"]]
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1)


NOISE_LEVELS = (0.0, 0.02, 0.04, 0.06, 0.08, 0.10)


def noise_sweep(
    config: BenchConfig,
    levels: Sequence[float] = NOISE_LEVELS,
    model: NetworkModel | None = None,
) -> list[dict]:
    """Lasso accuracy statistics per noise level.

    Every level sees the same placements, load draws and standard-normal
    noise draws; only the noise scale changes.
    """
    config = replace(config, methods=("lasso",))
    config.validate()
    if any(level < 0 for level in levels):
        raise ValueError("noise levels must be non-negative")
    ctx = _context(_load(config, model), config)
    results = _collect(ctx, levels=levels)
    rows = []
    for level in levels:
        per_run, _ = _per_run_accuracy(results, level, config.rho)
        for kind, by_cov in sorted(per_run.items()):
            for cov, by_method in sorted(by_cov.items()):
                for variant, by_a in sorted(by_method["lasso"].items()):
                    for a, vals in sorted(by_a.items()):
                        st = _quartiles(vals)
                        rows.append(
                            {
                                "noise": float(level),
                                "kind": kind,
                                "coverage": float(cov),
                                "variant": variant,
                                "a": int(a[1:]),
                                "median": st["median"],
                                "q1": st["q1"],
                                "q3": st["q3"],
                                "mean": st["mean"],
                            }
                        )
    return rows


def rho_sweep(
    config: BenchConfig,
    thresholds: Sequence[float] = TABLE_THRESHOLDS,
    model: NetworkModel | None = None,
    with_accuracy: bool = True,
) -> list[dict]:
    """Diagnosability and Lasso+MDC accuracy per MDC threshold.

    Uses the last coverage of ``config``.  Each row holds the mean and
    standard deviation over runs of ``V`` and, with ``with_accuracy``, of
    the single-line (one correct) and double-line (all correct) Lasso+MDC
    accuracies.
    """
    for rho in thresholds:
        if not 0 < rho <= 1:
            raise ValueError(f"threshold {rho} outside (0, 1]")
    cov = config.coverages[-1]
    config = replace(config, coverages=(cov,), methods=("lasso",))
    config.validate()
    model = _load(config, model)
    thresholds = tuple(float(t) for t in thresholds)

    def _sd(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0

    if with_accuracy:
        ctx = _context(model, config)
        results = _collect(ctx, rhos=thresholds)
        v = np.array([[rr["diagnosability"][cov][t] for t in thresholds] for rr in results])
    else:
        base = solve_power_flow(model)
        full = build_signature_map(model, base, PmuPlacement.all_buses(model.n_bus))
        v = np.zeros((config.runs, len(thresholds)))
        for run in range(config.runs):
            placement = sample_placement(model, cov, _rng(config.seed, 1, run, 0), config.pmu_count)
            v[run] = [val for _, val in diagnosability_sweep(full.select(placement), thresholds)]
    rows = []
    for ti, rho in enumerate(thresholds):
        row = {
            "rho": rho,
            "coverage": float(cov),
            "diagnosability_mean": float(v[:, ti].mean()),
            "diagnosability_std": _sd(v[:, ti]),
        }
        if with_accuracy:
            per_run, _ = _per_run_accuracy(results, config.sigma_fraction, rho)
            for kind, by_cov in sorted(per_run.items()):
                vals = by_cov[f"{cov:g}"]["lasso"]["mdc"]["a1" if kind == "single" else "a2"]
                row[f"{kind}_mean"] = float(np.mean(vals))
                row[f"{kind}_std"] = _sd(vals)
        rows.append(row)
    return rows
