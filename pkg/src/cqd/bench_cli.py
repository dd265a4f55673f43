"""Benchmark harness: synthetic instances, certification experiments, report emission."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .manifold import qr_retraction, tucker_from_tensor
from .optimizer import StepSchedule, TaskSpec, run_cqd
from .oracle_sim import OracleConfig, SimulatedOracle, ensemble_infer
from .query_codec import encode
from .spectral_masking import asm_compress, budget, mask_factorization, masked_tensor
from .tensor_core import hosvd, multi_mode_product, tail_energy, truncated_reconstruct

# Pass/fail thresholds for the certification experiments.
GRAD_SQ_THRESHOLD = 1e-3
DETERMINISTIC_LOSS_THRESHOLD = 1e-8
DETERMINISTIC_MAX_ITERS = 400
DETERMINISTIC_ETA = 0.1
NEGATIVE_CONTROL_ETA = 3.0
NEGATIVE_CONTROL_ITERS = 50
DIVERGENCE_FACTOR = 1e6
TAIL_BOUND_SLACK = 1e-9
VARIANCE_BAND = (0.8, 1.25)
PROJECTOR_STRICT_TOL = 1e-12
FRONTIER_TOL = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    shape: tuple[int, ...] = (6, 6, 6)
    ranks: tuple[int, ...] = (2, 2, 2)
    sigma: float = 0.1
    seeds: tuple[int, ...] = tuple(range(10))
    iters: int = 5000
    eps0: float = 0.1
    tau: int = 27
    lam: float = 0.1
    noise_floor: float = 0.1
    eta0: float = 0.5
    k0: float = 100.0
    grid_points: int = 50
    trials: int = 2000
    n_projectors: int = 500
    n_instances: int = 100
    m_values: tuple[int, ...] = (1, 4, 16, 64)

    def __post_init__(self):
        if any(int(s) <= 0 for s in self.shape):
            raise ValueError("shape entries must be positive")
        if not self.seeds:
            raise ValueError("seed list must be non-empty")


@dataclass
class Report:
    experiment: str
    config: dict
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _summarize(rows: list[dict], columns: tuple[str, ...]) -> dict:
    summary: dict = {}
    for col in columns:
        values = [
            float(row[col])
            for row in rows
            if isinstance(row.get(col), (int, float)) and not isinstance(row.get(col), bool)
        ]
        if values:
            arr = np.array(values)
            summary[col] = {
                "mean": float(np.mean(arr)),
                "std": float(np.std(arr)),
                "min": float(np.min(arr)),
                "max": float(np.max(arr)),
            }
    return summary


def _finish(report: Report) -> Report:
    report.summary.update(_summarize(report.rows, report.columns))
    return report


def _config_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def gen_synthetic(shape, true_ranks, noise_floor: float, seed: int):
    """Random low-rank target plus an optionally perturbed starting instance.

    The target is a random core pushed through random orthonormal factors,
    so its multilinear rank equals true_ranks exactly; the instance adds
    noise_floor times a unit-variance entrywise perturbation.
    """
    shape = tuple(int(s) for s in shape)
    true_ranks = tuple(int(r) for r in true_ranks)
    if any(r > d for r, d in zip(true_ranks, shape)) or any(r < 1 for r in true_ranks):
        raise ValueError(f"ranks {true_ranks} invalid for shape {shape}")
    if noise_floor < 0:
        raise ValueError("noise_floor must be nonnegative")
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(true_ranks)
    mats = tuple(
        qr_retraction(rng.standard_normal((shape[mode], true_ranks[mode]))).u
        for mode in range(3)
    )
    target = multi_mode_product(core, mats)
    if noise_floor > 0:
        instance = target + noise_floor * rng.standard_normal(shape)
    else:
        instance = target.copy()
    return instance, target


def exp_projector_optimality(cfg: ExperimentConfig) -> Report:
    """Top-r singular projector beats random rank-r projectors on every draw."""
    if len(cfg.shape) != 2:
        raise ValueError("projector experiment expects a matrix shape (m, n)")
    m_dim, n_dim = cfg.shape
    r = int(cfg.ranks[0])
    columns = ("seed", "optimal_residual_sq", "best_random_residual_sq", "violations")
    report = Report("projopt", _config_dict(cfg), columns)
    total_violations = 0
    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((m_dim, n_dim))
        svals = np.linalg.svd(a, compute_uv=False)
        optimal = float(np.sum(svals[r:] ** 2))
        best_random = np.inf
        violations = 0
        for _ in range(cfg.n_projectors):
            v = qr_retraction(rng.standard_normal((m_dim, r))).u
            resid = float(np.sum((a - v @ (v.T @ a)) ** 2))
            best_random = min(best_random, resid)
            if resid < optimal - PROJECTOR_STRICT_TOL:
                violations += 1
        total_violations += violations
        report.rows.append(
            {
                "seed": seed,
                "optimal_residual_sq": optimal,
                "best_random_residual_sq": best_random,
                "violations": violations,
            }
        )
    report.passed["zero_violations"] = total_violations == 0
    return _finish(report)


def exp_tail_bound(cfg: ExperimentConfig) -> Report:
    """Truncation residual is bounded by the discarded spectral energy, all rank triples."""
    max_dim = max(int(s) for s in cfg.shape)
    columns = ("instance", "shape", "n_triples", "violations", "max_slack_ratio")
    report = Report("tailbound", _config_dict(cfg), columns)
    total_violations = 0
    base = int(cfg.seeds[0])
    for i in range(cfg.n_instances):
        rng = np.random.default_rng([base, i])
        shape = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=3))
        x = rng.standard_normal(shape)
        f = hosvd(x)
        violations = 0
        n_triples = 0
        max_ratio = 0.0
        for r1 in range(shape[0] + 1):
            for r2 in range(shape[1] + 1):
                for r3 in range(shape[2] + 1):
                    ranks = (r1, r2, r3)
                    resid = float(np.sum((x - truncated_reconstruct(f, ranks)) ** 2))
                    bound = tail_energy(f, ranks)
                    n_triples += 1
                    if resid > bound + TAIL_BOUND_SLACK:
                        violations += 1
                    if bound > 0:
                        max_ratio = max(max_ratio, resid / bound)
        total_violations += violations
        report.rows.append(
            {
                "instance": i,
                "shape": "x".join(str(d) for d in shape),
                "n_triples": n_triples,
                "violations": violations,
                "max_slack_ratio": max_ratio,
            }
        )
    report.passed["zero_violations"] = total_violations == 0
    return _finish(report)


def _convergence_run(cfg: ExperimentConfig, seed: int, variant: str) -> dict:
    instance, target = gen_synthetic(cfg.shape, cfg.ranks, cfg.noise_floor, seed)
    x0 = tucker_from_tensor(instance, cfg.ranks)
    if variant == "rm_noisy":
        schedule = StepSchedule("robbins_monro", cfg.eta0, cfg.k0)
        sigma, iters = cfg.sigma, cfg.iters
    elif variant == "deterministic":
        schedule = StepSchedule("constant", DETERMINISTIC_ETA)
        sigma, iters = 0.0, DETERMINISTIC_MAX_ITERS
    elif variant == "negative_control":
        schedule = StepSchedule("constant", NEGATIVE_CONTROL_ETA)
        sigma, iters = 0.0, NEGATIVE_CONTROL_ITERS
    else:
        raise ValueError(f"unknown variant {variant!r}")
    task = TaskSpec(target=target, lam=cfg.lam, tau=cfg.tau, task_id=seed)
    _, trace = run_cqd(
        x0, task, OracleConfig(sigma, seed), schedule, cfg.eps0, iters
    )
    grads = trace.column("grad_norm_sq")
    losses = trace.column("loss")
    budgets = trace.column("budget")
    running_min = np.minimum.accumulate(grads)
    crossing = np.argmax(running_min < GRAD_SQ_THRESHOLD) if np.any(
        running_min < GRAD_SQ_THRESHOLD
    ) else -1
    return {
        "seed": seed,
        "variant": variant,
        "iters_run": len(trace),
        "crossing_iter": int(crossing),
        "min_running_grad_sq": float(running_min[-1]),
        "final_loss": float(losses[-1]),
        "min_loss": float(np.min(losses)),
        "budget_violations": int(np.sum(budgets > cfg.tau)),
        "diverged": int(losses[-1] > DIVERGENCE_FACTOR * max(losses[0], 1e-300)),
        "error": trace.error or "",
    }


def exp_convergence(cfg: ExperimentConfig) -> Report:
    """Desk-scale convergence: noisy Robbins-Monro runs plus two controls per seed."""
    columns = (
        "seed",
        "variant",
        "iters_run",
        "crossing_iter",
        "min_running_grad_sq",
        "final_loss",
        "min_loss",
        "budget_violations",
        "diverged",
        "error",
    )
    report = Report("converge", _config_dict(cfg), columns)
    for seed in cfg.seeds:
        for variant in ("rm_noisy", "deterministic", "negative_control"):
            report.rows.append(_convergence_run(cfg, seed, variant))
    rm_rows = [r for r in report.rows if r["variant"] == "rm_noisy"]
    det_rows = [r for r in report.rows if r["variant"] == "deterministic"]
    neg_rows = [r for r in report.rows if r["variant"] == "negative_control"]
    report.passed["median_grad_crossing"] = (
        float(np.median([r["min_running_grad_sq"] for r in rm_rows])) < GRAD_SQ_THRESHOLD
    )
    report.passed["deterministic_contraction"] = all(
        r["min_loss"] < DETERMINISTIC_LOSS_THRESHOLD and not r["error"] for r in det_rows
    )
    report.passed["divergence_detected"] = all(bool(r["diverged"]) for r in neg_rows)
    report.passed["budget_respected"] = all(
        r["budget_violations"] == 0 for r in report.rows if not r["error"]
    )
    return _finish(report)


def exp_rate_distortion(cfg: ExperimentConfig) -> Report:
    """Budget/distortion frontier over an eps grid; must be monotone."""
    columns = (
        "seed",
        "grid_index",
        "eps",
        "r1",
        "r2",
        "r3",
        "budget",
        "distortion",
        "lagrangian",
    )
    report = Report("ratedist", _config_dict(cfg), columns)
    grid = np.geomspace(1e-4, 0.999, cfg.grid_points)
    monotone = True
    for seed in cfg.seeds:
        instance, _ = gen_synthetic(cfg.shape, cfg.ranks, cfg.noise_floor, seed)
        f = hosvd(instance)
        scale = float(np.sum(instance**2))
        prev_budget = None
        prev_distortion = None
        # Grid descends in eps so budget grows and distortion shrinks row to row.
        for idx, eps in enumerate(sorted(grid, reverse=True)):
            cs = mask_factorization(f, float(eps))
            b = budget(cs.maskset.ranks)
            distortion = float(np.sum((instance - masked_tensor(cs)) ** 2))
            report.rows.append(
                {
                    "seed": seed,
                    "grid_index": idx,
                    "eps": float(eps),
                    "r1": cs.maskset.ranks[0],
                    "r2": cs.maskset.ranks[1],
                    "r3": cs.maskset.ranks[2],
                    "budget": b,
                    "distortion": distortion,
                    "lagrangian": distortion + cfg.lam * b,
                }
            )
            if prev_budget is not None:
                if b < prev_budget or distortion > prev_distortion + FRONTIER_TOL * scale:
                    monotone = False
            prev_budget, prev_distortion = b, distortion
    report.passed["frontier_monotone"] = monotone
    # Ranks (2, 2, 2) in a 20x20x20 ambient: 64 payload bytes vs 64,000.
    ratio = (8 * 2 * 2 * 2) / (8 * 20 * 20 * 20)
    report.summary["payload_ratio_2x2x2_in_20x20x20"] = ratio
    report.passed["compression_ratio_1e_3"] = ratio == 1e-3
    return _finish(report)


def exp_ensemble_variance(cfg: ExperimentConfig) -> Report:
    """Mean-aggregated oracle variance scales as sigma^2 / m."""
    columns = ("seed", "m", "variance", "expected", "ratio")
    report = Report("ensemble", _config_dict(cfg), columns)
    in_band = True
    decreasing = True
    for seed in cfg.seeds:
        instance, target = gen_synthetic(cfg.shape, cfg.ranks, cfg.noise_floor, seed)
        query = encode(asm_compress(instance, cfg.eps0), 0, seed, cfg.eps0)
        oracle = SimulatedOracle(OracleConfig(cfg.sigma, seed), target)
        prev = None
        for m in cfg.m_values:
            sq = np.empty(cfg.trials)
            for t in range(cfg.trials):
                resp = ensemble_infer(oracle, query, int(m), "mean", draw_start=t * int(m))
                sq[t] = np.sum((resp.payload - target) ** 2)
            variance = float(np.mean(sq))
            expected = cfg.sigma**2 / m
            ratio = variance / expected if expected > 0 else 0.0
            report.rows.append(
                {"seed": seed, "m": int(m), "variance": variance, "expected": expected, "ratio": ratio}
            )
            if expected > 0 and not VARIANCE_BAND[0] <= ratio <= VARIANCE_BAND[1]:
                in_band = False
            if prev is not None and variance >= prev:
                decreasing = False
            prev = variance
    report.passed["ratio_in_band"] = in_band
    report.passed["variance_strictly_decreasing"] = decreasing
    return _finish(report)


EXPERIMENTS = {
    "projopt": exp_projector_optimality,
    "tailbound": exp_tail_bound,
    "converge": exp_convergence,
    "ratedist": exp_rate_distortion,
    "ensemble": exp_ensemble_variance,
}


def emit_report(report: Report, path, fmt: str) -> None:
    """Write a report as CSV (rows only) or JSON (full document)."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(report.columns))
            writer.writeheader()
            for row in report.rows:
                writer.writerow(row)
    elif fmt == "json":
        doc = {
            "experiment": report.experiment,
            "config": report.config,
            "columns": list(report.columns),
            "rows": report.rows,
            "summary": report.summary,
            "passed": report.passed,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part != "")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqd-bench",
        description="Certification experiments for spectral-masked query delegation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = {
        "projopt": {"shape": "6,8", "ranks": "2", "seeds": ",".join(str(s) for s in range(20))},
        "tailbound": {"shape": "5,5,5", "ranks": "2,2,2", "seeds": "0"},
        "converge": {"shape": "6,6,6", "ranks": "2,2,2", "seeds": ",".join(str(s) for s in range(10))},
        "ratedist": {"shape": "6,6,6", "ranks": "2,2,2", "seeds": ",".join(str(s) for s in range(10))},
        "ensemble": {"shape": "6,6,6", "ranks": "2,2,2", "seeds": ",".join(str(s) for s in range(10))},
    }
    for name, fn in EXPERIMENTS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        d = defaults[name]
        p.add_argument("--seed-list", default=d["seeds"], help="comma-separated seeds")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--format", default="json", choices=("csv", "json"))
        p.add_argument("--shape", default=d["shape"], help="comma-separated dims")
        p.add_argument("--ranks", default=d["ranks"], help="comma-separated ranks")
        p.add_argument("--sigma", type=float, default=0.1 if name != "ensemble" else 0.5)
        p.add_argument("--iters", type=int, default=5000)
        p.add_argument("--eps", type=float, default=0.1, dest="eps0")
        p.add_argument("--tau", type=int, default=27)
        p.add_argument("--lambda", type=float, default=0.1, dest="lam")
        p.add_argument("--grid-points", type=int, default=50)
        p.add_argument("--trials", type=int, default=2000)
        p.add_argument("--projectors", type=int, default=500)
        p.add_argument("--instances", type=int, default=100)
        p.add_argument("--m-list", default="1,4,16,64")
        p.add_argument("--noise-floor", type=float, default=0.1)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        experiment=args.command,
        shape=_int_tuple(args.shape),
        ranks=_int_tuple(args.ranks),
        sigma=args.sigma,
        seeds=_int_tuple(args.seed_list),
        iters=args.iters,
        eps0=args.eps0,
        tau=args.tau,
        lam=args.lam,
        noise_floor=args.noise_floor,
        grid_points=args.grid_points,
        trials=args.trials,
        n_projectors=args.projectors,
        n_instances=args.instances,
        m_values=_int_tuple(args.m_list),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    report = EXPERIMENTS[args.command](cfg)
    if args.out:
        emit_report(report, args.out, args.format)
    for flag, value in report.passed.items():
        print(f"[{'PASS' if value else 'FAIL'}] {args.command}: {flag}")
    print(f"{args.command}: {len(report.rows)} rows, overall {'PASS' if report.ok else 'FAIL'}")
    return 0 if report.ok else 1


def cli_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
