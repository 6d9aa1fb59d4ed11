"""Experiment orchestration: the fit / estimate / acquire / query / commit loop.

One replicate runs the full active-learning loop against a simulated oracle
and records the ground-truth grid MSE each round; an experiment repeats that
over seeded replicates (optionally in parallel, with identical results) and
serializes raw rows, per-round aggregates, and a config echo to flat files.

RNG discipline: every consumer draws from its own stream derived from
(replicate_seed, stream id[, round]), so adding or reordering consumers
never perturbs the others, and strategies sharing a replicate seed see the
same initial pool, the same initial fit, and the same oracle stream.

Row semantics of runs.csv: the row for round k holds the grid MSE of the
model fitted on the data available *entering* round k, the indices selected
in round k, and the labeled count after committing them. Round 1's mse is
therefore the common starting point of every strategy sharing a seed.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acquisition, cobias, ensemble, oracle, quadratic
from .pool import LabeledPool, StateGrid, build_grid, init_pool

# stream ids for seed derivation
_POOL_INIT, _ORACLE, _CHEAT, _RANDOM, _ENSEMBLE, _GP, _QUAD = range(1, 8)

ESTIMATORS = ("cheat", "direct", "quadratic")

RUNS_HEADER = (
    "seed,problem_type,strategy,estimator,batch_mode,round,"
    "n_labeled,mse,selected_indices,wall_ms"
)


@dataclass
class ExperimentConfig:
    problem_type: int = 2
    strategy: str = "pemse"
    estimator: str = "cheat"
    batch_mode: str = "single"
    n_init: int = 20
    n_rounds: int = 15
    batch_size: int = 1
    grid_resolution: int = 20
    n_replicates: int = 5
    base_seed: int = 1234
    out_dir: str = "runs"
    noise_scale: float = 0.1
    correlation_decay: float = 2.0 / np.pi
    correlation_metric: str = "euclidean"
    ensemble_size: int = 5
    bald_noise_var: float = 0.01
    distinct_batch: bool = False
    overwrite_observed: bool = True
    cheat_realizations: int = 10
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem_type not in (1, 2, 3):
            raise ValueError(f"problem_type must be 1, 2 or 3, got {self.problem_type}")
        if self.strategy not in acquisition.STRATEGIES:
            raise ValueError(f"unknown strategy: {self.strategy}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator: {self.estimator}")
        if self.batch_mode not in acquisition.BATCH_MODES:
            raise ValueError(f"unknown batch_mode: {self.batch_mode}")
        if self.batch_mode == "single":
            self.batch_size = 1
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        base = acquisition.DIFF_BASE.get(self.strategy, self.strategy)
        if self.estimator != "cheat" and self.strategy in ("random", "lc", "bald"):
            raise ValueError(
                f"estimator {self.estimator!r} only applies to bias-driven strategies; "
                f"{self.strategy!r} needs none (use estimator 'cheat')"
            )
        if self.batch_mode == "eigen" and base in ("random", "bald"):
            raise ValueError(f"eigen batching has no matrix analog for {self.strategy!r}")
        if self.n_init < 1 or self.n_init > self.grid_resolution**2:
            raise ValueError("n_init must be in [1, grid_resolution^2]")
        if self.n_rounds < 1 or self.n_replicates < 1:
            raise ValueError("n_rounds and n_replicates must be >= 1")

    def oracle_spec(self) -> oracle.OracleSpec:
        return oracle.OracleSpec(
            problem_type=oracle.ProblemType(self.problem_type),
            noise_scale=self.noise_scale,
            correlation_decay=self.correlation_decay,
            correlation_metric=self.correlation_metric,
            rng_seed=self.base_seed,
        )

    def ensemble_config(self) -> ensemble.EnsembleConfig:
        return ensemble.EnsembleConfig(n_members=self.ensemble_size)

    def quadratic_config(self) -> quadratic.QuadraticConfig:
        return quadratic.QuadraticConfig()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data.pop("version", None)  # accepted in echoes, not a config field
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


PRESETS = {
    # continuous-integration scale
    "desk": dict(grid_resolution=20, n_init=20, n_replicates=5, n_rounds=15, batch_mode="single"),
    # mirrors the full single-acquisition budget
    "full-single": dict(
        grid_resolution=50, n_init=100, n_replicates=10, n_rounds=50, batch_mode="single"
    ),
    # mirrors the full batched budget
    "full-batch": dict(
        grid_resolution=50,
        n_init=10,
        n_replicates=10,
        n_rounds=10,
        batch_size=10,
        batch_mode="eigen",
    ),
}


@dataclass
class RoundRow:
    round: int
    n_labeled: int
    mse: float
    selected: list
    wall_ms: float


@dataclass
class RunRecord:
    replicate_seed: int
    rows: list = field(default_factory=list)
    fallback_rounds: list = field(default_factory=list)
    completed: bool = True
    error: str | None = None
    version: str = __version__


def _stream(replicate_seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(replicate_seed), *map(int, key))))


def _stream_seed(replicate_seed: int, *key) -> int:
    return int(np.random.SeedSequence((int(replicate_seed), *map(int, key))).generate_state(1)[0])


def _eigen_matrix(decomp: cobias.CobiasDecomposition, base_strategy: str) -> np.ndarray:
    if base_strategy == "lc":
        return decomp.model_cov
    if base_strategy == "br":
        return decomp.bias_outer
    return decomp.total


def run_replicate(config: ExperimentConfig, replicate_seed: int) -> RunRecord:
    """One seeded pass of the active-learning loop; deterministic."""
    spec = config.oracle_spec()
    grid = build_grid(config.grid_resolution)
    truth = oracle.mean_signal(grid.points)
    ens_config = config.ensemble_config()

    pool_rng = _stream(replicate_seed, _POOL_INIT)
    oracle_rng = _stream(replicate_seed, _ORACLE)
    cheat_rng = _stream(replicate_seed, _CHEAT)
    random_rng = _stream(replicate_seed, _RANDOM)

    pool = init_pool(grid, config.n_init, spec, pool_rng)

    record = RunRecord(replicate_seed=replicate_seed)
    strategy = config.strategy
    base_strategy = acquisition.DIFF_BASE.get(strategy, strategy)
    is_diff = strategy in acquisition.DIFF_BASE
    need_bias = strategy in acquisition.BIAS_STRATEGIES
    need_matrices = config.batch_mode == "eigen"
    noiseless = spec.problem_type == oracle.ProblemType.NOISELESS

    prev_field = None
    prev_decomp = None

    for k in range(1, config.n_rounds + 1):
        tic = time.perf_counter()

        model = ensemble.fit(
            pool, grid, ens_config, np.random.SeedSequence((int(replicate_seed), _ENSEMBLE, k))
        )
        summary = ensemble.predict(model, grid)
        mse = float(np.mean((summary.mean - truth) ** 2))

        field_now, decomp = _estimate(
            config, spec, grid, summary, pool, cheat_rng, replicate_seed, k, need_bias, need_matrices
        )

        eligible = ~pool.labeled_mask if noiseless else np.ones(grid.n, dtype=bool)
        used_fallback = False

        if config.batch_mode == "eigen":
            matrix_now = _eigen_matrix(decomp, base_strategy)
            if is_diff and prev_decomp is not None:
                matrix = _eigen_matrix(prev_decomp, base_strategy) - matrix_now
                mode = "difference"
            else:
                used_fallback = is_diff
                matrix = matrix_now
                mode = "omega"
            selection = acquisition.select_batch_eigen(
                matrix,
                config.batch_size,
                mode=mode,
                eligible_mask=eligible,
                distinct=noiseless or config.distinct_batch,
            )
            used_fallback = used_fallback or selection.used_fallback
            indices = selection.indices
        else:
            scores = acquisition.score(
                strategy,
                field_now,
                eligible,
                prev_field=prev_field,
                rng=random_rng,
                bald_noise_var=config.bald_noise_var,
            )
            used_fallback = scores.used_fallback
            if config.batch_mode == "single":
                indices = [acquisition.select_single(scores)]
            else:
                indices = acquisition.select_batch_topm(scores, config.batch_size).indices

        draw = oracle.sample(
            spec, grid.points[indices], oracle_rng, point_indices=indices, round_tag=k
        )
        pool.commit(indices, draw)

        if used_fallback:
            record.fallback_rounds.append(k)
        record.rows.append(
            RoundRow(
                round=k,
                n_labeled=pool.n_observations,
                mse=mse,
                selected=list(indices),
                wall_ms=round((time.perf_counter() - tic) * 1000.0, 3),
            )
        )
        prev_field = field_now
        prev_decomp = decomp

    return record


def _estimate(config, spec, grid, summary, pool, cheat_rng, replicate_seed, k, need_bias, need_matrices):
    """Build the error field (and matrices if needed) with the configured back end."""
    if not need_bias:
        zeros = np.zeros(grid.n)
        field_now = cobias.PemseField(model_var=summary.variance, bias_sq=zeros, noise_var=zeros)
        decomp = None
        if need_matrices:
            zero_mat = np.zeros((grid.n, grid.n))
            decomp = cobias.assemble(
                cobias.model_covariance(summary.member_matrix), zero_mat, zero_mat, round_index=k
            )
        return field_now, decomp
    if config.estimator == "cheat":
        return cobias.cheat_estimate(
            summary,
            spec,
            grid,
            cheat_rng,
            n_realizations=config.cheat_realizations,
            with_matrices=need_matrices,
            round_index=k,
        )
    if config.estimator == "direct":
        return cobias.estimate_direct(
            summary,
            pool,
            grid,
            _stream_seed(replicate_seed, _GP, k),
            with_matrices=need_matrices,
            round_index=k,
        )
    return quadratic.estimate_quadratic(
        summary,
        pool,
        grid,
        config.quadratic_config(),
        _stream_seed(replicate_seed, _QUAD, k),
        with_matrices=need_matrices,
        overwrite_observed=config.overwrite_observed,
        round_index=k,
    )


def _run_replicate_guarded(config: ExperimentConfig, replicate_seed: int) -> RunRecord:
    try:
        return run_replicate(config, replicate_seed)
    except Exception as exc:  # noqa: BLE001 - a failed replicate must not sink the experiment
        record = RunRecord(replicate_seed=replicate_seed, completed=False, error=repr(exc))
        return record


def run_experiment(config: ExperimentConfig) -> list:
    """All replicates with seeds base_seed + r; scheduling never changes results."""
    seeds = [config.base_seed + r for r in range(config.n_replicates)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool_exec:
            records = list(pool_exec.map(_run_replicate_guarded, [config] * len(seeds), seeds))
    else:
        records = [_run_replicate_guarded(config, s) for s in seeds]
    return records


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------


def emit_outputs(records: list, config: ExperimentConfig, out_dir=None, plot: bool = False) -> dict:
    """Write runs.csv, summary.csv, config.json (and optionally the MSE chart).

    Returns the paths written. runs.csv is byte-stable for a given config and
    seed except for the wall_ms column.
    """
    if not records:
        raise ValueError("no records to emit")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    runs_path = out / "runs.csv"
    with open(runs_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUNS_HEADER.split(","))
        for record in records:
            for row in record.rows:
                writer.writerow(
                    [
                        record.replicate_seed,
                        config.problem_type,
                        config.strategy,
                        config.estimator,
                        config.batch_mode,
                        row.round,
                        row.n_labeled,
                        repr(row.mse),
                        ";".join(str(i) for i in row.selected),
                        repr(row.wall_ms),
                    ]
                )

    summary_path = out / "summary.csv"
    per_round: dict = {}
    for record in records:
        for row in record.rows:
            per_round.setdefault(row.round, []).append(row.mse)
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "problem_type",
                "strategy",
                "estimator",
                "batch_mode",
                "round",
                "median_mse",
                "q25_mse",
                "q75_mse",
                "n_replicates",
            ]
        )
        for rnd in sorted(per_round):
            mses = np.array(per_round[rnd])
            writer.writerow(
                [
                    config.problem_type,
                    config.strategy,
                    config.estimator,
                    config.batch_mode,
                    rnd,
                    repr(float(np.median(mses))),
                    repr(float(np.quantile(mses, 0.25))),
                    repr(float(np.quantile(mses, 0.75))),
                    len(mses),
                ]
            )

    config_path = out / "config.json"
    echo = config.to_dict()
    echo["version"] = __version__
    with open(config_path, "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")

    paths = {"runs": runs_path, "summary": summary_path, "config": config_path}
    if plot:
        paths["plot"] = plot_mse_curves(out)
    return paths


def plot_mse_curves(run_dir) -> Path:
    """Line chart of median MSE per round (log y) from one or more runs.csv."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    csv_paths = sorted(run_dir.rglob("runs.csv"))
    if not csv_paths:
        raise FileNotFoundError(f"no runs.csv under {run_dir}")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in csv_paths:
        rounds: dict = {}
        label = None
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                label = f"{row['strategy']}/{row['estimator']}/{row['batch_mode']}"
                rounds.setdefault(int(row["round"]), []).append(float(row["mse"]))
        ks = sorted(rounds)
        med = [float(np.median(rounds[k])) for k in ks]
        ax.plot(ks, med, marker="o", markersize=3, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel("median MSE vs ground truth")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    out_path = run_dir / "mse_curve.svg"
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(path, pool: LabeledPool, rng_states: dict | None = None, model=None) -> None:
    """JSON checkpoint of pool state, rng stream states, and model parameters."""
    state = {
        "pool": pool.to_state(),
        "rng_states": rng_states or {},
        "model": None if model is None else ensemble.pack_model(model),
    }
    with open(path, "w") as fh:
        json.dump(state, fh)


def load_checkpoint(path):
    with open(path) as fh:
        state = json.load(fh)
    pool = LabeledPool.from_state(state["pool"])
    model = None if state["model"] is None else ensemble.unpack_model(state["model"])
    return pool, state["rng_states"], model
