"""Supervised study: learn the mean of a variable number of floats.

Two input representations of the same task are compared.  A fully
connected network reads a fixed-width vector in which the missing values
are replaced by a padding constant and positions are shuffled (the
absorbing-state representation); an attention network reads the raw values
as a variable-size entity set.  Each run logs evaluation MSE on fresh
samples and emits one CSV of ``step,mse`` rows; an aggregation step
reduces seeds to mean and 95% confidence intervals per configuration.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .attention import EntityEncoder, RsaBlock
from .tensorcore import Adam, Array, Dense, DiffNode, Mlp

VALUE_LOW = 0.25
VALUE_HIGH = 0.75
MAX_COUNT = 10


@dataclass(frozen=True)
class MeanTask:
    """Draw n ~ U{min_n..max_n} floats from U[0.25, 0.75]; target their mean.

    The fully connected representation is a length-``max_n`` vector with
    ``max_n - n`` slots set to ``o_abs``, shuffled so the pad positions are
    uninformative.  A pad value inside the sampling range makes distinct
    samples indistinguishable, so it is rejected unless explicitly allowed
    for the ambiguity ablation.
    """

    min_n: int
    max_n: int
    o_abs: float = 0.0
    shuffle: bool = True
    fixed_count: bool = False
    allow_ambiguous_abs: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.min_n <= self.max_n <= MAX_COUNT:
            raise ValueError(
                f"need 1 <= min_n <= max_n <= {MAX_COUNT}, got "
                f"{self.min_n}..{self.max_n}"
            )
        if VALUE_LOW <= self.o_abs <= VALUE_HIGH and not self.allow_ambiguous_abs:
            raise ValueError(
                f"o_abs={self.o_abs} lies inside [{VALUE_LOW}, {VALUE_HIGH}] and "
                "makes the task ambiguous; set allow_ambiguous_abs to run it anyway"
            )


def sample_batch(
    task: MeanTask, batch_size: int, rng: np.random.Generator
) -> tuple[Array, list[Array], Array]:
    """Both representations of one batch: padded inputs, value sets, targets."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    padded = np.full((batch_size, task.max_n), task.o_abs)
    sets: list[Array] = []
    targets = np.zeros(batch_size)
    for i in range(batch_size):
        if task.fixed_count:
            n = task.min_n
        else:
            n = int(rng.integers(task.min_n, task.max_n + 1))
        values = rng.uniform(VALUE_LOW, VALUE_HIGH, size=n)
        sets.append(values)
        targets[i] = values.mean()
        padded[i, :n] = values
        if task.shuffle:
            padded[i] = padded[i, rng.permutation(task.max_n)]
    return padded, sets, targets


def mean_of_uniforms_variance(n: int, low: float = VALUE_LOW, high: float = VALUE_HIGH) -> float:
    """Variance of the mean of n iid uniforms: the no-learning MSE floor."""
    return (high - low) ** 2 / 12.0 / n


class MeanFcModel:
    """Fully connected regressor over the padded fixed-width vector."""

    def __init__(self, input_width: int, hidden: int, layers: int, rng: np.random.Generator):
        self.net = Mlp(input_width, [hidden] * layers + [1], rng)

    def predict(self, padded: Array) -> DiffNode:
        return tc.reshape(self.net(padded), (padded.shape[0],))

    def parameters(self) -> list[DiffNode]:
        return self.net.parameters()


class MeanAttentionModel:
    """Single-feature entities through an RSA block and a linear head."""

    def __init__(self, embed: int, heads: int, rng: np.random.Generator, embed_layers: int = 1):
        self.encoder = EntityEncoder("meanlab.float", 1, embed, rng, embed_layers)
        self.rsa = RsaBlock(embed, heads, rng)
        self.head = Dense(embed, 1, rng)

    def predict_sets(self, sets: list[Array]) -> tuple[DiffNode, np.ndarray]:
        """Predictions grouped by set size; also returns the row-to-sample map."""
        groups: dict[int, list[int]] = {}
        for i, values in enumerate(sets):
            groups.setdefault(len(values), []).append(i)
        nodes = []
        order: list[int] = []
        for n, indices in groups.items():
            entities = np.stack([sets[i] for i in indices])[..., None]  # (B, n, 1)
            pooled = self.rsa.forward(self.encoder.encode(entities))
            nodes.append(tc.reshape(self.head(pooled), (len(indices),)))
            order.extend(indices)
        pred = nodes[0] if len(nodes) == 1 else tc.concat(nodes, axis=0)
        return pred, np.array(order)

    def parameters(self) -> list[DiffNode]:
        return self.encoder.parameters() + self.rsa.parameters() + self.head.parameters()


@dataclass(frozen=True)
class MeanRunSpec:
    """One training run of one model on one task configuration."""

    model: str  # "fc" or "attention"
    min_n: int
    max_n: int
    seed: int
    o_abs: float = 0.0
    fixed_count: bool = False
    allow_ambiguous_abs: bool = False
    steps: int = 2000
    batch_size: int = 500
    learning_rate: float = 0.001
    hidden: int = 32
    layers: int = 2
    embed: int = 32
    heads: int = 4
    log_interval: int = 20

    @property
    def label(self) -> str:
        text = f"{self.model}_{self.min_n}-{self.max_n}"
        if self.model == "fc":
            text += f"_oabs{self.o_abs:g}"
        if self.fixed_count:
            text += "_fixed"
        return text


def _evaluate(model, spec: MeanRunSpec, task: MeanTask, rng: np.random.Generator) -> float:
    padded, sets, targets = sample_batch(task, spec.batch_size, rng)
    with tc.no_grad():
        if spec.model == "fc":
            pred = model.predict(padded).value
            return float(np.mean((pred - targets) ** 2))
        pred, order = model.predict_sets(sets)
        return float(np.mean((pred.value - targets[order]) ** 2))


def run_mean_training(spec: MeanRunSpec) -> list[tuple[int, float]]:
    """Train one configuration and return its (step, eval MSE) curve."""
    if spec.model not in ("fc", "attention"):
        raise ValueError(f"unknown model '{spec.model}'")
    init_seq, data_seq, eval_seq = np.random.SeedSequence(spec.seed).spawn(3)
    init_rng = np.random.default_rng(init_seq)
    data_rng = np.random.default_rng(data_seq)
    eval_rng = np.random.default_rng(eval_seq)
    task = MeanTask(
        min_n=spec.min_n,
        max_n=spec.max_n,
        o_abs=spec.o_abs,
        fixed_count=spec.fixed_count,
        allow_ambiguous_abs=spec.allow_ambiguous_abs,
    )
    if spec.model == "fc":
        model = MeanFcModel(task.max_n, spec.hidden, spec.layers, init_rng)
    else:
        model = MeanAttentionModel(spec.embed, spec.heads, init_rng)
    optimizer = Adam(model.parameters(), spec.learning_rate)

    rows = [(0, _evaluate(model, spec, task, eval_rng))]
    for step in range(1, spec.steps + 1):
        padded, sets, targets = sample_batch(task, spec.batch_size, data_rng)
        if spec.model == "fc":
            pred = model.predict(padded)
            loss = tc.mean_squared_error(pred, targets)
        else:
            pred, order = model.predict_sets(sets)
            loss = tc.mean_squared_error(pred, targets[order])
        optimizer.zero_grad()
        tc.backward(loss)
        optimizer.step()
        if step % spec.log_interval == 0 or step == spec.steps:
            rows.append((step, _evaluate(model, spec, task, eval_rng)))
    return rows


def write_run_csv(path: str | Path, rows: list[tuple[int, float]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("step", "mse"))
        for step, mse in rows:
            writer.writerow((step, repr(float(mse))))


def read_run_csv(path: str | Path) -> list[tuple[int, float]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != ("step", "mse"):
            raise ValueError(f"unexpected meanlab header in {path}: {header}")
        return [(int(r[0]), float(r[1])) for r in reader]


# ---------------------------------------------------------------------------
# Study orchestration


@dataclass
class StudyConfig:
    """The full sweep: count ranges x model families x seeds, plus ablations."""

    ranges: tuple[tuple[int, int], ...] = ((2, 10), (4, 10), (6, 10), (8, 10))
    models: tuple[str, ...] = ("fc", "attention")
    seeds: int = 20
    steps: int = 2000
    o_abs: float = 0.0
    o_abs_ablation: tuple[float, ...] = ()
    fixed_count_variant: bool = False
    allow_ambiguous_abs: bool = False
    batch_size: int = 500
    learning_rate: float = 0.001
    hidden: int = 32
    layers: int = 2
    embed: int = 32
    heads: int = 4
    log_interval: int = 20
    jobs: int = 1


def study_runs(config: StudyConfig) -> list[MeanRunSpec]:
    """Expand a study config into the flat list of runs it requires."""
    base = dict(
        steps=config.steps,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        hidden=config.hidden,
        layers=config.layers,
        embed=config.embed,
        heads=config.heads,
        log_interval=config.log_interval,
        allow_ambiguous_abs=config.allow_ambiguous_abs,
    )
    specs: list[MeanRunSpec] = []
    for min_n, max_n in config.ranges:
        for model in config.models:
            for seed in range(config.seeds):
                specs.append(
                    MeanRunSpec(
                        model=model, min_n=min_n, max_n=max_n, seed=seed,
                        o_abs=config.o_abs, **base,
                    )
                )
        for pad in config.o_abs_ablation:
            for seed in range(config.seeds):
                specs.append(
                    MeanRunSpec(
                        model="fc", min_n=min_n, max_n=max_n, seed=seed,
                        o_abs=pad, **base,
                    )
                )
        if config.fixed_count_variant:
            for seed in range(config.seeds):
                specs.append(
                    MeanRunSpec(
                        model="fc", min_n=min_n, max_n=max_n, seed=seed,
                        o_abs=config.o_abs, fixed_count=True, **base,
                    )
                )
    return specs


def _run_one(spec: MeanRunSpec) -> tuple[MeanRunSpec, list[tuple[int, float]]]:
    return spec, run_mean_training(spec)


def run_study(
    config: StudyConfig,
) -> dict[str, dict[int, list[tuple[int, float]]]]:
    """Run the whole grid; returns curves keyed by config label then seed."""
    specs = study_runs(config)
    if config.jobs > 1:
        with multiprocessing.get_context("fork").Pool(config.jobs) as pool:
            finished = pool.map(_run_one, specs)
    else:
        finished = [_run_one(spec) for spec in specs]
    results: dict[str, dict[int, list[tuple[int, float]]]] = {}
    for spec, rows in finished:
        results.setdefault(spec.label, {})[spec.seed] = rows
    return results


def aggregate(
    results: dict[str, dict[int, list[tuple[int, float]]]],
) -> list[tuple[str, int, float, float, int]]:
    """Rows of (config, step, mean_mse, ci95, n_seeds) across seeds."""
    rows: list[tuple[str, int, float, float, int]] = []
    for label in sorted(results):
        by_seed = results[label]
        steps = [step for step, _ in next(iter(by_seed.values()))]
        curves = np.array(
            [[mse for _, mse in by_seed[seed]] for seed in sorted(by_seed)]
        )
        n = curves.shape[0]
        means = curves.mean(axis=0)
        if n > 1:
            ci = 1.96 * curves.std(axis=0, ddof=1) / np.sqrt(n)
        else:
            ci = np.zeros_like(means)
        for i, step in enumerate(steps):
            rows.append((label, step, float(means[i]), float(ci[i]), n))
    return rows


def write_aggregate_csv(
    path: str | Path, rows: list[tuple[str, int, float, float, int]]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("config", "step", "mean_mse", "ci95", "n_seeds"))
        for label, step, mean, ci, n in rows:
            writer.writerow((label, step, repr(mean), repr(ci), n))


def final_mse_by_config(
    results: dict[str, dict[int, list[tuple[int, float]]]],
) -> dict[str, float]:
    """Mean over seeds of each run's final logged MSE."""
    return {
        label: float(np.mean([rows[-1][1] for rows in by_seed.values()]))
        for label, by_seed in results.items()
    }
