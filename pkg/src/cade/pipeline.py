"""End-to-end stages: pretrain, init, evolve, eval, corrupt, sweep, stats.

Every stage reads and writes files under ``config.run.out`` and derives its
random streams from ``config.run.seed`` alone, so reruns are byte-identical.
Timestamps only go to the sidecar ``run.log``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dio
from . import robustness as rob
from . import snn
from .adaptive import SadeController, ShadeController
from .benchfns import BenchProblem
from .config import ExperimentConfig
from .errors import MissingInputError
from .evolution import Budget, Population, evolve, format_history, make_rng, spawn_seeds
from .schedules import ScheduleController, ScheduleState, Strategy, Wave, fixed_controller
from .toydata import ToyConfig

log = logging.getLogger("cade")

# indices into the per-run seed table
SEED_DATA, SEED_SOURCE, SEED_INIT, SEED_EVOLVE, SEED_ROBUST, SEED_SWEEP, SEED_PRETRAIN = range(7)


@dataclass(frozen=True)
class RunPaths:
    root: Path

    def __getattr__(self, name):
        files = {
            "config": "config.ini",
            "log": "run.log",
            "pretrain": "pretrain.ckpt",
            "population": "population.pop",
            "population_fitness": "population_fitness.tsv",
            "evolved": "evolved.pop",
            "history": "history.tsv",
            "best": "best.ckpt",
            "summary": "summary.tsv",
            "eval": "eval.tsv",
            "robustness_tsv": "robustness.tsv",
            "robustness_json": "robustness.json",
            "sweep": "sweep.tsv",
        }
        if name in files:
            return self.root / files[name]
        raise AttributeError(name)


def seeds(cfg: ExperimentConfig):
    return spawn_seeds(cfg.run.seed, 7)


def prepare(cfg: ExperimentConfig, command: str) -> RunPaths:
    """Create the run directory, archive the config and attach the sidecar log."""
    paths = RunPaths(Path(cfg.run.out))
    paths.root.mkdir(parents=True, exist_ok=True)
    paths.config.write_text(cfg.to_ini())
    for h in list(log.handlers):
        if isinstance(h, logging.FileHandler):
            log.removeHandler(h)
            h.close()
    handler = logging.FileHandler(paths.log)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.info("%s (seed=%d, workers=%d)", command, cfg.run.seed, cfg.run.workers)
    return paths


def _require(path: Path, what: str):
    if not path.exists():
        raise MissingInputError(f"{what} not found at {path}; run the upstream command first")
    return path


# --------------------------------------------------------------------------
# data, problems and controllers

def source_dataset(cfg):
    d = cfg.data
    toy = ToyConfig(classes=d.source_classes, image_size=d.image_size, noise=d.noise)
    return dio.make_toy_dataset(toy, d.n_source, np.random.default_rng(seeds(cfg)[SEED_SOURCE]))


def target_splits(cfg):
    d = cfg.data
    toy = ToyConfig(classes=d.target_classes, image_size=d.image_size, noise=d.noise)
    return dio.make_splits(toy, d.n_train, d.n_eval, d.n_test, seeds(cfg)[SEED_DATA])


class SnnProblem:
    """Fitness = top-1 accuracy of the genome on a fixed evaluation split."""

    def __init__(self, spec: snn.NetworkSpec, dataset: dio.Dataset):
        self.spec = spec
        self.dataset = dataset
        self.dim = spec.dim

    def __call__(self, genome):
        return snn.accuracy(self.spec, genome, self.dataset.images, self.dataset.labels)


def problem_for(cfg, splits=None):
    e = cfg.evolve
    if e.problem == "snn":
        splits = splits or target_splits(cfg)
        return SnnProblem(cfg.network, splits.eval)
    return BenchProblem(e.problem, e.dim)


def problem_digest(cfg) -> bytes:
    if cfg.evolve.problem == "snn":
        return cfg.network.digest()
    return hashlib.sha256(BenchProblem(cfg.evolve.problem, cfg.evolve.dim).describe().encode()).digest()


def make_controller(cfg):
    e = cfg.evolve
    horizon = max(e.max_iterations or e.generations, 1)
    if e.algorithm == "de":
        return fixed_controller(e.de_f, e.de_cr, horizon)
    if e.algorithm == "shade":
        return ShadeController(e.shade_memory)
    if e.algorithm == "sade":
        return SadeController(e.sade_learning_period)
    state = ScheduleState.initial(
        e.f_init,
        e.cr_init,
        horizon,
        strategy=Strategy(e.strategy),
        wave_F=Wave(e.wave_f),
        wave_CR=Wave(e.wave_cr),
        update_period=e.update_period,
        F_min=e.f_min,
        CR_min=e.cr_min,
    )
    return ScheduleController(state)


def train_config(cfg, epochs):
    p = cfg.pretrain
    return snn.TrainConfig(
        epochs=epochs,
        lr=p.lr,
        momentum=p.momentum,
        batch_size=p.batch_size,
        label_smoothing=p.label_smoothing,
        mixup_alpha=p.mixup_alpha,
        lr_step=p.lr_step,
        lr_gamma=p.lr_gamma,
    )


def source_spec(cfg):
    return dataclasses.replace(cfg.network, num_classes=len(cfg.data.source_classes))


# --------------------------------------------------------------------------
# commands

def cmd_pretrain(cfg: ExperimentConfig) -> Path:
    """Surrogate-gradient pretraining on the source dataset."""
    paths = prepare(cfg, "pretrain")
    spec = source_spec(cfg)
    src = source_dataset(cfg)
    res = snn.surrogate_backward_train(
        spec,
        src.images,
        src.labels,
        train_config(cfg, cfg.pretrain.source_epochs),
        np.random.default_rng(seeds(cfg)[SEED_PRETRAIN]),
    )
    dio.save_checkpoint(paths.pretrain, res.params, spec.digest())
    log.info("pretrain losses %s", ["%.4f" % v for v in res.losses])
    return paths.pretrain


def cmd_init(cfg: ExperimentConfig) -> Path:
    """Build the initial population file."""
    paths = prepare(cfg, "init")
    rng = make_rng(seeds(cfg)[SEED_INIT])
    if cfg.evolve.problem != "snn":
        prob = problem_for(cfg)
        lo, hi = prob.domain
        members = rng.uniform(lo, hi, size=(cfg.evolve.bench_population, prob.dim)).astype(np.float32)
        dio.save_population(paths.population, members, problem_digest(cfg))
        return paths.population

    splits = target_splits(cfg)
    kind = dio.InitKind(cfg.init.strategy)
    hooks = dio.Pretrainer(
        spec=cfg.network,
        target=splits.train,
        finetune=train_config(cfg, cfg.pretrain.finetune_epochs),
    )
    if kind is dio.InitKind.TRANSFER:
        hooks.source = source_dataset(cfg)
        hooks.source_genome = dio.load_checkpoint(
            _require(paths.pretrain, "pretrained source checkpoint"), source_spec(cfg).digest()
        )
    strategy = dio.InitStrategy(kind, tuple(cfg.init.ratios), cfg.init.parts or None)
    members = dio.init_population(strategy, cfg.init.population_size, hooks, rng)
    dio.save_population(paths.population, members, cfg.network.digest())

    prob = SnnProblem(cfg.network, splits.eval)
    rows = ["member\teval_accuracy"]
    rows += [f"{i}\t{100 * prob(g):.2f}" for i, g in enumerate(members)]
    paths.population_fitness.write_text("\n".join(rows) + "\n")
    return paths.population


@dataclass
class EvolveOutcome:
    initial_best: float
    final_best: float
    history: list
    population: Population

    @property
    def improvement(self):
        return self.final_best - self.initial_best


def run_evolution(cfg, members, problem, seed, workers=None):
    start = Population.evaluate(members, problem, workers or cfg.run.workers)
    budget = Budget(
        cfg.evolve.generations,
        None if np.isinf(cfg.evolve.target_fitness) else cfg.evolve.target_fitness,
    )
    final, history = evolve(
        start, make_controller(cfg), problem, budget, make_rng(seed), workers or cfg.run.workers
    )
    return EvolveOutcome(start.best_fitness, final.best_fitness, history, final)


def cmd_evolve(cfg: ExperimentConfig) -> EvolveOutcome:
    paths = prepare(cfg, "evolve")
    digest = problem_digest(cfg)
    members = dio.load_population(_require(paths.population, "initial population"), digest)
    splits = target_splits(cfg) if cfg.evolve.problem == "snn" else None
    problem = problem_for(cfg, splits)
    outcome = run_evolution(cfg, members, problem, seeds(cfg)[SEED_EVOLVE])

    dio.save_population(paths.evolved, outcome.population.members, digest)
    dio.save_checkpoint(paths.best, outcome.population.best, digest)
    paths.history.write_text(format_history(outcome.history))
    e = cfg.evolve
    cols = ["algorithm", "strategy", "F-init", "CR-init", "t", "initial_best", "final_best", "improvement"]
    vals = [
        e.algorithm,
        e.strategy if e.algorithm == "cade" else "-",
        repr(e.f_init),
        repr(e.cr_init),
        str(e.update_period),
        repr(outcome.initial_best),
        repr(outcome.final_best),
        repr(outcome.improvement),
    ]
    paths.summary.write_text("\t".join(cols) + "\n" + "\t".join(vals) + "\n")
    log.info("evolve: best %.6g -> %.6g", outcome.initial_best, outcome.final_best)
    return outcome


def _best_member(members, problem):
    fit = [problem(g) for g in members]
    return members[int(np.argmax(fit))]


def cmd_eval(cfg: ExperimentConfig) -> dict:
    """Accuracy of the best initial and best evolved genomes on the eval and test splits."""
    paths = prepare(cfg, "eval")
    digest = cfg.network.digest()
    initial = dio.load_population(_require(paths.population, "initial population"), digest)
    evolved = dio.load_population(_require(paths.evolved, "evolved population"), digest)
    splits = target_splits(cfg)
    prob = SnnProblem(cfg.network, splits.eval)
    result = {}
    for name, members in (("initial", initial), ("evolved", evolved)):
        best = _best_member(members, prob)
        for split in ("eval", "test"):
            ds = getattr(splits, split)
            result[(name, split)] = snn.accuracy(cfg.network, best, ds.images, ds.labels)
    lines = ["model\tsplit\taccuracy"]
    lines += [f"{m}\t{s}\t{100 * a:.2f}" for (m, s), a in result.items()]
    paths.eval.write_text("\n".join(lines) + "\n")
    return result


def cmd_corrupt(cfg: ExperimentConfig, model_path=None, base_path=None) -> rob.EvalReport:
    """Corruption errors and mCE of the evolved best against the best initial genome."""
    paths = prepare(cfg, "corrupt")
    digest = cfg.network.digest()
    splits = target_splits(cfg)
    prob = SnnProblem(cfg.network, splits.eval)
    if model_path is None:
        model = _best_member(dio.load_population(_require(paths.evolved, "evolved population"), digest), prob)
    else:
        model = dio.load_checkpoint(_require(Path(model_path), "model checkpoint"), digest)
    if base_path is None:
        base = _best_member(dio.load_population(_require(paths.population, "initial population"), digest), prob)
    else:
        base = dio.load_checkpoint(_require(Path(base_path), "base checkpoint"), digest)

    def scorer(genome):
        return lambda x: snn.network_forward(cfg.network, genome, x)

    base_fn = scorer(base)
    model_fn = base_fn if np.array_equal(model, base) else scorer(model)
    report = rob.evaluate_robustness(
        model_fn,
        base_fn,
        splits.test.images,
        splits.test.labels,
        seeds(cfg)[SEED_ROBUST],
        kinds=cfg.robustness.kinds,
    )
    paths.robustness_tsv.write_text(report.to_tsv())
    paths.robustness_json.write_text(report.to_json())
    return report


SWEEP_COLUMNS = ("F-init", "CR-init", "strategy", "t", "improvement", "accuracy")


def sweep_cells(cfg):
    s = cfg.sweep
    crs = s.cr_init or s.f_init
    cells = []
    for strategy in s.strategies:
        for f, cr in zip(s.f_init, crs):
            for period in s.update_period:
                cells.append((f, cr, strategy, period))
    return cells


def cmd_sweep(cfg: ExperimentConfig) -> list:
    """CADE over a grid of (F_init, CR_init, strategy, update period) from one initial population.

    ``improvement`` and ``accuracy`` are percentages on the fitness split.
    """
    paths = prepare(cfg, "sweep")
    digest = problem_digest(cfg)
    members = dio.load_population(_require(paths.population, "initial population"), digest)
    problem = problem_for(cfg)
    cells = sweep_cells(cfg)
    cell_seeds = spawn_seeds(seeds(cfg)[SEED_SWEEP], len(cells))
    rows = []
    for (f, cr, strategy, period), seed in zip(cells, cell_seeds):
        cell_cfg = cfg.with_overrides(
            evolve__algorithm="cade",
            evolve__f_init=f,
            evolve__cr_init=cr,
            evolve__strategy=strategy,
            evolve__update_period=period,
        )
        out = run_evolution(cell_cfg, members, problem, seed)
        rows.append(
            dict(
                f_init=f,
                cr_init=cr,
                strategy=strategy,
                t=period,
                improvement=100 * out.improvement,
                accuracy=100 * out.final_best,
                initial=100 * out.initial_best,
            )
        )
        log.info("sweep cell F=%g CR=%g S%s t=%d: %+.2f", f, cr, strategy, period, 100 * out.improvement)
    lines = ["\t".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r['f_init']:g}\t{r['cr_init']:g}\t{r['strategy']}\t{r['t']}\t"
            f"{r['improvement']:.2f}\t{r['accuracy']:.2f}"
        )
    paths.sweep.write_text("\n".join(lines) + "\n")
    return rows


def cmd_stats(checkpoint, bin_width=0.01, name="SNN") -> str:
    genome = dio.load_checkpoint(_require(Path(checkpoint), "checkpoint"))
    return snn.weight_stats(genome, bin_width).format_line(name)


def cmd_run(cfg: ExperimentConfig):
    """pretrain (transfer only) -> init -> evolve -> eval -> corrupt."""
    if cfg.evolve.problem == "snn" and cfg.init.strategy == "transfer":
        cmd_pretrain(cfg)
    cmd_init(cfg)
    outcome = cmd_evolve(cfg)
    if cfg.evolve.problem != "snn":
        return outcome, None, None
    accuracies = cmd_eval(cfg)
    report = cmd_corrupt(cfg) if cfg.robustness.enabled else None
    return outcome, accuracies, report
