"""Experiment configuration: an INI document with one section per pipeline stage."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .snn import NetworkSpec

ALGORITHMS = ("cade", "de", "sade", "shade")
STRATEGIES = ("1", "2", "3", "4", "fixed")
WAVES = ("cos", "sin")
PROBLEMS = ("snn", "sphere", "rastrigin", "rosenbrock")
INIT_KINDS = ("time_ratio", "partition", "transfer", "last_epochs")


def _floats(text):
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _strs(text):
    return tuple(v for v in str(text).replace(" ", "").split(",") if v)


@dataclass
class RunSection:
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1


@dataclass
class DataSection:
    image_size: int = 12
    noise: float = 0.15
    source_classes: tuple = (0, 2, 4, 6, 8)
    target_classes: tuple = (1, 3, 5, 7, 9)
    n_source: int = 600
    n_train: int = 500
    n_eval: int = 200
    n_test: int = 300


@dataclass
class PretrainSection:
    source_epochs: int = 12
    finetune_epochs: int = 4
    lr: float = 1.0
    momentum: float = 0.9
    batch_size: int = 16
    lr_step: int = 0
    lr_gamma: float = 0.5
    label_smoothing: float = 0.0
    mixup_alpha: float = 0.0


@dataclass
class InitSection:
    strategy: str = "transfer"
    population_size: int = 5
    ratios: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    parts: int = 0  # 0 = population size


@dataclass
class EvolveSection:
    problem: str = "snn"
    dim: int = 10  # benchmark problems only
    algorithm: str = "cade"
    strategy: str = "2"
    f_init: float = 0.5
    cr_init: float = 0.5
    f_min: float = 0.0
    cr_min: float = 0.0
    wave_f: str = "cos"
    wave_cr: str = "cos"
    update_period: int = 1
    max_iterations: int = 0  # 0 = generations
    generations: int = 20
    target_fitness: float = float("inf")  # inf disables the convergence stop
    shade_memory: int = 5
    sade_learning_period: int = 5
    de_f: float = 0.5
    de_cr: float = 0.5
    bench_population: int = 20


@dataclass
class RobustnessSection:
    enabled: bool = True
    kinds: tuple = (
        "gaussian_noise",
        "shot_noise",
        "impulse_noise",
        "defocus_blur",
        "motion_blur",
        "brightness",
        "contrast",
        "pixelate",
    )


@dataclass
class SweepSection:
    strategies: tuple = ("2", "3")
    f_init: tuple = (1e-5, 1e-2, 0.5)
    cr_init: tuple = ()  # empty = pair each F value with the same CR value
    update_period: tuple = (1,)


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    init: InitSection = field(default_factory=InitSection)
    evolve: EvolveSection = field(default_factory=EvolveSection)
    robustness: RobustnessSection = field(default_factory=RobustnessSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    SECTIONS = ("run", "data", "network", "pretrain", "init", "evolve", "robustness", "sweep")

    def validate(self):
        e = self.evolve
        if e.algorithm not in ALGORITHMS:
            raise ConfigError(f"must be one of {ALGORITHMS}", "evolve.algorithm")
        if e.strategy not in STRATEGIES:
            raise ConfigError(f"must be one of {STRATEGIES}", "evolve.strategy")
        if e.wave_f not in WAVES:
            raise ConfigError(f"must be one of {WAVES}", "evolve.wave_f")
        if e.wave_cr not in WAVES:
            raise ConfigError(f"must be one of {WAVES}", "evolve.wave_cr")
        if e.problem not in PROBLEMS:
            raise ConfigError(f"must be one of {PROBLEMS}", "evolve.problem")
        if e.generations < 0:
            raise ConfigError("must be >= 0", "evolve.generations")
        if e.max_iterations and e.max_iterations < e.generations:
            raise ConfigError("must be >= evolve.generations", "evolve.max_iterations")
        if e.f_min > e.f_init:
            raise ConfigError("must not exceed evolve.f_init", "evolve.f_min")
        if e.cr_min > e.cr_init:
            raise ConfigError("must not exceed evolve.cr_init", "evolve.cr_min")
        if self.init.strategy not in INIT_KINDS:
            raise ConfigError(f"must be one of {INIT_KINDS}", "init.strategy")
        if self.init.population_size < 1:
            raise ConfigError("must be >= 1", "init.population_size")
        if self.run.workers < 1:
            raise ConfigError("must be >= 1", "run.workers")
        if self.network.image_size != self.data.image_size:
            raise ConfigError("must equal data.image_size", "network.image_size")
        if self.network.num_classes != len(self.data.target_classes):
            raise ConfigError("must equal the number of target classes", "network.num_classes")
        for s in self.sweep.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"{s!r} is not one of {STRATEGIES}", "sweep.strategies")
        if self.sweep.cr_init and len(self.sweep.cr_init) != len(self.sweep.f_init):
            raise ConfigError("must be empty or match sweep.f_init in length", "sweep.cr_init")
        return self

    # ---------------------------------------------------------------- text IO

    def to_ini(self) -> str:
        lines = []
        for name in self.SECTIONS:
            lines.append(f"[{name}]")
            if name == "network":
                lines.extend(self.network.to_text().splitlines())
            else:
                section = getattr(self, name)
                for f in fields(section):
                    lines.append(f"{f.name} = {_format(getattr(section, f.name))}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unparseable config: {exc}") from exc
        cfg = cls()
        for name in parser.sections():
            if name not in cls.SECTIONS:
                raise ConfigError("unknown section", name)
        data = cfg.data
        if parser.has_section("data"):
            data = _load_section(DataSection, parser["data"], "data")
        net = dict(parser["network"]) if parser.has_section("network") else {}
        # the network inherits image size and class count from the data section
        net.setdefault("image_size", str(data.image_size))
        net.setdefault("num_classes", str(len(data.target_classes)))
        try:
            network = NetworkSpec.from_mapping(net)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), "network") from exc
        kwargs = {"data": data, "network": network}
        for name, typ in (
            ("run", RunSection),
            ("pretrain", PretrainSection),
            ("init", InitSection),
            ("evolve", EvolveSection),
            ("robustness", RobustnessSection),
            ("sweep", SweepSection),
        ):
            if parser.has_section(name):
                kwargs[name] = _load_section(typ, parser[name], name)
        return dataclasses.replace(cfg, **kwargs).validate()

    def with_overrides(self, **updates):
        """``section__field=value`` keyword overrides, e.g. ``evolve__f_init=1e-5``."""
        cfg = self
        for key, value in updates.items():
            section, _, name = key.partition("__")
            sec = getattr(cfg, section)
            if name not in {f.name for f in fields(sec)}:
                raise ConfigError("unknown field", f"{section}.{name}")
            cfg = dataclasses.replace(cfg, **{section: dataclasses.replace(sec, **{name: value})})
        if "data__image_size" in updates or "data__target_classes" in updates:
            cfg = dataclasses.replace(
                cfg,
                network=dataclasses.replace(
                    cfg.network,
                    image_size=cfg.data.image_size,
                    num_classes=len(cfg.data.target_classes),
                ),
            )
        return cfg.validate()


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _load_section(typ, section, name):
    defaults = typ()
    known = {f.name: f for f in fields(typ)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError("unknown field", f"{name}.{key}")
        default = getattr(defaults, key)
        try:
            if isinstance(default, bool):
                kwargs[key] = section.getboolean(key)
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            elif isinstance(default, tuple):
                kwargs[key] = _parse_tuple(key, default, raw)
            else:
                kwargs[key] = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"bad value {raw!r}: {exc}", f"{name}.{key}") from exc
    return typ(**kwargs)


def _parse_tuple(key, default, raw):
    if key in ("source_classes", "target_classes", "update_period"):
        return _ints(raw)
    if key in ("ratios", "f_init", "cr_init"):
        return _floats(raw)
    return _strs(raw)


REFERENCE_NOTES = {
    "run.seed": "master seed; every random stream is derived from it",
    "run.out": "run directory for all outputs",
    "run.workers": "threads evaluating fitness in parallel (results do not depend on it)",
    "data.noise": "std of per-pixel Gaussian noise in rendered toy images",
    "data.source_classes": "shape indices of the transfer-source dataset",
    "data.target_classes": "shape indices of the fine-tuning target dataset",
    "data.n_eval": "held-out samples; fitness = top-1 accuracy on this split",
    "network.stages": "SEW stages as out_channels x stride",
    "network.g": "element-wise connecting function: ADD, AND or IAND",
    "pretrain.source_epochs": "surrogate-gradient epochs on the source dataset (transfer only)",
    "pretrain.finetune_epochs": "base fine-tuning budget per population member",
    "pretrain.lr_step": "step-decay period in epochs; 0 keeps the rate constant",
    "init.strategy": "time_ratio | partition | transfer | last_epochs",
    "init.ratios": "time_ratio epoch fractions of pretrain.finetune_epochs",
    "evolve.problem": "snn or a benchmark function (sphere, rastrigin, rosenbrock)",
    "evolve.algorithm": "cade | de | sade | shade",
    "evolve.strategy": "CADE update strategy: 1, 2, 3, 4 or fixed",
    "evolve.f_min": "lower bound of the F schedule (F_max = f_init)",
    "evolve.cr_min": "lower bound of the CR schedule (CR_max = cr_init)",
    "evolve.update_period": "recompute wave values every this many generations",
    "evolve.max_iterations": "schedule horizon; 0 uses evolve.generations",
    "evolve.de_f": "mutation factor of plain DE",
    "evolve.de_cr": "crossover rate of plain DE",
    "evolve.bench_population": "population size for benchmark problems",
    "sweep.f_init": "F_init values of the hyperparameter table",
    "sweep.cr_init": "CR_init values, paired with sweep.f_init; empty = same as F",
}


def reference_text() -> str:
    """Default config with a comment for each documented field."""
    out = []
    for line in ExperimentConfig().to_ini().splitlines():
        if line.startswith("["):
            section = line[1:-1]
        elif "=" in line:
            key = line.split("=")[0].strip()
            note = REFERENCE_NOTES.get(f"{section}.{key}")
            if note:
                out.append(f"# {note}")
        out.append(line)
    return "\n".join(out) + "\n"
