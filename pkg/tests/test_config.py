import pytest

from cade.config import ExperimentConfig, reference_text
from cade.errors import ConfigError


def test_default_round_trip():
    cfg = ExperimentConfig().validate()
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg


def test_modified_round_trip():
    cfg = ExperimentConfig().with_overrides(
        evolve__strategy="3",
        evolve__wave_f="sin",
        evolve__f_init=1e-5,
        sweep__f_init=(1e-5, 0.25),
        data__target_classes=(0, 1, 2),
        robustness__enabled=False,
    )
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.network.num_classes == 3


def test_partial_file_uses_defaults():
    cfg = ExperimentConfig.from_ini("[evolve]\ngenerations = 7\n[network]\ng = IAND\n")
    assert cfg.evolve.generations == 7
    assert cfg.network.g == "IAND"
    assert cfg.run == ExperimentConfig().run


@pytest.mark.parametrize(
    "text, field",
    [
        ("[evolve]\nstrategy = 7\n", "evolve.strategy"),
        ("[evolve]\nalgorithm = jade\n", "evolve.algorithm"),
        ("[evolve]\nwave_cr = tan\n", "evolve.wave_cr"),
        ("[evolve]\ngenerations = many\n", "evolve.generations"),
        ("[evolve]\nbogus = 1\n", "evolve.bogus"),
        ("[run]\nworkers = 0\n", "run.workers"),
        ("[init]\nstrategy = random\n", "init.strategy"),
        ("[evolve]\nf_init = 0.1\nf_min = 0.2\n", "evolve.f_min"),
        ("[nowhere]\nx = 1\n", "nowhere"),
    ],
)
def test_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_ini(text)
    assert info.value.field == field


def test_network_must_match_data():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_ini("[network]\nnum_classes = 3\n")
    assert info.value.field == "network.num_classes"


def test_override_unknown_field():
    with pytest.raises(ConfigError):
        ExperimentConfig().with_overrides(evolve__nope=1)


def test_reference_covers_every_section():
    text = reference_text()
    for section in ExperimentConfig.SECTIONS:
        assert f"[{section}]" in text
    assert "# " in text
    # the reference is itself a loadable config equal to the defaults
    assert ExperimentConfig.from_ini(text) == ExperimentConfig().validate()
