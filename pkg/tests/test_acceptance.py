"""Acceptance gate: one test per criterion, each at its stated scale and tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""

import time

import numpy as np
import pytest
import torch
from conftest import ACCEPTANCE
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cade import data as dio
from cade import pipeline, snn
from cade import robustness as rob
from cade.adaptive import (
    SadeController,
    SadeState,
    ShadeController,
    ShadeMemory,
    lehmer_mean,
    sade_sample,
    sade_update,
    shade_sample,
    shade_update_memory,
)
from cade.benchfns import BenchProblem
from cade.config import ExperimentConfig
from cade.evolution import Budget, evolve, make_rng, random_population
from cade.schedules import ScheduleController, ScheduleState, Strategy, cosine_value, fixed_controller, sine_value
from cade.toydata import ToyConfig

pytestmark = pytest.mark.acceptance


def run_criterion(number, body):
    """Run ``body() -> (ok, detail)``, record the outcome and fail the test if needed."""
    start = time.perf_counter()
    try:
        ok, detail = body()
    except Exception as exc:
        ACCEPTANCE[number] = (False, f"raised {exc!r}")
        raise
    detail = f"{detail} [{time.perf_counter() - start:.1f}s]"
    ACCEPTANCE[number] = (ok, detail)
    assert ok, detail


def _controllers(horizon):
    out = {f"cade-S{s.value}": (lambda s=s: ScheduleController(ScheduleState.initial(0.5, 0.5, horizon, strategy=s)))
           for s in Strategy if s is not Strategy.FIXED}
    out["cade-fixed"] = lambda: ScheduleController(ScheduleState.initial(0.5, 0.5, horizon, strategy=Strategy.FIXED))
    out["de"] = lambda: fixed_controller(0.5, 0.5, horizon)
    out["sade"] = lambda: SadeController(5)
    out["shade"] = lambda: ShadeController(5)
    return out


def _sphere_run(make, seed, generations):
    prob = BenchProblem("sphere", 10)
    rng = make_rng(seed)
    pop = random_population(prob, 20, rng, *prob.domain)
    return evolve(pop, make(), prob, Budget(generations), rng)


# ---------------------------------------------------------------- 1

def test_criterion_1_schedule_exactness():
    def body():
        worst = 0.0
        for lo, hi in ((0.0, 1.0), (0.0, 1e-5), (0.1, 0.9), (-2.0, 3.0)):
            span = hi - lo
            for m in (2, 100, 500, 1000):
                pts = {0: (1.0, 0.5), m // 2: (0.5, 1.0), m: (0.0, 0.5)}
                for t, (c, s) in pts.items():
                    worst = max(worst, abs(cosine_value(lo, hi, t, m) - (lo + c * span)))
                    worst = max(worst, abs(sine_value(lo, hi, t, m) - (lo + s * span)))
        return worst <= 1e-12, f"max deviation {worst:.2e} (tol 1e-12)"

    run_criterion(1, body)


# ---------------------------------------------------------------- 2

def test_criterion_2_elitism():
    def body():
        bad = []
        runs = 0
        for name, make in _controllers(200).items():
            for seed in range(10):
                _, hist = _sphere_run(make, seed, 200)
                best = [r.best_fitness for r in hist]
                runs += 1
                if any(b < a for a, b in zip(best, best[1:])):
                    bad.append((name, seed))
        return not bad, f"{runs} runs, non-monotone: {bad or 'none'}"

    run_criterion(2, body)


# ---------------------------------------------------------------- 3

def test_criterion_3_optimizer_competence():
    def body():
        makers = _controllers(500)
        rates = {}
        for name in ("cade-S2", "de", "sade", "shade"):
            hits = 0
            for seed in range(20):
                final, _ = _sphere_run(makers[name], seed, 500)
                hits += int(-final.best_fitness < 1e-3)
            rates[name] = hits / 20
        ok = all(r >= 0.95 for r in rates.values())
        return ok, "success rate " + ", ".join(f"{k}={v:.2f}" for k, v in rates.items())

    run_criterion(3, body)


# ---------------------------------------------------------------- 4

def test_criterion_4_sew_identity():
    cases = []

    @settings(max_examples=1000, deadline=None, derandomize=True)
    @given(
        st.sampled_from(["ADD", "IAND"]),
        st.integers(1, 3),
        st.integers(1, 6),
        st.integers(2, 7),
        st.integers(0, 2**32 - 1),
    )
    def check(g, batch, channels, size, seed):
        rng = np.random.default_rng(seed)
        x = torch.from_numpy((rng.random((4, batch, channels, size, size)) < rng.random()).astype(np.float32))
        cfg = snn.SewBlockConfig(g, channels, channels, 1)
        w = {
            "conv1.w": torch.zeros(channels, channels, 3, 3),
            "conv1.b": torch.zeros(channels),
            "conv2.w": torch.zeros(channels, channels, 3, 3),
            "conv2.b": torch.zeros(channels),
        }
        with torch.no_grad():
            out = snn.sew_block_forward(cfg, w, x)
        cases.append(1)
        assert out.dtype == x.dtype and out.numpy().tobytes() == x.numpy().tobytes()

    def body():
        check()
        return len(cases) >= 1000, f"{len(cases)} cases, ADD/IAND outputs bit-identical to inputs over T=4"

    run_criterion(4, body)


# ---------------------------------------------------------------- 5

def test_criterion_5_spike_binarity():
    spec = snn.NetworkSpec()
    specs = {g: snn.NetworkSpec(g=g) for g in snn.G_FUNCTIONS}
    cases = []

    @settings(max_examples=1000, deadline=None, derandomize=True)
    @given(
        st.sampled_from(snn.G_FUNCTIONS),
        st.integers(0, 2**32 - 1),
        st.floats(0.1, 20.0),
        st.floats(0.0, 5.0),
        st.integers(1, 3),
    )
    def check(g, seed, gain, pixel_scale, batch):
        rng = np.random.default_rng(seed)
        s = specs[g]
        params = snn.init_params(s, rng, gain=gain)
        images = rng.random((batch, 1, s.image_size, s.image_size)).astype(np.float32) * pixel_scale
        trace = []
        with torch.no_grad():
            scores = snn.forward_scores(s, torch.from_numpy(params), torch.from_numpy(images), trace).numpy()
        cases.append(1)
        assert np.all(np.isfinite(scores)) and np.all((scores >= 0) & (scores <= 1))
        for t in trace:
            assert bool(((t == 0) | (t == 1)).all())
        # the public entry point agrees with the traced pass
        np.testing.assert_array_equal(snn.network_forward(s, params, images), scores)

    def body():
        check()
        return len(cases) >= 1000, f"{len(cases)} cases, rates in [0,1], every neuron output in {{0,1}}"

    assert spec.dim == specs["ADD"].dim
    run_criterion(5, body)


# ---------------------------------------------------------------- 6

SWEEP_GRID = (1e-5, 1e-2, 0.5)


def test_criterion_6_pipeline_improvement(tmp_path):
    def body():
        lines, strict, never_worse = [], 0, 0
        for seed in range(10):
            cfg = ExperimentConfig().with_overrides(
                run__seed=seed,
                run__out=str(tmp_path / f"seed{seed}"),
                init__strategy="transfer",
                init__population_size=5,
                sweep__strategies=("2",),
                sweep__f_init=SWEEP_GRID,
                sweep__cr_init=(),
            )
            pipeline.cmd_pretrain(cfg)
            pipeline.cmd_init(cfg)
            rows = pipeline.cmd_sweep(cfg)
            initial = rows[0]["initial"]
            best = max(r["accuracy"] for r in rows)
            never_worse += int(all(r["accuracy"] >= r["initial"] for r in rows))
            strict += int(best > initial)
            lines.append(f"s{seed}:{initial:.1f}->{best:.1f}")
        ok = never_worse == 10 and strict >= 7
        return ok, f"never worse {never_worse}/10, strictly better {strict}/10 ({' '.join(lines)})"

    run_criterion(6, body)


# ---------------------------------------------------------------- 7

def test_criterion_7_mce():
    def body():
        spec = snn.NetworkSpec()
        params = snn.init_params(spec, np.random.default_rng(0))
        ds = dio.make_toy_dataset(ToyConfig(classes=(1, 3, 5, 7, 9)), 200, np.random.default_rng(1))

        def score(x):
            return snn.network_forward(spec, params, x)

        report = rob.evaluate_robustness(score, score, ds.images, ds.labels, seed=0)
        self_mce = {k: report.mce(k) for k in rob.KINDS}
        exact = all(v == 100.0 for v in self_mce.values())
        hand = rob.mce([0.2, 0.3, 0.4, 0.5, 0.6], [0.25, 0.35, 0.45, 0.55, 0.65])
        hand_ok = abs(hand - 88.88888888888889) <= 1e-9
        return exact and hand_ok, f"self-mCE exactly 100 for all 8 kinds: {exact}; hand case {hand!r}"

    run_criterion(7, body)


# ---------------------------------------------------------------- 8

def test_criterion_8_corruption_identity_and_monotonicity():
    def body():
        probe = np.random.default_rng(0).random((16, 1, 12, 12)).astype(np.float32)
        identity = all(
            rob.apply_corruption(probe, k, rob.IDENTITY_MAGNITUDE[k], np.random.default_rng(1)).tobytes()
            == probe.tobytes()
            for k in rob.KINDS
        )
        # base model: a surrogate-trained network on the default target training split
        cfg = ExperimentConfig()
        splits = pipeline.target_splits(cfg)
        base = snn.surrogate_backward_train(
            cfg.network,
            splits.train.images,
            splits.train.labels,
            snn.TrainConfig(epochs=12),
            np.random.default_rng(0),
        ).params
        test = dio.make_toy_dataset(ToyConfig(classes=cfg.data.target_classes), 1000, np.random.default_rng(123))

        def score(x):
            return snn.network_forward(cfg.network, base, x)

        report = rob.evaluate_robustness(score, score, test.images, test.labels, seed=7)
        bad = [k for k in rob.KINDS if any(b < a for a, b in zip(report.base_errors[k], report.base_errors[k][1:]))]
        detail = "; ".join(
            f"{k.split('_')[0]} " + "/".join(f"{100 * e:.0f}" for e in report.base_errors[k]) for k in rob.KINDS
        )
        return identity and not bad, f"identity {identity}, non-monotone {bad or 'none'} ({detail})"

    run_criterion(8, body)


# ---------------------------------------------------------------- 9

DETERMINISTIC_FILES = (
    "pretrain.ckpt",
    "population.pop",
    "history.tsv",
    "evolved.pop",
    "best.ckpt",
    "summary.tsv",
    "eval.tsv",
    "robustness.tsv",
    "robustness.json",
)


def test_criterion_9_determinism(tmp_path):
    def body():
        dirs = []
        for workers in (1, 4):
            out = tmp_path / f"w{workers}"
            cfg = ExperimentConfig().with_overrides(run__seed=3, run__out=str(out), run__workers=workers)
            pipeline.cmd_run(cfg)
            dirs.append(out)
        differing = [f for f in DETERMINISTIC_FILES if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes()]
        return not differing, f"workers 1 vs 4, {len(DETERMINISTIC_FILES)} artifacts, differing: {differing or 'none'}"

    run_criterion(9, body)


# ---------------------------------------------------------------- 10

class _Replay:
    def __init__(self, integers=(), cauchy=(), normal=()):
        self._i, self._c, self._n = list(integers), list(cauchy), list(normal)

    def integers(self, *a, **k):
        return self._i.pop(0)

    def standard_cauchy(self, *a, **k):
        return self._c.pop(0)

    def normal(self, *a, **k):
        return self._n.pop(0)


def test_criterion_10_adaptive_machinery():
    def body():
        checks = {}
        checks["lehmer 0.68"] = abs(lehmer_mean([0.2, 0.8], [1, 1]) - 0.68) <= 1e-12
        mem = shade_update_memory(ShadeMemory.initial(), [0.2, 0.8], [0.5, 0.5], [1.0, 1.0])
        checks["memory write 0.68"] = abs(mem.M_F[0] - 0.68) <= 1e-12 and mem.write_index == 1
        checks["F upper clip"] = shade_sample(ShadeMemory.initial(), _Replay([0], [(1.3 - 0.5) / 0.1], [0.5]))[0] == 1.0
        checks["CR lower clip"] = shade_sample(ShadeMemory.initial(), _Replay([0], [0.0], [-0.2]))[1] == 0.0
        f = shade_sample(ShadeMemory((0.9,), (0.5,)), _Replay([0], [-10.0, -2.0], [0.5]))[0]
        checks["F redraw"] = abs(f - 0.7) <= 1e-12
        init = ShadeMemory.initial()
        checks["shade no-success no-op"] = shade_update_memory(init, [], [], []) == init
        ctl = ShadeController()
        for _ in range(10):
            ctl.observe(np.zeros(4, bool), np.full(4, 0.3), np.full(4, 0.9), np.zeros(4), None)
        checks["shade memory stays initial"] = ctl.memory == init
        s = SadeState()
        for _ in range(12):
            s = sade_update(s, [], 20)
        checks["sade CRm stays 0.5"] = s.CRm == 0.5
        s = SadeState(learning_period=1)
        checks["sade mean"] = abs(sade_update(s, [0.2, 0.4], 0).CRm - 0.3) <= 1e-12
        checks["sade F redraw"] = sade_sample(SadeState(), _Replay(normal=[-0.1, 0.6, 0.5]))[0] == 0.6
        failed = [k for k, v in checks.items() if not v]
        return not failed, f"{len(checks)} checks, failed: {failed or 'none'}"

    run_criterion(10, body)
