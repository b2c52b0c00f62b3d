import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cade.errors import ConfigError, DomainError
from cade.schedules import (
    ScheduleController,
    ScheduleState,
    Strategy,
    Wave,
    cosine_value,
    fixed_controller,
    sine_value,
    update,
)


def cosine_oracle(lo, hi, t, m):
    # half-angle form: (1 + cos x) / 2 == cos^2(x / 2)
    return lo + (hi - lo) * math.cos(math.pi * t / (2 * m)) ** 2


def sine_oracle(lo, hi, t, m):
    # 1 + sin x == (sin(x/2) + cos(x/2))^2
    x = math.pi * t / (2 * m)
    return lo + (hi - lo) * (math.sin(x) + math.cos(x)) ** 2 / 2


@pytest.mark.parametrize("t, want", [(0, 1.0), (100, 0.0), (50, 0.5)])
def test_cosine_examples(t, want):
    assert cosine_value(0.0, 1.0, t, 100) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("t, want", [(0, 0.5), (50, 1.0), (100, 0.5)])
def test_sine_examples(t, want):
    assert sine_value(0.0, 1.0, t, 100) == pytest.approx(want, abs=1e-12)


@given(
    st.floats(-10, 10),
    st.floats(0, 10),
    st.integers(1, 10_000),
    st.floats(0, 1),
)
def test_waves_match_half_angle_forms(lo, span, m, frac):
    hi = lo + span
    t = int(frac * m)
    assert cosine_value(lo, hi, t, m) == pytest.approx(cosine_oracle(lo, hi, t, m), abs=1e-9)
    assert sine_value(lo, hi, t, m) == pytest.approx(sine_oracle(lo, hi, t, m), abs=1e-9)
    assert lo - 1e-12 <= cosine_value(lo, hi, t, m) <= hi + 1e-12
    assert lo - 1e-12 <= sine_value(lo, hi, t, m) <= hi + 1e-12


@pytest.mark.parametrize(
    "args",
    [(0, 1, -1, 10), (0, 1, 11, 10), (1, 0, 5, 10), (0, 1, 0, 0)],
)
def test_wave_domain_errors(args):
    with pytest.raises(DomainError):
        cosine_value(*args)
    with pytest.raises(DomainError):
        sine_value(*args)


def test_initial_state_sits_at_the_upper_bound():
    s = ScheduleState.initial(0.7, 0.3, 10)
    assert (s.F, s.CR, s.F_max, s.CR_max, s.F_min, s.CR_min, s.t) == (0.7, 0.3, 0.7, 0.3, 0.0, 0.0, 0)


def test_s2_midpoint_example():
    s = ScheduleState.initial(1e-5, 1e-5, 100, strategy=Strategy.S2)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = update(s, False, rng)
    assert s.t == 50
    assert s.F == pytest.approx(5e-6, rel=1e-12)
    assert s.CR == pytest.approx(5e-6, rel=1e-12)


def test_s1_improved_keeps_values():
    s = ScheduleState.initial(0.5, 0.5, 10, strategy=Strategy.S1)
    s = update(s, False, None)  # move off the start value first
    after = update(s, True, None)
    assert (after.F, after.CR) == (s.F, s.CR)
    assert after.t == s.t + 1


def test_s1_without_improvement_follows_wave():
    s = ScheduleState.initial(0.5, 0.5, 10, strategy=Strategy.S1)
    s = update(s, False, None)
    assert s.F == pytest.approx(cosine_value(0, 0.5, 1, 10))


def test_s3_replayed_draw_at_horizon(scripted):
    s = ScheduleState(0.0, 1.0, 0.0, 1.0, 1.0, 1.0, t=9, max_iterations=10, strategy=Strategy.S3)
    out = update(s, False, scripted(uniform=[0.37, 0.2]))
    assert out.t == 10
    assert out.F == pytest.approx(0.37, abs=1e-15)
    assert out.CR == pytest.approx(0.2, abs=1e-15)


def test_s4_gated_like_s1(scripted):
    s = ScheduleState.initial(1.0, 1.0, 10, strategy=Strategy.S4)
    # gate closed: no draws consumed
    kept = update(s, True, scripted())
    assert (kept.F, kept.CR) == (1.0, 1.0)
    moved = update(s, False, scripted(uniform=[0.1, 0.2]))
    assert moved.F == pytest.approx(cosine_value(0, 1, 1, 10) + 0.1)


def test_s3_may_exceed_upper_bound():
    s = ScheduleState.initial(1.0, 1.0, 100, strategy=Strategy.S3)
    rng = np.random.default_rng(0)
    values = []
    for _ in range(20):
        s = update(s, False, rng)
        values.append(s.F)
    assert max(values) > 1.0


def test_update_period_holds_values_between_updates():
    s = ScheduleState.initial(0.5, 0.5, 12, update_period=3)
    seen = []
    for _ in range(12):
        s = update(s, False, None)
        seen.append(s.F)
    assert seen[0] == seen[1] == 0.5
    assert seen[2] == pytest.approx(cosine_value(0, 0.5, 3, 12))
    assert seen[3] == seen[4] == seen[2]


def test_fixed_never_moves():
    s = ScheduleState.initial(0.4, 0.6, 3, strategy=Strategy.FIXED)
    for _ in range(10):
        s = update(s, False, None)
    assert (s.F, s.CR) == (0.4, 0.6)


def test_past_horizon_is_an_error():
    s = ScheduleState.initial(0.5, 0.5, 2)
    s = update(update(s, False, None), False, None)
    with pytest.raises(DomainError):
        update(s, False, None)


def test_invalid_states_name_the_field():
    with pytest.raises(ConfigError, match="f_min"):
        ScheduleState.initial(0.1, 0.5, 10, F_min=0.2)
    with pytest.raises(ConfigError, match="update_period"):
        ScheduleState.initial(0.1, 0.5, 10, update_period=0)


@given(st.floats(1e-6, 2), st.floats(1e-6, 1), st.integers(2, 300))
def test_s2_cos_is_non_increasing(f0, cr0, horizon):
    s = ScheduleState.initial(f0, cr0, horizon, strategy=Strategy.S2)
    fs, crs = [s.F], [s.CR]
    for _ in range(horizon):
        s = update(s, False, None)
        fs.append(s.F)
        crs.append(s.CR)
    assert all(b <= a + 1e-15 for a, b in zip(fs, fs[1:]))
    assert all(b <= a + 1e-15 for a, b in zip(crs, crs[1:]))
    assert fs[-1] == pytest.approx(0.0, abs=1e-12)


def test_controller_gates_on_any_success():
    ctl = ScheduleController(ScheduleState.initial(0.5, 0.5, 10, strategy=Strategy.S1))
    F, CR = ctl.sample(4, None)
    assert np.all(F == 0.5) and np.all(CR == 0.5)
    ctl.observe(np.array([False, True, False, False]), F, CR, None, None)
    assert ctl.current() == (0.5, 0.5)
    ctl.observe(np.zeros(4, bool), F, CR, None, None)
    assert ctl.current()[0] < 0.5


def test_fixed_controller_is_plain_de():
    ctl = fixed_controller(0.3, 0.8)
    for _ in range(5):
        ctl.observe(np.zeros(4, bool), None, None, None, None)
    assert ctl.current() == (0.3, 0.8)


@given(
    st.sampled_from([Strategy.S1, Strategy.S2, Strategy.S3, Strategy.S4]),
    st.floats(1e-6, 2),
    st.floats(1e-6, 1),
    st.sampled_from(list(Wave)),
    st.integers(1, 5),
    st.lists(st.booleans(), min_size=1, max_size=80),
    st.integers(0, 2**31),
)
def test_bounds_hold(strategy, f0, cr0, wave, period, improved, seed):
    s = ScheduleState.initial(f0, cr0, len(improved), strategy=strategy, wave_F=wave, wave_CR=wave, update_period=period)
    rng = np.random.default_rng(seed)
    stochastic = strategy in (Strategy.S3, Strategy.S4)
    for flag in improved:
        s = update(s, flag, rng)
        top_f = 2 * s.F_max if stochastic else s.F_max
        top_cr = 2 * s.CR_max if stochastic else s.CR_max
        assert s.F_min <= s.F <= top_f + 1e-12
        assert s.CR_min <= s.CR <= top_cr + 1e-12
