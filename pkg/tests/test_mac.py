import numpy as np
import pytest
from hypothesis import given, strategies as st

from mprsim.mac import (
    AccessCategoryConfig,
    BackoffConfig,
    CountdownMode,
    Phase,
    StationState,
    decrement_amount,
    default_ac_table,
    draw_backoff,
    on_transmission_result,
    slot_is_idle,
    start_transmission,
    step_station,
    with_cw_min,
)

ADA, FIX = CountdownMode.ADAPTIVE, CountdownMode.FIXED_ONE
CHI2_99_DF16 = 32.000  # 1% critical value, 16 degrees of freedom


def _station(threshold=7, mode=ADA, backoff=None, aifs=3, seed=0):
    ac = AccessCategoryConfig(0, threshold, mode, backoff or BackoffConfig())
    return StationState(0, ac, np.random.default_rng(seed), aifs_slots=aifs)


def _backing_off(counter, idle_run, **kw):
    st = _station(**kw)
    st.enqueue(0)
    st.phase = Phase.BACKOFF
    st.counter = counter
    st.idle_run = idle_run
    return st


@pytest.mark.parametrize("mode,K,kt,L,want", [
    (ADA, 8, 7, 3, 5),
    (ADA, 8, 7, 8, 0),
    (ADA, 8, 7, 0, 8),
    (FIX, 8, 1, 2, 0),
    (FIX, 8, 1, 1, 1),
])
def test_decrement_examples(mode, K, kt, L, want):
    assert decrement_amount(mode, K, kt, L) == want


def test_decrement_rejects_threshold_at_k():
    with pytest.raises(ValueError, match="threshold must be < K"):
        decrement_amount(ADA, 8, 8, 0)


def test_dcf_reduction_of_decrement():
    for L in range(5):
        assert decrement_amount(ADA, 1, 0, L) == decrement_amount(FIX, 1, 0, L) == (1 if L == 0 else 0)


@given(st.integers(2, 16).flatmap(lambda K: st.tuples(st.just(K), st.integers(0, K - 1), st.integers(0, K - 1))))
def test_adaptive_dominates_fixed(args):
    K, kt, L = args
    if L <= kt:
        assert decrement_amount(ADA, K, kt, L) >= decrement_amount(FIX, K, kt, L) == 1


def test_slot_is_idle():
    assert slot_is_idle(2, 2)
    assert not slot_is_idle(3, 2)
    assert all(slot_is_idle(0, kt) for kt in range(5))


def test_draw_backoff_bounds():
    rng = np.random.default_rng(3)
    assert {draw_backoff(rng, 1) for _ in range(200)} == {0, 1}
    assert {draw_backoff(rng, 4, inclusive=False) for _ in range(300)} == {0, 1, 2, 3}
    with pytest.raises(ValueError):
        draw_backoff(rng, 0)


def test_draw_backoff_deterministic():
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [draw_backoff(r1, 16) for _ in range(50)] == [draw_backoff(r2, 16) for _ in range(50)]


def test_draw_backoff_consumes_one_draw():
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    draw_backoff(a, 16)
    b.integers(0, 17)
    assert a.integers(0, 1 << 30) == b.integers(0, 1 << 30)


def test_draw_backoff_uniform_chi_square():
    rng = np.random.default_rng(2024)
    n = 100_000
    counts = np.bincount([draw_backoff(rng, 16) for _ in range(n)], minlength=17)
    assert counts.size == 17
    expected = n / 17
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < CHI2_99_DF16


def test_step_adaptive_goes_negative_and_transmits():
    st = _backing_off(5, idle_run=4)  # AIFS (3 slots) already behind us
    assert step_station(st, 0, 8) is True
    assert st.counter == -3


def test_step_frozen_above_threshold():
    st = _backing_off(5, idle_run=4)
    assert step_station(st, 8, 8) is False
    assert st.counter == 5
    assert st.idle_run == 0


def test_step_counter_zero_transmits_once_aifs_done():
    st = _backing_off(0, idle_run=3)
    assert step_station(st, 0, 8) is True
    assert st.counter == 0


def test_step_negative_counter_holds_until_aifs():
    st = _backing_off(-2, idle_run=0)
    for _ in range(3):
        assert step_station(st, 0, 8) is False
        assert st.counter == -2
    assert step_station(st, 0, 8) is True


def test_gap_equals_aifs_plus_counter():
    # counter b costs b idle slots on top of the 3-slot AIFS
    for b in range(6):
        st = _backing_off(b, idle_run=0, mode=FIX, threshold=1)
        slots = 0
        while not step_station(st, 0, 8):
            slots += 1
        assert slots == 3 + b


def test_immediate_access_when_medium_idle_long_enough():
    st = _station()
    st.idle_run = 3
    st.enqueue(10)
    assert step_station(st, 0, 8) is True
    assert st.stage == 0


def test_new_packet_draws_backoff_when_aifs_not_met():
    st = _station(backoff=BackoffConfig(cw_min=16))
    st.enqueue(0)
    assert step_station(st, 0, 8) is False
    assert st.phase is Phase.BACKOFF
    assert 0 <= st.counter <= 16


def test_backoff_without_packet_returns_to_idle():
    st = _station()
    st.phase = Phase.BACKOFF
    st.counter = 0
    st.idle_run = 3
    assert step_station(st, 0, 8) is False
    assert st.phase is Phase.IDLE


def test_step_rejects_transmitting_station():
    st = _backing_off(0, idle_run=5)
    start_transmission(st)
    with pytest.raises(RuntimeError):
        step_station(st, 0, 8)


def test_window_ladder():
    b = BackoffConfig(cw_min=16, max_backoff_stage=5, retry_limit=20)
    st = _station(backoff=b)
    st.enqueue(0)
    windows = [b.window(st.stage)]
    for _ in range(8):
        start_transmission(st)
        assert on_transmission_result(st, False, 1) is None
        windows.append(b.window(st.stage))
        assert 0 <= st.counter <= windows[-1]
    assert windows == [16, 32, 64, 128, 256, 512, 512, 512, 512]
    assert b.cw_max == 512


def test_fifth_failure_drops_and_resets():
    st = _station(backoff=BackoffConfig(retry_limit=4))
    st.enqueue(7)
    for i in range(4):
        start_transmission(st)
        assert on_transmission_result(st, False, 10 + i) is None
        assert st.retries == i + 1
    start_transmission(st)
    out = on_transmission_result(st, False, 20)
    assert out == ("dropped", 7, 7)
    assert (st.stage, st.retries) == (0, 0)
    assert not st.has_packet


def test_success_keeps_stage_zero_and_dequeues():
    st = _station()
    st.enqueue(1, 2)
    start_transmission(st)
    assert on_transmission_result(st, True, 50) == ("delivered", 1, 1)
    assert st.stage == 0
    assert st.hol_arrival == 1 and st.hol_since == 50
    assert st.phase is Phase.BACKOFF and 0 <= st.counter <= 16


def test_result_requires_transmitting():
    st = _station()
    with pytest.raises(RuntimeError):
        on_transmission_result(st, True, 0)


def test_queue_capacity_losses():
    st = _station()
    st.queue_capacity = 2
    assert st.enqueue(0, 5) == 2
    assert st.backlog() == 3


@pytest.mark.parametrize("K,want", [(8, (7, 4, 2, 1)), (4, (3, 2, 1, 1)), (2, (1, 1, 1, 1))])
def test_default_table(K, want):
    table = default_ac_table(K)
    assert tuple(ac.threshold for ac in table) == want
    assert [ac.countdown_mode for ac in table] == [ADA, ADA, FIX, FIX]
    assert [ac.ac_id for ac in table] == [0, 1, 2, 3]


def test_default_table_rejects_k1():
    with pytest.raises(ValueError):
        default_ac_table(1)


def test_config_validation():
    with pytest.raises(ValueError):
        BackoffConfig(cw_min=0)
    with pytest.raises(ValueError):
        BackoffConfig(retry_limit=-1)
    with pytest.raises(ValueError):
        AccessCategoryConfig(4, 1, ADA)
    with pytest.raises(ValueError, match="threshold must be < K"):
        AccessCategoryConfig(0, 8, ADA).check_against(8)


def test_with_cw_min():
    ac = with_cw_min(AccessCategoryConfig(1, 2, FIX), 64)
    assert ac.backoff.cw_min == 64 and ac.threshold == 2
