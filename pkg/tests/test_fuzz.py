from mutants import LatestWins, PostByAnyone
from transactive.contract import Operation
from transactive.fuzz import (
    Counterexample,
    FuzzConfig,
    check_sequence,
    generate_sequence,
    load_reproducer,
    run_fuzz,
    shrink,
)


def test_generation_is_deterministic():
    a, ma = generate_sequence(5, 3)
    b, mb = generate_sequence(5, 3)
    assert a == b and ma == mb
    assert generate_sequence(5, 4)[0] != a


def test_zero_iterations():
    stats, cx = run_fuzz(FuzzConfig(seed=1, iterations=0))
    assert cx is None and stats.sequences == 0
    assert any("sequences" in line for line in stats.lines())


def test_stats_are_reproducible():
    a, _ = run_fuzz(FuzzConfig(seed=2, iterations=30))
    b, _ = run_fuzz(FuzzConfig(seed=2, iterations=30))
    assert a.lines() == b.lines()


def test_assignment_mode_exercises_every_rejection_path():
    stats, cx = run_fuzz(FuzzConfig(seed=3, iterations=300, only_assignments=True, check_progress=False))
    assert cx is None
    assert stats.accepted_assignments > 50
    for code in ("CapacityExceeded", "PriceBelowProviderReservation", "PriceAboveConsumerReservation",
                 "WrongSide", "PriceOutOfBounds", "PairNotAllowed", "SystemLimitExceeded", "OfferNotPosted",
                 "NotCreator", "UnknownSolution", "TypeNotOffered", "BadQuantity"):
        assert stats.rejected[code] > 0, code


def test_shrink_keeps_failure_and_is_small():
    ops = [Operation("noop", i, i) for i in range(50)]
    fails = lambda trial: any(o.caller == 17 for o in trial) and any(o.caller == 33 for o in trial)
    small = shrink(ops, fails)
    assert [o.caller for o in small] == [17, 33]


def test_counterexample_round_trip(tmp_path):
    stats, cx = run_fuzz(FuzzConfig(seed=0, iterations=100), LatestWins)
    assert cx is not None
    path = cx.write(tmp_path / "cx.json")
    loaded = load_reproducer(path)
    assert isinstance(loaded, Counterexample)
    assert loaded.ops == cx.ops and loaded.message == cx.message
    assert check_sequence(loaded.ops, LatestWins).failure == cx.message
    # the correct contract handles the same sequence
    assert check_sequence(loaded.ops).failure is None


def test_counterexample_is_minimized():
    _, raw = run_fuzz(FuzzConfig(seed=0, iterations=50), PostByAnyone, minimize=False)
    _, small = run_fuzz(FuzzConfig(seed=0, iterations=50), PostByAnyone)
    assert raw.iteration == small.iteration
    assert len(small.ops) <= len(raw.ops)
    # removing any single op makes the failure disappear
    for i in range(len(small.ops)):
        assert check_sequence(small.ops[:i] + small.ops[i + 1:], PostByAnyone).failure is None
