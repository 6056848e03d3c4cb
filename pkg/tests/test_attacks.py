"""
Tests for the attack library and the mission control laws it hijacks.

Author: Dr. Sofia Lindqvist
Date: 2024-03-08
"""

import math

import numpy as np
import pytest

from src.certification.reachability import ControlPolytope
from src.testbed.attacks import (
    AttackKind,
    AttackSchedule,
    AttackWindow,
    RandomBox,
    TakeOver,
    TurnOff,
    attack_input,
    build_attack,
)
from src.testbed.controllers import IntegralStateFeedback, StateFeedback

BOX = ControlPolytope([-1.0, -0.5], [1.0, 0.5])


class TestPolicies:
    """Test suite for the three attack policies."""

    def test_turn_off_returns_copy(self):
        off = np.array([-9.81, 0.0, 0.0, 0.0])
        policy = TurnOff(off)
        command = attack_input(policy, np.zeros(12), 0.01)
        command[0] = 0.0
        assert np.array_equal(policy.command(np.zeros(12), 0.01), off)

    def test_random_box_draws_corners(self):
        policy = RandomBox(BOX, seed=3)
        corners = {tuple(c) for c in BOX.corners()}
        draws = [tuple(policy.command(np.zeros(2), 0.01)) for _ in range(200)]
        assert set(draws) == corners

    def test_random_box_is_reproducible(self):
        first = RandomBox(BOX, seed=[7, 2])
        second = RandomBox(BOX, seed=[7, 2])
        for _ in range(20):
            assert np.array_equal(first.command(None, 0.01), second.command(None, 0.01))

    def test_take_over_steers_to_target(self):
        law = StateFeedback(np.array([[2.0, 0.0]]))
        policy = TakeOver(law, np.array([1.0, 0.0]))
        assert policy.command(np.zeros(2), 0.01) == pytest.approx([2.0])
        assert np.array_equal(law.reference, np.zeros(2))

    def test_take_over_reset_clears_integral(self):
        law = IntegralStateFeedback(np.array([[0.0, 1.0]]), np.array([[1.0]]))
        policy = TakeOver(law, np.array([1.0]))
        policy.command(np.zeros(1), 0.1)
        assert policy.command(np.zeros(1), 0.1) == pytest.approx([0.1])
        policy.reset()
        assert policy.command(np.zeros(1), 0.1) == pytest.approx([0.0])


class TestBuildAttack:

    @pytest.mark.parametrize(
        "kind, context, expected",
        [
            ("turn_off", {"off_input": np.zeros(2)}, TurnOff),
            ("take_over", {"law": StateFeedback(np.eye(2)), "target": np.ones(2)}, TakeOver),
            ("random_box", {"limits": BOX}, RandomBox),
        ],
    )
    def test_builds_each_kind(self, kind, context, expected):
        policy = build_attack(kind, **context)
        assert isinstance(policy, expected)
        assert policy.kind is AttackKind(kind)

    @pytest.mark.parametrize("kind", ["turn_off", "take_over", "random_box"])
    def test_missing_context_raises(self, kind):
        with pytest.raises(ValueError):
            build_attack(kind)

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError):
            build_attack("jam")


class TestSchedule:
    """Test suite for timed attack windows."""

    def test_window_is_half_open(self):
        window = AttackWindow(TurnOff(np.zeros(1)), start_time=1.0, duration=0.5)
        assert not window.covers(0.99)
        assert window.covers(1.0)
        assert window.covers(1.49)
        assert not window.covers(1.5)

    def test_default_window_never_ends(self):
        window = AttackWindow(TurnOff(np.zeros(1)))
        assert window.end_time == math.inf
        assert window.covers(1e6)

    def test_earliest_window_wins(self):
        first = AttackWindow(TurnOff(np.zeros(2)), 0.0, 2.0)
        second = AttackWindow(RandomBox(BOX), 1.0, 2.0)
        schedule = AttackSchedule([first, second])
        assert schedule.active(1.5) is first
        assert schedule.active(2.5) is second
        assert schedule.active(3.5) is None
        assert schedule.is_active(2.9)
        assert schedule.intervals() == [("turn_off", 0.0, 2.0), ("random_box", 1.0, 3.0)]

    def test_policy_reset_when_window_opens(self, mocker):
        policy = TurnOff(np.zeros(1))
        spy = mocker.spy(policy, "reset")
        schedule = AttackSchedule([
            AttackWindow(policy, 0.0, 1.0),
            AttackWindow(policy, 2.0, 1.0),
        ])
        for t in (0.0, 0.5, 1.5, 2.0, 2.5):
            schedule.active(t)
        assert spy.call_count == 2


class TestControllers:

    def test_state_feedback(self):
        law = StateFeedback(np.array([[1.0, 2.0]]), reference=np.array([1.0, 0.0]))
        assert law.command(np.array([2.0, 1.0]), 0.01) == pytest.approx([-3.0])

    def test_integral_first_command_sees_zero_integral(self):
        law = IntegralStateFeedback(np.array([[0.0, 1.0]]), np.array([[1.0]]))
        assert law.command(np.array([0.3]), 0.01) == pytest.approx([0.0])
        assert law.command(np.array([0.3]), 0.01) == pytest.approx([-0.003])

    def test_integral_rejects_bad_gain(self):
        with pytest.raises(ValueError):
            IntegralStateFeedback(np.zeros((1, 3)), np.array([[1.0]]))

    def test_retargeted_law_is_independent(self):
        law = IntegralStateFeedback(np.array([[1.0, 1.0]]), np.array([[1.0]]))
        moved = law.retargeted(np.array([1.0]))
        moved.command(np.zeros(1), 0.1)
        assert np.array_equal(law.integral, [0.0])
        assert np.array_equal(moved.integral, [-0.1])


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--cov=src.testbed.attacks"])
