#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit tests for the metric oracle: every sub-metric on hand-built scenes,
the aggregation formula and the human-fallback filter.
"""

import itertools
import math
import os
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import shapely
from shapely import affinity
from shapely.geometry import LineString, Point
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.geometry import box
from shapely.ops import unary_union

from backend.base.custom_exceptions import InvalidSettingValue
from backend.base.definitions import Config, LightState
from backend.features.epdms import (MetricWeights, SubMetrics,
                                    aggregate_epdms, eval_submetrics,
                                    evaluate, evaluate_many, filter_metric,
                                    filtered_metrics, rollout)
from backend.features.epdms.simulation import (ego_progress,
                                               extended_comfort,
                                               lane_keeping,
                                               scalar_accelerations)
from backend.features.scene.geometry import footprints
from backend.features.scene.types import Agent, Pose2, Trajectory
from backend.features.synthetic import generate_dataset
from tests.fixtures import (DT, T, make_scenario, moving_agent, parked_agent,
                            stop_line, straight_trajectory,
                            trajectory_from_positions, transform_scenario)

CONFIG = Config()
ALL_ONE = SubMetrics(*([1.0] * 9))


def reversing(distance: float):
    """Straight reverse drive covering `distance` meters over the horizon."""
    x = -distance / T * np.arange(1, T + 1)
    return trajectory_from_positions(np.stack([x, np.zeros(T)], axis=1))


def follower() -> Agent:
    """A car closing in from behind that halts overlapping the ego's rear."""
    xs = (-10.0, -7.5, -5.0) + (-3.0,) * (T - 2)
    return Agent("follower", 1.9, 4.6, tuple(Pose2(x, 0.0, 0.0) for x in xs), False)


def from_speeds(speeds) -> np.ndarray:
    x = np.cumsum(np.asarray(speeds, dtype=float) * DT)
    return np.stack([x, np.zeros(len(x))], axis=1)


class TestStraightRoad(unittest.TestCase):
    """Test the oracle on the empty straight road."""

    def setUp(self):
        """Set up test fixtures."""
        self.scenario = make_scenario()

    def test_all_metrics_pass(self):
        """Test that driving on in lane scores full marks everywhere."""
        report = evaluate(self.scenario, straight_trajectory(5.0))
        self.assertEqual(report.agent, ALL_ONE)
        self.assertEqual(report.epdms, 1.0)

    def test_rollout_prepends_current_pose(self):
        """Test the rollout layout."""
        roll = rollout(self.scenario, straight_trajectory(5.0))
        self.assertEqual(roll.poses.shape, (T + 1, 3))
        np.testing.assert_array_equal(roll.poses[0], [0.0, 0.0, 0.0])
        np.testing.assert_allclose(roll.speeds, 5.0)

    def test_evaluate_many_matches_evaluate(self):
        """Test the batched evaluation."""
        plans = [straight_trajectory(v, y) for v, y in ((5.0, 0.0), (3.0, 1.0), (8.0, -2.5))]
        batched = evaluate_many(self.scenario, plans)
        for plan, report in zip(plans, batched):
            self.assertEqual(report, evaluate(self.scenario, plan))

    def test_evaluate_many_rolls_out_human_once(self):
        """Test that the human rollouts do not grow with the number of plans."""
        human = self.scenario.human_trajectory
        for count in (1, 6):
            plans = [straight_trajectory(3.0 + i) for i in range(count)]
            with patch("backend.features.epdms.simulation.rollout", wraps=rollout) as spy:
                evaluate_many(self.scenario, plans)
            human_calls = [c for c in spy.call_args_list if c.args[1] is human]
            self.assertEqual(len(human_calls), 2)
            self.assertEqual(spy.call_count, count + 2)


class TestNoCollision(unittest.TestCase):
    """Test the collision metric."""

    def test_parked_car_ahead(self):
        """Test driving into a parked car."""
        scenario = make_scenario(agents=(parked_agent("car", 5.0),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0)).nc, 0.0)

    def test_other_lane(self):
        """Test passing a car parked in the other lane."""
        scenario = make_scenario(agents=(parked_agent("car", 5.0, y=3.5),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0)).nc, 1.0)

    def test_hit_from_behind_while_stopped(self):
        """Test that a stopped ego rear-ended by a follower is not at fault."""
        scenario = make_scenario(agents=(follower(),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(0.0)).nc, 1.0)

    def test_hit_from_behind_while_moving(self):
        """Test that the exemption needs the ego to be stopped."""
        scenario = make_scenario(agents=(follower(),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(1.0)).nc, 0.0)

    def test_matches_polygon_oracle(self):
        """Test random moving plans against shapely polygon intersections."""
        rng = np.random.default_rng(21)
        for _ in range(40):
            agents = tuple(
                moving_agent(f"a{i}", rng.uniform(-5, 40), rng.uniform(-3, 6), y=rng.uniform(-3, 4))
                for i in range(3)
            )
            scenario = make_scenario(agents=agents)
            speed = rng.uniform(1.0, 8.0)
            positions = from_speeds([speed] * T)
            positions[:, 1] = np.cumsum(rng.uniform(-0.4, 0.4, size=T))
            plan = trajectory_from_positions(positions)

            roll = rollout(scenario, plan)
            ego = shapely.polygons(roll.footprints())
            hit = False
            for agent in agents:
                track = agent.track_array()[1:]
                others = shapely.polygons(footprints(track, agent.width, agent.length))
                hit = hit or bool(np.any(shapely.intersects(ego, others)))
            self.assertEqual(eval_submetrics(scenario, plan).nc, 0.0 if hit else 1.0)


class TestDrivableArea(unittest.TestCase):
    """Test drivable-area compliance."""

    def test_leaving_the_road(self):
        """Test a plan that ends beside the road."""
        scenario = make_scenario()
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0, y=-3.0)).dac, 0.0)

    def test_matches_polygon_oracle(self):
        """Test random plans against shapely containment of each footprint."""
        scenario = make_scenario()
        road = box(-40.0, -3.5, 100.0, 5.25)
        rng = np.random.default_rng(3)
        for _ in range(60):
            positions = from_speeds(rng.uniform(0.0, 10.0, size=T))
            positions[:, 1] = rng.uniform(-3.5, 5.0) + np.cumsum(rng.uniform(-0.3, 0.3, size=T))
            plan = trajectory_from_positions(positions)
            inside = all(road.covers(p) for p in shapely.polygons(rollout(scenario, plan).footprints()))
            self.assertEqual(eval_submetrics(scenario, plan).dac, 1.0 if inside else 0.0)


class TestDrivingDirection(unittest.TestCase):
    """Test driving-direction compliance."""

    def setUp(self):
        """Set up test fixtures."""
        self.scenario = make_scenario()

    def test_grading(self):
        """Test the three bands of distance driven against the lane."""
        cases = ((1.0, 1.0), (4.0, 0.5), (8.0, 0.0))
        for distance, expected in cases:
            with self.subTest(distance=distance):
                self.assertEqual(eval_submetrics(self.scenario, reversing(distance)).ddc, expected)

    def test_forward_in_own_lane(self):
        """Test that forward driving is compliant."""
        self.assertEqual(eval_submetrics(self.scenario, straight_trajectory(8.0)).ddc, 1.0)


class TestTrafficLight(unittest.TestCase):
    """Test traffic-light compliance."""

    def test_red_crossed(self):
        """Test crossing a red stop line."""
        scenario = make_scenario(lights=(stop_line(10.0),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0)).tlc, 0.0)

    def test_green_crossed(self):
        """Test crossing a green stop line."""
        scenario = make_scenario(lights=(stop_line(10.0, LightState.GREEN),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0)).tlc, 1.0)

    def test_red_out_of_reach(self):
        """Test a red stop line beyond the plan."""
        scenario = make_scenario(lights=(stop_line(30.0),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0)).tlc, 1.0)

    def test_stopping_before_red(self):
        """Test a slow plan that stays short of the line."""
        scenario = make_scenario(lights=(stop_line(10.0),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(1.0)).tlc, 1.0)


class TestEgoProgress(unittest.TestCase):
    """Test the progress ratio."""

    def test_ratios(self):
        """Test the ratio against the human, floored by the minimum progress."""
        cases = (
            (10.0, 20.0, 0.5),
            (20.0, 20.0, 1.0),
            (10.0, 2.0, 1.0),
            (2.0, 2.0, 0.4),
            (-3.0, 20.0, 0.0),
            (30.0, 20.0, 1.0),
            (0.0, 0.05, 1.0)
        )
        for agent, human, expected in cases:
            with self.subTest(agent=agent, human=human):
                self.assertAlmostEqual(ego_progress(agent, human, CONFIG), expected)

    def test_half_speed(self):
        """Test that half the human's distance scores one half."""
        scenario = make_scenario()
        self.assertAlmostEqual(eval_submetrics(scenario, straight_trajectory(2.5)).ep, 0.5)


class TestTimeToCollision(unittest.TestCase):
    """Test the time-to-collision metric."""

    def test_stationary_agent_just_ahead(self):
        """Test a plan ending short of a parked car it would reach within a second."""
        scenario = make_scenario(agents=(parked_agent("car", 27.0),))
        metrics = eval_submetrics(scenario, straight_trajectory(5.0))
        self.assertEqual(metrics.nc, 1.0)
        self.assertEqual(metrics.ttc, 0.0)

    def test_far_agent(self):
        """Test a parked car well beyond the projection."""
        scenario = make_scenario(agents=(parked_agent("car", 40.0),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(5.0)).ttc, 1.0)

    def test_stopped_ego(self):
        """Test that a stopped ego never fails the metric."""
        scenario = make_scenario(agents=(follower(),))
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(0.0)).ttc, 1.0)


class TestComfort(unittest.TestCase):
    """Test history and extended comfort."""

    def test_hard_braking(self):
        """Test that dropping from 5 to 1 m/s in one step is uncomfortable."""
        scenario = make_scenario()
        self.assertEqual(eval_submetrics(scenario, straight_trajectory(1.0)).hc, 0.0)

    def test_gentle_acceleration(self):
        """Test a 1 m/s^2 ramp."""
        scenario = make_scenario()
        plan = trajectory_from_positions(from_speeds(5.0 + 0.5 * np.arange(1, T + 1)))
        self.assertEqual(eval_submetrics(scenario, plan).hc, 1.0)

    def test_scalar_accelerations(self):
        """Test accelerations from step speeds."""
        plan = trajectory_from_positions(from_speeds(5.0 + 1.5 * np.arange(1, T + 1)))
        np.testing.assert_allclose(scalar_accelerations(plan), 3.0)

    def test_extended_comfort(self):
        """Test the acceleration difference to the previous plan."""
        previous = straight_trajectory(5.0)
        jumpy = trajectory_from_positions(from_speeds(5.0 + 1.5 * np.arange(1, T + 1)))
        smooth = trajectory_from_positions(from_speeds(5.0 + 0.5 * np.arange(1, T + 1)))
        self.assertEqual(extended_comfort(jumpy, previous, CONFIG), 0.0)
        self.assertEqual(extended_comfort(smooth, previous, CONFIG), 1.0)
        self.assertEqual(extended_comfort(jumpy, None, CONFIG), 1.0)

    def test_previous_plan_in_scene(self):
        """Test that the scene's previous plan drives the metric."""
        scenario = make_scenario(prev_plan=straight_trajectory(5.0))
        jumpy = trajectory_from_positions(from_speeds(5.0 + 1.5 * np.arange(1, T + 1)))
        self.assertEqual(eval_submetrics(scenario, jumpy).ec, 0.0)


class TestLaneKeeping(unittest.TestCase):
    """Test the lane-keeping fraction."""

    def setUp(self):
        """Set up test fixtures."""
        self.scenario = make_scenario()

    def test_offset_plan(self):
        """Test a plan one meter off the centreline."""
        roll = rollout(self.scenario, straight_trajectory(5.0, y=1.0))
        self.assertEqual(lane_keeping(self.scenario, roll, CONFIG), 0.0)

    def test_half_on_lane(self):
        """Test a plan that leaves the lane halfway."""
        positions = from_speeds([5.0] * T)
        positions[T // 2:, 1] = 1.0
        roll = rollout(self.scenario, trajectory_from_positions(positions))
        self.assertEqual(lane_keeping(self.scenario, roll, CONFIG), 0.5)


class TestAggregation(unittest.TestCase):
    """Test the score formula and the human filter."""

    def test_worked_example(self):
        """Test half progress with everything else passing."""
        agent = ALL_ONE._replace(ep=0.5)
        self.assertAlmostEqual(aggregate_epdms(agent, ALL_ONE), 0.9)

    def test_penalty_zeroes_score(self):
        """Test that any failed multiplicative term zeroes the score."""
        for name in ("nc", "dac", "ddc", "tlc"):
            self.assertEqual(aggregate_epdms(ALL_ONE._replace(**{name: 0.0}), ALL_ONE), 0.0)

    def test_ddc_half(self):
        """Test the graded direction term."""
        self.assertAlmostEqual(aggregate_epdms(ALL_ONE._replace(ddc=0.5), ALL_ONE), 0.5)

    def test_human_fallback(self):
        """Test that metrics the human also fails are forgiven."""
        agent = ALL_ONE._replace(dac=0.0, lk=0.0)
        human = ALL_ONE._replace(dac=0.0, lk=0.0)
        self.assertEqual(aggregate_epdms(agent, human), 1.0)
        self.assertEqual(filter_metric(0.0, 0.0), 1.0)
        self.assertEqual(filter_metric(0.5, 1.0), 0.5)

    def test_monotonic(self):
        """Test that raising one sub-metric never lowers the score."""
        rng = np.random.default_rng(8)
        levels = (0.0, 0.5, 1.0)
        for _ in range(200):
            values = list(rng.choice(levels, size=9))
            base = aggregate_epdms(SubMetrics(*values), ALL_ONE)
            for i in range(9):
                raised = list(values)
                raised[i] = 1.0
                self.assertGreaterEqual(aggregate_epdms(SubMetrics(*raised), ALL_ONE), base - 1e-12)

    def test_weight_scaling(self):
        """Test that scaling every weight leaves the score unchanged."""
        agent = SubMetrics(1, 1, 1, 1, 0.3, 0.0, 0.5, 1, 0)
        weights = MetricWeights(1.0, 2.0, 0.5, 3.0, 1.0)
        scaled = MetricWeights(*(4.0 * w for w in weights))
        self.assertAlmostEqual(aggregate_epdms(agent, ALL_ONE, weights), aggregate_epdms(agent, ALL_ONE, scaled))

    def test_in_unit_interval(self):
        """Test the score range over a grid of sub-metric values."""
        for values in itertools.product((0.0, 1.0), repeat=9):
            score = aggregate_epdms(SubMetrics(*values), ALL_ONE)
            self.assertTrue(0.0 <= score <= 1.0)

    def test_invalid_weights(self):
        """Test that zero or negative weights are refused."""
        with self.assertRaises(InvalidSettingValue):
            aggregate_epdms(ALL_ONE, ALL_ONE, MetricWeights(0, 0, 0, 0, 0))
        with self.assertRaises(InvalidSettingValue):
            aggregate_epdms(ALL_ONE, ALL_ONE, MetricWeights(-1, 1, 1, 1, 1))


class TestInvariance(unittest.TestCase):
    """Test that scores do not depend on the world frame."""

    def test_rigid_transform(self):
        """Test a busy scene before and after a rigid motion."""
        scenario = make_scenario(
            agents=(parked_agent("p", 30.0, 3.5, 3.1), moving_agent("m", -12.0, 6.0)),
            lights=(stop_line(15.0),),
            prev_plan=straight_trajectory(4.0)
        )
        plans = [straight_trajectory(5.0), straight_trajectory(2.0, y=1.2), reversing(4.0)]
        for pose in (Pose2(100.0, -50.0, 2.0), Pose2(-7.0, 3.0, -0.6)):
            moved = transform_scenario(scenario, pose)
            for plan in plans:
                a, b = evaluate(scenario, plan), evaluate(moved, plan)
                np.testing.assert_allclose(a.agent, b.agent, atol=1e-9)
                self.assertAlmostEqual(a.epdms, b.epdms)


class TestSyntheticScenes(unittest.TestCase):
    """Test the oracle on generated scenes."""

    def setUp(self):
        """Set up test fixtures."""
        count = 40 if os.environ.get("PLANLOOM_ACCEPTANCE") == "1" else 8
        self.scenarios = generate_dataset(count, seed=0)

    def test_human_trajectories(self):
        """Test that the human plan never fails a filtered metric."""
        violations = 0
        for scenario in self.scenarios:
            report = evaluate(scenario, scenario.human_trajectory)
            self.assertTrue(all(value > 0.0 for value in report.filtered))
            self.assertTrue(0.0 < report.epdms <= 1.0)
            violations += report.agent.dac == 0.0
        self.assertGreaterEqual(violations, 1)

    def test_off_road_plan_with_violating_human(self):
        """Test that leaving the road is forgiven when the human also does."""
        violation = self.scenarios[7]
        self.assertEqual(evaluate(violation, violation.human_trajectory).agent.dac, 0.0)
        report = evaluate(violation, straight_trajectory(5.0, y=-4.0))
        self.assertEqual(report.agent.dac, 0.0)
        self.assertEqual(report.filtered.dac, 1.0)

    def test_scene_copy_scores_identically(self):
        """Test determinism over a copied scene."""
        scenario = self.scenarios[0]
        copy = replace(scenario, id="copy")
        plan = straight_trajectory(5.0)
        self.assertEqual(evaluate(scenario, plan), evaluate(copy, plan))



def reference_score(agent: SubMetrics, human: SubMetrics, weights: MetricWeights) -> float:
    """Forgive every metric the human fails, multiply the penalties, average the rest."""
    values = {}
    for name in SubMetrics._fields:
        if getattr(human, name) == 0:
            values[name] = 1.0
        else:
            values[name] = float(getattr(agent, name))
    product = 1.0
    product *= values["nc"]
    product *= values["dac"]
    product *= values["ddc"]
    product *= values["tlc"]
    weighted = 0
    weighted += weights.w_ttc * values["ttc"]
    weighted += weights.w_ep * values["ep"]
    weighted += weights.w_hc * values["hc"]
    weighted += weights.w_lk * values["lk"]
    weighted += weights.w_ec * values["ec"]
    total = 0
    for w in (weights.w_ttc, weights.w_ep, weights.w_hc, weights.w_lk, weights.w_ec):
        total += w
    return min(1.0, max(0.0, product * weighted / total))


def human_patterns():
    """All passing, all failing, each metric failing alone and a few graded mixes."""
    patterns = [ALL_ONE, SubMetrics(*([0.0] * 9))]
    for name in SubMetrics._fields:
        patterns.append(ALL_ONE._replace(**{name: 0.0}))
    patterns.append(ALL_ONE._replace(ddc=0.5, ep=0.4, lk=0.75))
    patterns.append(ALL_ONE._replace(nc=0.0, ep=0.0, lk=0.0, ec=0.0))
    return patterns


class TestReferenceAggregation(unittest.TestCase):
    """Test the filter and the score against a hand-written reference."""

    def setUp(self):
        """Set up test fixtures."""
        self.weights = (MetricWeights(), MetricWeights(5.0, 5.0, 2.0, 2.0, 2.0), MetricWeights(1.0, 0.0, 3.0, 0.5, 2.0))

    def test_grid(self):
        """Test every combination of a value grid against every human pattern."""
        grid = (
            (0.0, 1.0), (0.0, 1.0), (0.0, 0.5, 1.0), (0.0, 1.0),
            (0.0, 0.37, 1.0), (0.0, 1.0), (0.0, 0.5, 1.0), (0.0, 1.0), (0.0, 1.0)
        )
        humans = human_patterns()
        for values in itertools.product(*grid):
            agent = SubMetrics(*values)
            for human in humans:
                filtered = filtered_metrics(agent, human)
                for a, h, f in zip(agent, human, filtered):
                    self.assertEqual(f, 1.0 if h == 0 else a)
                for weights in self.weights:
                    self.assertEqual(aggregate_epdms(agent, human, weights), reference_score(agent, human, weights))

    def test_random_inputs(self):
        """Test the range and the reference on random inputs."""
        rng = np.random.default_rng(21)
        levels = (0.0, 0.5, 1.0)
        for _ in range(10000):
            agent = SubMetrics(
                *rng.choice((0.0, 1.0), size=2), rng.choice(levels), rng.choice((0.0, 1.0)),
                rng.uniform(), rng.choice((0.0, 1.0)), rng.uniform(), *rng.choice((0.0, 1.0), size=2)
            )
            human = SubMetrics(*np.where(rng.uniform(size=9) < 0.2, 0.0, rng.uniform(0.1, 1.0, size=9)))
            weights = MetricWeights(*rng.uniform(0.0, 5.0, size=5))
            score = aggregate_epdms(agent, human, weights)
            self.assertTrue(0.0 <= score <= 1.0)
            self.assertEqual(score, reference_score(agent, human, weights))

    def test_multiplicative_zero(self):
        """Test that a failed penalty the human passes zeroes any score."""
        rng = np.random.default_rng(4)
        for name in ("nc", "dac", "ddc", "tlc"):
            for _ in range(50):
                agent = SubMetrics(*rng.uniform(size=9))._replace(**{name: 0.0})
                human = SubMetrics(*rng.uniform(0.1, 1.0, size=9))
                self.assertEqual(aggregate_epdms(agent, human), 0.0)

    def test_forgiveness(self):
        """Test that a metric both fail scores like a passed metric."""
        rng = np.random.default_rng(6)
        for name in SubMetrics._fields:
            for _ in range(50):
                agent = SubMetrics(*rng.uniform(0.1, 1.0, size=9))
                human = SubMetrics(*rng.uniform(0.1, 1.0, size=9))
                failed = aggregate_epdms(agent._replace(**{name: 0.0}), human._replace(**{name: 0.0}))
                passed = aggregate_epdms(agent._replace(**{name: 1.0}), human._replace(**{name: 0.0}))
                self.assertEqual(failed, passed)
                filtered = filtered_metrics(agent._replace(**{name: 0.0}), human._replace(**{name: 0.0}))
                self.assertEqual(getattr(filtered, name), 1.0)


def wrap(angle: float) -> float:
    while angle > math.pi:
        angle -= 2.0 * math.pi
    while angle <= -math.pi:
        angle += 2.0 * math.pi
    return angle


def box_at(x: float, y: float, yaw: float, width: float, length: float) -> ShapelyPolygon:
    c, s = math.cos(yaw), math.sin(yaw)
    corners = ((length / 2, -width / 2), (length / 2, width / 2), (-length / 2, width / 2), (-length / 2, -width / 2))
    return ShapelyPolygon([(x + c * u - s * v, y + s * u + c * v) for u, v in corners])


class ReplayOracle:
    """Replays one plan step by step with plain shapely objects and recomputes every sub-metric."""

    def __init__(self, scenario, trajectory, config: Config = CONFIG):
        self.scenario = scenario
        self.trajectory = trajectory
        self.config = config
        self.dt = trajectory.dt
        ego = scenario.ego
        c, s = math.cos(ego.pose.yaw), math.sin(ego.pose.yaw)
        self.poses = [(ego.pose.x, ego.pose.y, ego.pose.yaw)]
        for p in trajectory.poses:
            self.poses.append((ego.pose.x + c * p.x - s * p.y, ego.pose.y + s * p.x + c * p.y, wrap(p.yaw + ego.pose.yaw)))
        self.speeds = [ego.speed]
        for k in range(1, len(self.poses)):
            self.speeds.append(math.hypot(self.poses[k][0] - self.poses[k - 1][0],
                                          self.poses[k][1] - self.poses[k - 1][1]) / self.dt)
        self.steps = len(trajectory.poses)

    def ego_box(self, k: int) -> ShapelyPolygon:
        x, y, yaw = self.poses[k]
        return box_at(x, y, yaw, self.scenario.ego.width, self.scenario.ego.length)

    def nearest_lane(self, x: float, y: float):
        """(distance, heading) of the closest centreline segment; the first one wins ties."""
        best = None
        for lane in self.scenario.centerlines:
            points, headings = list(lane.points), list(lane.headings)
            if len(points) == 1:
                segments = [(points[0], points[0], headings[0], headings[0])]
            else:
                segments = list(zip(points[:-1], points[1:], headings[:-1], headings[1:]))
            for (ax, ay), (bx, by), h0, h1 in segments:
                dx, dy = bx - ax, by - ay
                length_sq = dx * dx + dy * dy
                t = ((x - ax) * dx + (y - ay) * dy) / length_sq if length_sq > 0 else 0.0
                t = min(1.0, max(0.0, t))
                distance = math.hypot(x - ax - t * dx, y - ay - t * dy)
                if best is None or distance < best[0]:
                    best = (distance, h0 if t <= 0.5 else h1)
        return best

    def advance(self) -> float:
        route = self.scenario.route
        if len(route) < 2:
            return 0.0
        line = LineString(route)
        return line.project(Point(self.poses[-1][:2])) - line.project(Point(self.poses[0][:2]))

    def nc(self) -> float:
        cfg = self.config
        for k in range(1, self.steps + 1):
            x, y, yaw = self.poses[k]
            for agent in self.scenario.agents:
                other = agent.track[k]
                if not self.ego_box(k).intersects(box_at(other.x, other.y, other.yaw, agent.width, agent.length)):
                    continue
                if self.speeds[k] < cfg.stopped_speed:
                    rear_x = x - cfg.rear_axle_offset * math.cos(yaw)
                    rear_y = y - cfg.rear_axle_offset * math.sin(yaw)
                    if (other.x - rear_x) * math.cos(yaw) + (other.y - rear_y) * math.sin(yaw) < 0:
                        continue
                return 0.0
        return 1.0

    def dac(self) -> float:
        if not self.scenario.drivable_area:
            return 0.0
        road = unary_union([ShapelyPolygon(poly) for poly in self.scenario.drivable_area])
        for k in range(1, self.steps + 1):
            for corner in self.ego_box(k).exterior.coords[:4]:
                if not road.covers(Point(corner)):
                    return 0.0
        return 1.0

    def ddc(self) -> float:
        if not self.scenario.centerlines:
            return 1.0
        against = 0.0
        for k in range(1, self.steps + 1):
            _, heading = self.nearest_lane(*self.poses[k][:2])
            dx = self.poses[k][0] - self.poses[k - 1][0]
            dy = self.poses[k][1] - self.poses[k - 1][1]
            against += max(0.0, -(dx * math.cos(heading) + dy * math.sin(heading)))
        if against < self.config.ddc_minor:
            return 1.0
        if against < self.config.ddc_major:
            return 0.5
        return 0.0

    def tlc(self) -> float:
        for light in self.scenario.traffic_lights:
            if light.state is not LightState.RED:
                continue
            line = LineString(light.stop_line)
            for k in range(1, self.steps + 1):
                if self.ego_box(k).intersects(line):
                    return 0.0
                start, end = self.poses[k - 1][:2], self.poses[k][:2]
                if start != end and LineString([start, end]).intersects(line):
                    return 0.0
        return 1.0

    def ep(self, human_advance: float) -> float:
        cfg = self.config
        if human_advance < cfg.ep_unachievable:
            return 1.0
        return min(1.0, max(0.0, self.advance() / max(human_advance, cfg.ep_min_progress)))

    def ttc(self) -> float:
        cfg = self.config
        count = int(round(cfg.ttc_horizon / cfg.ttc_step))
        for k in range(1, self.steps + 1):
            if self.speeds[k] < cfg.stopped_speed:
                continue
            vx = (self.poses[k][0] - self.poses[k - 1][0]) / self.dt
            vy = (self.poses[k][1] - self.poses[k - 1][1]) / self.dt
            for agent in self.scenario.agents:
                now, before = agent.track[k], agent.track[k - 1]
                if agent.is_stationary:
                    ax, ay = 0.0, 0.0
                else:
                    ax, ay = (now.x - before.x) / self.dt, (now.y - before.y) / self.dt
                other = box_at(now.x, now.y, now.yaw, agent.width, agent.length)
                for i in range(1, count + 1):
                    s = cfg.ttc_step * i
                    moved_ego = affinity.translate(self.ego_box(k), vx * s, vy * s)
                    if moved_ego.intersects(affinity.translate(other, ax * s, ay * s)):
                        return 0.0
        return 1.0

    def lk(self) -> float:
        if not self.scenario.centerlines:
            return 1.0
        within = sum(
            1 for k in range(1, self.steps + 1)
            if self.nearest_lane(*self.poses[k][:2])[0] <= self.config.lk_max_deviation
        )
        return within / self.steps

    def hc(self) -> float:
        cfg = self.config
        poses = [p.as_tuple() for p in self.scenario.ego_history[-2:]] + self.poses
        speed, yaw_rate = [], []
        for a, b in zip(poses[:-1], poses[1:]):
            speed.append(math.hypot(b[0] - a[0], b[1] - a[1]) / self.dt)
            yaw_rate.append(wrap(b[2] - a[2]) / self.dt)
        lon = [(v1 - v0) / self.dt for v0, v1 in zip(speed[:-1], speed[1:])]
        jerk = [(a1 - a0) / self.dt for a0, a1 in zip(lon[:-1], lon[1:])]
        lat = [v * w for v, w in zip(speed, yaw_rate)]
        for values, limit in ((lon, cfg.hc_max_lon_accel), (lat, cfg.hc_max_lat_accel),
                              (jerk, cfg.hc_max_jerk), (yaw_rate, cfg.hc_max_yaw_rate)):
            if any(abs(v) > limit + 1e-9 for v in values):
                return 0.0
        return 1.0

    @staticmethod
    def accelerations(trajectory) -> list:
        points = [(0.0, 0.0)] + [(p.x, p.y) for p in trajectory.poses]
        speed = [math.hypot(b[0] - a[0], b[1] - a[1]) / trajectory.dt for a, b in zip(points[:-1], points[1:])]
        return [(v1 - v0) / trajectory.dt for v0, v1 in zip(speed[:-1], speed[1:])]

    def ec(self) -> float:
        previous_plan = self.scenario.prev_plan
        if previous_plan is None:
            return 1.0
        current = self.accelerations(self.trajectory)
        previous = self.accelerations(previous_plan)
        n = min(len(current), len(previous) - 1)
        if n <= 0:
            return 1.0
        worst = max(abs(current[i] - previous[i + 1]) for i in range(n))
        return 1.0 if worst <= self.config.ec_max_accel_diff + 1e-9 else 0.0

    def metrics(self, human_advance: float) -> SubMetrics:
        return SubMetrics(
            nc=self.nc(), dac=self.dac(), ddc=self.ddc(), tlc=self.tlc(), ep=self.ep(human_advance),
            ttc=self.ttc(), lk=self.lk(), hc=self.hc(), ec=self.ec()
        )


def plan_variants(scenario, rng) -> list:
    """The human plan, a lateral shift, a rescaled speed profile and a slow reverse."""
    base = scenario.human_trajectory.array()
    shifted = base.copy()
    shifted[:, 1] += rng.uniform(-4.0, 4.0)
    scaled = base.copy()
    scaled[:, :2] *= rng.uniform(0.2, 1.6)
    backwards = base.copy()
    backwards[:, :2] *= -rng.uniform(0.1, 0.6)
    dt = scenario.human_trajectory.dt
    return [scenario.human_trajectory] + [Trajectory.from_array(v, dt) for v in (shifted, scaled, backwards)]


class TestReplayOracle(unittest.TestCase):
    """Test eval_submetrics against an independent step-by-step replay."""

    def check_scenes(self, count: int, seed: int):
        rng = np.random.default_rng(seed)
        for scenario in generate_dataset(count, seed=seed):
            human_advance = ReplayOracle(scenario, scenario.human_trajectory).advance()
            for plan in plan_variants(scenario, rng):
                expected = ReplayOracle(scenario, plan).metrics(human_advance)
                actual = eval_submetrics(scenario, plan, CONFIG)
                for name in SubMetrics._fields:
                    msg = f"{scenario.id} {name}"
                    if name == "ep":
                        self.assertAlmostEqual(getattr(actual, name), getattr(expected, name), places=9, msg=msg)
                    else:
                        self.assertEqual(getattr(actual, name), getattr(expected, name), msg=msg)

    def test_hand_built_scenes(self):
        """Test the replay on the hand-built collision and light scenes."""
        scenes = (
            make_scenario(agents=(parked_agent("car", 5.0),)),
            make_scenario(agents=(follower(),)),
            make_scenario(lights=(stop_line(15.0),), prev_plan=straight_trajectory(4.0))
        )
        for scenario in scenes:
            human_advance = ReplayOracle(scenario, scenario.human_trajectory).advance()
            for plan in (straight_trajectory(5.0), straight_trajectory(2.0, y=1.2), reversing(4.0)):
                expected = ReplayOracle(scenario, plan).metrics(human_advance)
                actual = eval_submetrics(scenario, plan, CONFIG)
                np.testing.assert_allclose(actual, expected, rtol=0.0, atol=1e-9)

    def test_synthetic_scenes(self):
        """Test every sub-metric on a short run of synthetic scenes."""
        self.check_scenes(16, seed=3)

    @unittest.skipUnless(os.environ.get("PLANLOOM_ACCEPTANCE") == "1", "slow acceptance check")
    def test_two_hundred_synthetic_scenes(self):
        """Test every sub-metric on 200 synthetic scenes."""
        self.check_scenes(200, seed=11)


if __name__ == "__main__":
    unittest.main()
