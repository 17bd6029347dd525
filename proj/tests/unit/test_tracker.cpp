#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace dmct;

namespace {

Trajectory at(int id, Vec2 p) {
  Trajectory t;
  t.id = id;
  t.states.push_back({0, p, true});
  return t;
}

std::vector<TrackInput> inputs(std::initializer_list<Vec2> ps) {
  std::vector<TrackInput> out;
  for (const auto& p : ps) out.push_back({p, std::nullopt});
  return out;
}

void expect_node_disjoint(const FrameAssignment& a) {
  std::set<int> tr, det;
  for (const auto& [t, d] : a.matches) {
    EXPECT_TRUE(tr.insert(t).second);
    EXPECT_TRUE(det.insert(d).second);
  }
}

}  // namespace

TEST(MinCostFlow, SmallNetwork) {
  // Two unit paths: 0->1->3 (cost 2) and 0->2->3 (cost 5); plus 0->3 (cost 10).
  MinCostFlow f(4);
  f.add_edge(0, 1, 1, 1);
  f.add_edge(1, 3, 1, 1);
  f.add_edge(0, 2, 1, 2);
  f.add_edge(2, 3, 1, 3);
  const auto direct = f.add_edge(0, 3, 1, 10);
  const auto r = f.solve(0, 3, 2);
  EXPECT_EQ(r.flow, 2);
  EXPECT_EQ(r.cost, 7);
  EXPECT_EQ(f.flow_on(direct), 0);
  EXPECT_THROW(f.add_edge(0, 9, 1, 1), RuntimeError);
}

TEST(MinCostFlow, ReroutesThroughResidualEdges) {
  // Greedy first path 0-1-2-3 must be undone to reach flow 2.
  MinCostFlow f(4);
  f.add_edge(0, 1, 1, 1);
  f.add_edge(0, 2, 1, 5);
  f.add_edge(1, 2, 1, 1);
  f.add_edge(1, 3, 1, 5);
  f.add_edge(2, 3, 1, 1);
  const auto r = f.solve(0, 3);
  EXPECT_EQ(r.flow, 2);
  EXPECT_EQ(r.cost, 12);
}

TEST(Association, NoDetectionsOnlyPredictionEdges) {
  const std::vector<Trajectory> trs{at(1, Vec2(0, 0)), at(2, Vec2(5, 5))};
  const auto g = build_graph(trs, {}, 0.3, 0.2);
  ASSERT_EQ(g.edges.size(), 2u);
  for (const auto& e : g.edges) EXPECT_EQ(e.detection, -1);
  const auto a = solve_assignment(g);
  EXPECT_TRUE(a.matches.empty());
  EXPECT_EQ(a.unmatched_trajectories, (std::vector<int>{1, 2}));
  EXPECT_EQ(a.cost, 2 * quantize_cost(0.2));
}

TEST(Association, ZeroDistanceMatchBeatsMiss) {
  const std::vector<Trajectory> trs{at(1, Vec2(1, 1))};
  const std::vector<Vec2> dets{Vec2(1, 1)};
  const auto a = solve_assignment(build_graph(trs, dets, 0.3, 0.2));
  ASSERT_EQ(a.matches.size(), 1u);
  EXPECT_EQ(a.matches[0], std::make_pair(1, 0));
  EXPECT_EQ(a.cost, 0);
}

TEST(Association, GatingBoundary) {
  const std::vector<Trajectory> trs{at(1, Vec2(0, 0))};
  const double gate = 0.25;
  const std::vector<Vec2> inside{Vec2(gate, 0)}, outside{Vec2(gate + 1e-6, 0)};
  EXPECT_EQ(build_graph(trs, inside, gate, 1.0).edges.size(), 2u);
  const auto g = build_graph(trs, outside, gate, 1.0);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].detection, -1);
}

TEST(Association, CrossedDistances) {
  const std::vector<Trajectory> trs{at(1, Vec2(0, 0)), at(2, Vec2(1, 0))};
  const std::vector<Vec2> dets{Vec2(0.95, 0.05), Vec2(0.05, 0.0)};
  const auto g = build_graph(trs, dets, 2.0, 1.5);
  const auto a = solve_assignment(g);
  EXPECT_EQ(a.cost, testing_support::brute_force_cost(g));
  auto m = a.matches;
  std::sort(m.begin(), m.end());
  EXPECT_EQ(m, (std::vector<std::pair<int, int>>{{1, 1}, {2, 0}}));
}

TEST(Association, RandomInstancesMatchEnumeration) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 500; ++i) {
    const auto g = testing_support::random_graph(rng, 6, 6);
    const auto a = solve_assignment(g);
    ASSERT_EQ(a.cost, testing_support::brute_force_cost(g)) << "instance " << i;
    expect_node_disjoint(a);
    EXPECT_EQ(a.matches.size() + a.unmatched_trajectories.size(), g.trajectory_ids.size());
  }
}

TEST(Predict, HandArithmetic) {
  Tracker tr;
  tr.step(inputs({Vec2(0, 0)}), 0);
  EXPECT_EQ(predict(tr.trajectories()[0]), Vec2(0, 0));
  tr.step(inputs({Vec2(0, 1.0 / 15.0)}), 1);  // within the gate
  const auto& t = tr.trajectories()[0];
  EXPECT_NEAR(t.velocity.y(), 0.5 / 15.0, 1e-12);
  EXPECT_NEAR(predict(t).y(), 1.5 / 15.0, 1e-12);

  Trajectory manual;
  manual.states = {{0, Vec2(0, 0), true}, {1, Vec2(0, 1), true}};
  manual.velocity = 0.5 * Vec2(0, 1);
  EXPECT_EQ(predict(manual), Vec2(0, 1.5));
  manual.velocity = Vec2::Zero();
  EXPECT_EQ(predict(manual), Vec2(0, 1));
  EXPECT_THROW(predict(Trajectory{}), RuntimeError);
}

TEST(Tracker, SteadyTargetKeepsOneId) {
  Tracker tr;
  for (int f = 0; f < 200; ++f) {
    const auto r = tr.step(inputs({Vec2(2.0 + 0.05 * f, 1.0)}), f);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].id, 1);
    EXPECT_TRUE(r.rows[0].matched);
  }
}

TEST(Tracker, OcclusionRetainsId) {
  Tracker tr;
  int f = 0;
  for (; f < 20; ++f) tr.step(inputs({Vec2(0.05 * f, 0)}), f);
  for (int k = 0; k < 5; ++k, ++f) {
    const auto r = tr.step({}, f);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_FALSE(r.rows[0].matched);
  }
  const auto r = tr.step(inputs({Vec2(0.05 * f, 0)}), f);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].id, 1);
  EXPECT_TRUE(r.rows[0].matched);
  EXPECT_TRUE(r.born.empty());
}

TEST(Tracker, FarDetectionIsBorn) {
  Tracker tr;
  tr.step(inputs({Vec2(0, 0)}), 0);
  const auto r = tr.step(inputs({Vec2(0, 0), Vec2(5, 5)}), 1);
  EXPECT_EQ(r.born, std::vector<int>{2});
  EXPECT_EQ(r.rows.size(), 2u);
}

TEST(Tracker, RetiresAfterMaxMisses) {
  TrackerParams p;
  p.max_misses = 3;
  Tracker tr(p);
  tr.step(inputs({Vec2(0, 0)}), 0);
  EXPECT_TRUE(tr.step({}, 1).retired.empty());
  EXPECT_TRUE(tr.step({}, 2).retired.empty());
  EXPECT_EQ(tr.step({}, 3).retired, std::vector<int>{1});
  EXPECT_TRUE(tr.trajectories().empty());
}

TEST(Tracker, FramesMustBeConsecutive) {
  Tracker tr;
  tr.step({}, 4);
  EXPECT_THROW(tr.step({}, 6), RuntimeError);
  EXPECT_THROW(Tracker(TrackerParams{-1.0}), ConfigError);
}

TEST(Tracker, DefaultParameters) {
  const TrackerParams p;
  EXPECT_NEAR(p.gate_radius, 0.2667, 1e-4);
  EXPECT_NEAR(p.miss_cost(), 0.6 * p.gate_radius, 1e-12);
  EXPECT_EQ(quantize_cost(0.2667), 267);
}

TEST(Tracker, ColorBreaksTieBetweenCrossingTargets) {
  ColorHistogram red, blue;
  red.bins = blue.bins = 2;
  red.mass = {1, 0, 0, 0, 0, 0, 0, 0};
  blue.mass = {0, 0, 0, 0, 0, 0, 0, 1};
  red.empty = blue.empty = false;
  TrackerParams p;
  p.use_color = true;
  p.color_weight = 2.0;
  p.miss_penalty = 1.0;
  Tracker tr(p);
  tr.step(std::vector<TrackInput>{{Vec2(0, 0), red}, {Vec2(0.2, 0), blue}}, 0);
  // Positions alone favor swapping; appearance keeps identities.
  const auto r = tr.step(std::vector<TrackInput>{{Vec2(0.19, 0), red}, {Vec2(0.01, 0), blue}}, 1);
  auto m = r.assignment.matches;
  std::sort(m.begin(), m.end());
  EXPECT_EQ(m, (std::vector<std::pair<int, int>>{{1, 0}, {2, 1}}));
}

TEST(Tracker, WritesTrackCsv) {
  const std::vector<TrackRow> rows{{3, 1, Vec2(1.23456, -2), true}, {3, 2, Vec2(0, 0), false}};
  std::ostringstream a, b;
  write_tracks(a, rows);
  write_tracks(b, rows, false);
  EXPECT_EQ(a.str(), "3,1,1.2346,-2.0000,1\n3,2,0.0000,0.0000,0\n");
  EXPECT_EQ(b.str(), "3,1,1.2346,-2.0000,1\n");
}
