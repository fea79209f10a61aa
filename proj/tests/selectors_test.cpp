#include <gtest/gtest.h>

#include <array>
#include <limits>

#include "evrpeps/generate.hpp"
#include "evrpeps/rollout.hpp"
#include "evrpeps/selectors.hpp"
#include "test_support.hpp"

using namespace evrpeps;
using evrpeps::testing::InstanceBuilder;

TEST(SelectVehicle, ArgminOfUnmovableDuration) {
  // Three EVs at three depots; send them to depots at different distances so
  // the resulting unmovable durations differ.
  const Instance inst = InstanceBuilder()
                            .cs(0, 0)
                            .cs(1, 0)
                            .cs(2, 0)
                            .cs(30, 0)
                            .cs(10, 0)
                            .cs(50, 0)
                            .bs(70, 70, 12, 4, 12)
                            .ev(30, 0)
                            .ev(30, 1)
                            .ev(30, 2)
                            .build();
  Simulation sim(inst);
  sim.commit_move(0, inst.cs_node(3));  // 30 km
  sim.commit_move(1, inst.cs_node(4));  // 9 km -> smallest U
  sim.commit_move(2, inst.cs_node(5));  // 48 km
  EXPECT_EQ(select_vehicle(sim), 1);
}

TEST(SelectVehicle, TiesGoToLowestIndex) {
  const Instance inst =
      InstanceBuilder().cs(0, 0).bs(70, 70, 12, 4, 12).ev(48, 0).ev(48, 0).build();
  Simulation sim(inst);
  EXPECT_EQ(select_vehicle(sim), 0);  // both idle, U = 0
}

TEST(SelectVehicle, MatchesLinearScanOracleOnRandomRollouts) {
  GenConfig cfg;
  cfg.n_bs = 10;
  cfg.n_cs = 3;
  cfg.n_ev = 4;
  cfg.horizon_h = 8.0;
  Rng rng(17);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 10000; ++seed) {
    const Instance inst = generate_instance(cfg, seed);
    run_rollout(inst, [&](const Simulation& sim, int k) {
      int oracle = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int e = 0; e < inst.n_evs(); ++e) {
        const double u = sim.unmovable_h(e);
        if (u < best) {
          best = u;
          oracle = e;
        }
      }
      EXPECT_EQ(k, oracle);
      ++checked;
      return random_node_selector(sim, k, rng);
    });
  }
  EXPECT_GE(checked, 10000);
}

TEST(RandomSelector, SingleVisitableNodeIsForced) {
  // Battery only reaches the near depot.
  const Instance inst =
      InstanceBuilder().cs(0, 0).cs(4, 0).cs(90, 0).bs(80, 0, 12, 4, 6).ev(1.0).build();
  Simulation sim(inst);
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial)
    EXPECT_EQ(random_node_selector(sim, 0, rng), inst.cs_node(1));
}

TEST(RandomSelector, UniformOverVisitableNodes) {
  // Four reachable nodes: three stations and the second depot.
  const Instance inst = InstanceBuilder()
                            .cs(0, 0)
                            .cs(5, 0)
                            .bs(10, 0, 12, 4, 6)
                            .bs(0, 10, 12, 4, 6)
                            .bs(7, 7, 12, 4, 6)
                            .ev(48)
                            .build();
  Simulation sim(inst);
  const auto mask = sim.visitable_mask(0);
  ASSERT_EQ(std::count(mask.begin(), mask.end(), 1), 4);
  Rng rng(7);
  std::array<int, 5> counts{};
  const int draws = 100000;
  for (int trial = 0; trial < draws; ++trial) counts[random_node_selector(sim, 0, rng)]++;
  for (int n = 0; n < 3; ++n)
    EXPECT_NEAR(counts[n] / static_cast<double>(draws), 0.25, 0.01);
  EXPECT_NEAR(counts[inst.cs_node(1)] / static_cast<double>(draws), 0.25, 0.01);
}

TEST(RandomSelector, DeterministicGivenSeed) {
  const Instance inst = generate_instance(GenConfig{}, 3);
  Simulation sim(inst);
  Rng a(5), b(5);
  for (int trial = 0; trial < 100; ++trial)
    EXPECT_EQ(random_node_selector(sim, 0, a), random_node_selector(sim, 0, b));
}

TEST(GreedySelector, PicksLowestBatteryStation) {
  const Instance inst = InstanceBuilder()
                            .cs(0, 0)
                            .bs(10, 0, 12, 4, 5.0)
                            .bs(12, 0, 12, 4, 3.1)
                            .bs(8, 0, 12, 4, 9.0)
                            .ev(48)
                            .build();
  Simulation sim(inst);
  EXPECT_EQ(greedy_node_selector(sim, 0), 1);
}

TEST(GreedySelector, FallsBackToNearestChargeStation) {
  // No station reachable: stations sit far away, battery is small.
  const Instance inst = InstanceBuilder()
                            .cs(0, 0)
                            .cs(4, 0)
                            .cs(9, 0)
                            .bs(95, 95, 12, 4, 6)
                            .ev(2.0)
                            .build();
  Simulation sim(inst);
  ASSERT_FALSE(sim.visitable_mask(0)[0]);
  EXPECT_EQ(greedy_node_selector(sim, 0), inst.cs_node(1));  // 4 km beats 9 km
}

TEST(GreedySelector, MatchesBruteForceOracleOnRandomStates) {
  GenConfig cfg;
  cfg.n_bs = 12;
  cfg.n_cs = 4;
  cfg.n_ev = 3;
  cfg.horizon_h = 8.0;
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 10000; ++seed) {
    const Instance inst = generate_instance(cfg, seed);
    run_rollout(inst, [&](const Simulation& sim, int k) {
      const auto mask = sim.visitable_mask(k);
      int oracle = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < inst.n_bs(); ++i)
        if (mask[i] && sim.bs_battery(i) < best) {
          best = sim.bs_battery(i);
          oracle = i;
        }
      if (oracle < 0) {
        double nearest = std::numeric_limits<double>::infinity();
        for (int j = 0; j < inst.n_cs(); ++j) {
          const int node = inst.cs_node(j);
          if (!mask[node]) continue;
          const double d =
              euclidean_distance(sim.ev_position(k), inst.charge_stations[j].position);
          if (d < nearest) {
            nearest = d;
            oracle = node;
          }
        }
      }
      const int got = greedy_node_selector(sim, k);
      EXPECT_EQ(got, oracle);
      EXPECT_TRUE(mask[got]);
      ++checked;
      return got;
    });
  }
  EXPECT_GE(checked, 10000);
}

TEST(BothSelectors, AlwaysReturnVisitableNodes) {
  GenConfig cfg;
  cfg.n_bs = 8;
  cfg.n_cs = 3;
  cfg.n_ev = 2;
  cfg.horizon_h = 6.0;
  Rng rng(13);
  for (std::uint64_t seed = 50; seed < 70; ++seed) {
    const Instance inst = generate_instance(cfg, seed);
    run_rollout(inst, [&](const Simulation& sim, int k) {
      const auto mask = sim.visitable_mask(k);
      const int r = random_node_selector(sim, k, rng);
      EXPECT_TRUE(mask[r]);
      const int g = greedy_node_selector(sim, k);
      EXPECT_TRUE(mask[g]);
      return r;
    });
  }
}
