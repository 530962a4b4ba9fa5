#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "symcon/network.hpp"

using namespace symcon;

namespace {

ColoredGraph to_library(const oracle::Graph& g) {
  ColoredGraph c;
  c.n = g.n;
  c.color = g.color;
  c.edges = g.edges;
  return c;
}

}  // namespace

TEST_CASE("balance agrees with the oracle on random partitions") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 9;
    auto g = oracle::random_graph(rng, n, trial % 2 == 0);
    std::vector<int> p(n);
    std::uniform_int_distribution<int> c(0, 2);
    for (auto& v : p) v = c(rng);
    p = oracle::canonical(p);
    Partition lp{p, *std::max_element(p.begin(), p.end()) + 1};
    CHECK(is_balanced(to_library(g), lp) == oracle::balanced(g, p));
  }
}

TEST_CASE("coarsest balanced partition matches brute force") {
  std::mt19937_64 rng(5);
  int nontrivial = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 8;
    auto g = oracle::random_graph(rng, n, trial % 3 != 0);
    const auto got = coarsest_balanced_partition(to_library(g));
    const auto want = oracle::brute_force_coarsest(g);
    CHECK(got.cluster_of == want);
    CHECK(oracle::refine_coarsest(g) == want);
    if (got.count < n) ++nontrivial;
  }
  CHECK(nontrivial >= 20);
}

TEST_CASE("merging any two clusters of the coarsest partition breaks balance") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto g = oracle::random_graph(rng, 10 + trial % 11, true);
    const auto p = coarsest_balanced_partition(to_library(g));
    CHECK(oracle::balanced(g, p.cluster_of));
    CHECK(p.cluster_of == oracle::refine_coarsest(g));
    for (int a = 0; a < p.count; ++a)
      for (int b = a + 1; b < p.count; ++b) {
        auto merged = p.cluster_of;
        for (auto& v : merged)
          if (v == b) v = a;
        CHECK_FALSE(oracle::balanced(g, oracle::canonical(merged)));
      }
  }
}
