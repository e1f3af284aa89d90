#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace spchol;

namespace {

Analysis natural(const SparseMatrix<double>& a) {
  return analyze(a, AnalysisOptions{OrderingMethod::natural, 64, 0.0, 1 << 20, 3});
}

TaskGraph chain(std::vector<double> costs) {
  TaskGraph g;
  for (Index i = 0; i < static_cast<Index>(costs.size()); ++i) {
    Task t;
    t.id = i;
    t.cost = costs[i];
    if (i + 1 < static_cast<Index>(costs.size())) t.successors.push_back(i + 1);
    g.tasks.push_back(t);
  }
  compute_priorities(g);
  return g;
}

std::string exported(const TaskGraph& g) {
  std::ostringstream out;
  export_dag(out, g);
  return out.str();
}

TaskGraph reload(const std::string& text) {
  std::istringstream in(text);
  return load_dag(in);
}

}  // namespace

TEST(TaskGraph, DenseSinglePanel) {
  std::mt19937_64 rng(1);
  auto an = natural(oracle::random_spd(6, 1.0, rng));
  auto g = build_taskgraph(an.symbol);
  EXPECT_EQ(g.size(), 1);
  EXPECT_EQ(g.edge_count(), 0);
}

TEST(TaskGraph, Tridiagonal) {
  auto an = natural(gen_laplacian(2, {4, 1}));
  auto g = build_taskgraph(an.symbol);
  ASSERT_EQ(g.size(), 5);
  // F0 U(0->1) F1 U(1->2) F2
  EXPECT_EQ(g.tasks[0].kind, TaskKind::factor);
  EXPECT_EQ(g.tasks[1].kind, TaskKind::update);
  EXPECT_EQ(g.tasks[1].src, 0);
  EXPECT_EQ(g.tasks[1].dst, 1);
  for (Index t = 0; t < 4; ++t) EXPECT_EQ(g.tasks[t].successors, std::vector<Index>{t + 1});
  EXPECT_TRUE(g.tasks[4].successors.empty());
  EXPECT_EQ(g.edge_count(), 4);
  EXPECT_EQ(g.roots(), std::vector<Index>{0});
}

TEST(TaskGraph, CountsMatchEnumeration) {
  for (auto a : {gen_laplacian(2, {8, 8}), gen_laplacian(3, {5, 5, 5})}) {
    auto an = analyze(a, AnalysisOptions{OrderingMethod::nested_dissection, 8, 0.12, 4, 3});
    auto g = build_taskgraph(an.symbol);
    std::set<std::pair<Index, Index>> couples;
    for (Index p = 0; p < an.symbol.panel_count(); ++p)
      for (const auto& b : an.symbol.offdiag_blocks(p)) couples.insert({p, b.facing});
    Index factors = 0, updates = 0;
    for (const auto& t : g.tasks) {
      if (t.kind == TaskKind::factor) ++factors;
      else {
        ++updates;
        EXPECT_TRUE(couples.count({t.src, t.dst}));
        EXPECT_LT(t.src, t.dst);
      }
    }
    EXPECT_EQ(factors, an.symbol.panel_count());
    EXPECT_EQ(updates, static_cast<Index>(couples.size()));
    EXPECT_EQ(g.edge_count(), 2 * updates);
    EXPECT_LE(g.size(), an.symbol.panel_count() + an.symbol.offdiag_block_count());
    EXPECT_NO_THROW(g.topological_order());
  }
}

TEST(TaskGraph, CostConservation) {
  auto a = gen_laplacian(3, {7, 7, 7});
  for (auto form : {FactorForm::llt, FactorForm::ldlt}) {
    auto an = analyze(a);
    auto g = build_taskgraph(an.symbol);
    compute_costs_and_priorities(g, an.symbol, form);
    EXPECT_DOUBLE_EQ(total_cost(g), symbol_flops(an.symbol, form));
  }
  // LL^T total is the per-column count sum |struct(j)|^2 of the exact symbol.
  auto an = analyze(a, AnalysisOptions{OrderingMethod::nested_dissection, 64, 0.0, 1 << 20, 3});
  double ref = 0;
  auto pa = permute_symmetric(a, an.perm.perm);
  auto cs = symbolic_factorize(pa, an.etree);
  for (const auto& c : cs.cols) ref += static_cast<double>(c.size() * c.size());
  EXPECT_EQ(symbol_flops(an.symbol), ref);
}

TEST(Priorities, SingleAndChain) {
  auto one = chain({4});
  EXPECT_EQ(one.tasks[0].priority, 4);
  auto g = chain({5, 2, 1});
  EXPECT_EQ(g.tasks[0].priority, 8);
  EXPECT_EQ(g.tasks[1].priority, 3);
  EXPECT_EQ(g.tasks[2].priority, 1);
}

TEST(Priorities, RandomDagMatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto g = oracle::random_dag(20, 0.15, rng);
    auto ref = oracle::longest_paths(g);
    for (Index t = 0; t < g.size(); ++t) EXPECT_EQ(g.tasks[t].priority, ref[t]);
  }
}

TEST(TaskGraph, CycleDetected) {
  auto g = chain({1, 1, 1});
  g.tasks[2].successors.push_back(0);
  EXPECT_THROW(g.topological_order(), CycleError);
  EXPECT_THROW(compute_priorities(g), CycleError);
}

TEST(UpdateChains, OrderSourcesAscending) {
  auto an = analyze(gen_laplacian(2, {10, 10}));
  auto g = build_taskgraph(an.symbol);
  compute_costs_and_priorities(g, an.symbol);
  auto d = with_update_chains(g);
  EXPECT_NO_THROW(d.topological_order());
  EXPECT_GT(d.edge_count(), g.edge_count());
  std::map<Index, std::vector<Index>> into;
  for (const auto& t : g.tasks)
    if (t.kind == TaskKind::update) into[t.dst].push_back(t.id);
  for (auto& [q, ids] : into)
    for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
      const auto& succ = d.tasks[ids[k]].successors;
      EXPECT_TRUE(std::find(succ.begin(), succ.end(), ids[k + 1]) != succ.end());
    }
}

TEST(DagFormat, EmptyGraphIsHeaderOnly) {
  TaskGraph g;
  EXPECT_EQ(exported(g), "# spchol dag schema=1\ntasks 0 edges 0 panels 0\n");
  EXPECT_EQ(reload(exported(g)), g);
}

TEST(DagFormat, TridiagonalLines) {
  auto an = natural(gen_laplacian(2, {4, 1}));
  auto g = build_taskgraph(an.symbol);
  compute_costs_and_priorities(g, an.symbol);
  std::istringstream in(exported(g));
  std::string line;
  int tasks = 0, edges = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string w; ss >> w;) tok.push_back(w);
    if (tok.size() == 5 && tok[0] != "panel") ++tasks;
    if (tok.size() == 2) ++edges;
  }
  EXPECT_EQ(tasks, 5);
  EXPECT_EQ(edges, 4);
}

TEST(DagFormat, RoundTrip) {
  auto an = analyze(gen_laplacian(3, {6, 6, 6}));
  auto g = build_taskgraph(an.symbol);
  compute_costs_and_priorities(g, an.symbol);
  auto back = reload(exported(g));
  EXPECT_EQ(back, g);
  for (Index t = 0; t < g.size(); ++t) EXPECT_EQ(back.tasks[t].priority, g.tasks[t].priority);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto r = oracle::random_dag(30, 0.1, rng);
    for (auto& t : r.tasks) t.cost = std::uniform_real_distribution<double>(0, 1e9)(rng);
    EXPECT_EQ(reload(exported(r)), r);
  }
}

TEST(DagFormat, Errors) {
  EXPECT_THROW(reload(""), ParseError);
  EXPECT_THROW(reload("# spchol dag schema=2\ntasks 0 edges 0 panels 0\n"), ParseError);
  EXPECT_THROW(reload("# spchol dag schema=1\ntasks 2 edges 0 panels 0\n0 factor -1 -1 1\n"),
               ParseError);
  EXPECT_THROW(reload("# spchol dag schema=1\ntasks 1 edges 0 panels 0\n0 solve -1 -1 1\n"),
               ParseError);
  EXPECT_THROW(reload("# spchol dag schema=1\ntasks 1 edges 1 panels 0\n0 factor -1 -1 1\n0 3\n"),
               ParseError);
  const std::string cyc =
      "# spchol dag schema=1\ntasks 2 edges 2 panels 0\n0 factor -1 -1 1\n1 update -1 -1 1\n"
      "0 1\n1 0\n";
  EXPECT_THROW(reload(cyc), CycleError);
}
