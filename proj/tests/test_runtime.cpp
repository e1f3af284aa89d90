#include <gtest/gtest.h>

#include <atomic>
#include <cstring>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"

using namespace spchol;

namespace {

TaskGraph independent(std::vector<double> costs) {
  TaskGraph g;
  for (Index i = 0; i < static_cast<Index>(costs.size()); ++i) {
    Task t;
    t.id = i;
    t.cost = costs[i];
    g.tasks.push_back(t);
  }
  compute_priorities(g);
  return g;
}

const TaskBody noop = [](const Task&, Index) {};

// Every task traced once, and each after all of its predecessors ended.
void check_trace(const TaskGraph& g, const std::vector<TraceEvent>& tr) {
  ASSERT_EQ(static_cast<Index>(tr.size()), g.size());
  std::vector<const TraceEvent*> by(g.size(), nullptr);
  for (const auto& e : tr) {
    ASSERT_EQ(by[e.task], nullptr);
    by[e.task] = &e;
    EXPECT_GE(e.end_ns, e.start_ns);
  }
  for (const auto& t : g.tasks)
    for (Index s : t.successors) EXPECT_GE(by[s]->start_ns, by[t.id]->end_ns);
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LE(tr[i - 1].start_ns, tr[i].start_ns);
}

std::vector<double> ones_rhs(const SparseMatrix<double>& a) {
  std::vector<double> one(a.n, 1.0);
  return spmv(a, std::span<const double>(one));
}

double residual(const SparseMatrix<double>& a, const Factorization<double>& f) {
  auto b = ones_rhs(a);
  auto x = f.solve(b);
  return residual_norm(a, std::span<const double>(x), std::span<const double>(b));
}

}  // namespace

TEST(StaticSchedule, ThreeTasksTwoWorkers) {
  auto g = independent({3, 2, 1});
  auto s = static_schedule(g, 2);
  EXPECT_EQ(s.makespan, 3);
  EXPECT_EQ(s.lists[0], std::vector<Index>{0});
  EXPECT_EQ(s.lists[1], (std::vector<Index>{1, 2}));
  EXPECT_EQ(s.makespan, oracle::best_assignment({3, 2, 1}, 2));
}

TEST(StaticSchedule, ChainIsSequential) {
  TaskGraph g = independent({2, 3, 4, 5});
  for (Index i = 0; i < 3; ++i) g.tasks[i].successors.push_back(i + 1);
  compute_priorities(g);
  for (Index w : {1, 2, 5}) EXPECT_EQ(static_schedule(g, w).makespan, 14);
}

TEST(StaticSchedule, HeterogeneousSpeeds) {
  auto g = independent({4, 4});
  auto s = static_schedule(g, 2, {1.0, 2.0});
  EXPECT_EQ(s.worker[0], 1);  // finishes at 2 on the fast worker
  EXPECT_EQ(s.worker[1], 0);  // tie at 4 goes to worker 0
  EXPECT_EQ(s.makespan, 4);
}

TEST(StaticSchedule, RespectsDependenciesAndPanels) {
  auto an = analyze(gen_laplacian(2, {12, 12}));
  auto g = build_taskgraph(an.symbol);
  compute_costs_and_priorities(g, an.symbol);
  auto s = static_schedule(g, 3);
  for (const auto& t : g.tasks)
    for (Index x : t.successors) EXPECT_GE(s.start[x], s.end[t.id]);
  // writes to one panel never overlap in predicted time
  for (const auto& a : g.tasks)
    for (const auto& b : g.tasks)
      if (a.id < b.id && a.writes() == b.writes()) {
        EXPECT_TRUE(s.end[a.id] <= s.start[b.id] || s.end[b.id] <= s.start[a.id]);
      }
  Index placed = 0;
  for (const auto& l : s.lists) placed += static_cast<Index>(l.size());
  EXPECT_EQ(placed, g.size());
}

TEST(ExecuteStatic, TridiagonalTrace) {
  auto a = gen_laplacian(2, {4, 1});
  FactorOptions fo;
  fo.scheduler = SchedulerKind::static_list;
  auto f = factorize(a, AnalysisOptions{OrderingMethod::natural, 64, 0.0, 128, 3}, fo);
  EXPECT_EQ(f.trace.size(), 5u);
  TaskGraph g = build_taskgraph(f.symbol());
  check_trace(g, f.trace);
}

TEST(ExecuteStatic, OneWorkerMatchesSequential) {
  auto a = gen_laplacian(2, {20, 20});
  auto an = std::make_shared<const Analysis>(analyze(a));
  FactorOptions seq;
  seq.scheduler = SchedulerKind::sequential;
  FactorOptions st = seq;
  st.scheduler = SchedulerKind::static_list;
  auto f1 = factorize(a, an, seq), f2 = factorize(a, an, st);
  auto l1 = dense_factor(f1), l2 = dense_factor(f2);
  EXPECT_LE(oracle::max_abs_diff(l1, l2), 1e-12 * oracle::max_abs(l1));
}

TEST(Runtime, DeadlockFreedomRandomDags) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<Index> workers(1, 8), size(1, 60);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = oracle::random_dag(size(rng), 0.1, rng);
    const Index w = workers(rng);
    check_trace(g, execute_static(g, static_schedule(g, w), noop));
    check_trace(g, execute_dynamic(g, w, noop));
  }
}

TEST(Runtime, ErrorsAbortCleanly) {
  std::mt19937_64 rng(5);
  auto g = oracle::random_dag(50, 0.1, rng);
  TaskBody bad = [](const Task& t, Index) {
    if (t.id == 17) throw NotPositiveDefinite(17);
  };
  for (Index w : {1, 3, 8}) {
    EXPECT_THROW(execute_dynamic(g, w, bad), NotPositiveDefinite);
    EXPECT_THROW(execute_static(g, static_schedule(g, w), bad), NotPositiveDefinite);
  }
  EXPECT_THROW(execute_sequential(g, bad), NotPositiveDefinite);
}

TEST(Runtime, NumericErrorFromFactorization) {
  auto a = add_diagonal(gen_laplacian(2, {10, 10}), -3.0);
  for (auto sch : {SchedulerKind::static_list, SchedulerKind::dynamic}) {
    FactorOptions fo;
    fo.scheduler = sch;
    fo.threads = 4;
    EXPECT_THROW(factorize(a, AnalysisOptions{}, fo), NotPositiveDefinite);
  }
}

TEST(Runtime, PanelGuardSerializesWriters) {
  // Many updates into one panel; the body checks exclusive access itself.
  TaskGraph g;
  g.panels.resize(2, {1, 0});
  for (Index i = 0; i < 40; ++i) {
    Task t;
    t.id = i;
    t.kind = TaskKind::update;
    t.src = 0;
    t.dst = 1;
    t.cost = 1;
    g.tasks.push_back(t);
  }
  compute_priorities(g);
  std::atomic<int> inside{0};
  std::atomic<bool> overlap{false};
  TaskBody body = [&](const Task&, Index) {
    if (inside.fetch_add(1) != 0) overlap = true;
    std::this_thread::sleep_for(std::chrono::microseconds(50));
    inside.fetch_sub(1);
  };
  execute_dynamic(g, 4, body);
  EXPECT_FALSE(overlap);
}

TEST(ExecuteDynamic, WideDagUsesEveryWorker) {
  auto g = independent(std::vector<double>(100, 1.0));
  TaskBody body = [](const Task&, Index) { std::this_thread::sleep_for(std::chrono::microseconds(200)); };
  auto tr = execute_dynamic(g, 4, body);
  std::set<Index> used;
  for (const auto& e : tr) used.insert(e.worker);
  EXPECT_EQ(used.size(), 4u);
}

TEST(ExecuteDynamic, OneWorkerMatchesSequential) {
  auto a = gen_laplacian(3, {6, 6, 6});
  auto an = std::make_shared<const Analysis>(analyze(a));
  FactorOptions seq;
  seq.scheduler = SchedulerKind::sequential;
  FactorOptions dyn = seq;
  dyn.scheduler = SchedulerKind::dynamic;
  auto l1 = dense_factor(factorize(a, an, seq)), l2 = dense_factor(factorize(a, an, dyn));
  EXPECT_LE(oracle::max_abs_diff(l1, l2), 1e-12 * oracle::max_abs(l1));
}

TEST(ExecuteDynamic, ResidualAcrossWorkerCounts) {
  auto a = gen_laplacian(2, {32, 32});
  auto an = std::make_shared<const Analysis>(analyze(a));
  for (Index w : {1, 2, 4, 8}) {
    FactorOptions fo;
    fo.threads = w;
    auto f = factorize(a, an, fo);
    check_trace(build_taskgraph(an->symbol), f.trace);
    EXPECT_LE(residual(a, f), 1e-11) << w;
  }
}

TEST(Runtime, AnyTopologicalOrderGivesSameFactor) {
  auto a = gen_laplacian(2, {12, 12});
  auto an = analyze(a);
  const auto& s = an.symbol;
  auto g = build_taskgraph(s);
  auto pa = permute_symmetric(a, an.perm.perm);
  auto run = [&](std::vector<Index> order) {
    auto store = allocate_panels(s, pa);
    FactorBody<double> body(s, store, FactorForm::llt, KernelVariant::buffered, 0.0, 1);
    execute_sequential(g, [&](const Task& t, Index w) { body(t, w); }, order);
    return gather_lower(s, store);
  };
  auto ref = run({});
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    // random topological order: Kahn with random picks
    auto count = g.predecessor_counts();
    std::vector<Index> ready, order;
    for (Index t = 0; t < g.size(); ++t)
      if (count[t] == 0) ready.push_back(t);
    while (!ready.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, ready.size() - 1);
      std::size_t k = pick(rng);
      Index t = ready[k];
      ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(k));
      order.push_back(t);
      for (Index x : g.tasks[t].successors)
        if (--count[x] == 0) ready.push_back(x);
    }
    auto l = run(order);
    EXPECT_LE(oracle::max_abs_diff(l, ref), 1e-12 * oracle::max_abs(ref));
  }
  std::vector<Index> bad(g.size());
  std::iota(bad.rbegin(), bad.rend(), 0);
  EXPECT_THROW(run(bad), StructuralError);
}

TEST(ExecuteDynamic, DeterministicIsBitwiseReproducible) {
  auto a = gen_laplacian(3, {8, 8, 8});
  auto an = std::make_shared<const Analysis>(analyze(a));
  FactorOptions fo;
  fo.threads = 4;
  fo.deterministic = true;
  auto first = factorize(a, an, fo);
  for (int rep = 0; rep < 4; ++rep) {
    auto again = factorize(a, an, fo);
    ASSERT_EQ(std::memcmp(first.store.raw().data(), again.store.raw().data(),
                          first.store.raw().size() * sizeof(double)),
              0);
  }
}

TEST(TraceCsv, EmptyAndRoundTrip) {
  std::ostringstream empty;
  write_trace_csv(empty, {});
  EXPECT_EQ(empty.str(), "task_id,kind,src,dst,worker,start_ns,end_ns\n");

  auto a = gen_laplacian(2, {4, 1});
  FactorOptions fo;
  fo.scheduler = SchedulerKind::static_list;
  auto f = factorize(a, AnalysisOptions{OrderingMethod::natural, 64, 0.0, 128, 3}, fo);
  std::ostringstream out;
  write_trace_csv(out, f.trace);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
  std::istringstream in(text);
  EXPECT_EQ(read_trace_csv(in), f.trace);
}
