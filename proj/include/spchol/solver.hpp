#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spchol/hetero_sim.hpp"
#include "spchol/kernels.hpp"
#include "spchol/ordering.hpp"
#include "spchol/panel_store.hpp"
#include "spchol/runtime.hpp"
#include "spchol/solve.hpp"
#include "spchol/symbolic.hpp"
#include "spchol/taskgraph.hpp"

namespace spchol {

enum class OrderingMethod { nested_dissection, natural };

struct AnalysisOptions {
  OrderingMethod ordering = OrderingMethod::nested_dissection;
  Index nd_leaf = 64;
  double amalgamation = 0.12;
  Index split_width = 128;
  Index split_levels = 3;
};

// Everything that depends on the pattern only.
struct Analysis {
  Index n = 0;
  Permutation perm;  // original -> factor numbering
  EliminationTree etree;
  std::vector<Index> separator_sizes;  // one per separator-tree node, empty for natural
  Index nnz_l_exact = 0;               // before amalgamation
  Index supernodes = 0;
  Index panels_amalgamated = 0;
  SymbolStructure symbol;
};

template <typename Scalar>
Analysis analyze(const SparseMatrix<Scalar>& a, const AnalysisOptions& opt = {}) {
  auto sym = symmetrize_pattern(a);
  Analysis an;
  an.n = sym.n;
  Permutation p = Permutation::identity(sym.n);
  if (opt.ordering == OrderingMethod::nested_dissection) {
    auto nd = nested_dissection(adjacency_graph(sym), opt.nd_leaf);
    for (const auto& node : nd.tree.nodes)
      if (!node.children.empty()) an.separator_sizes.push_back(static_cast<Index>(node.vertices.size()));
    p = std::move(nd.perm);
  }
  auto first = permute_symmetric(sym, p.perm);
  auto [post, tree] = postorder_permute(elimination_tree(first), p);
  an.perm = std::move(post);
  an.etree = std::move(tree);
  auto permuted = permute_symmetric(sym, an.perm.perm);
  auto cs = symbolic_factorize(permuted, an.etree);
  an.nnz_l_exact = cs.nnz();
  auto panels = find_supernodes(cs, an.etree);
  an.supernodes = panels.count();
  panels = amalgamate(panels, cs, opt.amalgamation);
  an.panels_amalgamated = panels.count();
  cs = panel_closure(panels, cs);
  panels = split_panels(panels, cs, opt.split_width, opt.split_levels);
  an.symbol = build_symbol(panels, cs);
  return an;
}

enum class SchedulerKind { sequential, static_list, dynamic };

inline const char* to_string(SchedulerKind s) {
  switch (s) {
    case SchedulerKind::sequential: return "sequential";
    case SchedulerKind::static_list: return "static";
    case SchedulerKind::dynamic: return "dynamic";
  }
  return "?";
}

struct FactorOptions {
  FactorForm form = FactorForm::llt;
  SchedulerKind scheduler = SchedulerKind::dynamic;
  Index threads = 1;
  KernelVariant kernel = KernelVariant::buffered;
  bool deterministic = false;  // chain updates into each panel by source
  double pivot_scale = 1e-13;  // threshold = pivot_scale * max |a_ii|
};

template <typename Scalar>
struct Factorization {
  std::shared_ptr<const Analysis> analysis;
  FactorForm form = FactorForm::llt;
  PanelStore<Scalar> store;
  std::vector<TraceEvent> trace;
  double flops = 0;
  double seconds = 0;

  const SymbolStructure& symbol() const { return analysis->symbol; }

  std::vector<Scalar> solve(std::span<const Scalar> b) const {
    return supernodal_solve(analysis->symbol, store, analysis->perm, b, form);
  }
};

// Task body doing the numeric work; one WorkBuffer per worker.
template <typename Scalar>
class FactorBody {
 public:
  FactorBody(const SymbolStructure& s, PanelStore<Scalar>& store, FactorForm form,
             KernelVariant kernel, double threshold, Index workers)
      : s_(s), store_(store), form_(form), kernel_(kernel), threshold_(threshold) {
    const auto cap = max_update_buffer(s);
    for (Index w = 0; w < workers; ++w) bufs_.emplace_back(cap);
  }

  void operator()(const Task& t, Index worker) {
    if (t.kind == TaskKind::factor) {
      factor_panel(s_, store_, t.src, form_, threshold_);
    } else if (kernel_ == KernelVariant::buffered) {
      update_buffered(s_, store_, t.src, t.block, bufs_[worker], form_);
    } else {
      update_scatter_direct(s_, store_, t.src, t.block, form_);
    }
  }

 private:
  const SymbolStructure& s_;
  PanelStore<Scalar>& store_;
  FactorForm form_;
  KernelVariant kernel_;
  double threshold_;
  std::vector<WorkBuffer<Scalar>> bufs_;
};

template <typename Scalar>
Factorization<Scalar> factorize(const SparseMatrix<Scalar>& a,
                                std::shared_ptr<const Analysis> an, const FactorOptions& opt = {}) {
  if (opt.threads < 1) throw std::invalid_argument("threads must be >= 1");
  auto sym = symmetrize_pattern(a);
  if (sym.n != an->n) throw std::invalid_argument("matrix does not match its analysis");
  Factorization<Scalar> f;
  f.analysis = an;
  f.form = opt.form;
  const auto& s = an->symbol;
  f.store = allocate_panels(s, permute_symmetric(sym, an->perm.perm));

  TaskGraph g = build_taskgraph(s);
  compute_costs_and_priorities(g, s, opt.form);
  f.flops = total_cost(g);
  if (opt.deterministic) g = with_update_chains(std::move(g));

  const double threshold = opt.pivot_scale * max_abs_diagonal(sym);
  const Index workers = opt.scheduler == SchedulerKind::sequential ? 1 : opt.threads;
  FactorBody<Scalar> body(s, f.store, opt.form, opt.kernel, threshold, workers);
  TaskBody run = [&body](const Task& t, Index w) { body(t, w); };

  const auto t0 = std::chrono::steady_clock::now();
  switch (opt.scheduler) {
    case SchedulerKind::sequential: f.trace = execute_sequential(g, run); break;
    case SchedulerKind::static_list:
      f.trace = execute_static(g, static_schedule(g, workers), run);
      break;
    case SchedulerKind::dynamic: f.trace = execute_dynamic(g, workers, run); break;
  }
  f.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return f;
}

template <typename Scalar>
Factorization<Scalar> factorize(const SparseMatrix<Scalar>& a, const AnalysisOptions& aopt = {},
                                const FactorOptions& fopt = {}) {
  return factorize(a, std::make_shared<const Analysis>(analyze(a, aopt)), fopt);
}

// Dense n x n copy of L (unit lower for LDL^T, with D on its diagonal).
template <typename Scalar>
std::vector<Scalar> dense_factor(const Factorization<Scalar>& f) {
  return gather_lower(f.symbol(), f.store);
}

}  // namespace spchol
