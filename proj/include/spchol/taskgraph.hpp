#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spchol/kernels.hpp"
#include "spchol/symbolic.hpp"

namespace spchol {

enum class TaskKind { factor, update };

inline const char* to_string(TaskKind k) { return k == TaskKind::factor ? "factor" : "update"; }

struct Task {
  Index id = 0;
  TaskKind kind = TaskKind::factor;
  Index src = kNone;    // panel p
  Index dst = kNone;    // facing panel q (== src for a factor task)
  Index block = kNone;  // first block of p facing q; kNone when loaded from a file
  double cost = 0;
  double priority = 0;
  std::vector<Index> successors;

  // Panel whose storage this task writes.
  Index writes() const { return kind == TaskKind::factor ? src : dst; }
};

// Dimensions of a panel's dense storage, kept with the graph so that the
// simulator and the exported file need no symbol.
struct PanelGeometry {
  Index width = 0;
  Index height = 0;  // off-diagonal rows

  Index rows() const { return width + height; }
  bool operator==(const PanelGeometry&) const = default;
};

struct TaskGraph {
  std::vector<Task> tasks;
  std::vector<PanelGeometry> panels;
  std::vector<Index> factor_task;       // per panel
  std::vector<Index> incoming_updates;  // per panel

  Index size() const { return static_cast<Index>(tasks.size()); }

  Index edge_count() const {
    Index e = 0;
    for (const auto& t : tasks) e += static_cast<Index>(t.successors.size());
    return e;
  }

  std::vector<Index> predecessor_counts() const {
    std::vector<Index> count(tasks.size(), 0);
    for (const auto& t : tasks)
      for (Index s : t.successors) ++count[s];
    return count;
  }

  std::vector<std::vector<Index>> predecessors() const {
    std::vector<std::vector<Index>> pred(tasks.size());
    for (const auto& t : tasks)
      for (Index s : t.successors) pred[s].push_back(t.id);
    return pred;
  }

  std::vector<Index> roots() const {
    auto count = predecessor_counts();
    std::vector<Index> r;
    for (Index t = 0; t < size(); ++t)
      if (count[t] == 0) r.push_back(t);
    return r;
  }

  // Kahn peeling, smallest ready id first. Throws CycleError if some task is
  // never released.
  std::vector<Index> topological_order() const {
    auto count = predecessor_counts();
    std::vector<Index> ready, order;
    for (Index t = size() - 1; t >= 0; --t)
      if (count[t] == 0) ready.push_back(t);
    while (!ready.empty()) {
      std::pop_heap(ready.begin(), ready.end(), std::greater<>{});
      Index t = ready.back();
      ready.pop_back();
      order.push_back(t);
      for (Index s : tasks[t].successors)
        if (--count[s] == 0) {
          ready.push_back(s);
          std::push_heap(ready.begin(), ready.end(), std::greater<>{});
        }
    }
    if (static_cast<Index>(order.size()) != size())
      throw CycleError("task graph has a cycle (" + std::to_string(size() - order.size()) +
                       " tasks never become ready)");
    return order;
  }

  // Structural equality: ids, kinds, panels, costs, successor lists and
  // panel geometry. Priorities are derived and not compared.
  bool operator==(const TaskGraph& o) const {
    if (tasks.size() != o.tasks.size() || panels != o.panels) return false;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto &a = tasks[i], &b = o.tasks[i];
      if (a.id != b.id || a.kind != b.kind || a.src != b.src || a.dst != b.dst ||
          a.cost != b.cost || a.successors != b.successors)
        return false;
    }
    return true;
  }
};

namespace detail {

struct ReadyOrder {
  const TaskGraph* g;
  // max-heap on priority, then lowest id
  bool operator()(Index a, Index b) const {
    const double pa = g->tasks[a].priority, pb = g->tasks[b].priority;
    if (pa != pb) return pa < pb;
    return a > b;
  }
};

}  // namespace detail

// One factor task per panel followed by its update tasks, one per facing
// panel in ascending order; edges F(p) -> U(p->q) -> F(q). Ids ascend with p,
// so id order is already topological.
inline TaskGraph build_taskgraph(const SymbolStructure& s) {
  TaskGraph g;
  const Index np = s.panel_count();
  g.panels.resize(np);
  g.factor_task.assign(np, kNone);
  g.incoming_updates.assign(np, 0);
  for (Index p = 0; p < np; ++p) {
    g.panels[p] = {s.panels[p].width(), s.panels[p].offdiag_height()};
    const Index f = g.size();
    g.factor_task[p] = f;
    g.tasks.push_back({f, TaskKind::factor, p, p, kNone, 0, 0, {}});
    const auto& pn = s.panels[p];
    for (Index b = pn.first_block + 1; b < pn.last_block;) {
      auto u = update_shape(s, p, b);
      const Index id = g.size();
      g.tasks[f].successors.push_back(id);
      g.tasks.push_back({id, TaskKind::update, p, u.dst, b, 0, 0, {}});
      ++g.incoming_updates[u.dst];
      b = u.end_block;
    }
  }
  for (auto& t : g.tasks)
    if (t.kind == TaskKind::update) t.successors.push_back(g.factor_task[t.dst]);
  return g;
}

// Longest path to a sink, cost included.
inline void compute_priorities(TaskGraph& g) {
  auto order = g.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& t = g.tasks[*it];
    double tail = 0;
    for (Index s : t.successors) tail = std::max(tail, g.tasks[s].priority);
    t.priority = t.cost + tail;
  }
}

inline double task_flops(const SymbolStructure& s, const Task& t, FactorForm form) {
  const auto& pn = s.panels[t.src];
  if (t.kind == TaskKind::factor) {
    const Index w = pn.width(), h = pn.offdiag_height();
    return flops_potrf(w) + (form == FactorForm::ldlt ? flops_ldlt_trsm(h, w) : flops_trsm(h, w));
  }
  auto u = update_shape(s, t.src, t.block);
  return form == FactorForm::ldlt ? flops_ldlt_update(u.m, u.n, u.k)
                                  : flops_update(u.m, u.n, u.k);
}

inline void compute_costs_and_priorities(TaskGraph& g, const SymbolStructure& s,
                                         FactorForm form = FactorForm::llt) {
  for (auto& t : g.tasks) t.cost = task_flops(s, t, form);
  compute_priorities(g);
}

inline double total_cost(const TaskGraph& g) {
  double sum = 0;
  for (const auto& t : g.tasks) sum += t.cost;
  return sum;
}

// Flop total straight from the symbol, independent of the task split.
inline double symbol_flops(const SymbolStructure& s, FactorForm form = FactorForm::llt) {
  double sum = 0;
  for (Index p = 0; p < s.panel_count(); ++p) {
    const auto& pn = s.panels[p];
    const Index w = pn.width(), h = pn.offdiag_height();
    sum += flops_potrf(w) + (form == FactorForm::ldlt ? flops_ldlt_trsm(h, w) : flops_trsm(h, w));
    for (Index b = pn.first_block + 1; b < pn.last_block;) {
      auto u = update_shape(s, p, b);
      sum += form == FactorForm::ldlt ? flops_ldlt_update(u.m, u.n, u.k)
                                      : flops_update(u.m, u.n, u.k);
      b = u.end_block;
    }
  }
  return sum;
}

// Adds U(p1->q) -> U(p2->q) for consecutive sources p1 < p2 of every panel,
// which fixes the accumulation order into each destination.
inline TaskGraph with_update_chains(TaskGraph g) {
  std::vector<Index> last(g.panels.size(), kNone);
  for (auto& t : g.tasks) {
    if (t.kind != TaskKind::update) continue;
    Index& prev = last[t.dst];
    if (prev != kNone) g.tasks[prev].successors.push_back(t.id);
    prev = t.id;
  }
  for (auto& t : g.tasks) std::sort(t.successors.begin(), t.successors.end());
  compute_priorities(g);
  return g;
}

// ---------------------------------------------------------------------------
// Text format:
//   # spchol dag schema=1
//   tasks N edges E panels P
//   panel <id> <width> <height>        (P lines)
//   <id> factor|update <p> <q> <cost>  (N lines)
//   <src> <dst>                        (E lines)
// ---------------------------------------------------------------------------

inline void export_dag(std::ostream& out, const TaskGraph& g) {
  out << "# spchol dag schema=1\n";
  out << "tasks " << g.size() << " edges " << g.edge_count() << " panels " << g.panels.size()
      << '\n';
  for (std::size_t p = 0; p < g.panels.size(); ++p)
    out << "panel " << p << ' ' << g.panels[p].width << ' ' << g.panels[p].height << '\n';
  for (const auto& t : g.tasks)
    out << t.id << ' ' << to_string(t.kind) << ' ' << t.src << ' ' << t.dst << ' '
        << format_double(t.cost) << '\n';
  for (const auto& t : g.tasks)
    for (Index s : t.successors) out << t.id << ' ' << s << '\n';
}

inline void export_dag(const std::string& path, const TaskGraph& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  export_dag(out, g);
}

namespace detail {

inline double parse_double(const std::string& tok, Index line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError("bad number '" + tok + "'", line);
  return v;
}

}  // namespace detail

inline TaskGraph load_dag(std::istream& in) {
  std::string line;
  Index lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(std::string("unexpected end of file, expected ") + what, lineno + 1);
    ++lineno;
    return std::istringstream(line);
  };

  {
    auto ss = next("header");
    std::string hash, tag, schema;
    ss >> hash >> tag >> schema;
    if (hash != "#" || tag != "spchol" || schema != "dag")
      throw ParseError("missing '# spchol dag schema=1' header", lineno);
    std::string version;
    ss >> version;
    if (version != "schema=1") throw ParseError("unsupported schema '" + version + "'", lineno);
  }
  Index nt = 0, ne = 0, np = 0;
  {
    auto ss = next("counts");
    std::string a, b, c;
    if (!(ss >> a >> nt >> b >> ne >> c >> np) || a != "tasks" || b != "edges" || c != "panels" ||
        nt < 0 || ne < 0 || np < 0)
      throw ParseError("malformed counts line", lineno);
  }
  TaskGraph g;
  g.panels.resize(np);
  for (Index p = 0; p < np; ++p) {
    auto ss = next("panel line");
    std::string tag;
    Index id = 0;
    PanelGeometry geo;
    if (!(ss >> tag >> id >> geo.width >> geo.height) || tag != "panel" || id != p ||
        geo.width < 0 || geo.height < 0)
      throw ParseError("malformed panel line", lineno);
    g.panels[p] = geo;
  }
  g.factor_task.assign(np, kNone);
  g.incoming_updates.assign(np, 0);
  auto panel_ok = [&](Index p) { return np == 0 ? p >= kNone : (p >= 0 && p < np); };
  for (Index i = 0; i < nt; ++i) {
    auto ss = next("task line");
    Task t;
    std::string kind, cost;
    if (!(ss >> t.id >> kind >> t.src >> t.dst >> cost)) throw ParseError("malformed task line", lineno);
    if (t.id != i) throw ParseError("task ids must be 0..N-1 in order", lineno);
    if (kind == "factor") t.kind = TaskKind::factor;
    else if (kind == "update") t.kind = TaskKind::update;
    else throw ParseError("unknown task kind '" + kind + "'", lineno);
    if (!panel_ok(t.src) || !panel_ok(t.dst)) throw ParseError("panel id out of range", lineno);
    t.cost = detail::parse_double(cost, lineno);
    if (!(t.cost >= 0)) throw ParseError("negative cost", lineno);
    if (t.kind == TaskKind::factor && t.src >= 0) g.factor_task[t.src] = t.id;
    if (t.kind == TaskKind::update && t.dst >= 0) ++g.incoming_updates[t.dst];
    g.tasks.push_back(std::move(t));
  }
  for (Index e = 0; e < ne; ++e) {
    auto ss = next("edge line");
    Index a = 0, b = 0;
    if (!(ss >> a >> b)) throw ParseError("malformed edge line", lineno);
    if (a < 0 || a >= nt || b < 0 || b >= nt) throw ParseError("edge endpoint out of range", lineno);
    g.tasks[a].successors.push_back(b);
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      throw ParseError("trailing content", lineno);
  }
  compute_priorities(g);  // throws CycleError
  return g;
}

inline TaskGraph load_dag(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_dag(in);
}

}  // namespace spchol
