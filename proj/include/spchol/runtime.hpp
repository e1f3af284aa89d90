#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <queue>
#include <sstream>
#include <thread>
#include <vector>

#include "spchol/taskgraph.hpp"

namespace spchol {

// body(task, worker) does the actual work of one task.
using TaskBody = std::function<void(const Task&, Index)>;

struct TraceEvent {
  Index task = 0;
  TaskKind kind = TaskKind::factor;
  Index src = kNone;
  Index dst = kNone;
  Index worker = 0;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;

  bool operator==(const TraceEvent&) const = default;
};

// ---------------------------------------------------------------------------
// Static list scheduling.
// ---------------------------------------------------------------------------

struct StaticSchedule {
  std::vector<std::vector<Index>> lists;  // per worker, in execution order
  std::vector<Index> worker;              // per task
  std::vector<double> start, end;         // predicted, flops / speed
  double makespan = 0;
};

// Picks the ready task of highest priority and places it on the worker that
// completes it first. A task may not start before its predecessors end nor
// before the last write to the panel it writes has finished.
inline StaticSchedule static_schedule(const TaskGraph& g, Index workers,
                                      std::vector<double> speeds = {}) {
  if (workers < 1) throw std::invalid_argument("static_schedule needs at least one worker");
  if (speeds.empty()) speeds.assign(workers, 1.0);
  if (static_cast<Index>(speeds.size()) != workers)
    throw std::invalid_argument("one speed per worker required");
  for (double s : speeds)
    if (!(s > 0)) throw std::invalid_argument("worker speeds must be positive");

  const Index n = g.size();
  StaticSchedule sch;
  sch.lists.resize(workers);
  sch.worker.assign(n, kNone);
  sch.start.assign(n, 0);
  sch.end.assign(n, 0);
  std::vector<double> avail(workers, 0), write_end(g.panels.size(), 0);
  std::vector<double> ready_at(n, 0);
  auto missing = g.predecessor_counts();

  std::priority_queue<Index, std::vector<Index>, detail::ReadyOrder> ready(detail::ReadyOrder{&g});
  for (Index t = 0; t < n; ++t)
    if (missing[t] == 0) ready.push(t);
  while (!ready.empty()) {
    const Index t = ready.top();
    ready.pop();
    const auto& task = g.tasks[t];
    double earliest = ready_at[t];
    const Index w_panel = task.writes();
    const bool tracked = w_panel >= 0 && w_panel < static_cast<Index>(write_end.size());
    if (tracked) earliest = std::max(earliest, write_end[w_panel]);
    Index best = 0;
    double best_end = 0, best_start = 0;
    for (Index w = 0; w < workers; ++w) {
      const double st = std::max(avail[w], earliest);
      const double en = st + task.cost / speeds[w];
      if (w == 0 || en < best_end) {
        best = w;
        best_end = en;
        best_start = st;
      }
    }
    sch.worker[t] = best;
    sch.start[t] = best_start;
    sch.end[t] = best_end;
    sch.lists[best].push_back(t);
    avail[best] = best_end;
    if (tracked) write_end[w_panel] = best_end;
    sch.makespan = std::max(sch.makespan, best_end);
    for (Index s : task.successors) {
      ready_at[s] = std::max(ready_at[s], best_end);
      if (--missing[s] == 0) ready.push(s);
    }
  }
  if (static_cast<Index>(std::count(sch.worker.begin(), sch.worker.end(), kNone)) != 0)
    throw CycleError("task graph has a cycle");
  return sch;
}

// ---------------------------------------------------------------------------
// Shared execution state.
// ---------------------------------------------------------------------------

namespace detail {

class ExecutionState {
 public:
  ExecutionState(const TaskGraph& g, Index workers)
      : g_(g),
        remaining_(g.size()),
        guards_(g.panels.size()),
        writer_(g.panels.size()),
        traces_(workers),
        t0_(std::chrono::steady_clock::now()) {
    auto count = g.predecessor_counts();
    for (Index t = 0; t < g.size(); ++t) remaining_[t].store(count[t], std::memory_order_relaxed);
    for (auto& w : writer_) w.store(0, std::memory_order_relaxed);
  }

  const TaskGraph& graph() const { return g_; }
  bool ready(Index t) const { return remaining_[t].load(std::memory_order_acquire) == 0; }
  bool aborted() const { return abort_.load(std::memory_order_acquire); }

  // Runs one task under its panel guard and records a trace event.
  void run(Index t, Index worker, const TaskBody& body) {
    const auto& task = g_.tasks[t];
    const Index p = task.writes();
    const bool guarded = p >= 0 && p < static_cast<Index>(guards_.size());
    std::unique_lock<std::mutex> lock;
    if (guarded) {
      lock = std::unique_lock<std::mutex>(guards_[p]);
      if (writer_[p].exchange(1, std::memory_order_acq_rel) != 0)
        throw StructuralError("two tasks writing panel " + std::to_string(p) + " at once");
    }
    struct Release {
      std::atomic<int>* flag;
      ~Release() {
        if (flag) flag->store(0, std::memory_order_release);
      }
    } release{guarded ? &writer_[p] : nullptr};
    const auto start = now();
    body(task, worker);
    const auto end = now();
    traces_[worker].push_back({t, task.kind, task.src, task.dst, worker, start, end});
  }

  // Decrements successors; calls release(s) for each successor that became ready.
  template <typename F>
  void complete(Index t, F&& release) {
    for (Index s : g_.tasks[t].successors)
      if (remaining_[s].fetch_sub(1, std::memory_order_acq_rel) == 1) release(s);
    done_.fetch_add(1, std::memory_order_acq_rel);
  }

  bool finished() const { return done_.load(std::memory_order_acquire) == g_.size(); }

  void fail(std::exception_ptr e) {
    std::lock_guard<std::mutex> lock(error_mutex_);
    if (!error_) error_ = e;
    abort_.store(true, std::memory_order_release);
  }

  std::vector<TraceEvent> finish() {
    if (error_) std::rethrow_exception(error_);
    if (!finished()) throw StructuralError("execution ended with unfinished tasks");
    std::vector<TraceEvent> all;
    for (auto& tr : traces_) all.insert(all.end(), tr.begin(), tr.end());
    std::sort(all.begin(), all.end(), [](const TraceEvent& a, const TraceEvent& b) {
      return a.start_ns != b.start_ns ? a.start_ns < b.start_ns : a.task < b.task;
    });
    return all;
  }

 private:
  std::int64_t now() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                                t0_)
        .count();
  }

  const TaskGraph& g_;
  std::vector<std::atomic<Index>> remaining_;
  std::vector<std::mutex> guards_;
  std::vector<std::atomic<int>> writer_;
  std::vector<std::vector<TraceEvent>> traces_;
  std::atomic<Index> done_{0};
  std::atomic<bool> abort_{false};
  std::mutex error_mutex_;
  std::exception_ptr error_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

// Runs tasks one after another in the given order (ids ascending if empty).
inline std::vector<TraceEvent> execute_sequential(const TaskGraph& g, const TaskBody& body,
                                                  std::vector<Index> order = {}) {
  if (order.empty()) {
    order.resize(g.size());
    for (Index t = 0; t < g.size(); ++t) order[t] = t;
  }
  if (static_cast<Index>(order.size()) != g.size())
    throw std::invalid_argument("order must list every task once");
  detail::ExecutionState st(g, 1);
  for (Index t : order) {
    if (!st.ready(t)) throw StructuralError("order is not topological at task " + std::to_string(t));
    st.run(t, 0, body);
    st.complete(t, [](Index) {});
  }
  return st.finish();
}

// Each worker walks its list, waiting for the dependencies of the next task.
inline std::vector<TraceEvent> execute_static(const TaskGraph& g, const StaticSchedule& sch,
                                              const TaskBody& body) {
  const Index workers = static_cast<Index>(sch.lists.size());
  detail::ExecutionState st(g, workers);
  std::mutex m;
  std::condition_variable cv;

  auto worker_main = [&](Index w) {
    try {
      for (Index t : sch.lists[w]) {
        if (!st.ready(t)) {
          std::unique_lock<std::mutex> lock(m);
          cv.wait(lock, [&] { return st.ready(t) || st.aborted(); });
        }
        if (st.aborted()) return;
        st.run(t, w, body);
        bool released = false;
        st.complete(t, [&](Index) { released = true; });
        if (released) {
          { std::lock_guard<std::mutex> lock(m); }
          cv.notify_all();
        }
      }
    } catch (...) {
      st.fail(std::current_exception());
      { std::lock_guard<std::mutex> lock(m); }
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  for (Index w = 1; w < workers; ++w) pool.emplace_back(worker_main, w);
  if (workers > 0) worker_main(0);
  for (auto& th : pool) th.join();
  return st.finish();
}

// ---------------------------------------------------------------------------
// Work stealing.
// ---------------------------------------------------------------------------

namespace detail {

struct WorkerQueue {
  std::mutex m;
  std::deque<Index> q;  // back = top (owner end), front = bottom (steal end)
  std::atomic<Index> size{0};

  void push_top(Index t) {
    std::lock_guard<std::mutex> lock(m);
    q.push_back(t);
    size.store(static_cast<Index>(q.size()), std::memory_order_release);
  }
  bool pop_top(Index& t) {
    std::lock_guard<std::mutex> lock(m);
    if (q.empty()) return false;
    t = q.back();
    q.pop_back();
    size.store(static_cast<Index>(q.size()), std::memory_order_release);
    return true;
  }
  bool pop_bottom(Index& t) {
    std::lock_guard<std::mutex> lock(m);
    if (q.empty()) return false;
    t = q.front();
    q.pop_front();
    size.store(static_cast<Index>(q.size()), std::memory_order_release);
    return true;
  }
};

}  // namespace detail

// Per-worker deques. Roots are dealt round-robin by priority; finished tasks
// push newly ready successors onto the finishing worker's own queue, except a
// ready factor task, which goes to the worker that last updated its panel.
// Idle workers pop their own top, then steal one task from the bottom of the
// longest queue.
inline std::vector<TraceEvent> execute_dynamic(const TaskGraph& g, Index workers,
                                               const TaskBody& body) {
  if (workers < 1) throw std::invalid_argument("execute_dynamic needs at least one worker");
  detail::ExecutionState st(g, workers);
  std::vector<detail::WorkerQueue> queues(workers);
  std::vector<std::atomic<Index>> owner(g.panels.size());
  for (auto& o : owner) o.store(kNone, std::memory_order_relaxed);
  std::atomic<Index> round_robin{0};

  std::mutex idle_m;
  std::condition_variable idle_cv;
  std::uint64_t version = 0;  // bumped under idle_m whenever work appears
  auto signal = [&] {
    {
      std::lock_guard<std::mutex> lock(idle_m);
      ++version;
    }
    idle_cv.notify_all();
  };

  {
    auto roots = g.roots();
    std::stable_sort(roots.begin(), roots.end(), [&](Index a, Index b) {
      return g.tasks[a].priority > g.tasks[b].priority;
    });
    // Deal in reverse so each worker's highest-priority root ends on top.
    std::vector<std::vector<Index>> dealt(workers);
    for (std::size_t i = 0; i < roots.size(); ++i) dealt[i % workers].push_back(roots[i]);
    for (Index w = 0; w < workers; ++w)
      for (auto it = dealt[w].rbegin(); it != dealt[w].rend(); ++it) queues[w].push_top(*it);
  }

  auto steal = [&](Index self, Index& t) {
    for (;;) {
      Index victim = kNone, longest = 0;
      for (Index v = 0; v < workers; ++v) {
        if (v == self) continue;
        const Index sz = queues[v].size.load(std::memory_order_acquire);
        if (sz > longest) {
          longest = sz;
          victim = v;
        }
      }
      if (victim == kNone) return false;
      if (queues[victim].pop_bottom(t)) return true;
    }
  };

  auto worker_main = [&](Index w) {
    try {
      for (;;) {
        std::uint64_t seen;
        {
          std::lock_guard<std::mutex> lock(idle_m);
          seen = version;
        }
        if (st.aborted() || st.finished()) return;
        Index t = kNone;
        if (!queues[w].pop_top(t) && !steal(w, t)) {
          std::unique_lock<std::mutex> lock(idle_m);
          idle_cv.wait(lock, [&] { return version != seen || st.aborted() || st.finished(); });
          continue;
        }
        const auto& task = g.tasks[t];
        st.run(t, w, body);
        if (task.kind == TaskKind::update && task.dst >= 0 &&
            task.dst < static_cast<Index>(owner.size()))
          owner[task.dst].store(w, std::memory_order_release);
        bool any = false;
        st.complete(t, [&](Index s) {
          const auto& next = g.tasks[s];
          Index target = w;
          if (next.kind == TaskKind::factor && next.src >= 0 &&
              next.src < static_cast<Index>(owner.size())) {
            target = owner[next.src].load(std::memory_order_acquire);
            if (target == kNone) target = round_robin.fetch_add(1) % workers;
          }
          queues[target].push_top(s);
          any = true;
        });
        if (any || st.finished()) signal();
      }
    } catch (...) {
      st.fail(std::current_exception());
      signal();
    }
  };

  std::vector<std::thread> pool;
  for (Index w = 1; w < workers; ++w) pool.emplace_back(worker_main, w);
  worker_main(0);
  for (auto& th : pool) th.join();
  return st.finish();
}

// ---------------------------------------------------------------------------
// Trace CSV.
// ---------------------------------------------------------------------------

inline void write_trace_csv(std::ostream& out, const std::vector<TraceEvent>& events) {
  out << "task_id,kind,src,dst,worker,start_ns,end_ns\n";
  for (const auto& e : events)
    out << e.task << ',' << to_string(e.kind) << ',' << e.src << ',' << e.dst << ',' << e.worker
        << ',' << e.start_ns << ',' << e.end_ns << '\n';
}

inline void trace_to_csv(const std::vector<TraceEvent>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_trace_csv(out, events);
}

inline std::vector<TraceEvent> read_trace_csv(std::istream& in) {
  std::string line;
  Index lineno = 1;
  if (!std::getline(in, line) || line != "task_id,kind,src,dst,worker,start_ns,end_ns")
    throw ParseError("missing trace header", 1);
  std::vector<TraceEvent> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    TraceEvent e;
    std::string kind;
    if (!(ss >> e.task >> kind >> e.src >> e.dst >> e.worker >> e.start_ns >> e.end_ns))
      throw ParseError("malformed trace row", lineno);
    if (kind == "factor") e.kind = TaskKind::factor;
    else if (kind == "update") e.kind = TaskKind::update;
    else throw ParseError("unknown task kind '" + kind + "'", lineno);
    out.push_back(e);
  }
  return out;
}

}  // namespace spchol
