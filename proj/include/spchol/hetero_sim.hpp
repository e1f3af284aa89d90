#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "spchol/taskgraph.hpp"

namespace spchol {

enum class GpuPolicy { dedicated, shared };

inline const char* to_string(GpuPolicy p) { return p == GpuPolicy::dedicated ? "dedicated" : "shared"; }

// Rates are in flop per time unit, bandwidth in bytes per time unit. The
// defaults are illustrative (seconds as the time unit).
struct ResourceModel {
  Index cpu_count = 12;
  double cpu_speed = 10e9;
  Index gpu_count = 0;
  double gpu_peak = 300e9;
  double saturation_area = 1e6;  // m*k at which a kernel reaches peak
  Index streams_per_gpu = 1;
  double pci_bandwidth = 6e9;
  double pci_latency = 10e-6;
  double scalar_bytes = 8;
  GpuPolicy policy = GpuPolicy::dedicated;

  bool free_transfers() const { return pci_latency == 0 && std::isinf(pci_bandwidth); }

  Index active_cpus() const {
    return policy == GpuPolicy::dedicated ? cpu_count - gpu_count : cpu_count;
  }

  void validate() const {
    if (cpu_count < 0 || gpu_count < 0) throw std::invalid_argument("negative resource count");
    if (active_cpus() < 1)
      throw std::invalid_argument("no CPU left to run factor tasks (" + std::to_string(cpu_count) +
                                  " cpus, " + std::to_string(gpu_count) + " gpus, " +
                                  to_string(policy) + " policy)");
    if (streams_per_gpu < 1) throw std::invalid_argument("streams_per_gpu must be >= 1");
    if (!(cpu_speed > 0) || !(gpu_peak > 0) || !(pci_bandwidth > 0) || !(saturation_area > 0) ||
        !(pci_latency >= 0) || !(scalar_bytes > 0))
      throw std::invalid_argument("resource rates must be positive");
  }
};

struct SimResource {
  bool gpu = false;
  Index device = kNone;  // gpu index
  Index stream = kNone;
};

struct SimTaskEvent {
  Index task = 0;
  Index resource = 0;
  double start = 0;
  double end = 0;
  double rate = 0;
};

struct SimTransfer {
  Index panel = 0;
  Index from = 0;  // location: 0 = host, g + 1 = gpu g
  Index to = 0;
  double start = 0;
  double end = 0;
};

struct SimSchedule {
  std::vector<SimResource> resources;
  std::vector<SimTaskEvent> events;  // indexed by task id
  std::vector<SimTransfer> transfers;
  double makespan = 0;
  Index gpus_engaged = 0;  // resources lists only engaged devices

  double busy_work() const {
    double w = 0;
    for (const auto& e : events) w += (e.end - e.start) * e.rate;
    return w;
  }
  Index tasks_on_gpu() const {
    Index c = 0;
    for (const auto& e : events) c += resources[e.resource].gpu ? 1 : 0;
    return c;
  }
};

namespace detail {

// Valid copies of one panel. Location 0 is the host, g + 1 is gpu g.
struct Residency {
  std::vector<bool> valid;
  std::vector<double> valid_at;
};

class Simulator {
 public:
  Simulator(const TaskGraph& g, const ResourceModel& r) : g_(g), r_(r) {
    r_.validate();
    for (Index c = 0; c < r_.active_cpus(); ++c) res_.push_back({false, kNone, kNone});
    for (Index d = 0; d < r_.gpu_count; ++d)
      for (Index s = 0; s < r_.streams_per_gpu; ++s) res_.push_back({true, d, s});
    avail_.assign(res_.size(), 0);
    channel_.assign(r_.gpu_count, 0);
    const Index locations = r_.gpu_count + 1;
    panels_.resize(g.panels.size());
    for (auto& p : panels_) {
      p.valid.assign(locations, false);
      p.valid_at.assign(locations, 0);
      p.valid[0] = true;
    }
    write_end_.assign(g.panels.size(), 0);
  }

  SimSchedule run() {
    const Index n = g_.size();
    SimSchedule out;
    out.resources = res_;
    out.events.resize(n);
    std::vector<double> ready_at(n, 0);
    auto missing = g_.predecessor_counts();
    std::priority_queue<Index, std::vector<Index>, ReadyOrder> ready(ReadyOrder{&g_});
    for (Index t = 0; t < n; ++t)
      if (missing[t] == 0) ready.push(t);
    Index placed = 0;
    while (!ready.empty()) {
      const Index t = ready.top();
      ready.pop();
      const auto& task = g_.tasks[t];
      Index best = kNone;
      Plan best_plan;
      for (Index ri = 0; ri < static_cast<Index>(res_.size()); ++ri) {
        if (res_[ri].gpu && task.kind != TaskKind::update) continue;
        Plan plan = evaluate(task, ri, ready_at[t]);
        plan.score = plan.end + writeback(task, ri);
        if (best == kNone || plan.score < best_plan.score) {
          best = ri;
          best_plan = std::move(plan);
        }
      }
      commit(task, best, best_plan, out);
      out.events[t] = {t, best, best_plan.start, best_plan.end, best_plan.rate};
      out.makespan = std::max(out.makespan, best_plan.end);
      ++placed;
      for (Index s : task.successors) {
        ready_at[s] = std::max(ready_at[s], best_plan.end);
        if (--missing[s] == 0) ready.push(s);
      }
    }
    if (placed != n) throw CycleError("task graph has a cycle");
    return out;
  }

 private:
  struct Plan {
    double start = 0, end = 0, rate = 1;
    double score = 0;  // placement metric
    std::vector<SimTransfer> transfers;
    std::vector<double> channel;  // channel state after the transfers
  };

  Index location(Index ri) const { return res_[ri].gpu ? res_[ri].device + 1 : 0; }

  double rate(const Task& task, Index ri) const {
    if (!res_[ri].gpu) return r_.cpu_speed;
    double eff = 1.0;
    if (task.src >= 0 && task.src < static_cast<Index>(g_.panels.size())) {
      const auto& geo = g_.panels[task.src];
      eff = std::min(1.0, static_cast<double>(geo.height) * static_cast<double>(geo.width) /
                              r_.saturation_area);
    }
    // A stream gets at most an equal share of the device.
    return r_.gpu_peak * std::min(eff, 1.0 / static_cast<double>(r_.streams_per_gpu));
  }

  // A panel written on a GPU must come back before its CPU-only factor task,
  // so the placement metric charges that copy up front.
  double writeback(const Task& task, Index ri) const {
    const Index w = task.writes();
    if (!res_[ri].gpu || r_.free_transfers() || w < 0 || w >= static_cast<Index>(g_.panels.size()))
      return 0;
    return r_.pci_latency + bytes(w) / r_.pci_bandwidth;
  }

  double bytes(Index panel) const {
    const auto& geo = g_.panels[panel];
    return static_cast<double>(geo.rows()) * static_cast<double>(geo.width) * r_.scalar_bytes;
  }

  // Time at which `panel` is valid at `loc`, appending needed transfers.
  double arrive(Index panel, Index loc, Plan& plan) const {
    const auto& res = panels_[panel];
    if (res.valid[loc]) return res.valid_at[loc];
    // Earliest valid source; the host is preferred on ties.
    Index src = kNone;
    for (Index l = 0; l < static_cast<Index>(res.valid.size()); ++l)
      if (res.valid[l] && (src == kNone || res.valid_at[l] < res.valid_at[src])) src = l;
    double t = res.valid_at[src];
    if (r_.free_transfers()) return t;
    const double cost = r_.pci_latency + bytes(panel) / r_.pci_bandwidth;
    auto hop = [&](Index from, Index to, Index gpu) {
      const double st = std::max(plan.channel[gpu], t);
      plan.channel[gpu] = st + cost;
      plan.transfers.push_back({panel, from, to, st, st + cost});
      t = st + cost;
    };
    if (src != 0 && loc != 0) {
      hop(src, 0, src - 1);  // device to device goes through the host
      hop(0, loc, loc - 1);
    } else if (src != 0) {
      hop(src, 0, src - 1);
    } else {
      hop(0, loc, loc - 1);
    }
    return t;
  }

  Plan evaluate(const Task& task, Index ri, double deps_done) const {
    Plan plan;
    plan.channel = channel_;
    const Index loc = location(ri);
    double start = std::max(avail_[ri], deps_done);
    const Index np = static_cast<Index>(g_.panels.size());
    const Index w = task.writes();
    if (w >= 0 && w < np) start = std::max(start, write_end_[w]);
    if (task.src >= 0 && task.src < np) start = std::max(start, arrive(task.src, loc, plan));
    if (task.dst != task.src && task.dst >= 0 && task.dst < np)
      start = std::max(start, arrive(task.dst, loc, plan));
    plan.rate = rate(task, ri);
    plan.start = start;
    plan.end = start + task.cost / plan.rate;
    return plan;
  }

  void commit(const Task& task, Index ri, const Plan& plan, SimSchedule& out) {
    const Index loc = location(ri);
    avail_[ri] = plan.end;
    channel_ = plan.channel;
    for (const auto& tr : plan.transfers) {
      auto& res = panels_[tr.panel];
      if (!res.valid[tr.to] || res.valid_at[tr.to] > tr.end) {
        res.valid[tr.to] = true;
        res.valid_at[tr.to] = tr.end;
      }
      out.transfers.push_back(tr);
    }
    const Index np = static_cast<Index>(g_.panels.size());
    auto touch = [&](Index p) {
      if (p < 0 || p >= np) return;
      auto& res = panels_[p];
      if (!res.valid[loc]) {  // free transfer
        res.valid[loc] = true;
        res.valid_at[loc] = plan.start;
      }
    };
    touch(task.src);
    touch(task.dst);
    const Index w = task.writes();
    if (w >= 0 && w < np) {
      auto& res = panels_[w];
      std::fill(res.valid.begin(), res.valid.end(), false);
      res.valid[loc] = true;
      res.valid_at[loc] = plan.end;
      write_end_[w] = plan.end;
    }
  }

  const TaskGraph& g_;
  ResourceModel r_;
  std::vector<SimResource> res_;
  std::vector<double> avail_;
  std::vector<double> channel_;  // per gpu, time the transfer channel frees up
  std::vector<Residency> panels_;
  std::vector<double> write_end_;
};

}  // namespace detail

// List scheduling over CPUs and GPU streams with minimum completion time
// placement. Only update tasks may run on a GPU. Panel geometry comes from
// the graph.
//
// Greedy list schedules are not monotone in the resource set, so the plan
// with every GPU engaged is compared against plans engaging fewer GPUs, and
// the shortest wins (ties keep more GPUs). A GPU left out under the dedicated
// policy also gives its worker thread back to the CPU pool.
inline SimSchedule simulate(const TaskGraph& g, const ResourceModel& r) {
  r.validate();
  SimSchedule best = detail::Simulator(g, r).run();
  best.gpus_engaged = r.gpu_count;
  for (Index used = r.gpu_count - 1; used >= 0; --used) {
    ResourceModel sub = r;
    sub.gpu_count = used;
    SimSchedule s = detail::Simulator(g, sub).run();
    if (s.makespan < best.makespan) {
      best = std::move(s);
      best.gpus_engaged = used;
    }
  }
  return best;
}

struct PolicyRow {
  GpuPolicy policy;
  Index gpus;
  Index streams;
  double makespan;
  double gflops;
};

// Both policies, each gpu count in `gpu_counts`, streams 1..3.
inline std::vector<PolicyRow> compare_policies(const TaskGraph& g, const ResourceModel& base,
                                               std::vector<Index> gpu_counts = {}) {
  if (gpu_counts.empty()) gpu_counts.push_back(base.gpu_count);
  const double work = total_cost(g);
  std::vector<PolicyRow> rows;
  for (GpuPolicy policy : {GpuPolicy::dedicated, GpuPolicy::shared})
    for (Index gpus : gpu_counts)
      for (Index streams = 1; streams <= 3; ++streams) {
        ResourceModel r = base;
        r.policy = policy;
        r.gpu_count = gpus;
        r.streams_per_gpu = streams;
        const double ms = simulate(g, r).makespan;
        rows.push_back({policy, gpus, streams, ms, ms > 0 ? work / ms / 1e9 : 0.0});
      }
  return rows;
}

inline void write_policy_csv(std::ostream& out, const std::vector<PolicyRow>& rows) {
  out << "# schema=1\n";
  out << "policy,gpus,streams,makespan,gflops\n";
  for (const auto& r : rows)
    out << to_string(r.policy) << ',' << r.gpus << ',' << r.streams << ','
        << format_double(r.makespan) << ',' << format_double(r.gflops) << '\n';
}

}  // namespace spchol
