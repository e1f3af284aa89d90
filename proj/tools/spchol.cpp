// spchol command line: gen, symbol, dag, factor, bench, sim.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spchol/matrix_market.hpp"
#include "spchol/spchol.hpp"

using namespace spchol;

namespace {

enum Exit { ok = 0, usage = 1, numerical = 2, io = 3, internal = 4 };

struct MatrixSource {
  std::string mm;
  std::vector<Index> lap2d, lap3d;

  bool given() const { return !mm.empty() || !lap2d.empty() || !lap3d.empty(); }

  std::string name() const {
    auto dims = [](const char* tag, const std::vector<Index>& d) {
      std::string s = tag;
      for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "_") + std::to_string(d[i]);
      return s;
    };
    if (!lap2d.empty()) return dims("lap2d", lap2d);
    if (!lap3d.empty()) return dims("lap3d", lap3d);
    auto slash = mm.find_last_of('/');
    std::string base = slash == std::string::npos ? mm : mm.substr(slash + 1);
    auto dot = base.rfind('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
  }

  SparseMatrix<double> load() const {
    if (!lap2d.empty()) return gen_laplacian(2, std::span<const Index>(lap2d));
    if (!lap3d.empty()) return gen_laplacian(3, std::span<const Index>(lap3d));
    return read_matrix_market<double>(mm);
  }

  // `lap2d:64x64`, `lap3d:8x8x8`, otherwise a MatrixMarket path.
  static MatrixSource parse(const std::string& spec) {
    MatrixSource m;
    auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    if (colon != std::string::npos && (kind == "lap2d" || kind == "lap3d")) {
      std::vector<Index> d;
      std::stringstream ss(spec.substr(colon + 1));
      for (std::string part; std::getline(ss, part, 'x');) d.push_back(std::stol(part));
      (kind == "lap2d" ? m.lap2d : m.lap3d) = d;
    } else {
      m.mm = spec;
    }
    return m;
  }
};

void add_source(CLI::App* cmd, MatrixSource& src, bool required = true) {
  auto* g = cmd->add_option_group("matrix", "matrix source");
  g->add_option("--mm", src.mm, "MatrixMarket file");
  g->add_option("--lap2d", src.lap2d, "2D Laplacian extents (nx ny)")->expected(2);
  g->add_option("--lap3d", src.lap3d, "3D Laplacian extents (nx ny nz)")->expected(3);
  if (required) g->require_option(1);
  else g->require_option(0, 1);
}

void add_analysis(CLI::App* cmd, AnalysisOptions& a) {
  std::map<std::string, OrderingMethod> orderings{{"nd", OrderingMethod::nested_dissection},
                                                  {"natural", OrderingMethod::natural}};
  cmd->add_option("--ordering", a.ordering, "nd | natural")
      ->transform(CLI::CheckedTransformer(orderings, CLI::ignore_case))
      ->default_str("nd");
  cmd->add_option("--nd-leaf", a.nd_leaf, "nested dissection leaf size")->capture_default_str();
  cmd->add_option("--amalgamation", a.amalgamation, "allowed relative extra fill")
      ->capture_default_str();
  cmd->add_option("--split-width", a.split_width, "max panel width near the root")
      ->capture_default_str();
  cmd->add_option("--split-levels", a.split_levels, "tree levels that get split")
      ->capture_default_str();
}

void add_form(CLI::App* cmd, FactorForm& form) {
  std::map<std::string, FactorForm> forms{{"llt", FactorForm::llt}, {"ldlt", FactorForm::ldlt}};
  cmd->add_option("--format", form, "llt | ldlt")
      ->transform(CLI::CheckedTransformer(forms, CLI::ignore_case))
      ->default_str("llt");
}

const std::map<std::string, SchedulerKind> schedulers{{"sequential", SchedulerKind::sequential},
                                                      {"static", SchedulerKind::static_list},
                                                      {"dynamic", SchedulerKind::dynamic}};

Index default_threads() {
  if (const char* env = std::getenv("SOLVER_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<Index>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring SOLVER_THREADS='" << env << "'\n";
  }
  return 1;
}

// Runs `fn` writing to the --out file, or stdout when empty.
template <typename Fn>
void with_output(const std::string& path, Fn fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  fn(out);
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string csv_double(double v) { return std::isfinite(v) ? format_double(v) : ""; }

// RunReport

struct RunReport {
  std::string matrix;
  Index n = 0;
  Index nnz_a = 0;
  Index nnz_l = 0;
  double flops = 0;
  std::string scheduler;
  Index threads = 1;
  double wall = 0;
  double gflops = 0;
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

constexpr const char* report_header =
    "# schema=1\nmatrix,n,nnz_a,nnz_l,flops,scheduler,threads,wall_s,gflops,residual,status\n";

void write_report(std::ostream& out, const RunReport& r) {
  out << r.matrix << ',' << r.n << ',' << r.nnz_a << ',' << r.nnz_l << ',' << format_double(r.flops)
      << ',' << r.scheduler << ',' << r.threads << ',' << format_double(r.wall) << ','
      << format_double(r.gflops) << ',' << csv_double(r.residual) << ',' << r.status << '\n';
}

template <typename Scalar>
double check_residual(const SparseMatrix<Scalar>& a, const Factorization<Scalar>& f) {
  std::vector<Scalar> one(a.n, Scalar(1));
  auto b = spmv(a, std::span<const Scalar>(one));
  auto x = f.solve(b);
  return residual_norm(a, std::span<const Scalar>(x), std::span<const Scalar>(b));
}

template <typename Scalar>
RunReport run_factor(const std::string& name, const SparseMatrix<Scalar>& a,
                     std::shared_ptr<const Analysis> an, const FactorOptions& fo, bool check,
                     const std::string& trace_path) {
  auto f = factorize(a, an, fo);
  RunReport r;
  r.matrix = name;
  r.n = a.n;
  r.nnz_a = symmetrize_pattern(a).nnz();
  r.nnz_l = an->symbol.nnz();
  r.flops = f.flops;
  r.scheduler = to_string(fo.scheduler);
  r.threads = fo.scheduler == SchedulerKind::sequential ? 1 : fo.threads;
  r.wall = f.seconds;
  r.gflops = f.flops / std::max(f.seconds, 1e-9) / 1e9;
  if (check) r.residual = check_residual(a, f);
  if (!trace_path.empty()) trace_to_csv(f.trace, trace_path);
  return r;
}

#if SPCHOL_COMPLEX
SparseMatrix<std::complex<double>> as_complex(const SparseMatrix<double>& a, double imag_shift) {
  std::vector<Triplet<std::complex<double>>> t;
  for (const auto& e : a.to_triplets())
    t.push_back({e.row, e.col, {e.value, e.row == e.col ? imag_shift : 0.0}});
  return SparseMatrix<std::complex<double>>::from_triplets(a.n, std::move(t), a.stype);
}
#endif

TaskGraph graph_for(const SymbolStructure& s, FactorForm form) {
  auto g = build_taskgraph(s);
  compute_costs_and_priorities(g, s, form);
  return g;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spchol: supernodal sparse Cholesky with task-based scheduling\n\n"
               "Exit codes: 0 ok, 1 bad arguments, 2 numerical failure, 3 input/output error, 4 internal error.\n"
               "CSV outputs start with a `# schema=1` line followed by the column header."};
  app.require_subcommand(1);

  // gen
  MatrixSource gen_src;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "write a matrix as MatrixMarket");
  add_source(gen, gen_src);
  gen->add_option("--out", gen_out, "output path (default stdout)");

  // symbol
  MatrixSource sym_src;
  AnalysisOptions sym_aopt;
  std::string sym_out;
  auto* sym = app.add_subcommand(
      "symbol", "dump the block symbol: header line, then `panel first_row last_row facing`");
  add_source(sym, sym_src);
  add_analysis(sym, sym_aopt);
  sym->add_option("--out", sym_out, "output path (default stdout)");

  // dag
  MatrixSource dag_src;
  AnalysisOptions dag_aopt;
  FactorForm dag_form = FactorForm::llt;
  std::string dag_out;
  auto* dag = app.add_subcommand("dag", "dump the task graph in the text DAG format");
  add_source(dag, dag_src);
  add_analysis(dag, dag_aopt);
  add_form(dag, dag_form);
  dag->add_option("--out", dag_out, "output path (default stdout)");

  // factor
  MatrixSource fac_src;
  AnalysisOptions fac_aopt;
  FactorOptions fac_opt;
  fac_opt.threads = default_threads();
  bool fac_check = false;
  bool fac_complex = false;
  std::string fac_trace, fac_out;
  auto* fac = app.add_subcommand(
      "factor",
      "analyze, factorize and report one CSV row\n"
      "columns: matrix,n,nnz_a,nnz_l,flops,scheduler,threads,wall_s,gflops,residual,status\n"
      "nnz_a counts the lower triangle; wall_s times the numeric factorization only");
  add_source(fac, fac_src);
  add_analysis(fac, fac_aopt);
  add_form(fac, fac_opt.form);
  fac->add_option("--scheduler", fac_opt.scheduler, "sequential | static | dynamic")
      ->transform(CLI::CheckedTransformer(schedulers, CLI::ignore_case))
      ->default_str("dynamic");
  fac->add_option("--threads", fac_opt.threads, "worker threads (default $SOLVER_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  std::map<std::string, KernelVariant> kernels{{"buffered", KernelVariant::buffered},
                                               {"direct", KernelVariant::direct}};
  fac->add_option("--kernel", fac_opt.kernel, "buffered | direct")
      ->transform(CLI::CheckedTransformer(kernels, CLI::ignore_case))
      ->default_str("buffered");
  fac->add_flag("--deterministic", fac_opt.deterministic,
                "fixed accumulation order into every panel (bitwise reproducible)");
  fac->add_flag("--check", fac_check, "solve with b = A*1 and report the residual");
  fac->add_option("--trace", fac_trace, "write the execution trace CSV here");
  fac->add_option("--out", fac_out, "output path (default stdout)");
#if SPCHOL_COMPLEX
  fac->add_flag("--complex", fac_complex, "factorize A + 0.5i*I in complex arithmetic");
#endif

  // bench
  std::vector<std::string> bench_matrices;
  MatrixSource bench_src;
  AnalysisOptions bench_aopt;
  FactorForm bench_form = FactorForm::llt;
  std::vector<Index> bench_threads{1};
  std::vector<std::string> bench_scheds{"dynamic"};
  Index bench_reps = 3;
  bool bench_det = false;
  std::string bench_out;
  auto* bench = app.add_subcommand(
      "bench",
      "sweep matrices x schedulers x thread counts, one CSV row each\n"
      "columns: matrix,n,nnz_a,nnz_l,flops,scheduler,threads,reps,wall_min_s,wall_median_s,"
      "gflops,residual_max,status");
  bench->add_option("--matrix", bench_matrices, "lap2d:NXxNY, lap3d:NXxNYxNZ or a .mtx path");
  add_source(bench, bench_src, false);
  add_analysis(bench, bench_aopt);
  add_form(bench, bench_form);
  bench->add_option("--threads-list", bench_threads, "thread counts")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  bench->add_option("--scheduler-list", bench_scheds, "schedulers")
      ->delimiter(',')
      ->check(CLI::IsMember({"sequential", "static", "dynamic"}));
  bench->add_option("--reps", bench_reps, "repetitions per configuration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_flag("--deterministic", bench_det, "chain updates into each panel");
  bench->add_option("--out", bench_out, "output path (default stdout)");

  // sim
  std::string sim_dag;
  MatrixSource sim_src;
  AnalysisOptions sim_aopt;
  ResourceModel model;
  bool sim_sweep = false;
  std::string sim_out;
  auto* sim = app.add_subcommand(
      "sim",
      "simulate CPU+GPU execution of a task graph\n"
      "columns: policy,gpus,streams,makespan,gflops (time unit: seconds at the given rates)");
  sim->add_option("--dag", sim_dag, "DAG file written by `dag`");
  add_source(sim, sim_src, false);
  add_analysis(sim, sim_aopt);
  sim->add_option("--cpus", model.cpu_count, "CPU cores")->capture_default_str();
  sim->add_option("--gpus", model.gpu_count, "GPUs")->capture_default_str();
  sim->add_option("--streams", model.streams_per_gpu, "streams per GPU")->capture_default_str();
  std::map<std::string, GpuPolicy> policies{{"dedicated", GpuPolicy::dedicated},
                                            {"shared", GpuPolicy::shared}};
  sim->add_option("--policy", model.policy, "dedicated | shared")
      ->transform(CLI::CheckedTransformer(policies, CLI::ignore_case))
      ->default_str("dedicated");
  sim->add_option("--cpu-speed", model.cpu_speed, "flop/s per CPU core")->capture_default_str();
  sim->add_option("--gpu-peak", model.gpu_peak, "flop/s per GPU at saturation")
      ->capture_default_str();
  sim->add_option("--saturation", model.saturation_area, "panel area reaching peak")
      ->capture_default_str();
  sim->add_option("--bandwidth", model.pci_bandwidth, "bytes/s per GPU link")
      ->capture_default_str();
  sim->add_option("--latency", model.pci_latency, "seconds per transfer")->capture_default_str();
  sim->add_flag("--sweep", sim_sweep, "both policies, 0..gpus GPUs, 1..3 streams");
  sim->add_option("--out", sim_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      auto a = gen_src.load();
      with_output(gen_out, [&](std::ostream& out) { write_matrix_market(out, a); });
    } else if (*sym) {
      auto an = analyze(sym_src.load(), sym_aopt);
      with_output(sym_out, [&](std::ostream& out) { write_symbol(out, an.symbol); });
    } else if (*dag) {
      auto an = analyze(dag_src.load(), dag_aopt);
      auto g = graph_for(an.symbol, dag_form);
      with_output(dag_out, [&](std::ostream& out) { export_dag(out, g); });
    } else if (*fac) {
      auto a = fac_src.load();
      auto an = std::make_shared<const Analysis>(analyze(a, fac_aopt));
      RunReport r;
#if SPCHOL_COMPLEX
      if (fac_complex)
        r = run_factor(fac_src.name(), as_complex(a, 0.5), an, fac_opt, fac_check, fac_trace);
      else
#endif
        r = run_factor(fac_src.name(), a, an, fac_opt, fac_check, fac_trace);
      (void)fac_complex;
      with_output(fac_out, [&](std::ostream& out) {
        out << report_header;
        write_report(out, r);
      });
    } else if (*bench) {
      std::vector<MatrixSource> sources;
      for (const auto& m : bench_matrices) sources.push_back(MatrixSource::parse(m));
      if (bench_src.given()) sources.push_back(bench_src);
      if (sources.empty()) throw CLI::ValidationError("bench", "give --matrix or a matrix source");
      std::ostringstream rows;
      rows << "# schema=1\nmatrix,n,nnz_a,nnz_l,flops,scheduler,threads,reps,wall_min_s,"
              "wall_median_s,gflops,residual_max,status\n";
      for (const auto& src : sources) {
        auto a = src.load();
        auto an = std::make_shared<const Analysis>(analyze(a, bench_aopt));
        for (const auto& sname : bench_scheds)
          for (Index th : bench_threads) {
            FactorOptions fo;
            fo.form = bench_form;
            fo.scheduler = schedulers.at(sname);
            fo.threads = th;
            fo.deterministic = bench_det;
            std::vector<double> walls;
            double worst = 0;
            RunReport r;
            for (Index rep = 0; rep < bench_reps; ++rep) {
              r = run_factor(src.name(), a, an, fo, true, "");
              walls.push_back(r.wall);
              worst = std::max(worst, r.residual);
            }
            const double med = median(walls);
            rows << r.matrix << ',' << r.n << ',' << r.nnz_a << ',' << r.nnz_l << ','
                 << format_double(r.flops) << ',' << r.scheduler << ',' << r.threads << ','
                 << bench_reps << ',' << format_double(*std::min_element(walls.begin(), walls.end()))
                 << ',' << format_double(med) << ','
                 << format_double(r.flops / std::max(med, 1e-9) / 1e9) << ','
                 << format_double(worst) << ",ok\n";
            std::cerr << r.matrix << ' ' << r.scheduler << ' ' << r.threads << " threads: "
                      << format_double(med) << " s\n";
          }
      }
      with_output(bench_out, [&](std::ostream& out) { out << rows.str(); });
    } else if (*sim) {
      TaskGraph g;
      if (!sim_dag.empty()) {
        if (sim_src.given()) throw CLI::ValidationError("sim", "--dag excludes a matrix source");
        g = load_dag(sim_dag);
      } else if (sim_src.given()) {
        g = graph_for(analyze(sim_src.load(), sim_aopt).symbol, FactorForm::llt);
      } else {
        throw CLI::ValidationError("sim", "give --dag or a matrix source");
      }
      std::vector<PolicyRow> rows;
      if (sim_sweep) {
        std::vector<Index> counts;
        for (Index k = 0; k <= model.gpu_count; ++k) counts.push_back(k);
        rows = compare_policies(g, model, counts);
      } else {
        const double ms = simulate(g, model).makespan;
        rows.push_back({model.policy, model.gpu_count, model.streams_per_gpu, ms,
                        ms > 0 ? total_cost(g) / ms / 1e9 : 0.0});
      }
      with_output(sim_out, [&](std::ostream& out) { write_policy_csv(out, rows); });
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numerical;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return io;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return io;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return internal;
  }
  return ok;
}
