#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spchol/spchol.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(SPCHOL_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t k; (k = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, k);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// Row of a single-report CSV as column -> value.
std::map<std::string, std::string> report(const std::string& out) {
  auto ls = lines(out);
  EXPECT_EQ(ls.size(), 3u) << out;
  std::map<std::string, std::string> m;
  if (ls.size() < 3) return m;
  EXPECT_EQ(ls[0], "# schema=1");
  auto h = fields(ls[1]), v = fields(ls[2]);
  EXPECT_EQ(h.size(), v.size());
  for (std::size_t i = 0; i < h.size() && i < v.size(); ++i) m[h[i]] = v[i];
  return m;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("spchol_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST(Cli, FactorTwoByTwo) {
  auto r = cli("factor --lap2d 2 1 --format llt --scheduler sequential");
  ASSERT_EQ(r.code, 0);
  auto m = report(r.out);
  EXPECT_EQ(m["n"], "2");
  EXPECT_EQ(m["nnz_l"], "3");
  EXPECT_EQ(m["flops"], "5");
  EXPECT_EQ(m["residual"], "");
  EXPECT_EQ(m["status"], "ok");
}

TEST(Cli, FactorCheckReportsResidual) {
  auto r = cli("factor --lap2d 16 16 --format llt --scheduler dynamic --threads 4 --check");
  ASSERT_EQ(r.code, 0);
  auto m = report(r.out);
  EXPECT_EQ(m["threads"], "4");
  EXPECT_EQ(m["scheduler"], "dynamic");
  EXPECT_LE(std::stod(m["residual"]), 1e-11);
  EXPECT_GT(std::stod(m["gflops"]), 0);
}

TEST(Cli, ThreadsFromEnvironment) {
  auto r = cli("factor --lap2d 8 8 --scheduler static");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(report(r.out)["threads"], "1");
  const std::string cmd = "SOLVER_THREADS=3 " + std::string(SPCHOL_CLI_PATH) +
                          " factor --lap2d 8 8 --scheduler static 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  ASSERT_NE(p, nullptr);
  std::string out;
  char buf[1024];
  for (std::size_t k; (k = fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, k);
  pclose(p);
  EXPECT_EQ(report(out)["threads"], "3");
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  // indefinite: 2x2 [[1,2],[2,1]]
  {
    std::ofstream f(dir / "indef.mtx");
    f << "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n2 1 2\n2 2 1\n";
  }
  EXPECT_EQ(cli("factor --mm " + dir / "indef.mtx").code, 2);
  EXPECT_EQ(cli("factor --mm " + dir / "indef.mtx --format ldlt").code, 0);
  EXPECT_EQ(cli("factor --mm " + dir / "missing.mtx").code, 3);
  {
    std::ofstream f(dir / "bad.mtx");
    f << "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n";
  }
  EXPECT_EQ(cli("factor --mm " + dir / "bad.mtx").code, 3);
  EXPECT_EQ(cli("sim --dag " + dir / "missing.dag").code, 3);
  EXPECT_NE(cli("factor").code, 0);
  EXPECT_NE(cli("factor --lap2d 4 4 --scheduler fastest").code, 0);
}

TEST(Cli, GenThenFactorMatchesDirect) {
  TempDir dir;
  ASSERT_EQ(cli("gen --lap2d 3 1 --out " + dir / "m.mtx").code, 0);
  auto from_file = report(cli("factor --mm " + dir / "m.mtx").out);
  auto direct = report(cli("factor --lap2d 3 1").out);
  EXPECT_EQ(from_file["nnz_l"], direct["nnz_l"]);
  EXPECT_EQ(from_file["nnz_a"], direct["nnz_a"]);
  EXPECT_EQ(from_file["matrix"], "m");
  ASSERT_EQ(cli("gen --lap3d 4 3 2 --out " + dir / "c.mtx").code, 0);
  EXPECT_EQ(report(cli("factor --mm " + dir / "c.mtx").out)["nnz_l"],
            report(cli("factor --lap3d 4 3 2").out)["nnz_l"]);
}

TEST(Cli, DagIsReadableBySim) {
  TempDir dir;
  ASSERT_EQ(cli("dag --lap2d 4 4 --out " + dir / "g.dag").code, 0);
  auto g = spchol::load_dag(dir / "g.dag");
  EXPECT_GT(g.size(), 0);
  auto r = cli("sim --dag " + dir / "g.dag --gpus 1 --streams 2 --policy shared");
  ASSERT_EQ(r.code, 0);
  auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 3u);
  EXPECT_EQ(ls[0], "# schema=1");
  EXPECT_EQ(ls[1], "policy,gpus,streams,makespan,gflops");
  EXPECT_EQ(fields(ls[2])[0], "shared");
  EXPECT_GT(std::stod(fields(ls[2])[3]), 0);
  auto sweep = cli("sim --dag " + dir / "g.dag --gpus 2 --sweep");
  EXPECT_EQ(lines(sweep.out).size(), 2u + 2 * 3 * 3);
  EXPECT_NE(cli("sim --dag " + dir / "g.dag --cpus 1 --gpus 1").code, 0);
}

TEST(Cli, SymbolPartitionsColumns) {
  auto r = cli("symbol --lap2d 2 2");
  ASSERT_EQ(r.code, 0);
  auto ls = lines(r.out);
  ASSERT_FALSE(ls.empty());
  EXPECT_EQ(ls[0].rfind("# symbol schema=1 n=4", 0), 0u);
  // diagonal blocks are the first block of each panel and tile [0, n)
  std::map<long, std::pair<long, long>> diag;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    std::istringstream in(ls[i]);
    long p, fr, lr, facing;
    in >> p >> fr >> lr >> facing;
    if (facing == p && !diag.count(p)) diag[p] = {fr, lr};
  }
  long next = 0;
  for (auto& [p, range] : diag) {
    EXPECT_EQ(range.first, next);
    next = range.second;
  }
  EXPECT_EQ(next, 4);
}

TEST(Cli, DeterministicCsvIsIdenticalExceptWallTime) {
  auto strip = [](const std::string& out) {
    auto ls = lines(out);
    std::string s;
    for (auto& l : ls) {
      auto f = fields(l);
      if (f.size() == 11) {
        f[7] = f[8] = "";  // wall_s, gflops
      }
      for (auto& x : f) s += x + ",";
      s += "\n";
    }
    return s;
  };
  const std::string args = "factor --lap3d 6 6 6 --threads 4 --deterministic --check";
  auto a = cli(args), b = cli(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(strip(a.out), strip(b.out));
}

TEST(Cli, TraceFile) {
  TempDir dir;
  ASSERT_EQ(cli("factor --lap2d 4 1 --ordering natural --scheduler static --trace " + dir / "t.csv").code, 0);
  std::ifstream in(dir / "t.csv");
  auto events = spchol::read_trace_csv(in);
  EXPECT_GE(events.size(), 1u);
}

TEST(Cli, BenchRowCount) {
  auto one = cli("bench --matrix lap2d:8x8 --threads-list 1 --scheduler-list dynamic --reps 1");
  ASSERT_EQ(one.code, 0);
  EXPECT_EQ(lines(one.out).size(), 3u);
  auto many = cli(
      "bench --matrix lap2d:8x8 --matrix lap3d:4x4x4 --threads-list 1,2 "
      "--scheduler-list static,dynamic --reps 5");
  ASSERT_EQ(many.code, 0);
  auto ls = lines(many.out);
  ASSERT_EQ(ls.size(), 2u + 2 * 2 * 2);
  auto header = fields(ls[1]);
  const auto col = std::find(header.begin(), header.end(), "residual_max") - header.begin();
  for (std::size_t i = 2; i < ls.size(); ++i) {
    auto f = fields(ls[i]);
    EXPECT_EQ(f[7], "5");
    EXPECT_LE(std::stod(f[col]), 1e-10);
  }
}
