#include <gtest/gtest.h>

#include <sstream>

#include "cmap_cli.hpp"
#include "episode_files.hpp"
#include "temp_dir.hpp"

using namespace cmap;
using testing_util::slurp;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

class CliFiles : public ::testing::Test {
protected:
  void SetUp() override {
    const auto ep = synthetic::two_blob_episode(5, 16);
    write_tensor(ep.support.tensor(), dir / "s.cmpt");
    write_mask_pgm(ep.support_mask, dir / "s.pgm");
    write_tensor(ep.query.tensor(), dir / "q.cmpt");
    write_mask_pgm(ep.query_gt, dir / "gt.pgm");
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }

  testing_util::TempDir dir;
};

}  // namespace

TEST(Cli, HelpForEverySubcommand) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  for (const char* sub : {"prior", "propagate", "pipeline", "bench", "eval"}) {
    const auto r = run_cli({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
  EXPECT_NE(run_cli({"propagate", "--help"}).out.find("0.03"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"prior", "--out", "x"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--sizes", "8", "--mode", "weird"}).code, 2);
}

TEST_F(CliFiles, PriorPropagateRoundTrip) {
  auto r = run_cli({"prior", "--support-feat", p("s.cmpt"), "--support-mask", p("s.pgm"), "--query-feat",
                    p("q.cmpt"), "--out", p("m0.cmpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m0 = read_tensor(p("m0.cmpt"));
  EXPECT_TRUE(std::ranges::equal(m0.dims(), std::vector<std::size_t>{1, 16, 16}));

  r = run_cli({"propagate", "--query-feat", p("q.cmpt"), "--prior", p("m0.cmpt"), "--out", p("m.cmpt"),
               "--trace-out", p("trace.csv"), "--dump-transfer", p("P.cmpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("converged=true"), std::string::npos);
  EXPECT_EQ(slurp(p("trace.csv")).rfind("iter,residual,range,ratio\n", 0), 0u);
  EXPECT_TRUE(std::ranges::equal(read_tensor(p("P.cmpt")).dims(), std::vector<std::size_t>{256, 256}));

  // Library result equals the CLI result.
  const auto expect = solve_fixed_point(Prior::from_tensor(m0),
                                        build_transfer(FeatureMap(read_tensor(p("q.cmpt"))), 8, 0.1), SolverConfig{});
  EXPECT_EQ(read_tensor(p("m.cmpt")), expect.prior.to_tensor());
}

TEST_F(CliFiles, ErrorExitCodes) {
  write_mask_pgm(BinaryMask::filled(16, 16, false), dir / "empty.pgm");
  EXPECT_EQ(run_cli({"prior", "--support-feat", p("s.cmpt"), "--support-mask", p("empty.pgm"), "--query-feat",
                     p("q.cmpt"), "--out", p("m0.cmpt")})
                .code,
            3);

  std::ofstream(dir / "bad.cmpt") << "NOPE1234";
  const auto bad = run_cli({"prior", "--support-feat", p("bad.cmpt"), "--support-mask", p("s.pgm"), "--query-feat",
                            p("q.cmpt"), "--out", p("m0.cmpt")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("format error"), std::string::npos);

  ASSERT_EQ(run_cli({"prior", "--support-feat", p("s.cmpt"), "--support-mask", p("s.pgm"), "--query-feat",
                     p("q.cmpt"), "--out", p("m0.cmpt")})
                .code,
            0);
  const auto cert = run_cli({"propagate", "--query-feat", p("q.cmpt"), "--prior", p("m0.cmpt"), "--out",
                             p("m.cmpt"), "--alpha", "0.05"});
  EXPECT_EQ(cert.code, 5);
  EXPECT_NE(cert.err.find("contraction condition violated"), std::string::npos);

  std::filesystem::remove(dir / "m.cmpt");
  EXPECT_EQ(run_cli({"propagate", "--query-feat", p("q.cmpt"), "--prior", p("m0.cmpt"), "--out", p("m.cmpt"),
                     "--trace-out", p("t1.csv"), "--max-iters", "1"})
                .code,
            4);
  EXPECT_TRUE(std::filesystem::exists(dir / "m.cmpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "t1.csv"));

  write_tensor(synthetic::clustered_features(3, 16, 16, 1).tensor(), dir / "c3.cmpt");
  EXPECT_EQ(run_cli({"prior", "--support-feat", p("c3.cmpt"), "--support-mask", p("s.pgm"), "--query-feat",
                     p("q.cmpt"), "--out", p("m0.cmpt")})
                .code,
            2);

  EXPECT_EQ(run_cli({"bench", "--sizes", "65", "--mode", "dense", "--reps", "1", "--iters", "1"}).code, 6);
}

TEST_F(CliFiles, ConfigFileAndFlagPrecedence) {
  ASSERT_EQ(run_cli({"prior", "--support-feat", p("s.cmpt"), "--support-mask", p("s.pgm"), "--query-feat",
                     p("q.cmpt"), "--out", p("m0.cmpt")})
                .code,
            0);
  std::ofstream(dir / "cfg.txt") << "alpha=0.05\n";
  const std::vector<std::string> base{"propagate", "--query-feat", p("q.cmpt"), "--prior", p("m0.cmpt"),
                                      "--out",     p("m.cmpt"),    "--config",   p("cfg.txt")};
  EXPECT_EQ(run_cli(base).code, 5);
  auto with_flag = base;
  with_flag.insert(with_flag.end(), {"--alpha", "0.02"});
  EXPECT_EQ(run_cli(with_flag).code, 0);

  std::ofstream(dir / "broken.txt") << "alpha=0.01\nalpha==\n";
  auto broken = base;
  broken.back() = p("broken.txt");
  const auto r = run_cli(broken);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);
}

TEST_F(CliFiles, PipelineOutputsAreDeterministic) {
  const auto spec = testing_util::write_episode(dir / "ep", 11, 2);
  const auto a = run_cli({"pipeline", "--episode", spec.string(), "--out-dir", p("outA")});
  const auto b = run_cli({"pipeline", "--episode", spec.string(), "--out-dir", p("outB")});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("miou="), std::string::npos);
  for (const char* f : {"prior.cmpt", "initial_prior.cmpt", "mask.pgm", "initial_mask.pgm", "trace_shot1.csv",
                        "trace_shot2.csv", "report.txt", "report_initial.txt"}) {
    const auto x = slurp(dir / "outA" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(dir / "outB" / f)) << f;
  }
  EXPECT_EQ(slurp(dir / "outA" / "report.txt"), a.out);
  EXPECT_EQ(a.out.rfind("class=1 iou=", 0), 0u);
  EXPECT_EQ(a.out.find("class=", 1), std::string::npos);
}

TEST_F(CliFiles, EvalPrintsMetrics) {
  const auto same = run_cli({"eval", "--pred", p("gt.pgm"), "--gt", p("gt.pgm")});
  EXPECT_EQ(same.code, 0);
  EXPECT_EQ(same.out, "iou=1.000000 fbiou=1.000000\n");

  write_mask_pgm(BinaryMask(1, 4, {1, 1, 0, 0}), dir / "pred4.pgm");
  write_mask_pgm(BinaryMask(1, 4, {1, 0, 0, 0}), dir / "gt4.pgm");
  EXPECT_EQ(run_cli({"eval", "--pred", p("pred4.pgm"), "--gt", p("gt4.pgm")}).out, "iou=0.500000 fbiou=0.583333\n");
  EXPECT_EQ(run_cli({"eval", "--pred", p("pred4.pgm"), "--gt", p("gt.pgm")}).code, 2);

  write_mask_pgm(read_mask_pgm(p("gt.pgm")).complement(), dir / "inv.pgm");
  EXPECT_EQ(run_cli({"eval", "--pred", p("inv.pgm"), "--gt", p("gt.pgm")}).out, "iou=0.000000 fbiou=0.000000\n");
}

TEST(Cli, BenchRowsAndAgreement) {
  testing_util::TempDir dir;
  const auto csv = (dir / "bench.csv").string();
  const auto r = run_cli({"bench", "--sizes", "6,8", "--mode", "both", "--reps", "1", "--iters", "2", "--channels",
                          "8", "--csv-out", csv});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(csv);
  EXPECT_EQ(text.rfind("mode,n,build_ms,iter_ms,total_ms\n", 0), 0u);
  EXPECT_NE(text.find("\nsparse,36,"), std::string::npos);
  EXPECT_NE(text.find("\ndense,64,"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_NE(r.err.find("agree n=64"), std::string::npos);

  const auto three = run_cli({"bench", "--sizes", "16,32,64", "--mode", "sparse", "--reps", "1", "--iters", "2"});
  EXPECT_EQ(three.code, 0);
  EXPECT_EQ(three.out.rfind("mode,n,", 0), 0u);
  EXPECT_EQ(std::count(three.out.begin(), three.out.end(), '\n'), 4);

  const auto tiny = run_cli({"bench", "--sizes", "4", "--mode", "both", "--reps", "1", "--iters", "1"});
  EXPECT_EQ(tiny.code, 0);
  EXPECT_NE(tiny.err.find("agree n=16 "), std::string::npos) << tiny.err;
}
