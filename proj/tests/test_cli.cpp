#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "support.hpp"
#include "xray/cli.hpp"

namespace xray::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result xray(std::vector<std::string> args) {
  args.insert(args.begin(), "xray");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("xray_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string repo(const std::string& rel) { return (testing::source_dir() / rel).string(); }

  // simulate + build for one config; returns the tree path.
  std::string simulate_and_build(const std::string& config, const std::string& tag) {
    auto sim = xray({"simulate", "--config", repo("configs/" + config), "--out-dir", path(tag)});
    EXPECT_EQ(sim.code, 0) << sim.err;
    auto tree = path(tag + ".json");
    auto build = xray({"build", "--host", path(tag + "/host.trace"), "--dev", path(tag + "/dev.log"), "--out", tree});
    EXPECT_EQ(build.code, 0) << build.err;
    return tree;
  }

  fs::path dir_;
};

TEST_F(Cli, CaseOnePipeline) {
  auto tree = simulate_and_build("case1_abnormal.json", "a");
  auto prune = xray({"prune", "--tree", tree, "--rule", "rule3"});
  ASSERT_EQ(prune.code, 0) << prune.err;
  EXPECT_NE(prune.out.find("KERNEL blkdev_fsync\n"), std::string::npos);

  auto check = xray({"check", "--tree", tree, "--rules", repo("rules/sync.json")});
  EXPECT_EQ(check.code, 3);
  EXPECT_EQ(std::count(check.out.begin(), check.out.end(), '\n'), 1);
  EXPECT_NE(check.out.find("fsync-needs-flush: fsync"), std::string::npos);

  auto ref = simulate_and_build("case1_reference.json", "r");
  auto ok = xray({"check", "--tree", ref, "--rules", repo("rules/sync.json")});
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out, "no violations\n");

  auto diff = xray({"diff", "--abnormal", tree, "--reference", ref, "--format", "json"});
  ASSERT_EQ(diff.code, 0);
  auto j = nlohmann::json::parse(diff.out);
  ASSERT_EQ(j.at("divergence_roots").size(), 1u);
  EXPECT_EQ(j["divergence_roots"][0]["abnormal_path"].back(), "blkdev_fsync");
  EXPECT_EQ(j["divergence_roots"][0]["missing_in_abnormal"][0]["name"], "blkdev_issue_flush");
}

TEST_F(Cli, DiffOfIdenticalFilesIsEmpty) {
  auto tree = simulate_and_build("case1_reference.json", "r");
  auto d = xray({"diff", "--abnormal", tree, "--reference", tree});
  EXPECT_EQ(d.code, 0);
  EXPECT_EQ(d.out, "no divergence\n");
}

TEST_F(Cli, BuiltinSyncFlushIsTheDefaultCheck) {
  auto tree = simulate_and_build("case1_abnormal.json", "a");
  auto check = xray({"check", "--tree", tree, "--format", "json"});
  EXPECT_EQ(check.code, 3);
  auto j = nlohmann::json::parse(check.out);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["rule_id"], "sync-flush");
}

TEST_F(Cli, CaseTwoCheckUsesFunctionRule) {
  auto tree = simulate_and_build("case2_abnormal.json", "a");
  auto check = xray({"check", "--tree", tree, "--rules", repo("rules/fdatasync_size_commit.json")});
  EXPECT_EQ(check.code, 3);
  EXPECT_NE(check.out.find("fdatasync (node"), std::string::npos);
}

TEST_F(Cli, OutputsAreByteIdenticalOnRerun) {
  auto first = simulate_and_build("case2_reference.json", "x");
  auto second = simulate_and_build("case2_reference.json", "y");
  EXPECT_EQ(read_file(path("x/host.trace")), read_file(path("y/host.trace")));
  EXPECT_EQ(read_file(path("x/dev.log")), read_file(path("y/dev.log")));
  // The tree records its input paths, so compare everything else.
  auto a = deserialize_tree(read_file(first));
  auto b = deserialize_tree(read_file(second));
  EXPECT_EQ(a.nodes, b.nodes);
  EXPECT_EQ(xray({"prune", "--tree", first, "--format", "json"}).out,
            xray({"prune", "--tree", first, "--format", "json"}).out);
  EXPECT_EQ(xray({"export", "--tree", first, "--rule", "rule3"}).out,
            xray({"export", "--tree", first, "--rule", "rule3"}).out);
}

TEST_F(Cli, AlignWritesHeaderAndShiftedLog) {
  xray({"simulate", "--config", repo("configs/case1_abnormal.json"), "--out-dir", path("a")});
  auto est = xray({"align", "--host", path("a/host.trace"), "--dev", path("a/dev.log")});
  ASSERT_EQ(est.code, 0) << est.err;
  EXPECT_EQ(est.out.rfind("# offset_ns=5000 method=estimated residual_violations=0\n", 0), 0u);
  auto cfg = xray({"align", "--host", path("a/host.trace"), "--dev", path("a/dev.log"), "--offset-ns", "0"});
  EXPECT_EQ(cfg.out.rfind("# offset_ns=0 method=configured residual_violations=2\n", 0), 0u);
  // The shifted log parses and lands inside the syscalls.
  auto recs = dev::parse_dev_log(est.out);
  EXPECT_EQ(recs.size(), 3u);
}

TEST_F(Cli, ConfiguredOffsetFlagsUnanchoredCommands) {
  xray({"simulate", "--config", repo("configs/case1_abnormal.json"), "--out-dir", path("a")});
  auto b = xray({"build", "--host", path("a/host.trace"), "--dev", path("a/dev.log"), "--offset-ns", "0"});
  ASSERT_EQ(b.code, 0) << b.err;
  auto t = deserialize_tree(b.out);
  EXPECT_EQ(t.meta.offset_method, "configured");
  EXPECT_FALSE(t.meta.unanchored.empty());
  EXPECT_NE(b.err.find("outside"), std::string::npos);
}

TEST_F(Cli, ReportFromCounts) {
  auto r = xray({"report", "--counts", "1:11353:704,571,30", "--counts", "2:34083:697,328,22"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("704 (6.20%)"), std::string::npos);
  EXPECT_NE(r.out.find("22 (0.06%)"), std::string::npos);
  EXPECT_EQ(xray({"report", "--counts", "1:0:1,2,3"}).code, 1);
  EXPECT_EQ(xray({"report", "--counts", "1:10:1,2"}).code, 1);
}

TEST_F(Cli, ParseSubcommandsEmitJson) {
  xray({"simulate", "--config", repo("configs/trim_nvme.json"), "--out-dir", path("t")});
  auto h = xray({"parse-host", "--host", path("t/host.trace")});
  ASSERT_EQ(h.code, 0);
  EXPECT_TRUE(nlohmann::json::parse(h.out).at("warnings").empty());
  auto d = xray({"parse-dev", "--dev", path("t/dev.log")});
  ASSERT_EQ(d.code, 0);
  auto cmds = nlohmann::json::parse(d.out);
  ASSERT_EQ(cmds.size(), 3u);
  EXPECT_EQ(cmds[0]["name"], "DSM");
}

TEST_F(Cli, ExportDotHighlightsRule) {
  auto tree = simulate_and_build("case1_abnormal.json", "a");
  auto dot = xray({"export", "--tree", tree, "--rule", "rule3", "--selected-only"});
  ASSERT_EQ(dot.code, 0) << dot.err;
  EXPECT_NE(dot.out.find("blkdev_fsync"), std::string::npos);
  EXPECT_EQ(dot.out.find("rw_verify_area"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(xray({}).code, 1);
  EXPECT_EQ(xray({"frobnicate"}).code, 1);
  EXPECT_EQ(xray({"prune", "--tree", "x.json", "--format", "svg"}).code, 1);
  EXPECT_EQ(xray({"prune"}).code, 1);

  write_file(path("bad.log"), "# header\n100 SCSI 2a00\n");
  write_file(path("ok.trace"), "S write@0\nK a(); 5\n");
  auto bad = xray({"build", "--host", path("ok.trace"), "--dev", path("bad.log")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("bad.log:2:"), std::string::npos) << bad.err;

  write_file(path("bad.trace"), "S write@0\nK a() {\nK   b(); 9\nK } 3\n");
  write_file(path("empty.log"), "");
  auto bt = xray({"build", "--host", path("bad.trace"), "--dev", path("empty.log")});
  EXPECT_EQ(bt.code, 2);
  EXPECT_NE(bt.err.find("bad.trace:4:"), std::string::npos) << bt.err;

  EXPECT_EQ(xray({"prune", "--tree", path("missing.json")}).code, 2);
  EXPECT_EQ(xray({"prune", "--tree", path("x.json"), "--host", path("ok.trace")}).code, 1);

  auto tree = simulate_and_build("case1_reference.json", "r");
  EXPECT_EQ(xray({"prune", "--tree", tree, "--rule", "rule9"}).code, 1);
  write_file(path("broken_rule.json"), R"({"rule_id":"z","kind":"expect"})");
  EXPECT_EQ(xray({"check", "--tree", tree, "--rules", path("broken_rule.json")}).code, 2);
}

TEST_F(Cli, LogLevelFromEnvironment) {
  xray({"simulate", "--config", repo("configs/case1_abnormal.json"), "--out-dir", path("a")});
  std::vector<std::string> args{"build", "--host", path("a/host.trace"), "--dev", path("a/dev.log"), "--offset-ns", "0"};
  ::setenv("XRAY_LOG", "off", 1);
  EXPECT_TRUE(xray(args).err.empty());
  ::setenv("XRAY_LOG", "debug", 1);
  EXPECT_NE(xray(args).err.find("debug"), std::string::npos);
  ::unsetenv("XRAY_LOG");
}

}  // namespace
}  // namespace xray::cli
