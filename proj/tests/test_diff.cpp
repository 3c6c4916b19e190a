#include <gtest/gtest.h>

#include "support.hpp"
#include "xray/diff.hpp"

namespace xray::explorer {
namespace {

using testing::TreeBuilder;

// fsync{ blkdev_fsync{ writeback{WRITE_10}, [flush{SYNC}] } }
CorrelationTree fsync_tree(bool with_flush) {
  TreeBuilder b;
  auto f = b.syscall("fsync", 0, 100);
  auto bf = b.kernel(f, "blkdev_fsync", 0, 90);
  auto wb = b.kernel(bf, "writeback", 0, 30);
  b.cmd(wb, "WRITE_10", 5);
  if (with_flush) {
    auto fl = b.kernel(bf, "blkdev_issue_flush", 40, 80);
    b.cmd(fl, "SYNCHRONIZE_CACHE", 50);
  }
  return b.tree();
}

TEST(Diff, IdenticalTreesAreEmpty) {
  auto t = fsync_tree(true);
  EXPECT_TRUE(diff(t, t).empty());
  EXPECT_EQ(diff_report_to_json(diff(t, t)).at("divergence_roots").size(), 0u);
}

TEST(Diff, TimingDifferencesAreIgnored) {
  auto a = fsync_tree(true);
  auto r = fsync_tree(true);
  for (auto& n : r.nodes) {
    n.start.epoch_ns += 1000;
    n.end.epoch_ns += 1000;
  }
  EXPECT_TRUE(diff(a, r).empty());
}

TEST(Diff, MissingChildIsReportedAtItsParent) {
  auto rep = diff(fsync_tree(false), fsync_tree(true));
  ASSERT_EQ(rep.divergence_roots.size(), 1u);
  const auto& d = rep.divergence_roots[0];
  EXPECT_EQ(d.abnormal_path, (std::vector<std::string>{"fsync", "blkdev_fsync"}));
  EXPECT_EQ(d.reference_path, d.abnormal_path);
  EXPECT_EQ(*d.abnormal_node, 1u);
  EXPECT_EQ(*d.reference_node, 1u);
  ASSERT_EQ(d.missing_in_abnormal.size(), 1u);
  EXPECT_EQ(d.missing_in_abnormal[0].name, "blkdev_issue_flush");
  EXPECT_EQ(d.missing_in_abnormal[0].subtree_size, 2u);
  EXPECT_EQ(d.missing_in_abnormal[0].commands, (std::vector<std::string>{"SYNCHRONIZE_CACHE"}));
  EXPECT_TRUE(d.missing_in_reference.empty());
}

TEST(Diff, DirectionIsAsymmetric) {
  auto rep = diff(fsync_tree(true), fsync_tree(false));
  ASSERT_EQ(rep.divergence_roots.size(), 1u);
  EXPECT_TRUE(rep.divergence_roots[0].missing_in_abnormal.empty());
  EXPECT_EQ(rep.divergence_roots[0].missing_in_reference.size(), 1u);
}

TEST(Diff, SyscallSequenceDifferenceIsAtTheWorkloadRoot) {
  TreeBuilder a;
  a.syscall("write", 0, 10);
  a.syscall("fsync", 20, 30);
  TreeBuilder r;
  r.syscall("write", 0, 10);
  r.syscall("write", 15, 18);
  r.syscall("fsync", 20, 30);
  auto rep = diff(a.tree(), r.tree());
  ASSERT_EQ(rep.divergence_roots.size(), 1u);
  EXPECT_FALSE(rep.divergence_roots[0].abnormal_node);
  EXPECT_FALSE(rep.divergence_roots[0].reference_node);
  EXPECT_TRUE(rep.divergence_roots[0].abnormal_path.empty());
  ASSERT_EQ(rep.divergence_roots[0].missing_in_abnormal.size(), 1u);
  EXPECT_EQ(rep.divergence_roots[0].missing_in_abnormal[0].kind, NodeKind::Syscall);
}

TEST(Diff, SeveralDivergencesOrderedByDepth) {
  TreeBuilder a;
  auto s = a.syscall("fsync", 0, 100);
  auto x = a.kernel(s, "x", 0, 50);
  a.kernel(x, "deep_only_in_abnormal", 0, 10);
  TreeBuilder r;
  auto rs = r.syscall("fsync", 0, 100);
  r.kernel(rs, "x", 0, 50);
  r.kernel(rs, "y", 60, 90);
  auto rep = diff(a.tree(), r.tree());
  ASSERT_EQ(rep.divergence_roots.size(), 2u);
  EXPECT_EQ(rep.divergence_roots[0].abnormal_path, (std::vector<std::string>{"fsync"}));
  EXPECT_EQ(rep.divergence_roots[1].abnormal_path, (std::vector<std::string>{"fsync", "x"}));
}

TEST(Diff, CaseOneLocatesTheMissingFlush) {
  auto abnormal = testing::build_from_sim(sim::simulate(testing::load_config("case1_abnormal.json")));
  auto reference = testing::build_from_sim(sim::simulate(testing::load_config("case1_reference.json")));
  auto rep = diff(abnormal, reference);
  ASSERT_EQ(rep.divergence_roots.size(), 1u);
  const auto& d = rep.divergence_roots[0];
  EXPECT_EQ(d.abnormal_path.back(), "blkdev_fsync");
  ASSERT_EQ(d.missing_in_abnormal.size(), 1u);
  EXPECT_EQ(d.missing_in_abnormal[0].name, "blkdev_issue_flush");
  EXPECT_TRUE(d.missing_in_reference.empty());
}

TEST(Diff, CaseTwoLocatesTheSkippedCommit) {
  auto abnormal = testing::build_from_sim(sim::simulate(testing::load_config("case2_abnormal.json")));
  auto reference = testing::build_from_sim(sim::simulate(testing::load_config("case2_reference.json")));
  auto rep = diff(abnormal, reference);
  ASSERT_EQ(rep.divergence_roots.size(), 1u);
  EXPECT_EQ(rep.divergence_roots[0].abnormal_path.back(), "ext4_sync_file");
  ASSERT_EQ(rep.divergence_roots[0].missing_in_abnormal.size(), 1u);
  EXPECT_EQ(rep.divergence_roots[0].missing_in_abnormal[0].name, "jbd2_complete_transaction");
}

}  // namespace
}  // namespace xray::explorer
