#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "xray/model.hpp"

namespace xray::sim {

enum class Target { RawBlock, Ext4 };

enum class Fault {
  BrokenBlkdevFsyncBarrier,  // blkdev_fsync skips blkdev_issue_flush
  Ext4FdatasyncIsizeBug,     // size-only fdatasync skips the journal commit
  TrimMisdirect,             // discard range shifted by kTrimMisdirectDelta
};

inline constexpr std::uint64_t kTrimMisdirectDelta = 2048;  // logical blocks

struct WorkloadOp {
  enum class Kind { Write, Fsync, Fdatasync, Trim };
  Kind kind = Kind::Write;
  std::uint64_t length = 4096;  // bytes, Write
  bool size_only = false;       // Fdatasync: pending change includes an i_size update
  std::uint64_t lba = 0;        // Trim
  std::uint64_t blocks = 0;     // Trim
};

struct ScaleParams {
  std::size_t node_count = 1000;
  double cmd_ratio = 0.01;
  std::uint32_t max_depth = 12;
};

struct SimConfig {
  std::uint64_t seed = 1;
  Protocol protocol = Protocol::Scsi;
  Target target = Target::RawBlock;
  std::vector<WorkloadOp> workload;
  std::set<Fault> faults;
  std::optional<ScaleParams> scale;
  std::int64_t device_offset_ns = -5000;  // device clock minus host clock
  std::int64_t start_epoch_ns = 1'700'000'000'000'000'000;
  std::int64_t think_time_ns = 100'000;  // idle gap between syscalls
};

struct TrimRange {
  std::uint64_t lba = 0;
  std::uint64_t blocks = 0;

  friend bool operator==(const TrimRange&, const TrimRange&) = default;
};

// Facts recorded while generating; consumed by tests only.
struct GroundTruth {
  KindCounts counts;
  std::map<std::string, std::vector<NodeId>> selections;  // rule1..rule3, ascending ids
  std::string divergence_root;                            // empty when no host-side divergence is injected
  std::vector<std::string> synthetic_names;               // filler kernel names
  std::vector<std::pair<TrimRange, TrimRange>> trims;     // (intended, issued)
  std::int64_t device_offset_ns = 0;
};

struct SimOutput {
  std::string host_trace;
  std::string dev_log;
  GroundTruth truth;
  CorrelationTree tree;  // host-clock tree the traces were rendered from
};

// Throws Error(Validation) for invalid workload ops or configs.
SimOutput simulate(const SimConfig& config);

struct RandomTree {
  CorrelationTree tree;
  GroundTruth truth;
};

// Exactly params.node_count nodes (node_count >= 1). CMD nodes sit under host
// leaves with probability cmd_ratio; 70% of them are write-family.
RandomTree generate_random_tree(const ScaleParams& params, std::uint64_t seed, Protocol protocol = Protocol::Scsi);

// Text renderings of a tree whose timing follows the host-trace reconstruction rule.
std::string render_host_trace(const CorrelationTree& tree);
std::string render_dev_log(const CorrelationTree& tree, std::int64_t device_offset_ns);

SimConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SimConfig& config);
nlohmann::json truth_to_json(const GroundTruth& truth);

std::string fault_name(Fault f);

}  // namespace xray::sim
