#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xray/model.hpp"

namespace xray::explorer {

struct ChildSummary {
  NodeKind kind = NodeKind::Kernel;
  std::string name;
  NodeId node = 0;
  std::size_t subtree_size = 0;
  std::vector<std::string> commands;  // CMD names inside the unmatched subtree, in order
};

struct Divergence {
  // Absent node ids denote the workload root (the syscall sequences differ).
  std::optional<NodeId> abnormal_node;
  std::optional<NodeId> reference_node;
  std::vector<std::string> abnormal_path;
  std::vector<std::string> reference_path;
  std::vector<ChildSummary> missing_in_abnormal;   // present only in the reference
  std::vector<ChildSummary> missing_in_reference;  // present only in the abnormal tree
};

struct DiffReport {
  std::vector<Divergence> divergence_roots;  // by depth, then abnormal start time

  bool empty() const { return divergence_roots.empty(); }
};

// Walks both trees top-down, pairing children by the longest common
// subsequence of their (kind, name) labels. Every matched pair whose child
// label sequences differ is a divergence root.
DiffReport diff(const CorrelationTree& abnormal, const CorrelationTree& reference);

nlohmann::json diff_report_to_json(const DiffReport& report);

}  // namespace xray::explorer
