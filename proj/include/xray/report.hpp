#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xray/diff.hpp"
#include "xray/model.hpp"
#include "xray/rules.hpp"

namespace xray::report {

// One row of the summary table: original node count and per-rule counts.
struct CountRow {
  std::string id;
  std::uint64_t original = 0;
  std::vector<std::uint64_t> counts;
};

CountRow row_from_prune(const std::string& id, const explorer::PruneReport& report);

// Columnar layout: ID, Original, then count and percentage per rule.
std::string format_table(const std::vector<CountRow>& rows, const std::vector<std::string>& rule_ids);

std::string format_prune_text(const CorrelationTree& tree, const explorer::PruneReport& report);
std::string format_diff_text(const explorer::DiffReport& report);
std::string format_violations_text(const std::vector<explorer::Violation>& violations);

struct DotOptions {
  std::vector<NodeId> highlight;  // critical path / selected nodes
  bool selected_only = false;
};

// Graphviz digraph. SYSCALL nodes filled green, CMD nodes filled blue,
// highlighted nodes and the edges between them drawn red and bold.
std::string to_dot(const CorrelationTree& tree, const DotOptions& options = {});

}  // namespace xray::report
