#include "xray/report.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace xray::report {

CountRow row_from_prune(const std::string& id, const explorer::PruneReport& report) {
  CountRow row{id, report.original_count, {}};
  for (const auto& r : report.rules) row.counts.push_back(r.selected.size());
  return row;
}

std::string format_table(const std::vector<CountRow>& rows, const std::vector<std::string>& rule_ids) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"ID", "Original"};
  header.insert(header.end(), rule_ids.begin(), rule_ids.end());
  cells.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> line{row.id, std::to_string(row.original) + " (100%)"};
    for (auto c : row.counts) line.push_back(std::to_string(c) + " (" + explorer::format_percentage(c, row.original) + ")");
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size() && i < width.size(); ++i) width[i] = std::max(width[i], line[i].size());

  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i + 1 == line.size()) {
        os << line[i];
      } else {
        os << std::left << std::setw(static_cast<int>(width[i] + 2)) << line[i];
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string format_prune_text(const CorrelationTree& tree, const explorer::PruneReport& report) {
  std::ostringstream os;
  os << "original " << report.original_count << "\n";
  for (const auto& r : report.rules) {
    os << r.rule_id << " " << r.selected.size() << " " << r.percentage << "\n";
    for (NodeId id : r.selected) {
      const auto& n = tree.node(id);
      os << "  " << id << " " << to_string(n.kind) << " " << n.name << "\n";
    }
  }
  return os.str();
}

namespace {

std::string join_path(const std::vector<std::string>& path) {
  if (path.empty()) return "<workload>";
  std::string out;
  for (const auto& p : path) {
    if (!out.empty()) out += "/";
    out += p;
  }
  return out;
}

void write_summaries(std::ostream& os, const char* label, const std::vector<explorer::ChildSummary>& list) {
  for (const auto& s : list) {
    os << "  " << label << " " << to_string(s.kind) << " " << s.name << " (" << s.subtree_size << " nodes";
    if (!s.commands.empty()) {
      os << "; cmds";
      for (const auto& c : s.commands) os << " " << c;
    }
    os << ")\n";
  }
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string format_diff_text(const explorer::DiffReport& report) {
  if (report.empty()) return "no divergence\n";
  std::ostringstream os;
  for (const auto& d : report.divergence_roots) {
    os << "divergence at " << join_path(d.abnormal_path);
    if (d.reference_path != d.abnormal_path) os << " (reference " << join_path(d.reference_path) << ")";
    os << "\n";
    write_summaries(os, "reference only:", d.missing_in_abnormal);
    write_summaries(os, "abnormal only:", d.missing_in_reference);
  }
  return os.str();
}

std::string format_violations_text(const std::vector<explorer::Violation>& violations) {
  if (violations.empty()) return "no violations\n";
  std::ostringstream os;
  for (const auto& v : violations) os << v.rule_id << ": " << v.message << "\n";
  return os.str();
}

std::string to_dot(const CorrelationTree& tree, const DotOptions& options) {
  std::vector<char> hot(tree.size(), 0);
  for (NodeId id : options.highlight)
    if (id < tree.size()) hot[id] = 1;

  std::ostringstream os;
  os << "digraph correlation_tree {\n";
  os << "  rankdir=TB;\n  node [fontname=\"Helvetica\", fontsize=10];\n";
  for (const auto& n : tree.nodes) {
    if (options.selected_only && !hot[n.id]) continue;
    os << "  n" << n.id << " [label=\"";
    switch (n.kind) {
      case NodeKind::Syscall:
        os << "syscall:" << dot_escape(n.name) << "\", shape=box, style=filled, fillcolor=\"#b7e1a1\"";
        break;
      case NodeKind::Kernel:
        os << dot_escape(n.name) << "\", shape=ellipse";
        break;
      case NodeKind::Cmd: {
        os << "cmd:" << dot_escape(n.name);
        if (n.cmd) {
          char op[8];
          std::snprintf(op, sizeof op, "0x%02x", n.cmd->opcode);
          os << " (" << op << ")";
        }
        os << "\", shape=box, style=filled, fillcolor=\"#9ec5ef\"";
        break;
      }
    }
    if (hot[n.id]) os << ", color=red, penwidth=2";
    os << "];\n";
  }
  for (const auto& n : tree.nodes) {
    if (!n.parent) continue;
    NodeId p = *n.parent;
    if (options.selected_only && (!hot[n.id] || !hot[p])) continue;
    os << "  n" << p << " -> n" << n.id;
    if (n.kind == NodeKind::Cmd) os << " [style=dashed";
    if (hot[n.id] && hot[p]) {
      os << (n.kind == NodeKind::Cmd ? ", " : " [") << "color=red, penwidth=2]";
    } else if (n.kind == NodeKind::Cmd) {
      os << "]";
    }
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace xray::report
