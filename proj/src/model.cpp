#include "xray/model.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <unordered_set>

namespace xray {

std::string_view to_string(Protocol p) { return p == Protocol::Scsi ? "SCSI" : "NVME"; }

std::string_view to_string(Queue q) {
  switch (q) {
    case Queue::None: return "NONE";
    case Queue::Io: return "IO";
    case Queue::Admin: return "ADMIN";
  }
  return "NONE";
}

std::string_view to_string(CommandClass c) {
  return c == CommandClass::DataTransfer ? "DataTransfer" : "Admin";
}

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Syscall: return "SYSCALL";
    case NodeKind::Kernel: return "KERNEL";
    case NodeKind::Cmd: return "CMD";
  }
  return "KERNEL";
}

std::string_view to_string(HostEventKind k) {
  switch (k) {
    case HostEventKind::SyscallEnter: return "SyscallEnter";
    case HostEventKind::SyscallExit: return "SyscallExit";
    case HostEventKind::FuncEnter: return "FuncEnter";
    case HostEventKind::FuncExit: return "FuncExit";
  }
  return "FuncEnter";
}

std::optional<NodeKind> parse_node_kind(std::string_view s) {
  if (s == "SYSCALL") return NodeKind::Syscall;
  if (s == "KERNEL") return NodeKind::Kernel;
  if (s == "CMD") return NodeKind::Cmd;
  return std::nullopt;
}

bool is_write_command(std::string_view name) {
  static constexpr std::array<std::string_view, 3> kWrites{"WRITE_10", "WRITE_16", "WRITE"};
  return std::find(kWrites.begin(), kWrites.end(), name) != kWrites.end();
}

bool is_flush_command(std::string_view name) {
  static constexpr std::array<std::string_view, 3> kFlushes{"SYNCHRONIZE_CACHE",
                                                            "SYNCHRONIZE_CACHE_16", "FLUSH"};
  return std::find(kFlushes.begin(), kFlushes.end(), name) != kFlushes.end();
}

namespace {

std::string interval_str(const TreeNode& n) {
  std::ostringstream os;
  os << "[" << n.start.epoch_ns << ", " << n.end.epoch_ns << "]";
  return os.str();
}

}  // namespace

std::vector<std::string> validate_tree(const CorrelationTree& tree) {
  std::vector<std::string> out;
  const auto n = tree.nodes.size();
  auto report = [&](NodeId id, std::string_view invariant, const std::string& detail) {
    std::string msg = "node " + std::to_string(id) + ": " + std::string(invariant);
    if (!detail.empty()) msg += ": " + detail;
    out.push_back(std::move(msg));
  };

  std::unordered_set<NodeId> unanchored(tree.meta.unanchored.begin(), tree.meta.unanchored.end());

  for (std::size_t i = 0; i < n; ++i) {
    const TreeNode& node = tree.nodes[i];
    const auto id = static_cast<NodeId>(i);
    if (node.id != id) report(id, "dense id", "stored id " + std::to_string(node.id));
    if (node.start > node.end) report(id, "interval order", interval_str(node));

    if (node.kind == NodeKind::Cmd) {
      if (!node.children.empty()) report(id, "CMD leaf", std::to_string(node.children.size()) + " children");
      if (!node.cmd) report(id, "CMD payload", "missing command");
      if (node.start != node.end) report(id, "CMD instant", interval_str(node));
    } else if (node.cmd) {
      report(id, "CMD payload", "payload on non-CMD node");
    }

    if (node.kind == NodeKind::Syscall && node.parent) report(id, "SYSCALL root", "has a parent");
    if (node.kind != NodeKind::Syscall && !node.parent) report(id, "single parent", "non-SYSCALL node without parent");

    if (node.parent) {
      NodeId p = *node.parent;
      if (p >= n) {
        report(id, "parent link", "parent " + std::to_string(p) + " out of range");
      } else {
        const TreeNode& parent = tree.nodes[p];
        if (std::find(parent.children.begin(), parent.children.end(), id) == parent.children.end())
          report(id, "parent link", "not listed among children of " + std::to_string(p));
        bool exempt = node.kind == NodeKind::Cmd && unanchored.count(id) != 0;
        if (!exempt && (node.start < parent.start || node.end > parent.end))
          report(id, "interval nesting",
                 interval_str(node) + " not within parent " + std::to_string(p) + " " + interval_str(parent));
      }
    }

    std::optional<Timestamp> prev;
    for (NodeId c : node.children) {
      if (c >= n) {
        report(id, "child link", "child " + std::to_string(c) + " out of range");
        continue;
      }
      if (tree.nodes[c].parent != std::optional<NodeId>(id))
        report(c, "child link", "listed under " + std::to_string(id) + " but parent differs");
      if (prev && tree.nodes[c].start < *prev) report(c, "sibling order", "starts before previous sibling");
      prev = tree.nodes[c].start;
    }
  }

  std::optional<Timestamp> prev_root;
  for (NodeId r : tree.roots) {
    if (r >= n) {
      report(r, "root list", "out of range");
      continue;
    }
    const TreeNode& root = tree.nodes[r];
    if (root.kind != NodeKind::Syscall) report(r, "SYSCALL root", "root is " + std::string(to_string(root.kind)));
    if (root.parent) report(r, "root list", "root has a parent");
    if (prev_root && root.start < *prev_root) report(r, "sibling order", "root starts before previous root");
    prev_root = root.start;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<NodeId>(i);
    if (!tree.nodes[i].parent && std::find(tree.roots.begin(), tree.roots.end(), id) == tree.roots.end())
      report(id, "root list", "parentless node missing from roots");
  }

  // Reachability, acyclicity and pre-order numbering in one walk.
  std::vector<char> seen(n, 0);
  std::size_t visited = 0;
  NodeId expected = 0;
  bool preorder_ok = true;
  std::vector<NodeId> stack;
  for (auto it = tree.roots.rbegin(); it != tree.roots.rend(); ++it)
    if (*it < n) stack.push_back(*it);
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (seen[id]) {
      report(id, "acyclic", "reached more than once");
      continue;
    }
    seen[id] = 1;
    ++visited;
    if (id != expected++) preorder_ok = false;
    const auto& kids = tree.nodes[id].children;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it)
      if (*it < n) stack.push_back(*it);
  }
  if (visited != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (!seen[i]) report(static_cast<NodeId>(i), "reachability", "not reachable from any root");
  } else if (!preorder_ok) {
    out.push_back("tree: pre-order ids: ids are not assigned in pre-order");
  }
  return out;
}

KindCounts node_count_by_kind(const CorrelationTree& tree) {
  KindCounts c;
  for (const auto& node : tree.nodes) {
    switch (node.kind) {
      case NodeKind::Syscall: ++c.syscall; break;
      case NodeKind::Kernel: ++c.kernel; break;
      case NodeKind::Cmd: ++c.cmd; break;
    }
  }
  return c;
}

std::vector<std::string> node_path(const CorrelationTree& tree, NodeId id) {
  std::vector<std::string> path;
  std::optional<NodeId> cur = id;
  while (cur) {
    const TreeNode& n = tree.node(*cur);
    path.push_back(n.name);
    cur = n.parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace xray
