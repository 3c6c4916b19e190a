#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "xray/dev_trace.hpp"
#include "xray/explorer.hpp"
#include "xray/host_trace.hpp"
#include "xray/model.hpp"
#include "xray/serialize.hpp"
#include "xray/stack_sim.hpp"
#include "xray/time_align.hpp"

namespace xray::testing {

inline std::filesystem::path source_dir() { return XRAY_SOURCE_DIR; }

inline sim::SimConfig load_config(const std::string& name) {
  return sim::config_from_json(nlohmann::json::parse(read_file(source_dir() / "configs" / name)));
}

// The same pipeline `xray build` runs: parse both traces, estimate the
// offset, shift, attach.
inline CorrelationTree build_from_text(const std::string& host_text, const std::string& dev_text,
                                       align::ClockOffset* offset_out = nullptr) {
  auto h = host::parse_host_trace(host_text, "host.trace");
  auto cmds = dev::decode_all(dev::parse_dev_log(dev_text, "dev.log"));
  auto off = align::estimate_offset(h.events, cmds);
  if (offset_out) *offset_out = off;
  TreeMeta meta;
  meta.offset_ns = off.offset_ns;
  meta.offset_method = "estimated";
  meta.host_warnings = h.warnings.size();
  return explorer::build_tree(h.events, align::apply_offset(cmds, off.offset_ns), meta);
}

inline CorrelationTree build_from_sim(const sim::SimOutput& out, align::ClockOffset* offset_out = nullptr) {
  return build_from_text(out.host_trace, out.dev_log, offset_out);
}

// Hand-made trees for focused tests. Nodes must be added in pre-order.
class TreeBuilder {
 public:
  NodeId syscall(const std::string& name, std::int64_t start, std::int64_t end) {
    NodeId id = add(NodeKind::Syscall, name, start, end, std::nullopt);
    tree_.roots.push_back(id);
    return id;
  }

  NodeId kernel(NodeId parent, const std::string& name, std::int64_t start, std::int64_t end) {
    return add(NodeKind::Kernel, name, start, end, parent);
  }

  NodeId cmd(NodeId parent, const std::string& name, std::int64_t ts) {
    NodeId id = add(NodeKind::Cmd, name, ts, ts, parent);
    Protocol p = (name == "WRITE" || name == "READ" || name == "FLUSH" || name == "DSM") ? Protocol::Nvme : Protocol::Scsi;
    Queue q = p == Protocol::Nvme ? Queue::Io : Queue::None;
    std::map<std::string, std::uint64_t> fields;
    if (name == "WRITE_10" || name == "READ_10" || name == "WRITE_16" || name == "READ_16") fields = {{"lba", 0}, {"block_count", 8}};
    if (name == "WRITE" || name == "READ") fields = {{"nsid", 1}, {"slba", 0}, {"nlb", 7}};
    if (name == "FLUSH") fields = {{"nsid", 1}};
    tree_.nodes[id].cmd = dev::make_command(p, q, name, Timestamp{ts}, fields);
    return id;
  }

  CorrelationTree& tree() { return tree_; }

 private:
  NodeId add(NodeKind kind, const std::string& name, std::int64_t start, std::int64_t end, std::optional<NodeId> parent) {
    auto id = static_cast<NodeId>(tree_.nodes.size());
    TreeNode n;
    n.id = id;
    n.kind = kind;
    n.name = name;
    n.start = Timestamp{start};
    n.end = Timestamp{end};
    n.parent = parent;
    if (parent) tree_.nodes[*parent].children.push_back(id);
    tree_.nodes.push_back(std::move(n));
    return id;
  }

  CorrelationTree tree_;
};

// Host events (enter/exit pairs) for the host part of a tree.
inline std::vector<HostEvent> host_events_of(const CorrelationTree& tree) {
  std::vector<HostEvent> out;
  std::vector<std::pair<NodeId, bool>> stack;
  for (auto it = tree.roots.rbegin(); it != tree.roots.rend(); ++it) stack.push_back({*it, false});
  std::vector<std::uint32_t> depth(tree.size(), 0);
  while (!stack.empty()) {
    auto [id, closing] = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[id];
    if (n.kind == NodeKind::Cmd) continue;
    bool sys = n.kind == NodeKind::Syscall;
    if (closing) {
      out.push_back({sys ? HostEventKind::SyscallExit : HostEventKind::FuncExit, n.name, n.end, depth[id], 0, false});
      continue;
    }
    out.push_back({sys ? HostEventKind::SyscallEnter : HostEventKind::FuncEnter, n.name, n.start, depth[id], 0, false});
    stack.push_back({id, true});
    for (auto c = n.children.rbegin(); c != n.children.rend(); ++c) {
      depth[*c] = depth[id] + 1;
      stack.push_back({*c, false});
    }
  }
  return out;
}

}  // namespace xray::testing
