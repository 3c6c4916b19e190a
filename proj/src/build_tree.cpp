#include <algorithm>

#include "xray/error.hpp"
#include "xray/explorer.hpp"

namespace xray::explorer {

namespace {

struct Draft {
  NodeKind kind;
  std::string name;
  Timestamp start;
  Timestamp end;
  std::vector<std::size_t> host_children;
  std::vector<std::size_t> cmd_children;
  std::optional<DeviceCommand> cmd;
};

enum class Attach { Contained, Gap, Unanchored };

}  // namespace

CorrelationTree build_tree(const std::vector<HostEvent>& host, const std::vector<DeviceCommand>& cmds,
                           TreeMeta meta) {
  std::vector<Draft> drafts;
  std::vector<std::size_t> roots;
  std::vector<std::size_t> stack;

  for (const auto& ev : host) {
    switch (ev.kind) {
      case HostEventKind::SyscallEnter:
        if (!stack.empty()) throw Error(ErrorKind::Validation, "syscall " + ev.name + " entered inside another syscall");
        roots.push_back(drafts.size());
        stack.push_back(drafts.size());
        drafts.push_back(Draft{NodeKind::Syscall, ev.name, ev.ts, ev.ts, {}, {}, {}});
        break;
      case HostEventKind::FuncEnter:
        if (stack.empty()) throw Error(ErrorKind::Validation, "function " + ev.name + " entered outside a syscall");
        drafts[stack.back()].host_children.push_back(drafts.size());
        stack.push_back(drafts.size());
        drafts.push_back(Draft{NodeKind::Kernel, ev.name, ev.ts, ev.ts, {}, {}, {}});
        break;
      case HostEventKind::FuncExit:
      case HostEventKind::SyscallExit: {
        bool is_syscall = ev.kind == HostEventKind::SyscallExit;
        if (stack.empty()) throw Error(ErrorKind::Validation, "exit of " + ev.name + " without entry");
        Draft& d = drafts[stack.back()];
        if (d.name != ev.name || (d.kind == NodeKind::Syscall) != is_syscall)
          throw Error(ErrorKind::Validation, "exit of " + ev.name + " does not match open " + d.name);
        if (ev.ts < d.start) throw Error(ErrorKind::Validation, "exit of " + ev.name + " precedes its entry");
        d.end = ev.ts;
        stack.pop_back();
        break;
      }
    }
  }
  if (!stack.empty()) throw Error(ErrorKind::Validation, "host events end with " + drafts[stack.back()].name + " open");
  if (!cmds.empty() && roots.empty()) throw Error(ErrorKind::Validation, "no syscall to anchor device commands");

  std::vector<std::size_t> order(cmds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cmds[a].ts < cmds[b].ts; });

  // Last child whose start is <= ts; touching siblings resolve to the later one.
  auto last_starting_at_or_before = [&](const std::vector<std::size_t>& kids, Timestamp ts) -> std::optional<std::size_t> {
    auto it = std::upper_bound(kids.begin(), kids.end(), ts,
                               [&](Timestamp t, std::size_t k) { return t < drafts[k].start; });
    if (it == kids.begin()) return std::nullopt;
    return *(it - 1);
  };

  std::vector<Attach> attach_kind(drafts.size() + cmds.size(), Attach::Contained);
  for (std::size_t ci : order) {
    const DeviceCommand& c = cmds[ci];
    Attach how = Attach::Contained;
    std::size_t target;
    auto root = last_starting_at_or_before(roots, c.ts);
    if (root && drafts[*root].end >= c.ts) {
      target = *root;
      while (true) {
        auto child = last_starting_at_or_before(drafts[target].host_children, c.ts);
        if (!child || drafts[*child].end < c.ts) break;
        target = *child;
      }
      if (!drafts[target].host_children.empty()) how = Attach::Gap;
    } else {
      target = root ? *root : roots.front();
      how = Attach::Unanchored;
    }
    std::size_t idx = drafts.size();
    drafts.push_back(Draft{NodeKind::Cmd, c.name, c.ts, c.ts, {}, {}, c});
    drafts[target].cmd_children.push_back(idx);
    attach_kind[idx] = how;
  }

  CorrelationTree tree;
  tree.nodes.reserve(drafts.size());
  std::vector<std::pair<std::size_t, std::optional<NodeId>>> work;
  for (auto it = roots.rbegin(); it != roots.rend(); ++it) work.emplace_back(*it, std::nullopt);
  while (!work.empty()) {
    auto [di, parent] = work.back();
    work.pop_back();
    auto id = static_cast<NodeId>(tree.nodes.size());
    Draft& d = drafts[di];
    TreeNode node;
    node.id = id;
    node.kind = d.kind;
    node.name = std::move(d.name);
    node.start = d.start;
    node.end = d.end;
    node.parent = parent;
    node.cmd = std::move(d.cmd);
    if (parent) {
      tree.nodes[*parent].children.push_back(id);
    } else {
      tree.roots.push_back(id);
    }
    if (attach_kind[di] == Attach::Unanchored) meta.unanchored.push_back(id);
    if (attach_kind[di] == Attach::Gap) meta.gap_attached.push_back(id);
    tree.nodes.push_back(std::move(node));

    std::vector<std::size_t> kids;
    kids.reserve(d.host_children.size() + d.cmd_children.size());
    std::merge(d.host_children.begin(), d.host_children.end(), d.cmd_children.begin(), d.cmd_children.end(),
               std::back_inserter(kids), [&](std::size_t a, std::size_t b) { return drafts[a].start < drafts[b].start; });
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) work.emplace_back(*it, id);
  }
  tree.meta = std::move(meta);
  return tree;
}

}  // namespace xray::explorer
