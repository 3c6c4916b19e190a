#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xray {

// Nanoseconds since the Unix epoch.
struct Timestamp {
  std::int64_t epoch_ns = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

enum class Protocol { Scsi, Nvme };
enum class Queue { None, Io, Admin };  // None for SCSI
enum class CommandClass { DataTransfer, Admin };

struct DeviceCommand {
  Timestamp ts;
  Protocol protocol = Protocol::Scsi;
  Queue queue = Queue::None;
  std::uint8_t opcode = 0;
  std::string name;
  CommandClass cls = CommandClass::Admin;
  // Only the fields the opcode defines: lba/block_count (SCSI),
  // nsid/slba/nlb/nr/ad/queue_id (NVMe).
  std::map<std::string, std::uint64_t> decoded;
  std::vector<std::uint8_t> raw;  // 16 bytes SCSI, 64 bytes NVMe

  friend bool operator==(const DeviceCommand&, const DeviceCommand&) = default;
};

enum class HostEventKind { SyscallEnter, SyscallExit, FuncEnter, FuncExit };

struct HostEvent {
  HostEventKind kind = HostEventKind::FuncEnter;
  std::string name;
  Timestamp ts;
  std::uint32_t depth = 0;  // 0 for syscalls, 1 + indent level for kernel functions
  std::int64_t thread_id = 0;
  bool synthetic = false;  // exit synthesized while repairing a lossy trace

  friend bool operator==(const HostEvent&, const HostEvent&) = default;
};

enum class NodeKind { Syscall, Kernel, Cmd };

using NodeId = std::uint32_t;

struct TreeNode {
  NodeId id = 0;
  NodeKind kind = NodeKind::Kernel;
  std::string name;
  Timestamp start;
  Timestamp end;
  std::vector<NodeId> children;
  std::optional<NodeId> parent;
  std::optional<DeviceCommand> cmd;  // CMD nodes only

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct TreeMeta {
  std::string host_source;
  std::string dev_source;
  std::int64_t offset_ns = 0;
  std::string offset_method = "none";  // none | configured | estimated
  std::string timestamp_semantics = "submission-arrival";
  std::vector<NodeId> unanchored;    // CMDs outside every syscall interval
  std::vector<NodeId> gap_attached;  // CMDs between sibling function intervals
  std::uint64_t host_warnings = 0;

  friend bool operator==(const TreeMeta&, const TreeMeta&) = default;
};

// Arena of nodes indexed by id. Ids are dense and assigned in pre-order;
// `roots` plays the role of the invisible workload root.
struct CorrelationTree {
  std::vector<TreeNode> nodes;
  std::vector<NodeId> roots;
  TreeMeta meta;

  const TreeNode& node(NodeId id) const { return nodes.at(id); }
  std::size_t size() const { return nodes.size(); }

  friend bool operator==(const CorrelationTree&, const CorrelationTree&) = default;
};

struct KindCounts {
  std::size_t syscall = 0;
  std::size_t kernel = 0;
  std::size_t cmd = 0;

  std::size_t total() const { return syscall + kernel + cmd; }
  friend bool operator==(const KindCounts&, const KindCounts&) = default;
};

std::string_view to_string(Protocol p);
std::string_view to_string(Queue q);
std::string_view to_string(CommandClass c);
std::string_view to_string(NodeKind k);
std::string_view to_string(HostEventKind k);

std::optional<NodeKind> parse_node_kind(std::string_view s);

// Write-family commands select syscall subtrees for rule1.
bool is_write_command(std::string_view name);
// Commands that force the volatile cache to media.
bool is_flush_command(std::string_view name);

// Returns one description per broken invariant; empty means well-formed.
std::vector<std::string> validate_tree(const CorrelationTree& tree);

KindCounts node_count_by_kind(const CorrelationTree& tree);

// Pre-order walk over a subtree, root included.
template <typename Fn>
void for_each_in_subtree(const CorrelationTree& tree, NodeId root, Fn&& fn) {
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    const TreeNode& n = tree.nodes[id];
    fn(n);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
}

// Names from the root down to `id`, inclusive.
std::vector<std::string> node_path(const CorrelationTree& tree, NodeId id);

}  // namespace xray
