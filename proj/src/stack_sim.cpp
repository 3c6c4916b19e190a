#include "xray/stack_sim.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <sstream>

#include "xray/dev_trace.hpp"
#include "xray/error.hpp"

namespace xray::sim {

namespace {

// Engine output is fully specified for mt19937_64; the distributions below
// avoid the implementation-defined std:: ones so traces are identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return v % n;
  }

  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }

 private:
  std::mt19937_64 eng_;
};

// Builds a tree in pre-order against a time cursor, following the host-trace
// timing rule: a node starts where the cursor is, children run back to back,
// and a node ends after its children plus its own self time. Ground-truth
// counts and rule selections are recorded while building.
class Composer {
 public:
  explicit Composer(std::int64_t start_epoch) : cursor_(start_epoch) {}

  void idle(std::int64_t ns) { cursor_ += ns; }

  void open_syscall(const std::string& name) {
    NodeId id = add(NodeKind::Syscall, name, Timestamp{cursor_}, std::nullopt);
    tree_.roots.push_back(id);
    open_.push_back(id);
    root_ = id;
    root_has_write_ = false;
    root_last_cmd_ = Timestamp{cursor_};
    root_rule3_.clear();
  }

  void close_syscall() {
    NodeId id = open_.back();
    open_.pop_back();
    tree_.nodes[id].end = Timestamp{cursor_};
    if (!root_has_write_) return;

    auto& rule1 = truth_.selections["rule1"];
    auto& rule2 = truth_.selections["rule2"];
    auto& rule3 = truth_.selections["rule3"];
    for (NodeId i = root_; i < tree_.nodes.size(); ++i) {
      rule1.push_back(i);
      const auto& n = tree_.nodes[i];
      if (i == root_ || n.kind == NodeKind::Cmd || n.start <= root_last_cmd_) rule2.push_back(i);
    }
    std::vector<NodeId> marks(root_rule3_.begin(), root_rule3_.end());
    rule3.insert(rule3.end(), marks.begin(), marks.end());
  }

  void open(const std::string& name) {
    NodeId id = add(NodeKind::Kernel, name, Timestamp{cursor_}, open_.back());
    open_.push_back(id);
  }

  void close(std::int64_t self_ns) {
    NodeId id = open_.back();
    open_.pop_back();
    cursor_ += self_ns;
    TreeNode& n = tree_.nodes[id];
    for (NodeId c : n.children)
      if (tree_.nodes[c].start.epoch_ns >= cursor_) throw Error(ErrorKind::Validation, "command outside its leaf");
    n.end = Timestamp{cursor_};
  }

  void leaf(const std::string& name, std::int64_t dur) {
    open(name);
    close(dur);
  }

  // CMD child of the innermost open node, `at` ns after the cursor.
  void cmd(std::int64_t at, DeviceCommand c) {
    c.ts = Timestamp{cursor_ + at};
    std::string name = c.name;
    bool write = is_write_command(name);
    NodeId id = add(NodeKind::Cmd, name, c.ts, open_.back());
    tree_.nodes[id].end = c.ts;
    tree_.nodes[id].cmd = std::move(c);
    if (write) root_has_write_ = true;
    root_last_cmd_ = std::max(root_last_cmd_, tree_.nodes[id].start);
    root_rule3_.insert(id);
    root_rule3_.insert(open_.begin(), open_.end());
  }

  std::size_t depth() const { return open_.size(); }
  bool top_has_children() const { return !tree_.nodes[open_.back()].children.empty(); }
  std::size_t size() const { return tree_.nodes.size(); }
  std::int64_t cursor() const { return cursor_; }

  CorrelationTree take_tree() { return std::move(tree_); }
  GroundTruth& truth() { return truth_; }

 private:
  NodeId add(NodeKind kind, const std::string& name, Timestamp start, std::optional<NodeId> parent) {
    auto id = static_cast<NodeId>(tree_.nodes.size());
    TreeNode n;
    n.id = id;
    n.kind = kind;
    n.name = name;
    n.start = start;
    n.end = start;
    n.parent = parent;
    if (parent) tree_.nodes[*parent].children.push_back(id);
    tree_.nodes.push_back(std::move(n));
    switch (kind) {
      case NodeKind::Syscall: ++truth_.counts.syscall; break;
      case NodeKind::Kernel: ++truth_.counts.kernel; break;
      case NodeKind::Cmd: ++truth_.counts.cmd; break;
    }
    return id;
  }

  CorrelationTree tree_;
  GroundTruth truth_;
  std::vector<NodeId> open_;
  std::int64_t cursor_;
  NodeId root_ = 0;
  bool root_has_write_ = false;
  Timestamp root_last_cmd_;
  std::set<NodeId> root_rule3_;
};

constexpr std::uint64_t kPageBytes = 4096;
constexpr std::uint64_t kSectorsPerPage = 8;  // 512-byte logical blocks
constexpr std::uint64_t kExt4DataBase = 0x40000;
constexpr std::uint64_t kJournalBase = 0x200000;

// Names taken from published call-path fragments; everything else the
// templates use is filler.
const std::set<std::string>& documented_names() {
  static const std::set<std::string> names{"vfs_fsync", "blkdev_fsync", "blkdev_issue_flush", "ext4_sync_file",
                                           "filemap_write_and_wait_range"};
  return names;
}

class StackModel {
 public:
  StackModel(const SimConfig& cfg, Composer& c, Rng& rng) : cfg_(cfg), c_(c), rng_(rng) {}

  void run(const WorkloadOp& op) {
    switch (op.kind) {
      case WorkloadOp::Kind::Write: write(op.length); break;
      case WorkloadOp::Kind::Fsync: sync("fsync", "__x64_sys_fsync", false, false); break;
      case WorkloadOp::Kind::Fdatasync: sync("fdatasync", "__x64_sys_fdatasync", true, op.size_only); break;
      case WorkloadOp::Kind::Trim: trim(op.lba, op.blocks); break;
    }
  }

 private:
  bool scsi() const { return cfg_.protocol == Protocol::Scsi; }
  bool ext4() const { return cfg_.target == Target::Ext4; }
  bool fault(Fault f) const { return cfg_.faults.count(f) != 0; }

  std::int64_t d(std::int64_t base) { return base + rng_.range(0, base / 4); }

  void open(const std::string& name) { c_.open(name); }
  void close(std::int64_t self_base) { c_.close(d(self_base)); }
  void leaf(const std::string& name, std::int64_t base) { c_.leaf(name, d(base)); }

  void diverged_at(const std::string& name) {
    if (c_.truth().divergence_root.empty()) c_.truth().divergence_root = name;
  }

  DeviceCommand write_cmd(std::uint64_t lba, std::uint64_t sectors) {
    if (scsi()) return dev::make_command(Protocol::Scsi, Queue::None, "WRITE_10", {}, {{"lba", lba}, {"block_count", sectors}});
    return dev::make_command(Protocol::Nvme, Queue::Io, "WRITE", {}, {{"nsid", 1}, {"slba", lba}, {"nlb", sectors - 1}});
  }

  DeviceCommand flush_cmd() {
    if (scsi()) return dev::make_command(Protocol::Scsi, Queue::None, "SYNCHRONIZE_CACHE", {}, {});
    return dev::make_command(Protocol::Nvme, Queue::Io, "FLUSH", {}, {{"nsid", 1}});
  }

  DeviceCommand discard_cmd() {
    // One range descriptor; the range itself travels in the data payload.
    if (scsi()) return dev::make_command(Protocol::Scsi, Queue::None, "UNMAP", {}, {{"param_list_length", 24}});
    return dev::make_command(Protocol::Nvme, Queue::Io, "DSM", {}, {{"nsid", 1}, {"nr", 0}, {"attributes", 4}});
  }

  // Block-layer submission down to the driver hook that hands the command to the device.
  void dispatch(DeviceCommand cmd) {
    open("submit_bio");
    open("generic_make_request");
    open("blk_mq_make_request");
    open("blk_mq_try_issue_directly");
    open(scsi() ? "scsi_queue_rq" : "nvme_queue_rq");
    open(scsi() ? "scsi_dispatch_cmd" : "nvme_submit_cmd");
    c_.cmd(0, std::move(cmd));
    close(900);
    close(400);
    close(300);
    leaf("blk_mq_sched_restart", 120);
    close(500);
    close(200);
    close(150);
  }

  void write(std::uint64_t length) {
    std::uint64_t first = file_offset_ / kPageBytes;
    std::uint64_t last = (file_offset_ + length - 1) / kPageBytes;
    file_offset_ += length;

    c_.open_syscall("write");
    open("__x64_sys_write");
    open("ksys_write");
    open("vfs_write");
    leaf("rw_verify_area", 150);
    open("__vfs_write");
    open("new_sync_write");
    open(ext4() ? "ext4_file_write_iter" : "blkdev_write_iter");
    open("__generic_file_write_iter");
    leaf("file_update_time", 300);
    open("generic_perform_write");
    for (std::uint64_t page = first; page <= last; ++page) {
      dirty_.insert(page);
      if (ext4()) {
        open("ext4_da_write_begin");
        leaf("grab_cache_page_write_begin", 700);
        leaf("ext4_da_get_block_prep", 400);
        close(200);
        leaf("iov_iter_copy_from_user_atomic", 900);
        open("ext4_da_write_end");
        leaf("generic_write_end", 300);
        close(150);
      } else {
        open("blkdev_write_begin");
        open("block_write_begin");
        leaf("grab_cache_page_write_begin", 700);
        close(250);
        close(100);
        leaf("iov_iter_copy_from_user_atomic", 900);
        open("blkdev_write_end");
        leaf("block_write_end", 300);
        close(100);
      }
      leaf("balance_dirty_pages_ratelimited", 200);
    }
    close(300);
    close(200);
    close(150);
    close(150);
    close(100);
    leaf("fsnotify", 120);
    close(150);
    close(100);
    close(100);
    c_.close_syscall();
  }

  void writeback_raw() {
    open("__filemap_fdatawrite_range");
    open("do_writepages");
    open("blkdev_writepages");
    open("generic_writepages");
    open("write_cache_pages");
    for (auto page : dirty_) {
      open("__writepage");
      open("blkdev_writepage");
      open("__block_write_full_page");
      open("submit_bh_wbc");
      dispatch(write_cmd(page * kSectorsPerPage, kSectorsPerPage));
      close(200);
      close(300);
      close(150);
      close(100);
    }
    dirty_.clear();
    close(400);
    close(150);
    close(150);
    close(150);
    close(200);
  }

  void writeback_ext4() {
    open("__filemap_fdatawrite_range");
    open("do_writepages");
    open("ext4_writepages");
    // Submission leads so the first data write opens the syscall's command
    // stream, as in the raw-device path.
    for (auto page : dirty_) {
      open("mpage_map_and_submit_buffers");
      open("ext4_io_submit");
      dispatch(write_cmd(kExt4DataBase + page * kSectorsPerPage, kSectorsPerPage));
      close(150);
      leaf("ext4_bio_write_page", 500);
      close(200);
    }
    dirty_.clear();
    leaf("mpage_release_unused_pages", 300);
    close(400);
    close(150);
    close(150);
  }

  void issue_flush() {
    open("blkdev_issue_flush");
    leaf("bio_alloc_bioset", 250);
    open("submit_bio_wait");
    dispatch(flush_cmd());
    leaf("wait_for_completion_io", 2500);
    close(150);
    leaf("bio_put", 100);
    close(100);
  }

  void journal_commit() {
    open("jbd2_complete_transaction");
    leaf("jbd2_log_start_commit", 300);
    open("jbd2_log_wait_commit");
    open("jbd2_journal_commit_transaction");
    leaf("jbd2_journal_write_metadata_buffer", 600);
    open("submit_bh");
    dispatch(write_cmd(kJournalBase + journal_block_ * kSectorsPerPage, kSectorsPerPage));
    close(150);
    ++journal_block_;
    open("journal_submit_commit_record");
    open("submit_bh");
    dispatch(write_cmd(kJournalBase + journal_block_ * kSectorsPerPage, kSectorsPerPage));
    close(150);
    close(200);
    ++journal_block_;
    close(400);
    close(300);
    close(200);
  }

  void sync(const std::string& syscall, const std::string& entry, bool datasync, bool size_only) {
    c_.open_syscall(syscall);
    open(entry);
    open("do_fsync");
    open("vfs_fsync_range");
    if (ext4()) {
      open("ext4_sync_file");
      open("file_write_and_wait_range");
      writeback_ext4();
      leaf("file_check_and_advance_wb_err", 200);
      close(150);
      bool needs_commit = !datasync || size_only;
      if (needs_commit && datasync && fault(Fault::Ext4FdatasyncIsizeBug)) {
        needs_commit = false;
        diverged_at("ext4_sync_file");
      }
      if (needs_commit) journal_commit();
      issue_flush();
      close(300);
    } else {
      open("blkdev_fsync");
      open("filemap_write_and_wait_range");
      writeback_raw();
      leaf("filemap_fdatawait_range", 600);
      close(150);
      if (fault(Fault::BrokenBlkdevFsyncBarrier)) {
        diverged_at("blkdev_fsync");
      } else {
        issue_flush();
      }
      close(200);
    }
    close(150);
    close(150);
    close(100);
    c_.close_syscall();
  }

  void trim(std::uint64_t lba, std::uint64_t blocks) {
    TrimRange intended{lba, blocks};
    TrimRange issued = intended;
    if (fault(Fault::TrimMisdirect)) issued.lba += kTrimMisdirectDelta;
    c_.truth().trims.emplace_back(intended, issued);

    c_.open_syscall("ioctl");
    open("__x64_sys_ioctl");
    open("ksys_ioctl");
    open("do_vfs_ioctl");
    open("block_ioctl");
    open("blkdev_ioctl");
    open("blk_ioctl_discard");
    leaf("truncate_inode_pages_range", 900);
    open("blkdev_issue_discard");
    leaf("__blkdev_issue_discard", 700);
    open("submit_bio_wait");
    std::size_t cmd_index = c_.size() + 6;  // the CMD follows the six dispatch frames
    dispatch(discard_cmd());
    payloads_[static_cast<NodeId>(cmd_index)] = issued;
    leaf("wait_for_completion_io", 2000);
    close(150);
    close(200);
    close(200);
    close(150);
    close(150);
    close(100);
    close(100);
    close(100);
    c_.close_syscall();
  }

  const SimConfig& cfg_;
  Composer& c_;
  Rng& rng_;
  std::set<std::uint64_t> dirty_;
  std::uint64_t file_offset_ = 0;
  std::uint64_t journal_block_ = 0;

 public:
  std::map<NodeId, TrimRange> payloads_;
};

void validate_op(const WorkloadOp& op, std::size_t index) {
  auto where = "workload op " + std::to_string(index) + ": ";
  if (op.kind == WorkloadOp::Kind::Write && op.length == 0) throw Error(ErrorKind::Validation, where + "write of 0 bytes");
  if (op.kind == WorkloadOp::Kind::Trim && op.blocks == 0) throw Error(ErrorKind::Validation, where + "trim of 0 blocks");
}

void collect_synthetic(const CorrelationTree& tree, GroundTruth& truth) {
  std::set<std::string> names;
  for (const auto& n : tree.nodes)
    if (n.kind == NodeKind::Kernel && documented_names().count(n.name) == 0) names.insert(n.name);
  truth.synthetic_names.assign(names.begin(), names.end());
}

std::string render_dev_log_annotated(const CorrelationTree& tree, std::int64_t offset,
                                     const std::map<NodeId, TrimRange>& payloads) {
  std::vector<const TreeNode*> cmds;
  for (const auto& n : tree.nodes)
    if (n.kind == NodeKind::Cmd && n.cmd) cmds.push_back(&n);
  std::stable_sort(cmds.begin(), cmds.end(), [](const TreeNode* a, const TreeNode* b) { return a->start < b->start; });

  std::ostringstream os;
  os << "# device command log: <epoch_ns> <SCSI|NVME> [<IO|ADMIN>] <raw_hex>\n";
  os << "# timestamps: device clock at submission arrival\n";
  for (const TreeNode* n : cmds) {
    DeviceCommand c = *n->cmd;
    std::int64_t ts = c.ts.epoch_ns + offset;
    if (ts < 0) throw Error(ErrorKind::Validation, "device offset moves a command before the epoch");
    c.ts = Timestamp{ts};
    if (auto it = payloads.find(n->id); it != payloads.end())
      os << "# payload " << c.name << " lba=" << it->second.lba << " blocks=" << it->second.blocks << "\n";
    os << dev::format_record(dev::encode(c)) << "\n";
  }
  return os.str();
}

Protocol protocol_from(const std::string& s) {
  if (s == "SCSI") return Protocol::Scsi;
  if (s == "NVME") return Protocol::Nvme;
  throw Error(ErrorKind::Validation, "config: protocol must be SCSI or NVME");
}

Fault fault_from(const std::string& s) {
  if (s == "broken_blkdev_fsync_barrier") return Fault::BrokenBlkdevFsyncBarrier;
  if (s == "ext4_fdatasync_isize_bug") return Fault::Ext4FdatasyncIsizeBug;
  if (s == "trim_misdirect") return Fault::TrimMisdirect;
  throw Error(ErrorKind::Validation, "config: unknown fault " + s);
}

DeviceCommand random_command(Rng& rng, Protocol protocol) {
  std::uint64_t lba = rng.below(1u << 24) * 8;
  bool write = rng.chance(0.7);
  if (protocol == Protocol::Scsi) {
    if (write) {
      if (rng.chance(0.9))
        return dev::make_command(protocol, Queue::None, "WRITE_10", {}, {{"lba", lba}, {"block_count", 8}});
      return dev::make_command(protocol, Queue::None, "WRITE_16", {}, {{"lba", lba}, {"block_count", 8}});
    }
    switch (rng.below(3)) {
      case 0: return dev::make_command(protocol, Queue::None, "READ_10", {}, {{"lba", lba}, {"block_count", 8}});
      case 1: return dev::make_command(protocol, Queue::None, "SYNCHRONIZE_CACHE", {}, {});
      default: return dev::make_command(protocol, Queue::None, "VERIFY_10", {}, {{"lba", lba}, {"block_count", 8}});
    }
  }
  if (write) return dev::make_command(protocol, Queue::Io, "WRITE", {}, {{"nsid", 1}, {"slba", lba}, {"nlb", 7}});
  switch (rng.below(3)) {
    case 0: return dev::make_command(protocol, Queue::Io, "READ", {}, {{"nsid", 1}, {"slba", lba}, {"nlb", 7}});
    case 1: return dev::make_command(protocol, Queue::Io, "FLUSH", {}, {{"nsid", 1}});
    default: return dev::make_command(protocol, Queue::Io, "DSM", {}, {{"nsid", 1}, {"nr", 0}, {"attributes", 4}});
  }
}

constexpr std::array<const char*, 6> kRandomSyscalls{"write", "read", "fsync", "fdatasync", "pwrite64", "openat"};
constexpr std::array<const char*, 24> kRandomFunctions{
    "vfs_write",         "vfs_read",          "ext4_file_write_iter", "generic_perform_write",
    "ext4_da_write_begin", "ext4_da_write_end", "filemap_write_and_wait_range", "do_writepages",
    "ext4_writepages",   "mpage_prepare_extent_to_map", "ext4_bio_write_page", "submit_bio",
    "generic_make_request", "blk_mq_make_request", "blk_mq_run_hw_queue", "scsi_queue_rq",
    "scsi_dispatch_cmd", "nvme_queue_rq",     "jbd2_journal_start",   "jbd2_log_wait_commit",
    "kmem_cache_alloc",  "mutex_lock",        "__mark_inode_dirty",   "find_get_entry"};

}  // namespace

std::string fault_name(Fault f) {
  switch (f) {
    case Fault::BrokenBlkdevFsyncBarrier: return "broken_blkdev_fsync_barrier";
    case Fault::Ext4FdatasyncIsizeBug: return "ext4_fdatasync_isize_bug";
    case Fault::TrimMisdirect: return "trim_misdirect";
  }
  return "";
}

RandomTree generate_random_tree(const ScaleParams& params, std::uint64_t seed, Protocol protocol) {
  if (params.node_count == 0) throw Error(ErrorKind::Validation, "node_count must be at least 1");
  if (params.cmd_ratio < 0.0 || params.cmd_ratio > 1.0) throw Error(ErrorKind::Validation, "cmd_ratio must be in [0, 1]");
  constexpr double kFirstChild = 0.7;
  constexpr double kNextChild = 0.55;

  Rng rng(seed);
  Composer c(SimConfig{}.start_epoch_ns);
  const std::size_t target = params.node_count;
  bool first_root = true;
  while (c.size() < target) {
    if (!first_root) c.idle(rng.range(10'000, 200'000));
    first_root = false;
    c.open_syscall(kRandomSyscalls[rng.below(kRandomSyscalls.size())]);
    while (c.depth() > 0) {
      const std::size_t level = c.depth() - 1;  // 0 is the syscall
      const bool room = c.size() < target && level < params.max_depth;
      if (room && rng.chance(c.top_has_children() ? kNextChild : (level == 0 ? 1.0 : kFirstChild))) {
        c.open(kRandomFunctions[rng.below(kRandomFunctions.size())]);
        continue;
      }
      if (level == 0) {
        c.close_syscall();
        break;
      }
      if (!c.top_has_children()) {
        std::int64_t dur = rng.range(100, 5000);
        if (c.size() < target && rng.chance(params.cmd_ratio)) c.cmd(rng.range(0, dur - 1), random_command(rng, protocol));
        c.close(dur);
      } else {
        c.close(rng.range(0, 2000));
      }
    }
  }
  RandomTree out;
  out.truth = std::move(c.truth());
  out.tree = c.take_tree();
  collect_synthetic(out.tree, out.truth);
  out.tree.meta.host_source = "random:" + std::to_string(seed);
  return out;
}

SimOutput simulate(const SimConfig& config) {
  SimOutput out;
  if (config.scale) {
    if (!config.workload.empty()) throw Error(ErrorKind::Validation, "config: scale and workload are exclusive");
    auto rt = generate_random_tree(*config.scale, config.seed, config.protocol);
    out.tree = std::move(rt.tree);
    out.truth = std::move(rt.truth);
    out.truth.device_offset_ns = config.device_offset_ns;
    out.host_trace = render_host_trace(out.tree);
    out.dev_log = render_dev_log(out.tree, config.device_offset_ns);
    return out;
  }

  for (std::size_t i = 0; i < config.workload.size(); ++i) validate_op(config.workload[i], i);
  Rng rng(config.seed);
  Composer c(config.start_epoch_ns);
  StackModel model(config, c, rng);
  for (std::size_t i = 0; i < config.workload.size(); ++i) {
    if (i > 0) c.idle(config.think_time_ns);
    model.run(config.workload[i]);
  }
  out.truth = std::move(c.truth());
  out.truth.device_offset_ns = config.device_offset_ns;
  out.tree = c.take_tree();
  collect_synthetic(out.tree, out.truth);
  out.host_trace = render_host_trace(out.tree);
  out.dev_log = render_dev_log_annotated(out.tree, config.device_offset_ns, model.payloads_);
  return out;
}

std::string render_host_trace(const CorrelationTree& tree) {
  std::ostringstream os;
  os << "# host trace: function_graph with syscall epoch anchors; durations in ns\n";
  struct Item {
    NodeId id;
    bool closing;
  };
  for (NodeId root : tree.roots) {
    const TreeNode& r = tree.node(root);
    os << "S " << r.name << "@" << r.start.epoch_ns << "\n";
    std::vector<Item> stack;
    for (auto it = r.children.rbegin(); it != r.children.rend(); ++it)
      if (tree.node(*it).kind == NodeKind::Kernel) stack.push_back({*it, false});
    std::vector<std::uint32_t> depth(1, 0);
    std::map<NodeId, std::uint32_t> level;
    for (NodeId k : r.children) level[k] = 0;
    while (!stack.empty()) {
      Item item = stack.back();
      stack.pop_back();
      const TreeNode& n = tree.node(item.id);
      std::string indent(2 * level[item.id], ' ');
      std::int64_t dur = n.end.epoch_ns - n.start.epoch_ns;
      if (item.closing) {
        os << "K " << indent << "} " << dur << "\n";
        continue;
      }
      bool has_kernel_children = std::any_of(n.children.begin(), n.children.end(),
                                             [&](NodeId k) { return tree.node(k).kind == NodeKind::Kernel; });
      if (!has_kernel_children) {
        os << "K " << indent << n.name << "(); " << dur << "\n";
        continue;
      }
      os << "K " << indent << n.name << "() {\n";
      stack.push_back({item.id, true});
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
        if (tree.node(*it).kind != NodeKind::Kernel) continue;
        level[*it] = level[item.id] + 1;
        stack.push_back({*it, false});
      }
    }
  }
  return os.str();
}

std::string render_dev_log(const CorrelationTree& tree, std::int64_t device_offset_ns) {
  return render_dev_log_annotated(tree, device_offset_ns, {});
}

SimConfig config_from_json(const nlohmann::json& j) {
  try {
    SimConfig c;
    c.seed = j.value("seed", std::uint64_t{1});
    c.protocol = protocol_from(j.value("protocol", std::string("SCSI")));
    auto target = j.value("target", std::string("raw_block"));
    if (target == "raw_block") {
      c.target = Target::RawBlock;
    } else if (target == "ext4") {
      c.target = Target::Ext4;
    } else {
      throw Error(ErrorKind::Validation, "config: target must be raw_block or ext4");
    }
    c.device_offset_ns = j.value("device_offset_ns", c.device_offset_ns);
    c.start_epoch_ns = j.value("start_epoch_ns", c.start_epoch_ns);
    c.think_time_ns = j.value("think_time_ns", c.think_time_ns);
    if (j.contains("faults"))
      for (const auto& f : j.at("faults")) c.faults.insert(fault_from(f.get<std::string>()));
    if (j.contains("workload")) {
      for (const auto& jo : j.at("workload")) {
        WorkloadOp op;
        auto name = jo.at("op").get<std::string>();
        if (name == "write") {
          op.kind = WorkloadOp::Kind::Write;
          op.length = jo.value("len", std::uint64_t{4096});
        } else if (name == "fsync") {
          op.kind = WorkloadOp::Kind::Fsync;
        } else if (name == "fdatasync") {
          op.kind = WorkloadOp::Kind::Fdatasync;
          op.size_only = jo.value("size_only", false);
        } else if (name == "trim") {
          op.kind = WorkloadOp::Kind::Trim;
          op.lba = jo.at("lba").get<std::uint64_t>();
          op.blocks = jo.at("blocks").get<std::uint64_t>();
        } else {
          throw Error(ErrorKind::Validation, "config: invalid workload op `" + name + "`");
        }
        c.workload.push_back(op);
      }
    }
    if (j.contains("scale")) {
      const auto& s = j.at("scale");
      ScaleParams p;
      p.node_count = s.at("node_count").get<std::size_t>();
      p.cmd_ratio = s.value("cmd_ratio", p.cmd_ratio);
      p.max_depth = s.value("max_depth", p.max_depth);
      c.scale = p;
    }
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Parse, std::string("config: ") + ex.what());
  }
}

nlohmann::json config_to_json(const SimConfig& config) {
  nlohmann::json j;
  j["seed"] = config.seed;
  j["protocol"] = std::string(to_string(config.protocol));
  j["target"] = config.target == Target::Ext4 ? "ext4" : "raw_block";
  j["device_offset_ns"] = config.device_offset_ns;
  j["start_epoch_ns"] = config.start_epoch_ns;
  j["think_time_ns"] = config.think_time_ns;
  j["faults"] = nlohmann::json::array();
  for (auto f : config.faults) j["faults"].push_back(fault_name(f));
  j["workload"] = nlohmann::json::array();
  for (const auto& op : config.workload) {
    switch (op.kind) {
      case WorkloadOp::Kind::Write: j["workload"].push_back({{"op", "write"}, {"len", op.length}}); break;
      case WorkloadOp::Kind::Fsync: j["workload"].push_back({{"op", "fsync"}}); break;
      case WorkloadOp::Kind::Fdatasync:
        j["workload"].push_back({{"op", "fdatasync"}, {"size_only", op.size_only}});
        break;
      case WorkloadOp::Kind::Trim:
        j["workload"].push_back({{"op", "trim"}, {"lba", op.lba}, {"blocks", op.blocks}});
        break;
    }
  }
  if (config.scale)
    j["scale"] = {{"node_count", config.scale->node_count},
                  {"cmd_ratio", config.scale->cmd_ratio},
                  {"max_depth", config.scale->max_depth}};
  return j;
}

nlohmann::json truth_to_json(const GroundTruth& truth) {
  nlohmann::json trims = nlohmann::json::array();
  for (const auto& [intended, issued] : truth.trims)
    trims.push_back({{"intended", {{"lba", intended.lba}, {"blocks", intended.blocks}}},
                     {"issued", {{"lba", issued.lba}, {"blocks", issued.blocks}}}});
  return {{"counts", {{"SYSCALL", truth.counts.syscall}, {"KERNEL", truth.counts.kernel}, {"CMD", truth.counts.cmd}}},
          {"selections", truth.selections},
          {"divergence_root", truth.divergence_root},
          {"synthetic_names", truth.synthetic_names},
          {"trims", trims},
          {"device_offset_ns", truth.device_offset_ns}};
}

}  // namespace xray::sim
