// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xray/dev_trace.hpp"
#include "xray/diff.hpp"
#include "xray/explorer.hpp"
#include "xray/host_trace.hpp"
#include "xray/report.hpp"
#include "xray/rules.hpp"
#include "xray/serialize.hpp"
#include "xray/stack_sim.hpp"
#include "xray/time_align.hpp"

namespace {

using namespace xray;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back(what);
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::filesystem::path source_dir() { return XRAY_SOURCE_DIR; }

sim::SimConfig config(const std::string& name) {
  return sim::config_from_json(nlohmann::json::parse(read_file(source_dir() / "configs" / name)));
}

struct Built {
  CorrelationTree tree;
  align::ClockOffset offset;
};

// What `xray build` does, with either an estimated or a fixed offset.
Built build(const sim::SimOutput& out, std::optional<std::int64_t> fixed = std::nullopt) {
  auto h = host::parse_host_trace(out.host_trace, "host.trace");
  auto cmds = dev::decode_all(dev::parse_dev_log(out.dev_log, "dev.log"));
  auto off = fixed ? align::configured_offset(h.events, cmds, *fixed) : align::estimate_offset(h.events, cmds);
  TreeMeta meta;
  meta.offset_ns = off.offset_ns;
  meta.offset_method = fixed ? "configured" : "estimated";
  return {explorer::build_tree(h.events, align::apply_offset(cmds, off.offset_ns), meta), off};
}

std::optional<NodeId> root_named(const CorrelationTree& t, const std::string& name) {
  for (NodeId r : t.roots)
    if (t.nodes[r].name == name) return r;
  return std::nullopt;
}

// Trees checked by criterion 7, gathered along the way.
std::vector<std::pair<std::string, CorrelationTree>> g_corpus;

void keep(const std::string& label, const CorrelationTree& t) { g_corpus.emplace_back(label, t); }

// ---------------------------------------------------------------- 1

Outcome table_arithmetic() {
  Outcome o;
  auto t0 = Clock::now();
  struct Row {
    const char* id;
    std::uint64_t original;
    std::vector<std::uint64_t> counts;
    std::vector<std::string> published;
  };
  const std::vector<Row> rows{
      {"1", 11353, {704, 571, 30}, {"6.20%", "5.03%", "0.26%"}},
      {"2", 34083, {697, 328, 22}, {"2.05%", "0.96%", "0.06%"}},
      {"3", 24355, {1254, 1210, 15}, {"5.15%", "4.97%", "0.06%"}},
      {"4", 273653, {10230, 9953, 40}, {"3.74%", "3.64%", "0.01%"}},
      {"5", 284618, {5621, 5549, 50}, {"1.97%", "1.95%", "0.04%"}},
  };
  std::vector<report::CountRow> table;
  for (const auto& r : rows) table.push_back({r.id, r.original, r.counts});
  auto text = report::format_table(table, {"Rule#1", "Rule#2", "Rule#3"});
  std::size_t matched = 0;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < 3; ++i) {
      auto cell = std::to_string(r.counts[i]) + " (" + r.published[i] + ")";
      bool ok = text.find(cell) != std::string::npos;
      matched += ok;
      o.require(ok, "row " + std::string(r.id) + " col " + std::to_string(i + 1) + ": published " + r.published[i] +
                        ", computed " + explorer::format_percentage(r.counts[i], r.original));
    }
  }
  double secs = seconds_since(t0);
  o.require(secs < 1.0, "runtime " + std::to_string(secs) + " s");
  o.notes.insert(o.notes.begin(), std::to_string(matched) + "/15 cells exact");
  return o;
}

// ---------------------------------------------------------------- 2

Outcome case_one() {
  Outcome o;
  auto t0 = Clock::now();
  auto abnormal_out = sim::simulate(config("case1_abnormal.json"));
  auto reference_out = sim::simulate(config("case1_reference.json"));
  auto abnormal = build(abnormal_out).tree;
  auto reference = build(reference_out).tree;
  keep("case1 abnormal", abnormal);
  keep("case1 reference", reference);

  auto fsync = root_named(abnormal, "fsync");
  o.require(fsync.has_value(), "no fsync root");
  if (!fsync) return o;
  std::size_t writes = 0, flushes = 0;
  for_each_in_subtree(abnormal, *fsync, [&](const TreeNode& n) {
    if (n.kind != NodeKind::Cmd) return;
    writes += is_write_command(n.name);
    flushes += is_flush_command(n.name);
  });
  o.require(writes == 3, "writes under fsync: " + std::to_string(writes));
  o.require(flushes == 0, "flushes under fsync: " + std::to_string(flushes));

  bool on_path = false;
  for (NodeId id : explorer::select_nodes(abnormal, "rule3")) on_path = on_path || abnormal.nodes[id].name == "blkdev_fsync";
  o.require(on_path, "rule3 path misses blkdev_fsync");

  auto rep = explorer::diff(abnormal, reference);
  bool found = false;
  for (const auto& d : rep.divergence_roots) {
    if (d.abnormal_path.empty() || d.abnormal_path.back() != "blkdev_fsync") continue;
    for (const auto& c : d.missing_in_abnormal) found = found || c.name == "blkdev_issue_flush";
  }
  o.require(rep.divergence_roots.size() == 1, std::to_string(rep.divergence_roots.size()) + " divergence roots");
  o.require(found, "no divergence at blkdev_fsync with reference-only blkdev_issue_flush");
  double secs = seconds_since(t0);
  o.require(secs < 5.0, "runtime " + std::to_string(secs) + " s");
  return o;
}

// ---------------------------------------------------------------- 3

Outcome case_two() {
  Outcome o;
  auto t0 = Clock::now();
  auto abnormal = build(sim::simulate(config("case2_abnormal.json"))).tree;
  auto reference = build(sim::simulate(config("case2_reference.json"))).tree;
  keep("case2 abnormal", abnormal);
  keep("case2 reference", reference);

  explorer::RuleDb db;
  db.add_json(nlohmann::json::parse(read_file(source_dir() / "rules" / "fdatasync_size_commit.json")));
  auto violations = explorer::check_expectations(abnormal, {db.get("fdatasync-size-commit")});
  auto fdatasync = root_named(abnormal, "fdatasync");
  o.require(violations.size() == 1 && fdatasync && violations[0].trigger == *fdatasync,
            std::to_string(violations.size()) + " violations, expected one on the fdatasync root");
  o.require(explorer::check_expectations(reference, {db.get("fdatasync-size-commit")}).empty(),
            "reference run is flagged too");

  auto rep = explorer::diff(abnormal, reference);
  o.require(rep.divergence_roots.size() == 1, std::to_string(rep.divergence_roots.size()) + " divergence roots");
  o.require(!rep.divergence_roots.empty() && !rep.divergence_roots[0].abnormal_path.empty() &&
                rep.divergence_roots[0].abnormal_path.back() == "ext4_sync_file",
            "divergence root is not ext4_sync_file");
  double secs = seconds_since(t0);
  o.require(secs < 5.0, "runtime " + std::to_string(secs) + " s");
  return o;
}

// ---------------------------------------------------------------- 4

Outcome clock_alignment() {
  Outcome o;
  auto cfg = config("case1_abnormal.json");
  o.require(cfg.device_offset_ns == -5000, "config does not use the default device offset");
  auto out = sim::simulate(cfg);
  auto naive = build(out, 0);
  keep("case1 naive", naive.tree);
  o.require(!naive.tree.meta.unanchored.empty(), "naive build has no unanchored commands");
  auto aligned = build(out);
  keep("case1 aligned", aligned.tree);
  o.require(aligned.tree.meta.unanchored.empty(),
            std::to_string(aligned.tree.meta.unanchored.size()) + " unanchored after alignment");
  o.require(aligned.offset.offset_ns == 5000, "recovered offset " + std::to_string(aligned.offset.offset_ns));
  o.notes.insert(o.notes.begin(), "naive unanchored " + std::to_string(naive.tree.meta.unanchored.size()) +
                                      ", recovered " + std::to_string(aligned.offset.offset_ns) + " ns");
  return o;
}

// ---------------------------------------------------------------- 5

// Oracle by parent walks, independent of the contiguous-range implementation.
std::map<std::string, std::vector<NodeId>> oracle_selections(const CorrelationTree& t) {
  const std::size_t n = t.nodes.size();
  std::vector<NodeId> root(n);
  for (std::size_t i = 0; i < n; ++i) {
    NodeId id = static_cast<NodeId>(i);
    while (t.nodes[id].parent) id = *t.nodes[id].parent;
    root[i] = id;
  }
  std::map<NodeId, Timestamp> last_cmd;
  std::set<NodeId> write_roots;
  for (const auto& node : t.nodes) {
    if (node.kind != NodeKind::Cmd) continue;
    auto [it, fresh] = last_cmd.emplace(root[node.id], node.start);
    if (!fresh && it->second < node.start) it->second = node.start;
    if (node.name == "WRITE_10" || node.name == "WRITE_16" || node.name == "WRITE") write_roots.insert(root[node.id]);
  }
  std::vector<char> on_path(n, 0);
  for (const auto& node : t.nodes) {
    if (node.kind != NodeKind::Cmd || !write_roots.count(root[node.id])) continue;
    for (std::optional<NodeId> cur = node.id; cur; cur = t.nodes[*cur].parent) on_path[*cur] = 1;
  }
  std::map<std::string, std::vector<NodeId>> out;
  for (const auto& node : t.nodes) {
    NodeId r = root[node.id];
    if (!write_roots.count(r)) continue;
    out["rule1"].push_back(node.id);
    if (node.id == r || node.kind == NodeKind::Cmd || node.start <= last_cmd.at(r)) out["rule2"].push_back(node.id);
    if (on_path[node.id]) out["rule3"].push_back(node.id);
  }
  return out;
}

Outcome pruning_at_scale() {
  Outcome o;
  double slowest = 0;
  std::size_t largest = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::size_t count = 10000 + static_cast<std::size_t>((seed - 1) * (285000 - 10000) / 99);
    auto rt = sim::generate_random_tree({count, 0.01, 12}, seed, seed % 2 ? Protocol::Scsi : Protocol::Nvme);
    const auto& t = rt.tree;

    auto t0 = Clock::now();
    auto rep = explorer::prune_all(t, {"rule1", "rule2", "rule3"});
    double secs = seconds_since(t0);
    if (count > largest) {
      largest = count;
      slowest = secs;
    }

    auto tag = "seed " + std::to_string(seed) + ": ";
    auto s1 = rep.rules[0].selected.size(), s2 = rep.rules[1].selected.size(), s3 = rep.rules[2].selected.size();
    o.require(s3 <= s2 && s2 <= s1 && s1 <= t.size(), tag + "counts not monotone");
    o.require(s1 > 0 && s3 > 0, tag + "empty selection");
    auto oracle = oracle_selections(t);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& id = rep.rules[i].rule_id;
      o.require(rep.rules[i].selected == oracle[id], tag + id + " differs from the oracle");
      o.require(rep.rules[i].selected == rt.truth.selections[id], tag + id + " differs from ground truth");
    }
    if (seed % 10 == 1) keep("random " + std::to_string(seed), t);
  }
  o.require(slowest < 1.0, "pruning " + std::to_string(largest) + " nodes took " + std::to_string(slowest) + " s");
  char buf[96];
  std::snprintf(buf, sizeof buf, "100 trees; %zu-node prune in %.3f s", largest, slowest);
  o.notes.insert(o.notes.begin(), buf);
  return o;
}

// ---------------------------------------------------------------- 6

Outcome parser_round_trips() {
  Outcome o;
  std::size_t commands = 0;
  auto check_cmd = [&](const DeviceCommand& c) {
    ++commands;
    auto back = dev::decode(dev::encode(c));
    if (!(back == c)) o.require(false, "decode(encode) differs for " + c.name);
    auto text = dev::parse_dev_log(dev::format_record(dev::encode(c)));
    if (text.size() != 1 || !(dev::decode(text[0]) == c)) o.require(false, "text round trip differs for " + c.name);
  };
  for (auto proto : {Protocol::Scsi, Protocol::Nvme}) {
    auto rt = sim::generate_random_tree({20000, 0.2, 12}, 606, proto);
    for (const auto& n : rt.tree.nodes)
      if (n.cmd) check_cmd(*n.cmd);
  }
  for (const char* name : {"case1_abnormal.json", "case1_reference.json", "case2_abnormal.json",
                           "case2_reference.json", "trim_nvme.json"}) {
    auto out = sim::simulate(config(name));
    for (const auto& n : out.tree.nodes)
      if (n.cmd) check_cmd(*n.cmd);
    auto cfg = config(name);
    cfg.protocol = cfg.protocol == Protocol::Scsi ? Protocol::Nvme : Protocol::Scsi;
    for (const auto& n : sim::simulate(cfg).tree.nodes)
      if (n.cmd) check_cmd(*n.cmd);
  }
  o.require(commands >= 1000, "only " + std::to_string(commands) + " commands");

  // Hand-computed epochs.
  struct Fixture {
    const char* text;
    std::vector<std::tuple<const char*, std::int64_t, std::int64_t>> spans;  // name, enter, exit in event order
  };
  const std::vector<Fixture> fixtures{
      {"S write@1000\n"
       "K vfs_write() {\n"
       "K   __vfs_write() {\n"
       "K     new_sync_write(); 30\n"
       "K   } 50\n"
       "K   fsnotify(); 5\n"
       "K } 70\n",
       {{"write", 1000, 1070}, {"vfs_write", 1000, 1070}, {"__vfs_write", 1000, 1050},
        {"new_sync_write", 1000, 1030}, {"fsnotify", 1050, 1055}}},
      {"S read@500\nK a(); 10\nK b(); 20\nS fsync@2000\nK do_fsync() {\nK   c(); 7\nK } 9\n",
       {{"read", 500, 530}, {"a", 500, 510}, {"b", 510, 530}, {"fsync", 2000, 2009}, {"do_fsync", 2000, 2009},
        {"c", 2000, 2007}}},
      {"S write@1000\nK vfs_write() {\nK   rw_verify_area(); 10\nS fsync@1500\nK do_fsync(); 20\n",
       {{"write", 1000, 1500}, {"vfs_write", 1000, 1500}, {"rw_verify_area", 1000, 1010}, {"fsync", 1500, 1520},
        {"do_fsync", 1500, 1520}}},
  };
  std::size_t fx = 0;
  for (const auto& f : fixtures) {
    ++fx;
    auto trace = host::parse_host_trace(f.text, "fixture");
    // Pair enters with exits using a stack, in entry order.
    std::vector<std::tuple<std::string, std::int64_t, std::int64_t>> got;
    std::vector<std::size_t> open;
    for (const auto& ev : trace.events) {
      bool enter = ev.kind == HostEventKind::SyscallEnter || ev.kind == HostEventKind::FuncEnter;
      if (enter) {
        open.push_back(got.size());
        got.emplace_back(ev.name, ev.ts.epoch_ns, -1);
      } else {
        std::get<2>(got[open.back()]) = ev.ts.epoch_ns;
        open.pop_back();
      }
    }
    bool same = got.size() == f.spans.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = std::get<0>(got[i]) == std::get<0>(f.spans[i]) && std::get<1>(got[i]) == std::get<1>(f.spans[i]) &&
             std::get<2>(got[i]) == std::get<2>(f.spans[i]);
    o.require(same, "host fixture " + std::to_string(fx) + " epochs differ");
  }
  o.notes.insert(o.notes.begin(),
                 std::to_string(commands) + " commands, " + std::to_string(fixtures.size()) + " host fixtures");
  return o;
}

// ---------------------------------------------------------------- 7

Outcome tree_integrity() {
  Outcome o;
  for (std::uint64_t seed : {3u, 4u}) {
    auto rt = sim::generate_random_tree({30000, 0.03, 12}, seed);
    auto h = host::parse_host_trace(sim::render_host_trace(rt.tree));
    auto cmds = dev::decode_all(dev::parse_dev_log(sim::render_dev_log(rt.tree, 0)));
    auto rebuilt = explorer::build_tree(h.events, cmds);
    o.require(rebuilt.nodes == rt.tree.nodes, "rebuilt random tree " + std::to_string(seed) + " differs");
    keep("rebuilt " + std::to_string(seed), rebuilt);
  }
  auto scale = sim::simulate(config("scale_10k.json"));
  keep("scale config", build(scale).tree);
  keep("trim", build(sim::simulate(config("trim_nvme.json"))).tree);

  for (const auto& [label, t] : g_corpus) {
    auto problems = validate_tree(t);
    o.require(problems.empty(), label + ": " + (problems.empty() ? "" : problems.front()));
    o.require(deserialize_tree(serialize_tree(t)) == t, label + ": serialization round trip differs");
  }
  o.notes.insert(o.notes.begin(), std::to_string(g_corpus.size()) + " trees");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"table arithmetic", table_arithmetic},   {"case I end-to-end", case_one},
      {"case II end-to-end", case_two},         {"clock alignment", clock_alignment},
      {"pruning at scale", pruning_at_scale},   {"parser round-trips", parser_round_trips},
      {"tree integrity", tree_integrity},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    std::string detail;
    for (std::size_t i = 0; i < o.notes.size() && i < 4; ++i) detail += (i ? "; " : "") + o.notes[i];
    if (o.notes.size() > 4) detail += "; +" + std::to_string(o.notes.size() - 4) + " more";
    std::printf("criterion %d (%s): %s%s%s\n", index, name, o.pass ? "PASS" : "FAIL", detail.empty() ? "" : " - ",
                detail.c_str());
    failed += !o.pass;
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
