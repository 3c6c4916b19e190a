#include "xray/rules.hpp"

#include <algorithm>

#include "xray/dev_trace.hpp"
#include "xray/error.hpp"

namespace xray::explorer {

namespace {

using nlohmann::json;

bool matches(const Selector& sel, const TreeNode& n) {
  if (sel.kind && n.kind != *sel.kind) return false;
  if (!sel.names.empty() && sel.names.count(n.name) == 0) return false;
  if (!sel.opcodes.empty() && (!n.cmd || sel.opcodes.count(n.cmd->opcode) == 0)) return false;
  return true;
}

NodeId root_of(const CorrelationTree& tree, NodeId id) {
  while (tree.nodes[id].parent) id = *tree.nodes[id].parent;
  return id;
}

// Pre-order ids make every subtree the contiguous range [root, root + size).
std::vector<std::size_t> subtree_sizes(const CorrelationTree& tree) {
  std::vector<std::size_t> size(tree.size(), 1);
  for (std::size_t i = tree.size(); i-- > 0;)
    if (auto p = tree.nodes[i].parent) size[*p] += size[i];
  return size;
}

void mark_ancestors(const CorrelationTree& tree, NodeId id, std::vector<char>& mark) {
  std::optional<NodeId> cur = id;
  while (cur && !mark[*cur]) {
    mark[*cur] = 1;
    cur = tree.nodes[*cur].parent;
  }
}

std::vector<NodeId> collect(const std::vector<char>& mark) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < mark.size(); ++i)
    if (mark[i]) out.push_back(static_cast<NodeId>(i));
  return out;
}

// Syscall roots with at least one write-family command below them.
std::vector<NodeId> write_roots(const CorrelationTree& tree) {
  std::vector<char> hit(tree.size(), 0);
  for (const auto& n : tree.nodes)
    if (n.kind == NodeKind::Cmd && is_write_command(n.name)) hit[root_of(tree, n.id)] = 1;
  std::vector<NodeId> out;
  for (NodeId r : tree.roots)
    if (hit[r]) out.push_back(r);
  return out;
}

std::vector<NodeId> select_rule1(const CorrelationTree& tree) {
  auto sizes = subtree_sizes(tree);
  std::vector<char> mark(tree.size(), 0);
  for (NodeId r : write_roots(tree))
    std::fill(mark.begin() + r, mark.begin() + r + static_cast<std::ptrdiff_t>(sizes[r]), 1);
  return collect(mark);
}

// Within each rule1 root: the root, its CMD nodes, and KERNEL nodes that start
// no later than the last command correlated to that root.
std::vector<NodeId> select_rule2(const CorrelationTree& tree) {
  auto sizes = subtree_sizes(tree);
  std::vector<char> mark(tree.size(), 0);
  for (NodeId r : write_roots(tree)) {
    std::size_t end = r + sizes[r];
    Timestamp last = tree.nodes[r].start;
    for (std::size_t i = r; i < end; ++i)
      if (tree.nodes[i].kind == NodeKind::Cmd) last = std::max(last, tree.nodes[i].start);
    mark[r] = 1;
    Timestamp from = tree.nodes[r].start;
    for (std::size_t i = r + 1; i < end; ++i) {
      const auto& n = tree.nodes[i];
      if (n.kind == NodeKind::Cmd || (n.start >= from && n.start <= last)) mark[i] = 1;
    }
  }
  return collect(mark);
}

// Within each rule1 root: every CMD node and all of its ancestors.
std::vector<NodeId> select_rule3(const CorrelationTree& tree) {
  auto sizes = subtree_sizes(tree);
  std::vector<char> mark(tree.size(), 0);
  for (NodeId r : write_roots(tree)) {
    std::size_t end = r + sizes[r];
    for (std::size_t i = r; i < end; ++i)
      if (tree.nodes[i].kind == NodeKind::Cmd) mark_ancestors(tree, static_cast<NodeId>(i), mark);
  }
  return collect(mark);
}

std::vector<NodeId> select_user(const CorrelationTree& tree, const SelectSpec& spec) {
  auto sizes = subtree_sizes(tree);
  std::vector<char> mark(tree.size(), 0);
  std::vector<NodeId> hits;
  for (const auto& n : tree.nodes)
    if (matches(spec.match, n)) hits.push_back(n.id);

  switch (spec.closure) {
    case Closure::Subtree:
      for (NodeId h : hits)
        std::fill(mark.begin() + h, mark.begin() + h + static_cast<std::ptrdiff_t>(sizes[h]), 1);
      break;
    case Closure::Ancestors:
      for (NodeId h : hits) mark_ancestors(tree, h, mark);
      break;
    case Closure::Between: {
      std::map<NodeId, Timestamp> last_hit;
      for (NodeId h : hits) {
        NodeId r = root_of(tree, h);
        auto [it, fresh] = last_hit.emplace(r, tree.nodes[h].start);
        if (!fresh) it->second = std::max(it->second, tree.nodes[h].start);
        mark[h] = 1;
      }
      for (auto [r, last] : last_hit) {
        mark[r] = 1;
        for (std::size_t i = r + 1; i < r + sizes[r]; ++i) {
          const auto& n = tree.nodes[i];
          if (n.kind == NodeKind::Kernel && n.start >= tree.nodes[r].start && n.start <= last) mark[i] = 1;
        }
      }
      break;
    }
  }
  return collect(mark);
}

std::string closure_name(Closure c) {
  switch (c) {
    case Closure::Subtree: return "subtree";
    case Closure::Ancestors: return "ancestors";
    case Closure::Between: return "between";
  }
  return "ancestors";
}

template <typename T>
std::set<T> json_set(const json& j, const char* key) {
  std::set<T> out;
  if (j.contains(key))
    for (const auto& v : j.at(key)) out.insert(v.get<T>());
  return out;
}

}  // namespace

std::string format_percentage(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return "0.00%";
  // Hundredths of a percent, half-up: floor((2 * count * 10000 + total) / (2 * total)).
  unsigned __int128 num = static_cast<unsigned __int128>(count) * 20000u + total;
  auto hundredths = static_cast<std::uint64_t>(num / (static_cast<unsigned __int128>(total) * 2u));
  std::string frac = std::to_string(hundredths % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return std::to_string(hundredths / 100) + "." + frac + "%";
}

Rule sync_flush_rule() {
  ExpectSpec e;
  e.trigger_syscalls = {"sync", "fsync", "fdatasync", "syncfs"};
  e.required_commands = {"SYNCHRONIZE_CACHE", "SYNCHRONIZE_CACHE_16", "FLUSH"};
  e.polarity = Polarity::Must;
  e.message = "sync-family syscall issued no cache flush to the device";
  return Rule{"sync-flush", e};
}

RuleDb::RuleDb() {
  for (const char* id : {"rule1", "rule2", "rule3"}) rules_.emplace(id, Rule{id, SelectSpec{}});
  rules_.emplace("sync-flush", sync_flush_rule());
}

bool RuleDb::is_builtin(const std::string& rule_id) {
  return rule_id == "rule1" || rule_id == "rule2" || rule_id == "rule3" || rule_id == "sync-flush";
}

void RuleDb::add(Rule rule) {
  if (is_builtin(rule.rule_id)) throw Error(ErrorKind::Usage, "rule id " + rule.rule_id + " is built in");
  if (rule.rule_id.empty()) throw Error(ErrorKind::Usage, "rule without rule_id");
  std::string id = rule.rule_id;
  rules_.insert_or_assign(id, std::move(rule));
}

void RuleDb::add_json(const nlohmann::json& doc) {
  if (doc.is_array()) {
    for (const auto& r : doc) add(rule_from_json(r));
  } else {
    add(rule_from_json(doc));
  }
}

const Rule& RuleDb::get(const std::string& rule_id) const {
  auto it = rules_.find(rule_id);
  if (it == rules_.end()) throw Error(ErrorKind::Usage, "unknown rule id " + rule_id);
  return it->second;
}

bool RuleDb::contains(const std::string& rule_id) const { return rules_.count(rule_id) != 0; }

std::vector<std::string> RuleDb::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : rules_) out.push_back(id);
  return out;
}

Rule rule_from_json(const nlohmann::json& j) {
  try {
    Rule r;
    r.rule_id = j.at("rule_id").get<std::string>();
    auto kind = j.at("kind").get<std::string>();
    if (kind == "select") {
      SelectSpec s;
      const auto& m = j.at("match");
      if (m.contains("kind")) {
        auto k = parse_node_kind(m.at("kind").get<std::string>());
        if (!k) throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": bad node kind");
        s.match.kind = k;
      }
      s.match.names = json_set<std::string>(m, "names");
      for (auto op : json_set<unsigned>(m, "opcodes")) {
        if (op > 0xff) throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": opcode out of range");
        s.match.opcodes.insert(static_cast<std::uint8_t>(op));
      }
      auto closure = j.value("closure", std::string("ancestors"));
      if (closure == "subtree") {
        s.closure = Closure::Subtree;
      } else if (closure == "ancestors") {
        s.closure = Closure::Ancestors;
      } else if (closure == "between") {
        s.closure = Closure::Between;
      } else {
        throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": closure must be subtree|ancestors|between");
      }
      r.spec = s;
    } else if (kind == "expect") {
      ExpectSpec e;
      e.trigger_syscalls = json_set<std::string>(j.at("trigger"), "syscalls");
      if (e.trigger_syscalls.empty()) throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": empty trigger");
      const auto& req = j.at("require");
      e.required_commands = json_set<std::string>(req, "commands");
      if (req.contains("function")) e.required_function = req.at("function").get<std::string>();
      if (e.required_commands.empty() == !e.required_function)
        throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": require exactly one of commands or function");
      auto pol = j.value("polarity", std::string("must"));
      if (pol == "must") {
        e.polarity = Polarity::Must;
      } else if (pol == "must_not") {
        e.polarity = Polarity::MustNot;
      } else {
        throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": polarity must be must|must_not");
      }
      e.message = j.value("message", std::string());
      r.spec = e;
    } else {
      throw Error(ErrorKind::Parse, "rule " + r.rule_id + ": kind must be select|expect");
    }
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Parse, std::string("rule file: ") + ex.what());
  }
}

nlohmann::json rule_to_json(const Rule& rule) {
  json j;
  j["rule_id"] = rule.rule_id;
  if (const auto* s = std::get_if<SelectSpec>(&rule.spec)) {
    j["kind"] = "select";
    json m = json::object();
    if (s->match.kind) m["kind"] = std::string(to_string(*s->match.kind));
    if (!s->match.names.empty()) m["names"] = s->match.names;
    if (!s->match.opcodes.empty()) m["opcodes"] = s->match.opcodes;
    j["match"] = m;
    j["closure"] = closure_name(s->closure);
  } else {
    const auto& e = std::get<ExpectSpec>(rule.spec);
    j["kind"] = "expect";
    j["trigger"] = {{"syscalls", e.trigger_syscalls}};
    json req = json::object();
    if (!e.required_commands.empty()) req["commands"] = e.required_commands;
    if (e.required_function) req["function"] = *e.required_function;
    j["require"] = req;
    j["polarity"] = e.polarity == Polarity::Must ? "must" : "must_not";
    if (!e.message.empty()) j["message"] = e.message;
  }
  return j;
}

std::vector<NodeId> select_nodes(const CorrelationTree& tree, const std::string& rule_id, const RuleDb& db) {
  if (rule_id == "rule1") return select_rule1(tree);
  if (rule_id == "rule2") return select_rule2(tree);
  if (rule_id == "rule3") return select_rule3(tree);
  const Rule& r = db.get(rule_id);
  const auto* s = std::get_if<SelectSpec>(&r.spec);
  if (!s) throw Error(ErrorKind::Usage, "rule " + rule_id + " is an expectation, not a selection");
  return select_user(tree, *s);
}

PruneReport prune(const CorrelationTree& tree, const std::string& rule_id, const RuleDb& db) {
  return prune_all(tree, {rule_id}, db);
}

PruneReport prune_all(const CorrelationTree& tree, const std::vector<std::string>& rule_ids, const RuleDb& db) {
  PruneReport report;
  report.original_count = tree.size();
  for (const auto& id : rule_ids) {
    RuleSelection sel;
    sel.rule_id = id;
    sel.selected = select_nodes(tree, id, db);
    sel.percentage = format_percentage(sel.selected.size(), report.original_count);
    report.rules.push_back(std::move(sel));
  }
  return report;
}

std::vector<Violation> check_expectations(const CorrelationTree& tree, const std::vector<Rule>& rules) {
  auto sizes = subtree_sizes(tree);
  std::vector<Violation> out;
  for (const auto& rule : rules) {
    const auto* e = std::get_if<ExpectSpec>(&rule.spec);
    if (!e) continue;
    std::string pattern;
    if (e->required_function) {
      pattern = "function " + *e->required_function;
    } else {
      pattern = "command";
      const char* sep = " ";
      for (const auto& c : e->required_commands) {
        pattern += sep + c;
        sep = "|";
      }
    }
    for (NodeId r : tree.roots) {
      const TreeNode& root = tree.nodes[r];
      if (e->trigger_syscalls.count(root.name) == 0) continue;
      bool found = false;
      for (std::size_t i = r + 1; i < r + sizes[r] && !found; ++i) {
        const auto& n = tree.nodes[i];
        if (e->required_function) {
          found = n.kind == NodeKind::Kernel && n.name == *e->required_function;
        } else {
          found = n.kind == NodeKind::Cmd && e->required_commands.count(n.name) != 0;
        }
      }
      bool ok = e->polarity == Polarity::Must ? found : !found;
      if (ok) continue;
      Violation v;
      v.rule_id = rule.rule_id;
      v.trigger = r;
      v.pattern = (e->polarity == Polarity::Must ? "missing " : "forbidden ") + pattern;
      v.message = root.name + " (node " + std::to_string(r) + "): " +
                  (e->message.empty() ? v.pattern : e->message);
      out.push_back(std::move(v));
    }
  }
  return out;
}

std::vector<std::string> unresolved_names(const CorrelationTree& tree, const Rule& rule) {
  std::set<std::string> vocab;
  for (const auto& n : tree.nodes) vocab.insert(n.name);
  for (const auto& c : dev::known_command_names()) vocab.insert(c);
  std::set<std::string> wanted;
  if (const auto* s = std::get_if<SelectSpec>(&rule.spec)) {
    wanted = s->match.names;
  } else {
    const auto& e = std::get<ExpectSpec>(rule.spec);
    wanted.insert(e.trigger_syscalls.begin(), e.trigger_syscalls.end());
    wanted.insert(e.required_commands.begin(), e.required_commands.end());
    if (e.required_function) wanted.insert(*e.required_function);
  }
  std::vector<std::string> out;
  for (const auto& w : wanted)
    if (vocab.count(w) == 0) out.push_back(w);
  return out;
}

nlohmann::json prune_report_to_json(const PruneReport& report) {
  json selected = json::object();
  json counts = json::object();
  json percentages = json::object();
  for (const auto& r : report.rules) {
    selected[r.rule_id] = r.selected;
    counts[r.rule_id] = r.selected.size();
    percentages[r.rule_id] = r.percentage;
  }
  return json{{"original_count", report.original_count},
              {"selected", selected},
              {"counts", counts},
              {"percentages", percentages}};
}

nlohmann::json violations_to_json(const std::vector<Violation>& violations) {
  json arr = json::array();
  for (const auto& v : violations)
    arr.push_back({{"rule_id", v.rule_id}, {"trigger", v.trigger}, {"pattern", v.pattern}, {"message", v.message}});
  return arr;
}

}  // namespace xray::explorer
