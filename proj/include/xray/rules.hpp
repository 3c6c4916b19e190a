#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xray/model.hpp"

namespace xray::explorer {

enum class Closure { Subtree, Ancestors, Between };
enum class Polarity { Must, MustNot };

// Nodes matched by kind, name and (for CMD nodes) opcode. Empty sets match anything.
struct Selector {
  std::optional<NodeKind> kind;
  std::set<std::string> names;
  std::set<std::uint8_t> opcodes;
};

struct SelectSpec {
  Selector match;
  Closure closure = Closure::Ancestors;
};

struct ExpectSpec {
  std::set<std::string> trigger_syscalls;
  std::set<std::string> required_commands;  // any-of, searched among descendants
  std::optional<std::string> required_function;
  Polarity polarity = Polarity::Must;
  std::string message;
};

struct Rule {
  std::string rule_id;
  std::variant<SelectSpec, ExpectSpec> spec;

  bool is_expect() const { return std::holds_alternative<ExpectSpec>(spec); }
};

struct RuleSelection {
  std::string rule_id;
  std::vector<NodeId> selected;  // ascending
  std::string percentage;        // of original_count, "6.20%"
};

struct PruneReport {
  std::size_t original_count = 0;
  std::vector<RuleSelection> rules;
};

struct Violation {
  std::string rule_id;
  NodeId trigger = 0;
  std::string pattern;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// 100*count/total rounded half-up to two decimals, e.g. (704, 11353) -> "6.20%".
std::string format_percentage(std::uint64_t count, std::uint64_t total);

// Built-in rule ids are "rule1", "rule2", "rule3" (selection) and
// "sync-flush" (expectation); they cannot be redefined.
class RuleDb {
 public:
  RuleDb();

  void add(Rule rule);
  void add_json(const nlohmann::json& doc);  // one rule object or an array of them
  const Rule& get(const std::string& rule_id) const;
  bool contains(const std::string& rule_id) const;
  std::vector<std::string> ids() const;

  static bool is_builtin(const std::string& rule_id);

 private:
  std::map<std::string, Rule> rules_;
};

Rule rule_from_json(const nlohmann::json& j);
nlohmann::json rule_to_json(const Rule& rule);

// The built-in expectation: sync-family syscalls must reach the device as a
// cache flush (SYNCHRONIZE_CACHE / FLUSH).
Rule sync_flush_rule();

// Selection for one rule. rule1..rule3 are traversal rules scoped by rule1;
// user select rules use their selector and closure. Throws Error(Usage) for
// an unknown id or an expectation rule.
std::vector<NodeId> select_nodes(const CorrelationTree& tree, const std::string& rule_id, const RuleDb& db = {});

PruneReport prune(const CorrelationTree& tree, const std::string& rule_id, const RuleDb& db = {});
PruneReport prune_all(const CorrelationTree& tree, const std::vector<std::string>& rule_ids, const RuleDb& db = {});

std::vector<Violation> check_expectations(const CorrelationTree& tree, const std::vector<Rule>& rules);

// Names in a rule that neither occur in the tree nor name a known command.
std::vector<std::string> unresolved_names(const CorrelationTree& tree, const Rule& rule);

nlohmann::json prune_report_to_json(const PruneReport& report);
nlohmann::json violations_to_json(const std::vector<Violation>& violations);

}  // namespace xray::explorer
