#include "xray/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "xray/dev_trace.hpp"
#include "xray/diff.hpp"
#include "xray/error.hpp"
#include "xray/explorer.hpp"
#include "xray/host_trace.hpp"
#include "xray/report.hpp"
#include "xray/rules.hpp"
#include "xray/serialize.hpp"
#include "xray/stack_sim.hpp"
#include "xray/time_align.hpp"

namespace xray::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
  std::string host, dev, tree, config, out, out_dir, abnormal, reference;
  std::vector<std::string> rules_ids, rule_files, counts, trees;
  std::optional<std::int64_t> offset_ns;
  std::optional<std::uint64_t> seed;
  std::string format = "text";
  bool selected_only = false;
};

class Session {
 public:
  Session(const Options& opt, std::ostream& out, std::shared_ptr<spdlog::logger> log)
      : opt_(opt), out_(out), log_(std::move(log)) {}

  void emit(const std::string& text) {
    if (opt_.out.empty()) {
      out_ << text;
    } else {
      write_file(opt_.out, text);
      log_->debug("wrote {}", opt_.out);
    }
  }

  host::HostTrace load_host() {
    auto trace = host::parse_host_trace(read_file(opt_.host), opt_.host);
    for (const auto& w : trace.warnings) log_->warn("{}:{}: {}", opt_.host, w.line, w.message);
    return trace;
  }

  std::vector<DeviceCommand> load_dev() { return dev::decode_all(dev::parse_dev_log(read_file(opt_.dev), opt_.dev)); }

  align::ClockOffset offset_for(const host::HostTrace& h, const std::vector<DeviceCommand>& cmds) {
    auto off = opt_.offset_ns ? align::configured_offset(h.events, cmds, *opt_.offset_ns)
                              : align::estimate_offset(h.events, cmds);
    log_->debug("offset {} ns ({}), {} commands outside syscalls", off.offset_ns,
                off.method == align::OffsetMethod::Configured ? "configured" : "estimated", off.residual_violations);
    if (off.residual_violations > 0)
      log_->warn("{} device commands fall outside every syscall after alignment", off.residual_violations);
    return off;
  }

  CorrelationTree build() {
    auto h = load_host();
    auto cmds = load_dev();
    auto off = offset_for(h, cmds);
    TreeMeta meta;
    meta.host_source = opt_.host;
    meta.dev_source = opt_.dev;
    meta.offset_ns = off.offset_ns;
    meta.offset_method = off.method == align::OffsetMethod::Configured ? "configured" : "estimated";
    meta.host_warnings = h.warnings.size();
    auto tree = explorer::build_tree(h.events, align::apply_offset(cmds, off.offset_ns), meta);
    if (!tree.meta.unanchored.empty())
      log_->warn("{} commands attached outside any syscall interval", tree.meta.unanchored.size());
    if (!tree.meta.gap_attached.empty())
      log_->debug("{} commands attached in gaps between functions", tree.meta.gap_attached.size());
    return tree;
  }

  explorer::RuleDb rule_db() {
    explorer::RuleDb db;
    for (const auto& f : opt_.rule_files) {
      json doc;
      try {
        doc = json::parse(read_file(f));
      } catch (const json::parse_error& ex) {
        throw Error(ErrorKind::Parse, f + ": " + ex.what());
      }
      try {
        db.add_json(doc);
      } catch (const json::exception& ex) {
        throw Error(ErrorKind::Parse, f + ": " + ex.what());
      } catch (const Error& e) {
        throw Error(e.kind(), f + ": " + e.what());
      }
    }
    return db;
  }

  // Rule ids named in the rule files, in file order.
  std::vector<std::string> file_rule_ids() {
    std::vector<std::string> ids;
    for (const auto& f : opt_.rule_files) {
      auto doc = json::parse(read_file(f));
      if (doc.is_array()) {
        for (const auto& r : doc) ids.push_back(r.at("rule_id").get<std::string>());
      } else {
        ids.push_back(doc.at("rule_id").get<std::string>());
      }
    }
    return ids;
  }

  const Options& opt() const { return opt_; }
  spdlog::logger& log() { return *log_; }

 private:
  const Options& opt_;
  std::ostream& out_;
  std::shared_ptr<spdlog::logger> log_;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::Usage, what);
}

void require_format(const Options& opt, std::initializer_list<const char*> allowed) {
  for (const char* f : allowed)
    if (opt.format == f) return;
  throw Error(ErrorKind::Usage, "--format " + opt.format + " is not supported by this subcommand");
}

int cmd_simulate(Session& s) {
  const auto& opt = s.opt();
  require(!opt.config.empty(), "simulate needs --config");
  require(!opt.out_dir.empty(), "simulate needs --out-dir");
  json doc;
  try {
    doc = json::parse(read_file(opt.config));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorKind::Parse, opt.config + ": " + ex.what());
  }
  sim::SimConfig cfg;
  try {
    cfg = sim::config_from_json(doc);
  } catch (const Error& e) {
    throw Error(e.kind(), opt.config + ": " + e.what());
  }
  if (opt.seed) cfg.seed = *opt.seed;
  auto res = sim::simulate(cfg);
  fs::path dir(opt.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "host.trace", res.host_trace);
  write_file(dir / "dev.log", res.dev_log);
  write_file(dir / "truth.json", sim::truth_to_json(res.truth).dump(1) + "\n");
  s.log().debug("simulated {} nodes into {}", res.tree.size(), dir.string());
  return kOk;
}

int cmd_parse_host(Session& s) {
  require(!s.opt().host.empty(), "parse-host needs --host");
  require_format(s.opt(), {"json", "text"});
  auto trace = s.load_host();
  json events = json::array();
  for (const auto& ev : trace.events) events.push_back(host_event_to_json(ev));
  json warnings = json::array();
  for (const auto& w : trace.warnings) warnings.push_back({{"line", w.line}, {"message", w.message}});
  s.emit(json{{"events", events}, {"warnings", warnings}}.dump(1) + "\n");
  return kOk;
}

int cmd_parse_dev(Session& s) {
  require(!s.opt().dev.empty(), "parse-dev needs --dev");
  require_format(s.opt(), {"json", "text"});
  json cmds = json::array();
  for (const auto& c : s.load_dev()) cmds.push_back(command_to_json(c));
  s.emit(cmds.dump(1) + "\n");
  return kOk;
}

int cmd_align(Session& s) {
  require(!s.opt().host.empty() && !s.opt().dev.empty(), "align needs --host and --dev");
  auto h = s.load_host();
  auto cmds = s.load_dev();
  auto off = s.offset_for(h, cmds);
  std::ostringstream os;
  os << "# offset_ns=" << off.offset_ns
     << " method=" << (off.method == align::OffsetMethod::Configured ? "configured" : "estimated")
     << " residual_violations=" << off.residual_violations << "\n";
  for (const auto& c : align::apply_offset(cmds, off.offset_ns)) os << dev::format_record(dev::encode(c)) << "\n";
  s.emit(os.str());
  return kOk;
}

int cmd_build(Session& s) {
  require(!s.opt().host.empty() && !s.opt().dev.empty(), "build needs --host and --dev");
  require(s.opt().tree.empty(), "build takes raw traces, not --tree");
  auto tree = s.build();
  auto problems = validate_tree(tree);
  if (!problems.empty()) throw Error(ErrorKind::Validation, "built tree is inconsistent: " + problems.front());
  s.emit(serialize_tree(tree));
  return kOk;
}

CorrelationTree tree_input(Session& s) {
  const auto& opt = s.opt();
  if (!opt.tree.empty()) {
    require(opt.host.empty() && opt.dev.empty(), "use either --tree or --host/--dev, not both");
    auto tree = load_tree(opt.tree);
    auto problems = validate_tree(tree);
    if (!problems.empty()) throw Error(ErrorKind::Validation, opt.tree + ": " + problems.front());
    return tree;
  }
  require(!opt.host.empty() && !opt.dev.empty(), "needs --tree or both --host and --dev");
  return s.build();
}

int cmd_prune(Session& s) {
  require_format(s.opt(), {"text", "json", "dot"});
  auto tree = tree_input(s);
  auto db = s.rule_db();
  auto ids = s.opt().rules_ids;
  if (ids.empty()) ids = {"rule1", "rule2", "rule3"};
  auto rep = explorer::prune_all(tree, ids, db);
  if (s.opt().format == "json") {
    s.emit(explorer::prune_report_to_json(rep).dump(1) + "\n");
  } else if (s.opt().format == "dot") {
    report::DotOptions dot;
    dot.highlight = rep.rules.back().selected;
    dot.selected_only = s.opt().selected_only;
    s.emit(report::to_dot(tree, dot));
  } else {
    s.emit(report::format_prune_text(tree, rep));
  }
  return kOk;
}

int cmd_check(Session& s) {
  require_format(s.opt(), {"text", "json"});
  auto tree = tree_input(s);
  auto db = s.rule_db();
  std::vector<std::string> ids = s.opt().rules_ids;
  if (ids.empty()) ids = s.opt().rule_files.empty() ? std::vector<std::string>{"sync-flush"} : s.file_rule_ids();
  std::vector<explorer::Rule> rules;
  for (const auto& id : ids) {
    const auto& r = db.get(id);
    if (!r.is_expect()) {
      s.log().debug("skipping selection rule {}", id);
      continue;
    }
    for (const auto& name : explorer::unresolved_names(tree, r))
      s.log().warn("rule {}: name {} does not occur in the tree", id, name);
    rules.push_back(r);
  }
  require(!rules.empty(), "no expectation rules to check");
  auto violations = explorer::check_expectations(tree, rules);
  if (s.opt().format == "json") {
    s.emit(explorer::violations_to_json(violations).dump(1) + "\n");
  } else {
    s.emit(report::format_violations_text(violations));
  }
  return violations.empty() ? kOk : kViolations;
}

int cmd_diff(Session& s) {
  const auto& opt = s.opt();
  require(!opt.abnormal.empty() && !opt.reference.empty(), "diff needs --abnormal and --reference");
  require_format(opt, {"text", "json", "dot"});
  auto abnormal = load_tree(opt.abnormal);
  auto reference = load_tree(opt.reference);
  for (const auto& [path, t] : {std::pair{opt.abnormal, &abnormal}, std::pair{opt.reference, &reference}}) {
    auto problems = validate_tree(*t);
    if (!problems.empty()) throw Error(ErrorKind::Validation, path + ": " + problems.front());
  }
  auto rep = explorer::diff(abnormal, reference);
  if (opt.format == "json") {
    s.emit(explorer::diff_report_to_json(rep).dump(1) + "\n");
  } else if (opt.format == "dot") {
    report::DotOptions dot;
    for (const auto& d : rep.divergence_roots)
      if (d.abnormal_node) dot.highlight.push_back(*d.abnormal_node);
    s.emit(report::to_dot(abnormal, dot));
  } else {
    s.emit(report::format_diff_text(rep));
  }
  return kOk;
}

// --counts ID:ORIGINAL:C1,C2,...
report::CountRow parse_counts(const std::string& spec) {
  auto bad = [&] { return Error(ErrorKind::Usage, "--counts expects ID:ORIGINAL:C1,C2,... (got `" + spec + "`)"); };
  auto first = spec.find(':');
  auto second = first == std::string::npos ? first : spec.find(':', first + 1);
  if (second == std::string::npos) throw bad();
  auto number = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) throw bad();
    return std::stoull(s);
  };
  report::CountRow row;
  row.id = spec.substr(0, first);
  row.original = number(spec.substr(first + 1, second - first - 1));
  std::stringstream rest(spec.substr(second + 1));
  for (std::string item; std::getline(rest, item, ',');) row.counts.push_back(number(item));
  if (row.original == 0 || row.counts.empty()) throw bad();
  return row;
}

int cmd_report(Session& s) {
  const auto& opt = s.opt();
  require_format(opt, {"text", "json"});
  require(!opt.counts.empty() || !opt.trees.empty() || !opt.tree.empty(), "report needs --counts or --tree");
  auto ids = opt.rules_ids;
  if (ids.empty()) ids = {"rule1", "rule2", "rule3"};
  std::vector<report::CountRow> rows;
  for (const auto& c : opt.counts) {
    rows.push_back(parse_counts(c));
    require(rows.back().counts.size() == ids.size(), "--counts row `" + c + "` does not match the rule columns");
  }
  auto db = s.rule_db();
  auto trees = opt.trees;
  if (!opt.tree.empty()) trees.insert(trees.begin(), opt.tree);
  for (const auto& path : trees) {
    auto tree = load_tree(path);
    rows.push_back(report::row_from_prune(fs::path(path).stem().string(), explorer::prune_all(tree, ids, db)));
  }
  if (opt.format == "json") {
    json out = json::array();
    for (const auto& r : rows) {
      json cells = json::object();
      for (std::size_t i = 0; i < ids.size(); ++i)
        cells[ids[i]] = {{"count", r.counts[i]}, {"percentage", explorer::format_percentage(r.counts[i], r.original)}};
      out.push_back({{"id", r.id}, {"original", r.original}, {"rules", cells}});
    }
    s.emit(out.dump(1) + "\n");
  } else {
    s.emit(report::format_table(rows, ids));
  }
  return kOk;
}

int cmd_export(Session& s) {
  require_format(s.opt(), {"dot", "json"});
  auto tree = tree_input(s);
  if (s.opt().format == "json") {
    s.emit(serialize_tree(tree));
    return kOk;
  }
  report::DotOptions dot;
  dot.selected_only = s.opt().selected_only;
  if (!s.opt().rules_ids.empty()) {
    auto db = s.rule_db();
    dot.highlight = explorer::select_nodes(tree, s.opt().rules_ids.front(), db);
  }
  s.emit(report::to_dot(tree, dot));
  return kOk;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  sink->set_pattern("xray: %l: %v");
  auto log = std::make_shared<spdlog::logger>("xray", sink);
  std::string level = std::getenv("XRAY_LOG") ? std::getenv("XRAY_LOG") : "warn";
  if (level == "off") {
    log->set_level(spdlog::level::off);
  } else if (level == "debug") {
    log->set_level(spdlog::level::debug);
  } else {
    log->set_level(spdlog::level::warn);
  }
  return log;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Cross-layer storage stack diagnosis from host traces and device command logs", "xray"};
  app.require_subcommand(1);

  auto add_inputs = [&](CLI::App* c) {
    c->add_option("--host", opt.host, "host function trace");
    c->add_option("--dev", opt.dev, "device command log");
    c->add_option("--offset-ns", opt.offset_ns, "device clock offset to apply instead of estimating one");
  };
  auto add_tree = [&](CLI::App* c) {
    add_inputs(c);
    c->add_option("--tree", opt.tree, "canonical tree file");
  };
  auto add_rules = [&](CLI::App* c) {
    c->add_option("--rule", opt.rules_ids, "rule id (repeatable)");
    c->add_option("--rules", opt.rule_files, "rule file (repeatable)");
  };
  auto add_output = [&](CLI::App* c, std::vector<std::string> formats) {
    c->add_option("--format", opt.format, "output format")->check(CLI::IsMember(formats));
    c->add_option("--out", opt.out, "output file (default stdout)");
  };

  auto* simulate = app.add_subcommand("simulate", "run the storage stack simulator");
  simulate->add_option("--config", opt.config, "simulation config")->required();
  simulate->add_option("--out-dir", opt.out_dir, "directory for host.trace, dev.log and truth.json")->required();
  simulate->add_option("--seed", opt.seed, "override the config seed");

  auto* parse_host = app.add_subcommand("parse-host", "parse a host trace into timed events");
  parse_host->add_option("--host", opt.host)->required();
  add_output(parse_host, {"json", "text"});

  auto* parse_dev = app.add_subcommand("parse-dev", "decode a device command log");
  parse_dev->add_option("--dev", opt.dev)->required();
  add_output(parse_dev, {"json", "text"});

  auto* align_cmd = app.add_subcommand("align", "shift device timestamps onto the host clock");
  add_inputs(align_cmd);
  align_cmd->add_option("--out", opt.out, "output file (default stdout)");

  auto* build = app.add_subcommand("build", "build the correlation tree");
  add_tree(build);
  build->add_option("--out", opt.out, "output file (default stdout)");

  auto* prune = app.add_subcommand("prune", "select critical-path nodes");
  add_tree(prune);
  add_rules(prune);
  add_output(prune, {"text", "json", "dot"});
  prune->add_flag("--selected-only", opt.selected_only, "dot: draw only selected nodes");

  auto* check = app.add_subcommand("check", "evaluate expectation rules");
  add_tree(check);
  add_rules(check);
  add_output(check, {"text", "json"});

  auto* diff = app.add_subcommand("diff", "locate divergence between an abnormal and a reference tree");
  diff->add_option("--abnormal", opt.abnormal, "tree of the failing run")->required();
  diff->add_option("--reference", opt.reference, "tree of a known-good run")->required();
  add_output(diff, {"text", "json", "dot"});

  auto* report_cmd = app.add_subcommand("report", "summary table of rule counts and percentages");
  report_cmd->add_option("--counts", opt.counts, "ID:ORIGINAL:C1,C2,... (repeatable)");
  report_cmd->add_option("--tree", opt.trees, "tree file (repeatable)");
  add_rules(report_cmd);
  add_output(report_cmd, {"text", "json"});

  auto* export_cmd = app.add_subcommand("export", "write a tree as DOT or canonical JSON");
  add_tree(export_cmd);
  add_rules(export_cmd);
  add_output(export_cmd, {"dot", "json"});
  export_cmd->add_flag("--selected-only", opt.selected_only, "draw only the highlighted nodes");

  opt.format = "text";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  auto log = make_logger(err);
  Session s(opt, out, log);
  try {
    if (simulate->parsed()) return cmd_simulate(s);
    if (parse_host->parsed()) {
      if (parse_host->count("--format") == 0) opt.format = "json";
      return cmd_parse_host(s);
    }
    if (parse_dev->parsed()) {
      if (parse_dev->count("--format") == 0) opt.format = "json";
      return cmd_parse_dev(s);
    }
    if (align_cmd->parsed()) return cmd_align(s);
    if (build->parsed()) return cmd_build(s);
    if (prune->parsed()) return cmd_prune(s);
    if (check->parsed()) return cmd_check(s);
    if (diff->parsed()) return cmd_diff(s);
    if (report_cmd->parsed()) return cmd_report(s);
    if (export_cmd->parsed()) {
      if (export_cmd->count("--format") == 0) opt.format = "dot";
      return cmd_export(s);
    }
  } catch (const Error& e) {
    err << "xray: error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? kUsage : kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "xray: error: " << e.what() << "\n";
    return kInputError;
  }
  return kUsage;
}

}  // namespace xray::cli
