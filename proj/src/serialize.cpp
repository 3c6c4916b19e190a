#include "xray/serialize.hpp"

#include <fstream>
#include <sstream>

#include "xray/dev_trace.hpp"
#include "xray/error.hpp"

namespace xray {

using nlohmann::json;

namespace {

Protocol protocol_from(const std::string& s) {
  if (s == "SCSI") return Protocol::Scsi;
  if (s == "NVME") return Protocol::Nvme;
  throw Error(ErrorKind::Parse, "bad protocol " + s);
}

Queue queue_from(const std::string& s) {
  if (s == "NONE") return Queue::None;
  if (s == "IO") return Queue::Io;
  if (s == "ADMIN") return Queue::Admin;
  throw Error(ErrorKind::Parse, "bad queue " + s);
}

CommandClass class_from(const std::string& s) {
  if (s == "DataTransfer") return CommandClass::DataTransfer;
  if (s == "Admin") return CommandClass::Admin;
  throw Error(ErrorKind::Parse, "bad command class " + s);
}

}  // namespace

json command_to_json(const DeviceCommand& cmd) {
  return json{{"ts_ns", cmd.ts.epoch_ns},
              {"protocol", std::string(to_string(cmd.protocol))},
              {"queue", std::string(to_string(cmd.queue))},
              {"opcode", cmd.opcode},
              {"name", cmd.name},
              {"class", std::string(to_string(cmd.cls))},
              {"decoded", cmd.decoded},
              {"raw", dev::to_hex(cmd.raw)}};
}

DeviceCommand command_from_json(const json& j) {
  DeviceCommand c;
  c.ts = Timestamp{j.at("ts_ns").get<std::int64_t>()};
  c.protocol = protocol_from(j.at("protocol").get<std::string>());
  c.queue = queue_from(j.at("queue").get<std::string>());
  c.opcode = j.at("opcode").get<std::uint8_t>();
  c.name = j.at("name").get<std::string>();
  c.cls = class_from(j.at("class").get<std::string>());
  c.decoded = j.at("decoded").get<std::map<std::string, std::uint64_t>>();
  auto raw = dev::from_hex(j.at("raw").get<std::string>());
  if (!raw) throw Error(ErrorKind::Parse, "bad raw hex in command");
  c.raw = std::move(*raw);
  return c;
}

json host_event_to_json(const HostEvent& ev) {
  json j{{"kind", std::string(to_string(ev.kind))},
         {"name", ev.name},
         {"ts_ns", ev.ts.epoch_ns},
         {"depth", ev.depth},
         {"thread_id", ev.thread_id}};
  if (ev.synthetic) j["synthetic"] = true;
  return j;
}

json tree_to_json(const CorrelationTree& tree) {
  json meta{{"host_source", tree.meta.host_source},
            {"dev_source", tree.meta.dev_source},
            {"offset_ns", tree.meta.offset_ns},
            {"offset_method", tree.meta.offset_method},
            {"timestamp_semantics", tree.meta.timestamp_semantics},
            {"unanchored", tree.meta.unanchored},
            {"gap_attached", tree.meta.gap_attached},
            {"host_warnings", tree.meta.host_warnings}};
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    json jn{{"id", n.id},
            {"kind", std::string(to_string(n.kind))},
            {"name", n.name},
            {"start_ns", n.start.epoch_ns},
            {"end_ns", n.end.epoch_ns},
            {"parent", n.parent ? json(*n.parent) : json(nullptr)}};
    if (n.cmd) jn["cmd"] = command_to_json(*n.cmd);
    nodes.push_back(std::move(jn));
  }
  return json{{"meta", meta}, {"nodes", nodes}, {"roots", tree.roots}};
}

CorrelationTree tree_from_json(const json& j) {
  try {
    CorrelationTree tree;
    const auto& m = j.at("meta");
    tree.meta.host_source = m.value("host_source", std::string());
    tree.meta.dev_source = m.value("dev_source", std::string());
    tree.meta.offset_ns = m.value("offset_ns", std::int64_t{0});
    tree.meta.offset_method = m.value("offset_method", std::string("none"));
    tree.meta.timestamp_semantics = m.value("timestamp_semantics", std::string("submission-arrival"));
    tree.meta.unanchored = m.value("unanchored", std::vector<NodeId>{});
    tree.meta.gap_attached = m.value("gap_attached", std::vector<NodeId>{});
    tree.meta.host_warnings = m.value("host_warnings", std::uint64_t{0});

    const auto& nodes = j.at("nodes");
    tree.nodes.resize(nodes.size());
    std::vector<char> filled(nodes.size(), 0);
    for (const auto& jn : nodes) {
      auto id = jn.at("id").get<NodeId>();
      if (id >= nodes.size() || filled[id])
        throw Error(ErrorKind::Parse, "node ids must be dense and unique (bad id " + std::to_string(id) + ")");
      filled[id] = 1;
      TreeNode& n = tree.nodes[id];
      n.id = id;
      auto kind = parse_node_kind(jn.at("kind").get<std::string>());
      if (!kind) throw Error(ErrorKind::Parse, "node " + std::to_string(id) + ": bad kind");
      n.kind = *kind;
      n.name = jn.at("name").get<std::string>();
      n.start = Timestamp{jn.at("start_ns").get<std::int64_t>()};
      n.end = Timestamp{jn.at("end_ns").get<std::int64_t>()};
      if (!jn.at("parent").is_null()) n.parent = jn.at("parent").get<NodeId>();
      if (jn.contains("cmd")) n.cmd = command_from_json(jn.at("cmd"));
    }
    for (const auto& n : tree.nodes) {
      if (!n.parent) continue;
      if (*n.parent >= tree.nodes.size())
        throw Error(ErrorKind::Parse, "node " + std::to_string(n.id) + ": parent out of range");
      tree.nodes[*n.parent].children.push_back(n.id);
    }
    tree.roots = j.at("roots").get<std::vector<NodeId>>();
    return tree;
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::Parse, std::string("tree document: ") + ex.what());
  }
}

std::string serialize_tree(const CorrelationTree& tree) { return tree_to_json(tree).dump(1) + "\n"; }

CorrelationTree deserialize_tree(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorKind::Parse, source + ": " + ex.what());
  }
  try {
    return tree_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), source + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

CorrelationTree load_tree(const std::filesystem::path& path) {
  return deserialize_tree(read_file(path), path.string());
}

}  // namespace xray
