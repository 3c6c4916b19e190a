#include "xray/dev_trace.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "xray/error.hpp"

namespace xray::dev {

namespace {

enum class Endian { Big, Little };

struct FieldLayout {
  std::string_view name;
  std::uint8_t offset;
  std::uint8_t width;
  Endian endian;
};

struct OpcodeEntry {
  std::uint8_t opcode;
  std::string_view name;
  CommandClass cls;
  std::uint8_t cdb_length;
  std::vector<FieldLayout> fields;
};

constexpr FieldLayout kLba10{"lba", 2, 4, Endian::Big};
constexpr FieldLayout kCount10{"block_count", 7, 2, Endian::Big};
constexpr FieldLayout kLba16{"lba", 2, 8, Endian::Big};
constexpr FieldLayout kCount16{"block_count", 10, 4, Endian::Big};

constexpr FieldLayout kNsid{"nsid", 4, 4, Endian::Little};
constexpr FieldLayout kSlba{"slba", 40, 8, Endian::Little};    // CDW10-11
constexpr FieldLayout kNlb{"nlb", 48, 2, Endian::Little};      // CDW12[15:0], zero-based
constexpr FieldLayout kNr{"nr", 40, 1, Endian::Little};        // CDW10[7:0], zero-based range count
constexpr FieldLayout kAttr{"attributes", 44, 4, Endian::Little};  // CDW11
constexpr FieldLayout kQid{"queue_id", 40, 2, Endian::Little};
constexpr FieldLayout kCns{"cns", 40, 1, Endian::Little};
constexpr FieldLayout kFid{"fid", 40, 1, Endian::Little};

using DT = CommandClass;

const std::vector<OpcodeEntry>& scsi_table() {
  static const std::vector<OpcodeEntry> table{
      {0x00, "TEST_UNIT_READY", DT::Admin, 6, {}},
      {0x12, "INQUIRY", DT::Admin, 6, {}},
      {0x25, "READ_CAPACITY_10", DT::Admin, 10, {}},
      {0x28, "READ_10", DT::DataTransfer, 10, {kLba10, kCount10}},
      {0x2a, "WRITE_10", DT::DataTransfer, 10, {kLba10, kCount10}},
      {0x2f, "VERIFY_10", DT::Admin, 10, {kLba10, kCount10}},
      {0x35, "SYNCHRONIZE_CACHE", DT::Admin, 10, {}},
      {0x42, "UNMAP", DT::Admin, 10, {{"param_list_length", 7, 2, Endian::Big}}},
      {0x88, "READ_16", DT::DataTransfer, 16, {kLba16, kCount16}},
      {0x8a, "WRITE_16", DT::DataTransfer, 16, {kLba16, kCount16}},
      {0x91, "SYNCHRONIZE_CACHE_16", DT::Admin, 16, {}},
  };
  return table;
}

const std::vector<OpcodeEntry>& nvme_io_table() {
  static const std::vector<OpcodeEntry> table{
      {0x00, "FLUSH", DT::DataTransfer, 64, {kNsid}},
      {0x01, "WRITE", DT::DataTransfer, 64, {kNsid, kSlba, kNlb}},
      {0x02, "READ", DT::DataTransfer, 64, {kNsid, kSlba, kNlb}},
      {0x09, "DSM", DT::DataTransfer, 64, {kNsid, kNr, kAttr}},
  };
  return table;
}

const std::vector<OpcodeEntry>& nvme_admin_table() {
  static const std::vector<OpcodeEntry> table{
      {0x00, "DELETE_IO_SQ", DT::Admin, 64, {kNsid, kQid}},
      {0x01, "CREATE_IO_SQ", DT::Admin, 64, {kNsid, kQid}},
      {0x02, "GET_LOG_PAGE", DT::Admin, 64, {kNsid}},
      {0x04, "DELETE_IO_CQ", DT::Admin, 64, {kNsid, kQid}},
      {0x05, "CREATE_IO_CQ", DT::Admin, 64, {kNsid, kQid}},
      {0x06, "IDENTIFY", DT::Admin, 64, {kNsid, kCns}},
      {0x08, "ABORT", DT::Admin, 64, {kNsid}},
      {0x09, "SET_FEATURES", DT::Admin, 64, {kNsid, kFid}},
      {0x0a, "GET_FEATURES", DT::Admin, 64, {kNsid, kFid}},
      {0x0c, "ASYNC_EVENT_REQUEST", DT::Admin, 64, {kNsid}},
  };
  return table;
}

const std::vector<OpcodeEntry>& table_for(Protocol protocol, Queue queue) {
  if (protocol == Protocol::Scsi) return scsi_table();
  return queue == Queue::Admin ? nvme_admin_table() : nvme_io_table();
}

const OpcodeEntry* find_entry(Protocol protocol, Queue queue, std::uint8_t opcode) {
  const auto& table = table_for(protocol, queue);
  auto it = std::find_if(table.begin(), table.end(), [&](const OpcodeEntry& e) { return e.opcode == opcode; });
  return it == table.end() ? nullptr : &*it;
}

std::string unknown_name(std::uint8_t opcode) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "UNKNOWN_0x%02X", opcode);
  return buf;
}

std::optional<std::uint8_t> parse_unknown_name(std::string_view name) {
  constexpr std::string_view prefix = "UNKNOWN_0x";
  if (name.size() != prefix.size() + 2 || name.substr(0, prefix.size()) != prefix) return std::nullopt;
  unsigned v = 0;
  auto digits = name.substr(prefix.size());
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, 16);
  if (ec != std::errc() || p != digits.data() + digits.size()) return std::nullopt;
  return static_cast<std::uint8_t>(v);
}

// Field layouts for an opcode, including the fallback for unknown opcodes.
std::vector<FieldLayout> layout_for(Protocol protocol, Queue queue, std::uint8_t opcode) {
  if (const auto* e = find_entry(protocol, queue, opcode)) return e->fields;
  if (protocol == Protocol::Nvme) return {kNsid};
  return {};
}

std::uint64_t read_field(std::span<const std::uint8_t> raw, const FieldLayout& f) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < f.width; ++i) {
    std::size_t idx = f.endian == Endian::Big ? f.offset + i : f.offset + f.width - 1 - i;
    v = (v << 8) | raw[idx];
  }
  return v;
}

void write_field(std::span<std::uint8_t> raw, const FieldLayout& f, std::uint64_t v) {
  for (std::size_t i = 0; i < f.width; ++i) {
    std::size_t idx = f.endian == Endian::Big ? f.offset + f.width - 1 - i : f.offset + i;
    raw[idx] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
}

DeviceCommand decode_with(const DevLogRecord& record, std::size_t expected_len) {
  if (record.raw.size() != expected_len)
    throw Error(ErrorKind::Validation, "raw length " + std::to_string(record.raw.size()) + ", expected " +
                                           std::to_string(expected_len));
  DeviceCommand cmd;
  cmd.ts = record.ts;
  cmd.protocol = record.protocol;
  cmd.queue = record.queue;
  cmd.opcode = record.raw[0];
  cmd.raw = record.raw;
  if (const auto* e = find_entry(record.protocol, record.queue, cmd.opcode)) {
    cmd.name = std::string(e->name);
    cmd.cls = e->cls;
  } else {
    cmd.name = unknown_name(cmd.opcode);
    cmd.cls = CommandClass::Admin;
  }
  for (const auto& f : layout_for(record.protocol, record.queue, cmd.opcode))
    cmd.decoded[std::string(f.name)] = read_field(record.raw, f);
  return cmd;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

DevLogRecord parse_line(std::string_view line, const std::string& source, std::size_t lineno) {
  auto tokens = split_ws(line);
  if (tokens.size() < 3) throw ParseError(source, lineno, "expected `<epoch_ns> <SCSI|NVME> [<IO|ADMIN>] <raw_hex>`");

  DevLogRecord rec;
  std::int64_t ts = 0;
  auto t = tokens[0];
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), ts);
  if (ec != std::errc() || p != t.data() + t.size() || ts < 0)
    throw ParseError(source, lineno, "non-numeric timestamp `" + std::string(t) + "`");
  rec.ts = Timestamp{ts};

  std::string_view hex;
  if (tokens[1] == "SCSI") {
    rec.protocol = Protocol::Scsi;
    if (tokens.size() != 3) throw ParseError(source, lineno, "SCSI lines take no queue column");
    hex = tokens[2];
  } else if (tokens[1] == "NVME") {
    rec.protocol = Protocol::Nvme;
    if (tokens.size() != 4) throw ParseError(source, lineno, "NVME lines require a queue column");
    if (tokens[2] == "IO") {
      rec.queue = Queue::Io;
    } else if (tokens[2] == "ADMIN") {
      rec.queue = Queue::Admin;
    } else {
      throw ParseError(source, lineno, "bad queue tag `" + std::string(tokens[2]) + "`");
    }
    hex = tokens[3];
  } else {
    throw ParseError(source, lineno, "bad protocol tag `" + std::string(tokens[1]) + "`");
  }

  std::size_t want = 2 * (rec.protocol == Protocol::Scsi ? kScsiRawBytes : kNvmeRawBytes);
  if (hex.size() != want)
    throw ParseError(source, lineno,
                     "raw length: expected " + std::to_string(want) + " hex chars, got " + std::to_string(hex.size()));
  auto bytes = from_hex(hex);
  if (!bytes) throw ParseError(source, lineno, "bad hex: lowercase [0-9a-f] only");
  rec.raw = std::move(*bytes);
  return rec;
}

}  // namespace

std::optional<OpcodeInfo> lookup_opcode(Protocol protocol, Queue queue, std::uint8_t opcode) {
  if (const auto* e = find_entry(protocol, queue, opcode)) return OpcodeInfo{e->name, e->cls, e->cdb_length};
  return std::nullopt;
}

std::optional<std::uint8_t> opcode_for_name(Protocol protocol, Queue queue, std::string_view name) {
  for (const auto& e : table_for(protocol, queue))
    if (e.name == name) return e.opcode;
  return parse_unknown_name(name);
}

const std::vector<std::string>& known_command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto* t : {&scsi_table(), &nvme_io_table(), &nvme_admin_table()})
      for (const auto& e : *t) v.emplace_back(e.name);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }();
  return names;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

std::vector<DevLogRecord> parse_dev_log(std::istream& in, const std::string& source) {
  std::vector<DevLogRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    out.push_back(parse_line(body, source, lineno));
  }
  return out;
}

std::vector<DevLogRecord> parse_dev_log(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  return parse_dev_log(in, source);
}

std::string format_record(const DevLogRecord& record) {
  std::string out = std::to_string(record.ts.epoch_ns);
  out += record.protocol == Protocol::Scsi ? " SCSI " : " NVME ";
  if (record.protocol == Protocol::Nvme) {
    out += record.queue == Queue::Admin ? "ADMIN " : "IO ";
  }
  out += to_hex(record.raw);
  return out;
}

DeviceCommand decode_scsi(const DevLogRecord& record) {
  if (record.protocol != Protocol::Scsi) throw Error(ErrorKind::Validation, "decode_scsi: record is not SCSI");
  return decode_with(record, kScsiRawBytes);
}

DeviceCommand decode_nvme(const DevLogRecord& record) {
  if (record.protocol != Protocol::Nvme) throw Error(ErrorKind::Validation, "decode_nvme: record is not NVMe");
  if (record.queue == Queue::None) throw Error(ErrorKind::Validation, "decode_nvme: missing queue tag");
  return decode_with(record, kNvmeRawBytes);
}

DeviceCommand decode(const DevLogRecord& record) {
  return record.protocol == Protocol::Scsi ? decode_scsi(record) : decode_nvme(record);
}

std::vector<DeviceCommand> decode_all(const std::vector<DevLogRecord>& records) {
  std::vector<DeviceCommand> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(decode(r));
  return out;
}

DevLogRecord encode(const DeviceCommand& cmd) {
  if (cmd.protocol == Protocol::Nvme && cmd.queue == Queue::None)
    throw Error(ErrorKind::Validation, "encode: NVMe command without queue");
  if (cmd.protocol == Protocol::Scsi && cmd.queue != Queue::None)
    throw Error(ErrorKind::Validation, "encode: SCSI command with a queue tag");

  DevLogRecord rec;
  rec.ts = cmd.ts;
  rec.protocol = cmd.protocol;
  rec.queue = cmd.queue;
  rec.raw.assign(cmd.protocol == Protocol::Scsi ? kScsiRawBytes : kNvmeRawBytes, 0);
  rec.raw[0] = cmd.opcode;

  auto layout = layout_for(cmd.protocol, cmd.queue, cmd.opcode);
  if (layout.size() != cmd.decoded.size())
    throw Error(ErrorKind::Validation, "encode: " + cmd.name + " defines " + std::to_string(layout.size()) +
                                           " fields, command carries " + std::to_string(cmd.decoded.size()));
  for (const auto& f : layout) {
    auto it = cmd.decoded.find(std::string(f.name));
    if (it == cmd.decoded.end())
      throw Error(ErrorKind::Validation, "encode: " + cmd.name + " requires field " + std::string(f.name));
    if (f.width < 8 && it->second >> (8 * f.width) != 0)
      throw Error(ErrorKind::Validation, "encode: field " + std::string(f.name) + " overflows " +
                                             std::to_string(f.width) + " bytes");
    write_field(rec.raw, f, it->second);
  }
  return rec;
}

DeviceCommand make_command(Protocol protocol, Queue queue, std::string_view name, Timestamp ts,
                           const std::map<std::string, std::uint64_t>& fields) {
  auto opcode = opcode_for_name(protocol, queue, name);
  if (!opcode) throw Error(ErrorKind::Validation, "unknown command name " + std::string(name));
  DeviceCommand proto;
  proto.ts = ts;
  proto.protocol = protocol;
  proto.queue = queue;
  proto.opcode = *opcode;
  proto.name = std::string(name);
  proto.decoded = fields;
  return decode(encode(proto));
}

}  // namespace xray::dev
