#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xray/model.hpp"

namespace xray::dev {

inline constexpr std::size_t kScsiRawBytes = 16;
inline constexpr std::size_t kNvmeRawBytes = 64;

// One line of a device command log, before decoding.
struct DevLogRecord {
  Timestamp ts;
  Protocol protocol = Protocol::Scsi;
  Queue queue = Queue::None;
  std::vector<std::uint8_t> raw;

  friend bool operator==(const DevLogRecord&, const DevLogRecord&) = default;
};

struct OpcodeInfo {
  std::string_view name;
  CommandClass cls;
  std::uint8_t cdb_length;  // SCSI only; 64 for NVMe entries
};

// Known opcodes for (protocol, queue). Unknown opcodes yield nullopt.
std::optional<OpcodeInfo> lookup_opcode(Protocol protocol, Queue queue, std::uint8_t opcode);
// Reverse lookup, used when fabricating commands by name.
std::optional<std::uint8_t> opcode_for_name(Protocol protocol, Queue queue, std::string_view name);
// Every command name the tables know, across protocols.
const std::vector<std::string>& known_command_names();

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex);

// Line format: `<epoch_ns> <SCSI|NVME> [<IO|ADMIN>] <raw_hex>`; `#` starts a comment.
std::vector<DevLogRecord> parse_dev_log(std::istream& in, const std::string& source = "<dev-log>");
std::vector<DevLogRecord> parse_dev_log(std::string_view text, const std::string& source = "<dev-log>");

std::string format_record(const DevLogRecord& record);

DeviceCommand decode_scsi(const DevLogRecord& record);
DeviceCommand decode_nvme(const DevLogRecord& record);
DeviceCommand decode(const DevLogRecord& record);
std::vector<DeviceCommand> decode_all(const std::vector<DevLogRecord>& records);

// Canonical encoding from opcode and decoded fields. Throws Error(Validation)
// when the decoded field set does not match what the opcode defines.
DevLogRecord encode(const DeviceCommand& cmd);

// Builds a canonical command by name; fields must be exactly those the opcode defines.
DeviceCommand make_command(Protocol protocol, Queue queue, std::string_view name, Timestamp ts,
                           const std::map<std::string, std::uint64_t>& fields);

}  // namespace xray::dev
