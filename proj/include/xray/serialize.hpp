#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "xray/model.hpp"

namespace xray {

nlohmann::json command_to_json(const DeviceCommand& cmd);
DeviceCommand command_from_json(const nlohmann::json& j);

nlohmann::json host_event_to_json(const HostEvent& ev);

// Canonical tree document:
// {"meta":{...}, "nodes":[{"id","kind","name","start_ns","end_ns","parent","cmd"?}...], "roots":[...]}
nlohmann::json tree_to_json(const CorrelationTree& tree);
CorrelationTree tree_from_json(const nlohmann::json& j);

std::string serialize_tree(const CorrelationTree& tree);
CorrelationTree deserialize_tree(const std::string& text, const std::string& source = "<tree>");

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

CorrelationTree load_tree(const std::filesystem::path& path);

}  // namespace xray
