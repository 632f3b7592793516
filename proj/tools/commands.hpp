#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace slotlab::cli {

// Built-in configuration; a config file and flags are merged on top.
nlohmann::json DefaultConfig();

// FNV-1a over the canonical (sorted-key, compact) JSON text.
std::uint64_t ConfigHash(const nlohmann::json& config);
std::string HashHex(std::uint64_t hash, std::size_t digits = 16);

// Parses "a.b.c=value"; value is JSON when it parses as JSON, else a string.
void ApplyOverride(nlohmann::json& config, const std::string& assignment);

// Runs one invocation; args exclude the program name. Errors are reported on
// `err` as "error: <category>: <message>" with a nonzero return.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slotlab::cli
