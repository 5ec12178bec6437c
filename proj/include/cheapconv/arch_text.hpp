#pragma once

#include <string>

#include "cheapconv/arch_ir.hpp"

namespace cheapconv {

// Architecture description files: nested key/value text (YAML syntax) that
// mirrors NetworkSpec field for field. parse_network(serialize_network(n)) == n
// for every spec, and serialization of a parsed canonical file reproduces it.

std::string serialize_network(const NetworkSpec& network);

/// Throws ArchError on malformed input or unknown enum values.
NetworkSpec parse_network(const std::string& text);

NetworkSpec load_network(const std::string& path);
void save_network(const NetworkSpec& network, const std::string& path);

}  // namespace cheapconv
