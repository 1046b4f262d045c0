#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "modest/common.hpp"

namespace modest {

// Run provenance written once per output directory. Timestamp-free so reruns
// are byte-identical.
struct RunManifest {
  std::string command;
  std::string tool_version;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;        // resolved key -> value
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
  std::vector<std::string> outputs;                  // relative to run dir

  void add_input(const std::string& path);  // digests the file content
  void write(const std::string& dir) const;  // dir + "/manifest.json"
};

std::uint64_t digest_file(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace modest
