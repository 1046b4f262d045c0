#include "modest/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "modest/rng.hpp"

namespace modest {

std::uint64_t digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot digest missing file: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

void RunManifest::add_input(const std::string& path) {
  input_digests[path] = hex64(digest_file(path));
}

void RunManifest::write(const std::string& dir) const {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = input_digests;
  j["outputs"] = outputs;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
}

}  // namespace modest
