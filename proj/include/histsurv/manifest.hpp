#pragma once

// Run manifest: what ran, on which inputs, with which seed.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace histsurv {

// 64-bit FNV-1a; byte order independent.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string dataset_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  double duration_seconds = 0.0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return {{"command", command},   {"config_hash", config_hash},
            {"dataset_hash", dataset_hash}, {"seed", seed},
            {"version", version},   {"duration_seconds", duration_seconds},
            {"warnings", warnings}};
  }
};

// Hash of the canonical (sorted-key, compact) JSON form.
inline std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a(config.dump())); }

inline std::string dataset_hash(const std::vector<std::string>& contents) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& c : contents) {
    h = fnv1a(c, h);
    h = fnv1a(std::string_view("\0", 1), h);
  }
  return hex64(h);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace histsurv
