#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "osha/nn/model.hpp"

namespace osha::nn {

// Versioned checkpoint: magic, embedded config (JSON, sorted keys), then the
// named parameter tensors in map order (deterministic bytes).
constexpr char kCkptMagic[8] = {'O', 'S', 'H', 'A', 'C', 'K', 'P', 1};

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  nlohmann::json meta; // free-form training metadata
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write(kCkptMagic, 8);
  auto put_str = [&](const std::string& s) {
    const std::uint32_t n = static_cast<std::uint32_t>(s.size());
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(s.data(), n);
  };
  put_str(nlohmann::json(ck.config).dump());
  put_str(ck.meta.dump());
  const std::uint64_t count = ck.params.p.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& [name, m] : ck.params.p) {
    put_str(name);
    const std::uint32_t r = m.r, c = m.c;
    os.write(reinterpret_cast<const char*>(&r), 4);
    os.write(reinterpret_cast<const char*>(&c), 4);
    os.write(reinterpret_cast<const char*>(m.a.data()),
             static_cast<std::streamsize>(m.size() * 8));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  auto get_str = [&]() {
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 4);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
  };
  Checkpoint ck;
  ck.config = nlohmann::json::parse(get_str()).get<ModelConfig>();
  ck.meta = nlohmann::json::parse(get_str());
  std::uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 8);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_str();
    std::uint32_t r = 0, c = 0;
    is.read(reinterpret_cast<char*>(&r), 4);
    is.read(reinterpret_cast<char*>(&c), 4);
    Mat m(static_cast<int>(r), static_cast<int>(c));
    is.read(reinterpret_cast<char*>(m.a.data()),
            static_cast<std::streamsize>(m.size() * 8));
    ck.params[name] = std::move(m);
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

} // namespace osha::nn
