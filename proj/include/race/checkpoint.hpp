#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "race/errors.hpp"
#include "race/mappo.hpp"

namespace race {

// Layout, all integers and floats little-endian:
//   "RACECKPT" | u32 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rows | u32 cols | rows*cols f64 (row-major)
// The observation normaliser is stored as tensor "obs_norm" with 1x7 entries
// (mean[3], m2[3], count).
inline constexpr char kCheckpointMagic[8] = {'R', 'A', 'C', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& o, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("truncated checkpoint");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0, cols = 0;
  std::vector<double> data;
};

}  // namespace detail

template <class S>
void save_checkpoint(Mappo<S>& mp, const std::string& path) {
  std::vector<detail::NamedTensor> ts;
  for (int k = 0; k < mp.agents(); ++k) {
    auto& ag = mp.agent(k);
    for (auto [net, tag] : {std::pair{&ag.actor, "actor"}, std::pair{&ag.critic, "critic"}})
      for (auto* p : net->parameters()) {
        detail::NamedTensor t;
        t.name = "agent" + std::to_string(k) + "/" + tag + "/" + p->name;
        t.rows = static_cast<std::uint32_t>(p->value.rows());
        t.cols = static_cast<std::uint32_t>(p->value.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i)
          t.data.push_back(static_cast<double>(p->value.data()[i]));
        ts.push_back(std::move(t));
      }
  }
  const auto& nm = mp.normalizer();
  detail::NamedTensor norm{"obs_norm", 1, 7, {}};
  for (double v : nm.mean) norm.data.push_back(v);
  for (double v : nm.m2) norm.data.push_back(v);
  norm.data.push_back(nm.count);
  ts.push_back(norm);

  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw Error("cannot write checkpoint " + path);
  o.write(kCheckpointMagic, 8);
  detail::put_u32(o, kCheckpointVersion);
  detail::put_u32(o, static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    detail::put_u32(o, static_cast<std::uint32_t>(t.name.size()));
    o.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_u32(o, t.rows);
    detail::put_u32(o, t.cols);
    for (double v : t.data) detail::put_f64(o, v);
  }
  if (!o) throw Error("checkpoint write failed: " + path);
}

template <class S>
void load_checkpoint(Mappo<S>& mp, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error("not a checkpoint file: " + path);
  if (detail::get_u32(in) != kCheckpointVersion) throw Error("unsupported checkpoint version");
  const std::uint32_t count = detail::get_u32(in);
  std::vector<detail::NamedTensor> ts(count);
  for (auto& t : ts) {
    const std::uint32_t len = detail::get_u32(in);
    t.name.resize(len);
    if (!in.read(t.name.data(), len)) throw Error("truncated checkpoint");
    t.rows = detail::get_u32(in);
    t.cols = detail::get_u32(in);
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    for (auto& v : t.data) v = detail::get_f64(in);
  }
  std::size_t next = 0;
  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) -> const detail::NamedTensor& {
    if (next >= ts.size() || ts[next].name != name)
      throw ShapeError("checkpoint tensor mismatch at " + name);
    const auto& t = ts[next++];
    if (t.rows != rows || t.cols != cols) throw ShapeError("checkpoint shape mismatch at " + name);
    return t;
  };
  for (int k = 0; k < mp.agents(); ++k) {
    auto& ag = mp.agent(k);
    for (auto [net, tag] : {std::pair{&ag.actor, "actor"}, std::pair{&ag.critic, "critic"}})
      for (auto* p : net->parameters()) {
        const auto& t = take("agent" + std::to_string(k) + "/" + tag + "/" + p->name,
                             p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i)
          p->value.data()[i] = static_cast<S>(t.data[static_cast<std::size_t>(i)]);
      }
  }
  const auto& t = take("obs_norm", 1, 7);
  auto& nm = mp.normalizer();
  for (int j = 0; j < 3; ++j) {
    nm.mean[j] = t.data[j];
    nm.m2[j] = t.data[3 + j];
  }
  nm.count = t.data[6];
  if (next != ts.size()) throw ShapeError("checkpoint has extra tensors");
}

}  // namespace race
