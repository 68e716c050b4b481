#pragma once

// Binary checkpoint container.
//
//   "V2VCKPT\0"                     8-byte magic
//   u32 version                     currently 1
//   u32 n, n bytes                  architecture descriptor (JSON)
//   u32 count, count x tensor       u16 name length, name, u32 rows, u32 cols,
//                                   rows*cols little-endian doubles, row-major
//   u64 seed, u64 episodes, u64 iteration   training RNG position
//   u32 crc                         CRC-32 of every preceding byte
//
// Normalizer statistics travel as ordinary tensors.

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "policy.hpp"
#include "ppo.hpp"
#include "rollout.hpp"
#include "wire.hpp"

namespace v2v {

inline constexpr std::array<char, 8> kCheckpointMagic = {'V', '2', 'V', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Agent agent;
  std::uint64_t seed = 0;
  std::uint64_t episodes_done = 0;
  std::uint64_t iteration = 0;
};

inline nlohmann::json describe(const Architecture& a) {
  return {{"mode", std::string(to_string(a.mode))},
          {"max_senders", a.max_senders},
          {"obs_width", kObservationWidth},
          {"code_width", a.uses_messages() ? kCodeWidth : 0},
          {"hidden", {kHidden1, kHidden2}},
          {"gaussian_dims", a.gaussian_dims()},
          {"select_dims", a.select_dims()}};
}

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i))); }
  void u32(std::uint32_t v) { for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i))); }
  void u64(std::uint64_t v) { for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i))); }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str16(const std::string& s) { u16(static_cast<std::uint16_t>(s.size())); bytes(s.data(), s.size()); }
  void tensor(const std::string& name, const Eigen::MatrixXd& m) {
    str16(name);
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw LoadError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  detail::Writer w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  const std::string desc = describe(ck.agent.params.arch).dump();
  w.u32(static_cast<std::uint32_t>(desc.size()));
  w.bytes(desc.data(), desc.size());
  const auto norm_tensors = [&](const std::string& prefix, const RunningNorm& n) {
    w.tensor(prefix + "_count", Eigen::MatrixXd::Constant(1, 1, n.count()));
    w.tensor(prefix + "_mean", n.mean());
    w.tensor(prefix + "_m2", n.m2());
  };
  w.u32(static_cast<std::uint32_t>(kNumTensors + 6));
  for (std::size_t i = 0; i < kNumTensors; ++i) w.tensor(std::string(kTensorNames[i]), ck.agent.params.t[i]);
  norm_tensors("obs_norm", ck.agent.obs_norm);
  norm_tensors("msg_norm", ck.agent.msg_norm);
  w.u64(ck.seed);
  w.u64(ck.episodes_done);
  w.u64(ck.iteration);
  w.u32(wire::crc32_ieee(w.buffer()));
  return std::move(w.buffer());
}

// Throws LoadError on any structural problem. When `expected` is given the
// stored architecture must match it.
inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                         const std::optional<Architecture>& expected = std::nullopt) {
  if (bytes.size() < kCheckpointMagic.size() + 8) throw LoadError("checkpoint too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
    throw LoadError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored_crc = static_cast<std::uint32_t>(detail::Reader(bytes.subspan(body)).uint(4));
  if (stored_crc != wire::crc32_ieee(bytes.first(body))) throw LoadError("checkpoint CRC mismatch (corrupt file)");

  detail::Reader r(bytes.first(body));
  r.str(kCheckpointMagic.size());
  if (const auto version = r.uint(4); version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(r.str(r.uint(4)));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad architecture descriptor: ") + e.what());
  }
  Architecture arch;
  try {
    arch.mode = parse_mode(desc.at("mode").get<std::string>());
    arch.max_senders = desc.at("max_senders").get<int>();
  } catch (const std::exception& e) {
    throw LoadError(std::string("bad architecture descriptor: ") + e.what());
  }
  if (desc != describe(arch)) throw LoadError("architecture descriptor does not match this build: " + desc.dump());
  if (expected && !(*expected == arch))
    throw LoadError("checkpoint architecture " + desc.dump() + " does not match expected " + describe(*expected).dump());

  std::map<std::string, Eigen::MatrixXd> tensors;
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.uint(2));
    const auto rows = static_cast<Eigen::Index>(r.uint(4));
    const auto cols = static_cast<Eigen::Index>(r.uint(4));
    r.need(static_cast<std::size_t>(rows * cols) * 8);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index a = 0; a < rows; ++a)
      for (Eigen::Index b = 0; b < cols; ++b) m(a, b) = r.f64();
    tensors[name] = std::move(m);
  }
  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw LoadError("checkpoint is missing tensor " + name);
    if (it->second.rows() != rows || it->second.cols() != cols)
      throw LoadError("tensor " + name + " has shape " + std::to_string(it->second.rows()) + "x" +
                      std::to_string(it->second.cols()) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    return it->second;
  };
  Checkpoint ck;
  ck.agent.params.arch = arch;
  const auto shapes = tensor_shapes(arch);
  for (std::size_t i = 0; i < kNumTensors; ++i)
    ck.agent.params.t[i] = take(std::string(kTensorNames[i]), shapes[i].first, shapes[i].second);
  const auto load_norm = [&](const std::string& prefix, Eigen::Index dim) {
    RunningNorm n(dim);
    n.restore(take(prefix + "_count", 1, 1)(0, 0), take(prefix + "_mean", dim, 1).col(0),
              take(prefix + "_m2", dim, 1).col(0));
    return n;
  };
  ck.agent.obs_norm = load_norm("obs_norm", static_cast<Eigen::Index>(kObservationWidth));
  ck.agent.msg_norm = load_norm("msg_norm", static_cast<Eigen::Index>(kMessageWidth));
  ck.seed = r.uint(8);
  ck.episodes_done = r.uint(8);
  ck.iteration = r.uint(8);
  if (r.pos() != body) throw LoadError("trailing bytes in checkpoint");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::optional<Architecture>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected);
}

inline Checkpoint to_checkpoint(const TrainState& st) {
  return {st.agent, st.seed, static_cast<std::uint64_t>(st.episodes_done), static_cast<std::uint64_t>(st.iteration)};
}

}  // namespace v2v
