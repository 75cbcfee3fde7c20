#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/model/classifier.hpp"

namespace ccf {

/// A saved model plus the epoch it was taken at and a few named metrics.
/// Byte layout: docs/checkpoint-format.md.
struct Checkpoint {
  Classifier model;
  std::int64_t epoch = -1;
  std::vector<std::pair<std::string, double>> metrics;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'C', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class LeWriter {
 public:
  explicit LeWriter(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& is) : is_(is) {}
  std::uint8_t u8() {
    const int c = is_.get();
    if (c == std::char_traits<char>::eof()) throw ParseError("checkpoint truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw ParseError("checkpoint truncated");
    return s;
  }

 private:
  std::istream& is_;
};

inline constexpr std::uint64_t kMaxExtent = std::uint64_t{1} << 32;

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  detail::LeWriter w(os);
  const Classifier& m = ckpt.model;
  w.bytes(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
  w.u32(detail::kCheckpointVersion);
  w.u64(m.input_dim());
  w.u32(static_cast<std::uint32_t>(m.hidden().size()));
  for (const DenseLayer& l : m.hidden()) {
    w.u64(l.out_dim());
    w.u8(l.has_bias() ? 1 : 0);
  }
  w.u64(m.class_count());
  w.u8(m.head().has_bias() ? 1 : 0);
  w.u64(static_cast<std::uint64_t>(ckpt.epoch));
  w.u32(static_cast<std::uint32_t>(ckpt.metrics.size()));
  for (const auto& [name, value] : ckpt.metrics) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.f64(value);
  }
  for (const Tensor* p : m.parameters()) {
    for (double v : p->data()) w.f64(v);
  }
  if (!os) throw Error("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::LeReader r(is);
  const std::string magic = r.str(sizeof detail::kCheckpointMagic);
  if (std::memcmp(magic.data(), detail::kCheckpointMagic, magic.size()) != 0) {
    throw ParseError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  auto extent = [&](const char* what) {
    const std::uint64_t v = r.u64();
    if (v == 0 || v >= detail::kMaxExtent) throw ParseError(std::string("bad ") + what + " in checkpoint");
    return static_cast<std::size_t>(v);
  };
  const std::size_t input_dim = extent("input dimension");
  const std::uint32_t layers = r.u32();
  if (layers > 1024) throw ParseError("implausible layer count in checkpoint");
  std::vector<DenseLayer> hidden;
  std::size_t width = input_dim;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::size_t out = extent("layer width");
    const bool bias = r.u8() != 0;
    hidden.push_back(DenseLayer{Tensor({out, width}), bias ? Tensor({out}) : Tensor()});
    width = out;
  }
  const std::size_t classes = extent("class count");
  const bool head_bias = r.u8() != 0;
  DenseLayer head{Tensor({classes, width}), head_bias ? Tensor({classes}) : Tensor()};

  Checkpoint ckpt;
  ckpt.epoch = static_cast<std::int64_t>(r.u64());
  const std::uint32_t n_metrics = r.u32();
  for (std::uint32_t i = 0; i < n_metrics; ++i) {
    const std::uint32_t len = r.u32();
    if (len > 4096) throw ParseError("implausible metric name length in checkpoint");
    std::string name = r.str(len);
    const double value = r.f64();
    ckpt.metrics.emplace_back(std::move(name), value);
  }
  ckpt.model = Classifier(input_dim, std::move(hidden), std::move(head));
  for (Tensor* p : ckpt.model.parameters()) {
    for (double& v : p->data()) v = r.f64();
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace ccf
