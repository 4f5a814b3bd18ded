// Checkpoint persistence.
//
// Binary file layout (all integers u32 little-endian, all reals IEEE-754
// binary64 little-endian):
//
//   "GSCK"                     4 magic bytes
//   version                    u32 (= 1)
//   vocab_size embed_dim hidden_dim epoch   u32 x 4
//   embed   |V| x d            row-major
//   w_in    4h x d             gate blocks i, f, o, g
//   w_rec   4h x h             gate blocks i, f, o, g
//   bias    4h                 gate blocks i, f, o, g
//   w_out   |V| x h
//   b_out   |V|
//
// The vocabulary, training configuration and metrics live in a UTF-8 JSON
// sidecar at "<path>.json".
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdlab/train.hpp"

namespace cdlab {

inline constexpr char kCheckpointMagic[4] = {'G', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + b])} << (8 * b);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + b])} << (8 * b);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  void expect_magic() {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, kCheckpointMagic, 4) != 0)
      throw std::runtime_error("checkpoint: bad magic bytes");
    pos_ += 4;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_params(const LstmParams& p, std::size_t epoch) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  const auto d = p.dims();
  detail::put_u32(out, static_cast<std::uint32_t>(d.vocab_size));
  detail::put_u32(out, static_cast<std::uint32_t>(d.embed_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(d.hidden_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(epoch));
  for (auto t : p.tensors())
    for (double x : t) detail::put_f64(out, x);
  return out;
}

inline LstmParams decode_params(const std::string& bytes, std::size_t* epoch = nullptr) {
  detail::ByteReader r(bytes);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  ModelDims d;
  d.vocab_size = r.u32();
  d.embed_dim = r.u32();
  d.hidden_dim = r.u32();
  const std::uint32_t ep = r.u32();
  if (epoch) *epoch = ep;
  if (d.vocab_size == 0 || d.embed_dim == 0 || d.hidden_dim == 0)
    throw std::runtime_error("checkpoint: zero dimension in header");
  LstmParams p(d);
  for (auto t : p.tensors())
    for (double& x : t) x = r.f64();
  if (!r.at_end()) throw std::runtime_error("checkpoint: trailing bytes");
  return p;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm}, {"epochs", c.epochs},
          {"bptt_len", c.bptt_len},           {"hidden_dim", c.hidden_dim}, {"embed_dim", c.embed_dim},
          {"forget_bias", c.forget_bias},     {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.epochs = j.value("epochs", c.epochs);
  c.bptt_len = j.value("bptt_len", c.bptt_len);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.forget_bias = j.value("forget_bias", c.forget_bias);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file(path, encode_params(ck.params, ck.epoch));
  nlohmann::json side;
  side["vocab"] = ck.vocab.tokens();
  side["config"] = to_json(ck.config);
  side["epoch"] = ck.epoch;
  side["metrics"] = ck.metrics;
  write_file(sidecar_path(path), side.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck;
  ck.params = decode_params(read_file(path), &ck.epoch);
  const auto side = nlohmann::json::parse(read_file(sidecar_path(path)));
  ck.vocab = Vocab::from_tokens(side.at("vocab").get<std::vector<std::string>>());
  ck.config = train_config_from_json(side.at("config"));
  ck.metrics = side.value("metrics", std::map<std::string, double>{});
  if (side.value("epoch", ck.epoch) != ck.epoch) throw std::runtime_error("checkpoint: sidecar epoch mismatch");
  if (ck.vocab.size() != ck.params.vocab_size())
    throw std::runtime_error("checkpoint: sidecar vocabulary size does not match tensor header");
  return ck;
}

}  // namespace cdlab
