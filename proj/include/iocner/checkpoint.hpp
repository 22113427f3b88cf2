#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "iocner/config.hpp"
#include "iocner/error.hpp"
#include "iocner/model.hpp"
#include "iocner/trainer.hpp"

namespace iocner {

// Binary checkpoint, all integers and floats little-endian:
//   "IOCNERCK" | u32 version | label scheme | dimension block | config text |
//   token vocab | char vocab | feature config | tensor blocks | u32 crc32
// Strings are u64 length + bytes; tensors are name, u64 rows, u64 cols and
// column-major f64 values. The CRC covers every preceding byte.

inline constexpr char kCheckpointMagic[8] = {'I', 'O', 'C', 'N', 'E', 'R', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t count(std::uint64_t min_bytes_each) {
    const auto n = u64();
    if (min_bytes_each && n > (end_ - pos_) / min_bytes_each) throw CheckpointError("checkpoint: implausible count");
    return n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::uint64_t n) {
    if (n > end_ - pos_) throw CheckpointError("checkpoint: truncated data");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
  std::size_t end_;
};

inline std::uint32_t crc32_of(const std::string& buf, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32_z(::crc32_z(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(buf.data()), n));
}

}  // namespace detail

struct LoadedModel {
  Tagger model;
  TrainConfig config;
};

inline std::string serialize_model(const Tagger& model, const TrainConfig& config,
                                   std::uint32_t version = kCheckpointVersion) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(version);

  const auto& scheme = model.scheme();
  w.u32(static_cast<std::uint32_t>(scheme.num_types()));
  for (const auto& t : scheme.types()) {
    w.str(t.name);
    w.str(t.code);
  }
  const auto& d = model.dims();
  for (int v : {d.token_dim, d.char_dim, d.char_hidden, d.word_hidden, d.attention, d.ffn_hidden}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(d.use_features ? 1 : 0);
  w.str(format_train_config(config));

  w.u64(model.vocab().words().size());
  for (const auto& word : model.vocab().words()) w.str(word);
  w.u64(model.chars().chars().size());
  for (char32_t c : model.chars().chars()) w.u32(static_cast<std::uint32_t>(c));

  const auto& fc = model.feature_config();
  w.u64(fc.tld_set.size());
  for (const auto& t : fc.tld_set) w.str(t);
  w.u64(fc.malware_prefixes.size());
  for (const auto& p : fc.malware_prefixes) w.str(p);
  w.str(fc.malware_delimiters);

  w.u64(model.params().size());
  for (const auto& p : model.params()) {
    w.str(p.name);
    w.u64(static_cast<std::uint64_t>(p.value.rows()));
    w.u64(static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) w.f64(p.value.data()[k]);
  }
  w.u32(detail::crc32_of(w.bytes(), w.bytes().size()));
  return std::move(w.bytes());
}

inline LoadedModel deserialize_model(const std::string& buf) {
  constexpr std::size_t kHeader = sizeof kCheckpointMagic + 4;
  if (buf.size() < kHeader || std::memcmp(buf.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("checkpoint: bad magic (not a model file or corrupted)");
  }
  {
    detail::ByteReader hdr(buf, kHeader);
    for (std::size_t i = 0; i < sizeof kCheckpointMagic; ++i) hdr.u8();
    const auto version = hdr.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
  }
  if (buf.size() < kHeader + 4) throw CheckpointError("checkpoint: truncated data");
  const std::size_t body = buf.size() - 4;
  detail::ByteReader tail(buf, buf.size());
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[body + static_cast<std::size_t>(i)])) << (8 * i);
  if (stored != detail::crc32_of(buf, body)) throw CheckpointError("checkpoint: checksum mismatch (corrupt or truncated)");

  detail::ByteReader r(buf, body);
  for (std::size_t i = 0; i < kHeader; ++i) r.u8();

  const auto ntypes = r.u32();
  if (ntypes == 0 || ntypes > 4096) throw CheckpointError("checkpoint: implausible entity type count");
  std::vector<EntityType> types(ntypes);
  for (auto& t : types) {
    t.name = r.str();
    t.code = r.str();
  }
  ModelDims dims;
  dims.token_dim = static_cast<int>(r.u32());
  dims.char_dim = static_cast<int>(r.u32());
  dims.char_hidden = static_cast<int>(r.u32());
  dims.word_hidden = static_cast<int>(r.u32());
  dims.attention = static_cast<int>(r.u32());
  dims.ffn_hidden = static_cast<int>(r.u32());
  dims.use_features = r.u8() != 0;
  TrainConfig config;
  {
    std::istringstream in(r.str());
    parse_train_config(in, config, "<checkpoint config>");
  }
  config.dims = dims;

  std::vector<std::string> words(r.count(8));
  for (auto& w : words) w = r.str();
  std::vector<char32_t> chars(r.count(4));
  for (auto& c : chars) c = static_cast<char32_t>(r.u32());
  FeatureConfig fc;
  std::vector<std::string> tlds(r.count(8));
  for (auto& t : tlds) t = r.str();
  fc.set_tlds(tlds);
  fc.malware_prefixes.resize(r.count(8));
  for (auto& p : fc.malware_prefixes) p = r.str();
  fc.malware_delimiters = r.str();

  LoadedModel out{Tagger(LabelScheme(std::move(types)), dims, TokenVocab(std::move(words)),
                         CharVocab(std::move(chars)), std::move(fc), 0),
                  config};
  ParamStore& store = out.model.params();
  const auto n = r.count(24);
  if (n != store.size()) throw CheckpointError("checkpoint: tensor count does not match the model layout");
  for (std::size_t i = 0; i < n; ++i) {
    Param& p = store[i];
    const std::string name = r.str();
    const auto rows = r.u64(), cols = r.u64();
    if (name != p.name || rows != static_cast<std::uint64_t>(p.value.rows()) ||
        cols != static_cast<std::uint64_t>(p.value.cols())) {
      throw CheckpointError("checkpoint: tensor '" + name + "' does not match the model layout");
    }
    for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = r.f64();
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing data");
  return out;
}

inline void save_model(const Tagger& model, const TrainConfig& config, const std::string& path) {
  const std::string bytes = serialize_model(model, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing model file '" + path + "'");
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace iocner
