#pragma once

// Binary checkpoint container.
//
//   magic "RLIVCKPT" | u32 version | u64 seed | u32 n + n bytes header JSON
//   | u32 block count | blocks... | u64 FNV-1a checksum of all prior bytes
//
// block: u16 name length, name, u8 kind
//   kind 'F': u32 rows, u32 cols, rows*cols little-endian float32 (column-major)
//   kind 'B': u64 length, raw bytes
//
// All integers little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rliv/error.hpp"
#include "rliv/nn/tensor.hpp"
#include "rliv/rng.hpp"

namespace rliv::nn {

inline constexpr char kCheckpointMagic[8] = {'R', 'L', 'I', 'V', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlock {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;  // column-major
};

class Checkpoint {
 public:
  std::uint64_t seed = 0;
  nlohmann::json header = nlohmann::json::object();

  void put_tensor(const std::string& name, const Mat<float>& m) {
    TensorBlock b;
    b.rows = static_cast<std::uint32_t>(m.rows());
    b.cols = static_cast<std::uint32_t>(m.cols());
    b.data.assign(m.data(), m.data() + m.size());
    tensors_[name] = std::move(b);
    order_.push_back(name);
  }

  void put_bytes(const std::string& name, std::string bytes) {
    bytes_[name] = std::move(bytes);
    order_.push_back(name);
  }

  bool has(const std::string& name) const { return tensors_.contains(name) || bytes_.contains(name); }

  void get_tensor(const std::string& name, Mat<float>& out) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IntegrityError("checkpoint: missing tensor block '" + name + "'");
    const auto& b = it->second;
    if (out.rows() != static_cast<Eigen::Index>(b.rows) || out.cols() != static_cast<Eigen::Index>(b.cols))
      throw IntegrityError("checkpoint: tensor '" + name + "' has shape " + std::to_string(b.rows) + "x" +
                           std::to_string(b.cols) + ", expected " + std::to_string(out.rows()) + "x" +
                           std::to_string(out.cols()));
    std::memcpy(out.data(), b.data.data(), b.data.size() * sizeof(float));
  }

  const std::string& get_bytes(const std::string& name) const {
    auto it = bytes_.find(name);
    if (it == bytes_.end()) throw IntegrityError("checkpoint: missing block '" + name + "'");
    return it->second;
  }

  const std::vector<std::string>& block_names() const { return order_; }

  std::string encode() const {
    std::string out;
    out.append(kCheckpointMagic, 8);
    put_u32(out, kCheckpointVersion);
    put_u64(out, seed);
    const std::string h = header.dump();
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    put_u32(out, static_cast<std::uint32_t>(order_.size()));
    for (const auto& name : order_) {
      put_u16(out, static_cast<std::uint16_t>(name.size()));
      out += name;
      if (auto it = tensors_.find(name); it != tensors_.end()) {
        out.push_back('F');
        put_u32(out, it->second.rows);
        put_u32(out, it->second.cols);
        for (float f : it->second.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
      } else {
        const auto& b = bytes_.at(name);
        out.push_back('B');
        put_u64(out, b.size());
        out += b;
      }
    }
    put_u64(out, fnv1a(out));
    return out;
  }

  static Checkpoint decode(std::string_view in) {
    Reader r{in};
    if (in.size() < 8 + 4 + 8 || std::memcmp(in.data(), kCheckpointMagic, 8) != 0)
      throw IntegrityError("checkpoint: bad magic (not a checkpoint file)");
    if (in.size() < 8 + 8) throw IntegrityError("checkpoint: truncated");
    const std::uint64_t stored = read_u64_at(in, in.size() - 8);
    if (stored != fnv1a(in.substr(0, in.size() - 8)))
      throw IntegrityError("checkpoint: checksum mismatch (file corrupted)");
    r.pos = 8;
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
      throw ConfigError("checkpoint: format version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.seed = r.u64();
    const std::uint32_t hlen = r.u32();
    c.header = nlohmann::json::parse(r.take(hlen));
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint16_t nlen = r.u16();
      std::string name(r.take(nlen));
      const char kind = r.take(1)[0];
      if (kind == 'F') {
        TensorBlock b;
        b.rows = r.u32();
        b.cols = r.u32();
        const std::uint64_t n = static_cast<std::uint64_t>(b.rows) * b.cols;
        if (n * 4 > in.size()) throw IntegrityError("checkpoint: tensor block too large");
        b.data.resize(n);
        for (auto& f : b.data) f = std::bit_cast<float>(r.u32());
        c.tensors_[name] = std::move(b);
      } else if (kind == 'B') {
        const std::uint64_t len = r.u64();
        c.bytes_[name] = std::string(r.take(len));
      } else {
        throw IntegrityError("checkpoint: unknown block kind");
      }
      c.order_.push_back(std::move(name));
    }
    if (r.pos != in.size() - 8) throw IntegrityError("checkpoint: trailing bytes before checksum");
    return c;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open '" + path + "' for writing");
    const std::string bytes = encode();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("checkpoint: write failed for '" + path + "'");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode(bytes);
  }

 private:
  struct Reader {
    std::string_view in;
    std::size_t pos = 0;
    std::string_view take(std::uint64_t n) {
      if (n > in.size() - 8 - pos || pos + n > in.size() - 8) throw IntegrityError("checkpoint: truncated block");
      auto s = in.substr(pos, n);
      pos += n;
      return s;
    }
    std::uint16_t u16() { auto s = take(2); return static_cast<std::uint16_t>(le(s, 2)); }
    std::uint32_t u32() { auto s = take(4); return static_cast<std::uint32_t>(le(s, 4)); }
    std::uint64_t u64() { auto s = take(8); return le(s, 8); }
  };

  static std::uint64_t le(std::string_view s, int n) {
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  static std::uint64_t read_u64_at(std::string_view s, std::size_t at) { return le(s.substr(at, 8), 8); }
  static void put_u16(std::string& o, std::uint16_t v) { for (int i = 0; i < 2; ++i) o.push_back(static_cast<char>(v >> (8 * i))); }
  static void put_u32(std::string& o, std::uint32_t v) { for (int i = 0; i < 4; ++i) o.push_back(static_cast<char>(v >> (8 * i))); }
  static void put_u64(std::string& o, std::uint64_t v) { for (int i = 0; i < 8; ++i) o.push_back(static_cast<char>(v >> (8 * i))); }

  std::map<std::string, TensorBlock> tensors_;
  std::map<std::string, std::string> bytes_;
  std::vector<std::string> order_;
};

}  // namespace rliv::nn
