#include "hnav/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hnav/errors.hpp"

namespace hnav {

namespace {

constexpr char kMagic[4] = {'H', 'N', 'A', 'V'};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw CheckpointError(CheckpointErrorKind::TruncatedFile,
                            "checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = std::uint32_t(std::uint8_t(buf[pos])) |
                      std::uint32_t(std::uint8_t(buf[pos + 1])) << 8 |
                      std::uint32_t(std::uint8_t(buf[pos + 2])) << 16 |
                      std::uint32_t(std::uint8_t(buf[pos + 3])) << 24;
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, std::uint32_t(ckpt.metadata.size()));
  out.append(ckpt.metadata);
  put_u32(out, std::uint32_t(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_u32(out, std::uint32_t(t.name.size()));
    out.append(t.name);
    put_u32(out, std::uint32_t(t.shape.size()));
    std::size_t expect = 1;
    for (int d : t.shape) {
      put_u32(out, std::uint32_t(d));
      expect *= std::size_t(d);
    }
    if (expect != t.data.size())
      throw ShapeMismatch("checkpoint tensor " + t.name +
                          ": shape/data size mismatch");
    for (float v : t.data) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();

  Reader r{buf};
  std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::BadMagic,
                          "bad checkpoint magic");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                          "unsupported checkpoint version " +
                              std::to_string(version));
  Checkpoint ckpt;
  std::uint32_t meta_len = r.u32();
  ckpt.metadata = r.bytes(meta_len);
  std::uint32_t count = r.u32();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Tensor t;
    std::uint32_t name_len = r.u32();
    t.name = r.bytes(name_len);
    std::uint32_t rank = r.u32();
    std::size_t sz = 1;
    for (std::uint32_t j = 0; j < rank; ++j) {
      std::uint32_t d = r.u32();
      t.shape.push_back(int(d));
      sz *= d;
    }
    t.data.resize(sz);
    r.need(sz * 4);
    for (std::size_t j = 0; j < sz; ++j) t.data[j] = r.f32();
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void append_params(Checkpoint& ckpt, const ParamStore& params,
                   const std::string& prefix) {
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const auto& e = params.entry(int(i));
    Checkpoint::Tensor t;
    t.name = prefix + e.name;
    t.shape = e.shape;
    auto v = params.view(int(i));
    t.data.assign(v.begin(), v.end());
    ckpt.tensors.push_back(std::move(t));
  }
}

void extract_params(const Checkpoint& ckpt, ParamStore& params,
                    const std::string& prefix) {
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const auto& e = params.entry(int(i));
    const Checkpoint::Tensor* found = nullptr;
    for (const auto& t : ckpt.tensors)
      if (t.name == prefix + e.name) {
        found = &t;
        break;
      }
    if (!found)
      throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                            "checkpoint missing tensor " + prefix + e.name);
    if (found->shape != e.shape)
      throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                            "checkpoint tensor " + prefix + e.name +
                                " has a different shape");
    auto dst = params.view(int(i));
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = found->data[j];
  }
}

std::string metadata_value(const std::string& metadata,
                           const std::string& key) {
  std::istringstream in(metadata);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto strip = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      return s.substr(a, b - a + 1);
    };
    if (strip(line.substr(0, eq)) == key) return strip(line.substr(eq + 1));
  }
  return "";
}

}  // namespace hnav
