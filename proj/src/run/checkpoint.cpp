#include "supmae/run/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "supmae/error.hpp"

namespace supmae::run {
namespace {

constexpr char kMagic[4] = {'S', 'M', 'A', 'E'};

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? kDtypeF32 : kDtypeF64;
}

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename T>
  void payload(const diff::Tensor<T>& t) {
    for (T x : t.data()) {
      if constexpr (std::is_same_v<T, float>) {
        u32(std::bit_cast<std::uint32_t>(x));
      } else {
        u64(std::bit_cast<std::uint64_t>(x));
      }
    }
  }
  template <typename T>
  void shape_and_payload(const diff::Tensor<T>& t) {
    u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) u32(static_cast<std::uint32_t>(e));
    payload(t);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t k, const char* what) {
    if (k > n_ - pos_) {
      fail(ErrorCategory::corruption, std::string("checkpoint truncated reading ") + what + " at byte " +
                                          std::to_string(pos_) + " (" + std::to_string(n_ - pos_) +
                                          " bytes left, need " + std::to_string(k) + ")");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return p_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t len = u32(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  diff::Shape shape(const char* what) {
    const std::size_t start = pos_;
    const std::uint8_t rank = u8(what);
    diff::Shape s(rank);
    std::size_t numel = 1;
    for (auto& e : s) {
      e = u32(what);
      if (e == 0) fail(ErrorCategory::corruption, std::string("zero extent in ") + what + " at byte " + std::to_string(start));
      numel *= e;
      if (numel > n_) {
        fail(ErrorCategory::corruption, std::string("implausible extents in ") + what + " at byte " + std::to_string(start));
      }
    }
    return s;
  }
  template <typename T>
  diff::Tensor<T> payload(diff::Shape s, const char* what) {
    const std::size_t numel = diff::shape_numel(s);
    need(numel * sizeof(T), what);
    std::vector<T> v(numel);
    for (auto& x : v) {
      if constexpr (std::is_same_v<T, float>) {
        x = std::bit_cast<float>(u32(what));
      } else {
        x = std::bit_cast<double>(u64(what));
      }
    }
    return diff::Tensor<T>(std::move(s), std::move(v));
  }
  void skip(std::size_t k, const char* what) {
    need(k, what);
    pos_ += k;
  }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

// Validates magic, checksum and version; returns a reader positioned after
// the version field, bounded to exclude the trailing checksum.
Reader open_checked(const std::vector<std::uint8_t>& bytes, std::uint32_t* version, std::uint32_t* crc) {
  if (bytes.size() < 12) {
    fail(ErrorCategory::corruption, "checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) {
    fail(ErrorCategory::corruption, "bad checkpoint magic at byte 0");
  }
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.data() + body, 4);
  const std::uint32_t stored = tail.u32("checksum");
  const std::uint32_t actual = crc32_of(bytes.data(), body);
  if (stored != actual) {
    fail(ErrorCategory::corruption, "checkpoint checksum mismatch (stored " + std::to_string(stored) +
                                        ", computed " + std::to_string(actual) + " over " +
                                        std::to_string(body) + " bytes)");
  }
  Reader r(bytes.data(), body);
  r.skip(4, "magic");
  *version = r.u32("version");
  if (*version != kCheckpointVersion) {
    fail(ErrorCategory::migration, "checkpoint version " + std::to_string(*version) + " has no migration to version " +
                                       std::to_string(kCheckpointVersion));
  }
  *crc = stored;
  return r;
}

model::ParamKind parse_kind(std::uint8_t k, std::size_t offset) {
  if (k > static_cast<std::uint8_t>(model::ParamKind::buffer)) {
    fail(ErrorCategory::corruption, "unknown parameter kind " + std::to_string(k) + " at byte " + std::to_string(offset));
  }
  return static_cast<model::ParamKind>(k);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open checkpoint '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<T>& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(ckpt.config_text);
  const auto& entries = ckpt.params.entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u8(dtype_code<T>());
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.shape_and_payload(e.value);
  }
  w.u8(ckpt.opt ? 1 : 0);
  if (ckpt.opt) {
    w.u64(ckpt.opt->step);
    w.u32(static_cast<std::uint32_t>(ckpt.opt->moments.size()));
    for (const auto& [name, mom] : ckpt.opt->moments) {
      w.str(name);
      w.u8(dtype_code<T>());
      w.shape_and_payload(mom.m);
      w.shape_and_payload(mom.v);
    }
  }
  w.u64(ckpt.rng_seed);
  w.u64(ckpt.epoch);
  w.u64(ckpt.step);
  auto& buf = w.buffer();
  w.u32(crc32_of(buf.data(), buf.size()));
  return std::move(buf);
}

template <typename T>
Checkpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t version = 0, crc = 0;
  Reader r = open_checked(bytes, &version, &crc);
  Checkpoint<T> c;
  c.config_text = r.str("config text");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("tensor name");
    const std::size_t at = r.offset();
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != dtype_code<T>()) {
      if (dtype != kDtypeF32 && dtype != kDtypeF64) {
        fail(ErrorCategory::corruption, "unknown dtype code " + std::to_string(dtype) + " at byte " + std::to_string(at));
      }
      fail(ErrorCategory::load, "tensor '" + name + "' is stored as " + (dtype == kDtypeF32 ? "f32" : "f64") +
                                    "; load with the matching precision");
    }
    const auto kind = parse_kind(r.u8("kind"), at + 1);
    auto shape = r.shape("tensor extents");
    if (c.params.contains(name)) {
      fail(ErrorCategory::corruption, "duplicate tensor '" + name + "' at byte " + std::to_string(at));
    }
    c.params.add(name, r.template payload<T>(std::move(shape), "tensor payload"), kind);
  }
  if (r.u8("optimizer flag")) {
    train::OptState<T> opt;
    opt.step = r.u64("optimizer step");
    const std::uint32_t n = r.u32("moment count");
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.str("moment name");
      const std::size_t at = r.offset();
      if (r.u8("dtype") != dtype_code<T>()) {
        fail(ErrorCategory::load, "optimizer moments of '" + name + "' have a different precision (byte " +
                                      std::to_string(at) + ")");
      }
      auto ms = r.shape("moment extents");
      auto m = r.template payload<T>(std::move(ms), "moment payload");
      auto vs = r.shape("moment extents");
      auto v = r.template payload<T>(std::move(vs), "moment payload");
      opt.moments.emplace(std::move(name), typename train::OptState<T>::Moments{std::move(m), std::move(v)});
    }
    c.opt = std::move(opt);
  }
  c.rng_seed = r.u64("rng seed");
  c.epoch = r.u64("epoch");
  c.step = r.u64("step");
  if (r.offset() != bytes.size() - 4) {
    fail(ErrorCategory::corruption, "unexpected trailing data at byte " + std::to_string(r.offset()));
  }
  return c;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write checkpoint '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorCategory::io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCategory::io, "cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_file(path));
}

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  CheckpointInfo info;
  Reader r = open_checked(bytes, &info.version, &info.crc);
  info.config_text = r.str("config text");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointInfo::TensorInfo t;
    t.name = r.str("tensor name");
    const std::size_t at = r.offset();
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != kDtypeF32 && dtype != kDtypeF64) {
      fail(ErrorCategory::corruption, "unknown dtype code " + std::to_string(dtype) + " at byte " + std::to_string(at));
    }
    info.dtype = dtype;
    t.kind = static_cast<std::uint8_t>(parse_kind(r.u8("kind"), at + 1));
    t.shape = r.shape("tensor extents");
    r.skip(diff::shape_numel(t.shape) * (dtype == kDtypeF32 ? 4 : 8), "tensor payload");
    info.tensors.push_back(std::move(t));
  }
  info.has_optimizer = r.u8("optimizer flag") != 0;
  if (info.has_optimizer) {
    r.u64("optimizer step");
    const std::uint32_t n = r.u32("moment count");
    for (std::uint32_t i = 0; i < n; ++i) {
      r.str("moment name");
      const std::uint8_t dtype = r.u8("dtype");
      const std::size_t width = dtype == kDtypeF32 ? 4 : 8;
      for (int k = 0; k < 2; ++k) r.skip(diff::shape_numel(r.shape("moment extents")) * width, "moment payload");
    }
  }
  info.rng_seed = r.u64("rng seed");
  info.epoch = r.u64("epoch");
  info.step = r.u64("step");
  return info;
}

template <typename T>
std::vector<std::string> restore_params(model::ModelParams<T>& dst, const model::ModelParams<T>& src, LoadMode mode) {
  std::vector<std::string> copied;
  for (const auto& e : dst.entries()) {
    if (!src.contains(e.name)) {
      if (mode == LoadMode::full) fail(ErrorCategory::load, "checkpoint lacks tensor '" + e.name + "'");
      continue;
    }
    const auto& t = src.get(e.name);
    if (t.shape() != e.value.shape()) {
      fail(ErrorCategory::load, "tensor '" + e.name + "' has shape " + diff::shape_str(t.shape()) + ", model expects " +
                                    diff::shape_str(e.value.shape()));
    }
    copied.push_back(e.name);
  }
  for (const auto& name : copied) dst.get_mut(name) = src.get(name);
  return copied;
}

#define SUPMAE_INSTANTIATE_CKPT(T)                                                                   \
  template std::vector<std::uint8_t> encode_checkpoint<T>(const Checkpoint<T>&);                      \
  template Checkpoint<T> decode_checkpoint<T>(const std::vector<std::uint8_t>&);                      \
  template void save_checkpoint<T>(const std::filesystem::path&, const Checkpoint<T>&);               \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);                            \
  template std::vector<std::string> restore_params<T>(model::ModelParams<T>&, const model::ModelParams<T>&, \
                                                      LoadMode);

SUPMAE_INSTANTIATE_CKPT(float)
SUPMAE_INSTANTIATE_CKPT(double)

}  // namespace supmae::run
