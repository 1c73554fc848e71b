#include "supmae/data/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "supmae/error.hpp"

namespace supmae::data {
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCategory::ingest, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      fail(ErrorCategory::ingest, what_ + ": truncated at byte offset " + std::to_string(pos_) +
                                      " (need " + std::to_string(n) + " more bytes, file has " +
                                      std::to_string(bytes_.size()) + ")");
    }
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32_be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::uint32_t u32_le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::uint64_t u64_le() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

void check_label(int label, const LoadOptions& opt, const std::string& where) {
  if (label < 0 || (opt.num_classes && label >= *opt.num_classes)) {
    fail(ErrorCategory::data, where + ": label " + std::to_string(label) + " out of range" +
                                  (opt.num_classes ? " [0," + std::to_string(*opt.num_classes) + ")"
                                                   : std::string()));
  }
}

int resolve_classes(const std::vector<LabeledImage>& samples, const LoadOptions& opt) {
  if (opt.num_classes) return *opt.num_classes;
  int mx = -1;
  for (const auto& s : samples) mx = std::max(mx, s.label);
  return mx + 1;
}

Dataset load_idx(const fs::path& path, const LoadOptions& opt) {
  fs::path images, labels;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      const auto name = e.path().filename().string();
      if (name.find("images") != std::string::npos) images = e.path();
      if (name.find("labels") != std::string::npos) labels = e.path();
    }
    if (images.empty() || labels.empty()) {
      fail(ErrorCategory::ingest, "no records: " + path.string() + " lacks an images/labels idx pair");
    }
  } else {
    images = path;
    auto name = path.filename().string();
    auto pos = name.find("images");
    if (pos == std::string::npos) fail(ErrorCategory::ingest, "cannot derive labels file from " + name);
    name.replace(pos, 6, "labels");
    if (auto p3 = name.find("idx3"); p3 != std::string::npos) name.replace(p3, 4, "idx1");
    labels = path.parent_path() / name;
  }

  const auto ib = read_bytes(images);
  ByteReader ir(ib, images.string());
  const std::uint32_t magic = ir.u32_be();
  const std::uint32_t ndims = magic & 0xFF;
  if ((magic >> 8) != 0x08 || (ndims != 3 && ndims != 4)) {
    fail(ErrorCategory::ingest, images.string() + ": bad idx image magic at byte offset 0");
  }
  const std::size_t n = ir.u32_be();
  const std::size_t h = ir.u32_be();
  const std::size_t w = ir.u32_be();
  const std::size_t c = ndims == 4 ? ir.u32_be() : 1;
  if (n == 0) fail(ErrorCategory::ingest, "no records in " + images.string());

  const auto lb = read_bytes(labels);
  ByteReader lr(lb, labels.string());
  const std::uint32_t lmagic = lr.u32_be();
  if (lmagic != 0x00000801) fail(ErrorCategory::ingest, labels.string() + ": bad idx label magic at byte offset 0");
  const std::size_t ln = lr.u32_be();
  if (ln != n) {
    fail(ErrorCategory::ingest, labels.string() + ": " + std::to_string(ln) + " labels for " +
                                    std::to_string(n) + " images (byte offset 4)");
  }

  Dataset ds;
  ds.samples.reserve(n);
  const std::size_t px = h * w * c;
  for (std::size_t i = 0; i < n; ++i) {
    ir.need(px);
    LabeledImage s{Image(h, w, c), 0};
    for (std::size_t j = 0; j < px; ++j) s.image.pixels[j] = static_cast<float>(ir.u8()) / 255.0f;
    s.label = lr.u8();
    check_label(s.label, opt, labels.string() + " record " + std::to_string(i));
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = resolve_classes(ds.samples, opt);
  return ds;
}

Image read_rtd(const fs::path& p) {
  const auto bytes = read_bytes(p);
  ByteReader r(bytes, p.string());
  r.need(4);
  if (std::memcmp(bytes.data(), "RTD1", 4) != 0) {
    fail(ErrorCategory::ingest, p.string() + ": bad magic at byte offset 0 (expected RTD1)");
  }
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint8_t dtype = r.u8();
  const std::uint8_t rank = r.u8();
  r.u8();
  r.u8();
  if (rank != 2 && rank != 3) {
    fail(ErrorCategory::ingest, p.string() + ": rank " + std::to_string(rank) +
                                    " at byte offset 5; images need rank 2 or 3");
  }
  std::size_t ext[3] = {1, 1, 1};
  for (std::size_t i = 0; i < rank; ++i) ext[i] = r.u32_le();
  Image img(ext[0], ext[1], ext[2]);
  if (img.pixels.empty()) fail(ErrorCategory::ingest, p.string() + ": zero extent");
  for (auto& v : img.pixels) {
    const std::size_t at = r.pos();
    double x = 0;
    switch (dtype) {
      case kRtdU8: x = r.u8() / 255.0; break;
      case kRtdF32: {
        x = std::bit_cast<float>(r.u32_le());
        break;
      }
      case kRtdF64: x = std::bit_cast<double>(r.u64_le()); break;
      default:
        fail(ErrorCategory::ingest, p.string() + ": unknown dtype code " + std::to_string(dtype) +
                                        " at byte offset 4");
    }
    if (!(x >= 0.0 && x <= 1.0)) {
      fail(ErrorCategory::ingest, p.string() + ": pixel outside [0,1] at byte offset " + std::to_string(at));
    }
    v = static_cast<float>(x);
  }
  if (r.remaining() != 0) {
    fail(ErrorCategory::ingest, p.string() + ": " + std::to_string(r.remaining()) +
                                    " trailing bytes at byte offset " + std::to_string(r.pos()));
  }
  return img;
}

Dataset load_rtd_dir(const fs::path& dir, const LoadOptions& opt) {
  if (!fs::is_directory(dir)) fail(ErrorCategory::ingest, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".rtd") files.push_back(e.path());
  if (files.empty()) fail(ErrorCategory::ingest, "no records in " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  std::vector<std::optional<int>> labels(files.size());
  std::ifstream lf(dir / "labels.tsv");
  if (!lf) fail(ErrorCategory::ingest, (dir / "labels.tsv").string() + " missing");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lf, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long idx = -1, lab = -1;
    if (!(ls >> idx >> lab)) {
      fail(ErrorCategory::ingest, "labels.tsv line " + std::to_string(lineno) + ": expected <index>\\t<label>");
    }
    if (idx < 0 || static_cast<std::size_t>(idx) >= files.size()) {
      fail(ErrorCategory::ingest, "labels.tsv line " + std::to_string(lineno) + ": index " +
                                      std::to_string(idx) + " has no sample file");
    }
    labels[idx] = static_cast<int>(lab);
  }

  Dataset ds;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!labels[i]) fail(ErrorCategory::ingest, "labels.tsv has no label for index " + std::to_string(i));
    check_label(*labels[i], opt, files[i].string());
    ds.samples.push_back({read_rtd(files[i]), *labels[i]});
    if (ds.samples.back().image.height != ds.samples.front().image.height ||
        ds.samples.back().image.width != ds.samples.front().image.width ||
        ds.samples.back().image.channels != ds.samples.front().image.channels) {
      fail(ErrorCategory::ingest, files[i].string() + ": geometry differs from first sample");
    }
  }
  ds.num_classes = resolve_classes(ds.samples, opt);
  return ds;
}

Dataset load_csv(const fs::path& path, const LoadOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::ingest, "cannot open " + path.string());
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) fail(ErrorCategory::ingest, "no records in " + path.string());
  offset += line.size() + 1;
  Dataset ds;
  std::size_t side = 0;
  const std::size_t c = std::max<std::size_t>(1, opt.csv_channels);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma) {
        fail(ErrorCategory::ingest, path.string() + ": malformed value at byte offset " +
                                        std::to_string(line_start + (p - line.data())));
      }
      vals.push_back(v);
      p = comma + 1;
    }
    if (vals.size() < 2) {
      fail(ErrorCategory::ingest, path.string() + ": row at byte offset " + std::to_string(line_start) + " has no pixels");
    }
    const std::size_t npx = vals.size() - 1;
    const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(npx / c))));
    if (s * s * c != npx) {
      fail(ErrorCategory::ingest, path.string() + ": row at byte offset " + std::to_string(line_start) +
                                      " holds " + std::to_string(npx) + " pixels, not channels*s*s");
    }
    if (side == 0) side = s;
    if (s != side) {
      fail(ErrorCategory::ingest, path.string() + ": row at byte offset " + std::to_string(line_start) +
                                      " changes image size");
    }
    const double lab = vals[0];
    if (lab != std::floor(lab)) {
      fail(ErrorCategory::data, path.string() + ": non-integer label on data row " + std::to_string(row));
    }
    LabeledImage li{Image(s, s, c), static_cast<int>(lab)};
    check_label(li.label, opt, path.string() + " data row " + std::to_string(row));
    for (std::size_t j = 0; j < npx; ++j) {
      if (vals[j + 1] < 0 || vals[j + 1] > 255) {
        fail(ErrorCategory::ingest, path.string() + ": pixel outside 0..255 in row at byte offset " +
                                        std::to_string(line_start));
      }
      li.image.pixels[j] = static_cast<float>(vals[j + 1] / 255.0);
    }
    ds.samples.push_back(std::move(li));
  }
  if (ds.samples.empty()) fail(ErrorCategory::ingest, "no records in " + path.string());
  ds.num_classes = resolve_classes(ds.samples, opt);
  return ds;
}

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_file(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCategory::io, "failed writing " + p.string());
}

}  // namespace

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(ds.samples.at(i));
  return out;
}

DatasetFormat parse_format(const std::string& name) {
  if (name == "idx-ubyte") return DatasetFormat::idx_ubyte;
  if (name == "raw-tensor-dir") return DatasetFormat::raw_tensor_dir;
  if (name == "csv-pixels") return DatasetFormat::csv_pixels;
  fail(ErrorCategory::config, "unknown dataset format '" + name +
                                  "' (expected idx-ubyte, raw-tensor-dir, csv-pixels)");
}

std::string format_name(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::idx_ubyte: return "idx-ubyte";
    case DatasetFormat::raw_tensor_dir: return "raw-tensor-dir";
    case DatasetFormat::csv_pixels: return "csv-pixels";
  }
  return "?";
}

Dataset load_dataset(const fs::path& path, DatasetFormat format, const LoadOptions& options) {
  if (!fs::exists(path)) fail(ErrorCategory::ingest, path.string() + " does not exist");
  switch (format) {
    case DatasetFormat::idx_ubyte: return load_idx(path, options);
    case DatasetFormat::raw_tensor_dir: return load_rtd_dir(path, options);
    case DatasetFormat::csv_pixels: return load_csv(path, options);
  }
  fail(ErrorCategory::usage, "unhandled dataset format");
}

void write_raw_tensor_dir(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream labels(dir / "labels.tsv");
  char name[32];
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& img = ds.samples[i].image;
    std::vector<std::uint8_t> bytes{'R', 'T', 'D', '1', kRtdU8, 3, 0, 0};
    put_u32_le(bytes, static_cast<std::uint32_t>(img.height));
    put_u32_le(bytes, static_cast<std::uint32_t>(img.width));
    put_u32_le(bytes, static_cast<std::uint32_t>(img.channels));
    for (auto v : img.pixels) bytes.push_back(to_byte(v));
    std::snprintf(name, sizeof name, "%06zu.rtd", i);
    write_file(dir / name, bytes);
    labels << i << '\t' << ds.samples[i].label << '\n';
  }
  if (!labels) fail(ErrorCategory::io, "failed writing labels.tsv in " + dir.string());
}

void write_idx_ubyte(const Dataset& ds, const fs::path& dir, const std::string& prefix) {
  if (ds.empty()) fail(ErrorCategory::usage, "write_idx_ubyte: empty dataset");
  const auto& first = ds.samples.front().image;
  if (first.channels != 1) fail(ErrorCategory::usage, "write_idx_ubyte: single-channel images only");
  fs::create_directories(dir);
  std::vector<std::uint8_t> img{0, 0, 0x08, 3};
  put_u32_be(img, static_cast<std::uint32_t>(ds.size()));
  put_u32_be(img, static_cast<std::uint32_t>(first.height));
  put_u32_be(img, static_cast<std::uint32_t>(first.width));
  std::vector<std::uint8_t> lab{0, 0, 0x08, 1};
  put_u32_be(lab, static_cast<std::uint32_t>(ds.size()));
  for (const auto& s : ds.samples) {
    for (auto v : s.image.pixels) img.push_back(to_byte(v));
    lab.push_back(static_cast<std::uint8_t>(s.label));
  }
  write_file(dir / (prefix + "-images-idx3-ubyte"), img);
  write_file(dir / (prefix + "-labels-idx1-ubyte"), lab);
}

}  // namespace supmae::data
