#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

namespace supmae::run {

struct RunLogRecord {
  // Seconds since the epoch; absent unless timing is enabled.
  std::optional<double> timestamp;
  std::string mode;
  std::string kind = "epoch";  // "epoch", "batch" or "eval"
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0;
  double loss_joint = 0;
  double loss_rec = 0;
  double loss_cls = 0;
  std::optional<double> accuracy;
  std::optional<double> samples_per_sec;
  std::string fingerprint;
};

// One JSON object per line, field order fixed.
std::string format_record(const RunLogRecord& r);
RunLogRecord parse_record(const std::string& line);

// Append-only, line-atomic sink shared by training and evaluation threads.
// A failed write is retried with backoff; after the last retry the sink
// throws an io error.
class RunLog {
 public:
  using WriteHook = std::function<bool(const std::string& line)>;

  explicit RunLog(const std::filesystem::path& path, bool timing = false);

  void write(RunLogRecord r);
  // Free-form object line (the config echo), written verbatim.
  void write_raw(const std::string& json_line);
  void flush();

  // Test seam: replaces the file write; return false to simulate a failure.
  void set_write_hook(WriteHook hook) { hook_ = std::move(hook); }
  void set_retry_delays_ms(std::initializer_list<int> delays) { delays_.assign(delays); }

 private:
  void emit(const std::string& line);

  std::mutex mu_;
  std::ofstream out_;
  std::filesystem::path path_;
  bool timing_;
  WriteHook hook_;
  std::vector<int> delays_{10, 100, 1000};
};

// Config echo line embedding the fingerprint.
std::string config_record(const std::string& canonical_text, const std::string& fingerprint);

}  // namespace supmae::run
