#include "supmae/run/runlog.hpp"

#include <chrono>
#include <thread>

#include <json.hpp>

#include "supmae/error.hpp"

namespace supmae::run {
namespace {

using nlohmann::ordered_json;

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> opt_from(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string format_record(const RunLogRecord& r) {
  ordered_json j;
  j["timestamp"] = opt(r.timestamp);
  j["kind"] = r.kind;
  j["mode"] = r.mode;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["loss_joint"] = r.loss_joint;
  j["loss_rec"] = r.loss_rec;
  j["loss_cls"] = r.loss_cls;
  j["accuracy"] = opt(r.accuracy);
  j["samples_per_sec"] = opt(r.samples_per_sec);
  j["fingerprint"] = r.fingerprint;
  return j.dump();
}

RunLogRecord parse_record(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    fail(ErrorCategory::data, std::string("run-log line is not valid JSON: ") + e.what());
  }
  try {
    RunLogRecord r;
    r.timestamp = opt_from(j, "timestamp");
    r.kind = j.at("kind").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.epoch = j.at("epoch").get<std::uint64_t>();
    r.step = j.at("step").get<std::uint64_t>();
    r.lr = j.at("lr").get<double>();
    r.loss_joint = j.at("loss_joint").get<double>();
    r.loss_rec = j.at("loss_rec").get<double>();
    r.loss_cls = j.at("loss_cls").get<double>();
    r.accuracy = opt_from(j, "accuracy");
    r.samples_per_sec = opt_from(j, "samples_per_sec");
    r.fingerprint = j.at("fingerprint").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::data, std::string("run-log record: ") + e.what());
  }
}

std::string config_record(const std::string& canonical_text, const std::string& fingerprint) {
  ordered_json j;
  j["kind"] = "config";
  j["fingerprint"] = fingerprint;
  j["config"] = canonical_text;
  return j.dump();
}

RunLog::RunLog(const std::filesystem::path& path, bool timing) : path_(path), timing_(timing) {
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) fail(ErrorCategory::io, "cannot open run log '" + path.string() + "'");
}

void RunLog::write(RunLogRecord r) {
  if (timing_) {
    r.timestamp = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  } else {
    r.timestamp.reset();
    r.samples_per_sec.reset();
  }
  emit(format_record(r));
}

void RunLog::write_raw(const std::string& json_line) { emit(json_line); }

void RunLog::flush() {
  std::lock_guard lock(mu_);
  out_.flush();
}

void RunLog::emit(const std::string& line) {
  const std::string full = line + "\n";
  std::lock_guard lock(mu_);
  for (std::size_t attempt = 0;; ++attempt) {
    bool ok;
    if (hook_) {
      ok = hook_(full);
    } else {
      out_.write(full.data(), static_cast<std::streamsize>(full.size()));
      out_.flush();
      ok = static_cast<bool>(out_);
      if (!ok) out_.clear();
    }
    if (ok) return;
    if (attempt >= delays_.size()) {
      fail(ErrorCategory::io, "run log '" + path_.string() + "': write failed after " +
                                  std::to_string(delays_.size()) + " retries");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delays_[attempt]));
  }
}

}  // namespace supmae::run
