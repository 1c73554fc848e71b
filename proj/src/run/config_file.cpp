#include "supmae/run/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "supmae/error.hpp"

namespace supmae::run {
namespace {

struct Key {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool model = false;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorCategory::config, "key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad_value(key, s, "a number");
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad_value(key, s, "a nonnegative integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "true or false");
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) bad_value(key, s, "a comma-separated list of numbers");
  return out;
}

std::string fmt_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt_double(xs[i]);
  return out;
}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> t;
    auto sz = [&t](const std::string& name, auto ref, bool model = false) {
      t[name] = {[ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
                 [ref, name](RunConfig& c, const std::string& v) {
                   ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(parse_uint(name, v));
                 },
                 model};
    };
    auto dbl = [&t](const std::string& name, auto ref, bool model = false) {
      t[name] = {[ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
                 [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_double(name, v); }, model};
    };
    auto flag = [&t](const std::string& name, auto ref) {
      t[name] = {[ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                 [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_bool(name, v); }};
    };
    auto str = [&t](const std::string& name, auto ref) {
      t[name] = {[ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
                 [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
    };

    t["mode"] = {[](const RunConfig& c) { return train::mode_name(c.train.mode); },
                 [](RunConfig& c, const std::string& v) { c.train.mode = train::parse_mode(v); }};
    sz("seed", [](RunConfig& c) -> auto& { return c.train.seed; });

    sz("image_height", [](RunConfig& c) -> auto& { return c.model.image_h; }, true);
    sz("image_width", [](RunConfig& c) -> auto& { return c.model.image_w; }, true);
    sz("channels", [](RunConfig& c) -> auto& { return c.model.channels; }, true);
    sz("patch_size", [](RunConfig& c) -> auto& { return c.model.patch_size; }, true);
    sz("embed_dim", [](RunConfig& c) -> auto& { return c.model.embed_dim; }, true);
    sz("depth", [](RunConfig& c) -> auto& { return c.model.depth; }, true);
    sz("heads", [](RunConfig& c) -> auto& { return c.model.heads; }, true);
    sz("decoder_dim", [](RunConfig& c) -> auto& { return c.model.decoder_dim; }, true);
    sz("decoder_depth", [](RunConfig& c) -> auto& { return c.model.decoder_depth; }, true);
    sz("decoder_heads", [](RunConfig& c) -> auto& { return c.model.decoder_heads; }, true);
    sz("mlp_ratio", [](RunConfig& c) -> auto& { return c.model.mlp_ratio; }, true);
    sz("mlp_layers", [](RunConfig& c) -> auto& { return c.model.head_layers; }, true);
    sz("head_hidden", [](RunConfig& c) -> auto& { return c.model.head_hidden; }, true);
    sz("num_classes", [](RunConfig& c) -> auto& { return c.model.num_classes; }, true);
    dbl("pixel_mean", [](RunConfig& c) -> auto& { return c.model.pixel_mean; }, true);
    dbl("pixel_std", [](RunConfig& c) -> auto& { return c.model.pixel_std; }, true);
    t["pooling_mode"] = {[](const RunConfig& c) { return model::pooling_name(c.model.pooling); },
                         [](RunConfig& c, const std::string& v) { c.model.pooling = model::parse_pooling(v); }, true};

    sz("epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    sz("warmup_epochs", [](RunConfig& c) -> auto& { return c.train.warmup_epochs; });
    sz("batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    sz("accum_steps", [](RunConfig& c) -> auto& { return c.train.accum_steps; });
    dbl("base_lr", [](RunConfig& c) -> auto& { return c.train.base_lr; });
    dbl("min_lr", [](RunConfig& c) -> auto& { return c.train.min_lr; });
    dbl("beta1", [](RunConfig& c) -> auto& { return c.train.adamw.beta1; });
    dbl("beta2", [](RunConfig& c) -> auto& { return c.train.adamw.beta2; });
    dbl("adam_eps", [](RunConfig& c) -> auto& { return c.train.adamw.eps; });
    dbl("weight_decay", [](RunConfig& c) -> auto& { return c.train.adamw.weight_decay; });
    dbl("mask_ratio", [](RunConfig& c) -> auto& { return c.train.mask_ratio; });
    dbl("lambda_rec", [](RunConfig& c) -> auto& { return c.train.loss.lambda_rec; });
    dbl("lambda_cls", [](RunConfig& c) -> auto& { return c.train.loss.lambda_cls; });
    dbl("tau", [](RunConfig& c) -> auto& { return c.train.loss.tau; });
    flag("norm_pix", [](RunConfig& c) -> auto& { return c.train.norm_pix; });
    dbl("label_smoothing", [](RunConfig& c) -> auto& { return c.train.label_smoothing; });
    dbl("layerwise_decay", [](RunConfig& c) -> auto& { return c.train.layerwise_decay; });
    flag("random_resized_crop", [](RunConfig& c) -> auto& { return c.train.augment.random_resized_crop; });
    flag("horizontal_flip", [](RunConfig& c) -> auto& { return c.train.augment.horizontal_flip; });
    flag("color_jitter", [](RunConfig& c) -> auto& { return c.train.augment.color_jitter; });
    dbl("crop_scale_min", [](RunConfig& c) -> auto& { return c.train.augment.crop.scale_min; });
    dbl("crop_scale_max", [](RunConfig& c) -> auto& { return c.train.augment.crop.scale_max; });

    str("data_format", [](RunConfig& c) -> auto& { return c.data.format; });
    str("train_path", [](RunConfig& c) -> auto& { return c.data.train_path; });
    str("test_path", [](RunConfig& c) -> auto& { return c.data.test_path; });
    sz("csv_channels", [](RunConfig& c) -> auto& { return c.data.csv_channels; });
    sz("toy_train", [](RunConfig& c) -> auto& { return c.data.toy.train; });
    sz("toy_test", [](RunConfig& c) -> auto& { return c.data.toy.test; });
    sz("toy_seed", [](RunConfig& c) -> auto& { return c.data.toy.seed; });
    dbl("toy_background", [](RunConfig& c) -> auto& { return c.data.toy.background; });
    dbl("toy_noise", [](RunConfig& c) -> auto& { return c.data.toy.noise; });

    sz("probe_epochs", [](RunConfig& c) -> auto& { return c.probe_epochs; });
    dbl("probe_lr", [](RunConfig& c) -> auto& { return c.probe_lr; });
    sz("finetune_epochs", [](RunConfig& c) -> auto& { return c.finetune_epochs; });
    dbl("finetune_lr", [](RunConfig& c) -> auto& { return c.finetune_lr; });
    sz("log_every", [](RunConfig& c) -> auto& { return c.log_every; });
    flag("log_timing", [](RunConfig& c) -> auto& { return c.log_timing; });
    sz("save_every", [](RunConfig& c) -> auto& { return c.save_every; });
    sz("eval_batch_size", [](RunConfig& c) -> auto& { return c.eval_batch_size; });
    str("eval_head", [](RunConfig& c) -> auto& { return c.eval_head; });
    dbl("partial_keep", [](RunConfig& c) -> auto& { return c.partial_keep; });
    sz("partial_seeds", [](RunConfig& c) -> auto& { return c.partial_seeds; });

    sz("fewshot_shots", [](RunConfig& c) -> auto& { return c.fewshot.shots; });
    t["fewshot_mode"] = {[](const RunConfig& c) { return train::mode_name(c.fewshot.mode); },
                         [](RunConfig& c, const std::string& v) { c.fewshot.mode = train::parse_mode(v); }};
    t["fewshot_lrs"] = {[](const RunConfig& c) { return fmt_list(c.fewshot.lrs); },
                        [](RunConfig& c, const std::string& v) { c.fewshot.lrs = parse_list("fewshot_lrs", v); }};
    t["fewshot_wds"] = {[](const RunConfig& c) { return fmt_list(c.fewshot.wds); },
                        [](RunConfig& c, const std::string& v) { c.fewshot.wds = parse_list("fewshot_wds", v); }};
    sz("fewshot_seeds", [](RunConfig& c) -> auto& { return c.fewshot.seeds; });
    sz("fewshot_search_epochs", [](RunConfig& c) -> auto& { return c.fewshot.search_epochs; });
    sz("fewshot_final_epochs", [](RunConfig& c) -> auto& { return c.fewshot.final_epochs; });

    str("ablate_axis", [](RunConfig& c) -> auto& { return c.ablate_axis; });
    str("ablate_values", [](RunConfig& c) -> auto& { return c.ablate_values; });
    sz("ablate_seeds", [](RunConfig& c) -> auto& { return c.ablate_seeds; });
    return t;
  }();
  return table;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value, std::string_view origin) {
  const auto& t = keys();
  auto it = t.find(key);
  if (it == t.end()) fail(ErrorCategory::config, std::string(origin) + ": unknown key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const Error& e) {
    const std::string msg = e.what();
    fail(ErrorCategory::config, std::string(origin) + ": " +
                                    (msg.rfind("key '", 0) == 0 ? msg : "key '" + key + "': " + msg));
  }
}

}  // namespace

RunConfig default_config(train::Mode mode) {
  RunConfig c;
  c.train = train::defaults_for(mode);
  return c;
}

void apply_text(RunConfig& cfg, std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string s = trim(line);
    if (s.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = s.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (eq == std::string::npos) fail(ErrorCategory::config, where + ": expected 'key = value', got '" + s + "'");
    const std::string key = trim(std::string_view(s).substr(0, eq));
    const std::string value = trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) fail(ErrorCategory::config, where + ": missing key");
    set_key(cfg, key, value, where);
    if (end == text.size()) break;
  }
}

void apply_assignment(RunConfig& cfg, std::string_view assignment, std::string_view origin) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    fail(ErrorCategory::config, std::string(origin) + ": expected key=value, got '" + std::string(assignment) + "'");
  }
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), origin);
}

std::string canonical_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(cfg) + "\n";
  return out;
}

std::uint64_t fingerprint(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

void validate(const RunConfig& cfg) {
  cfg.model.validate();
  cfg.train.validate(cfg.model);
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCategory::config, what);
  };
  const auto& f = cfg.data.format;
  need(f == "toy" || f == "idx-ubyte" || f == "raw-tensor-dir" || f == "csv-pixels",
       "data_format must be toy, idx-ubyte, raw-tensor-dir or csv-pixels");
  need(f == "toy" || !cfg.data.train_path.empty(), "train_path is required for data_format " + f);
  need(cfg.data.toy.train >= 1, "toy_train must be >= 1");
  need(cfg.data.toy.background >= 0 && cfg.data.toy.noise >= 0, "toy_background and toy_noise must be >= 0");
  need(cfg.eval_batch_size >= 1, "eval_batch_size must be >= 1");
  need(cfg.eval_head == "auto" || cfg.eval_head == "pretrain" || cfg.eval_head == "task" || cfg.eval_head == "probe",
       "eval_head must be auto, pretrain, task or probe");
  need(cfg.partial_keep > 0 && cfg.partial_keep <= 1, "partial_keep must be in (0, 1]");
  need(cfg.partial_seeds >= 1, "partial_seeds must be >= 1");
  need(cfg.fewshot.shots >= 1, "fewshot_shots must be >= 1");
  need(cfg.fewshot.mode != train::Mode::pretrain, "fewshot_mode must be linprobe or finetune");
  need(cfg.fewshot.seeds >= 1, "fewshot_seeds must be >= 1");
  need(cfg.fewshot.search_epochs >= 1 && cfg.fewshot.final_epochs >= 1, "few-shot epochs must be >= 1");
  for (double x : cfg.fewshot.lrs) need(x > 0, "fewshot_lrs entries must be positive");
  for (double x : cfg.fewshot.wds) need(x >= 0, "fewshot_wds entries must be nonnegative");
  need(cfg.probe_epochs >= 1 && cfg.finetune_epochs >= 1, "probe_epochs and finetune_epochs must be >= 1");
  need(cfg.probe_lr >= 0 && cfg.finetune_lr >= 0, "probe_lr and finetune_lr must be nonnegative");
  need(cfg.ablate_seeds >= 1, "ablate_seeds must be >= 1");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, key] : keys()) out.push_back(name);
  return out;
}

bool is_model_key(const std::string& key) {
  auto it = keys().find(key);
  return it != keys().end() && it->second.model;
}

std::string model_section(const std::string& canonical) {
  std::string out;
  std::stringstream ss(canonical);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (is_model_key(trim(std::string_view(line).substr(0, eq)))) out += line + "\n";
  }
  return out;
}

}  // namespace supmae::run
