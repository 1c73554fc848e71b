#include "supmae/run/dispatch.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>

#include "supmae/data/io.hpp"
#include "supmae/data/toyset.hpp"
#include "supmae/diff/parallel.hpp"
#include "supmae/error.hpp"
#include "supmae/eval/ablation.hpp"
#include "supmae/eval/evaluate.hpp"
#include "supmae/eval/fewshot.hpp"
#include "supmae/eval/report.hpp"
#include "supmae/log.hpp"
#include "supmae/run/checkpoint.hpp"
#include "supmae/run/config_file.hpp"
#include "supmae/run/runlog.hpp"
#include "supmae/train/loss_check.hpp"
#include "supmae/train/trainer.hpp"

namespace supmae::run {
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string command;
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir;  // empty: training writes to ".", eval commands write no report
  std::string ckpt;
  std::string precision = "f32";
  std::vector<std::string> args;  // key=value overrides (inspect: the path)
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot read '" + p.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorCategory::io, "cannot write '" + p.string() + "'");
}

train::Mode mode_of(const std::string& cmd) {
  if (cmd == "finetune") return train::Mode::finetune;
  if (cmd == "linprobe") return train::Mode::linprobe;
  return train::Mode::pretrain;
}

// defaults < checkpoint (model keys; everything when resuming) < file < CLI.
RunConfig build_config(const Common& c, const std::string* ckpt_config, bool resume) {
  const auto mode = mode_of(c.command);
  RunConfig cfg = default_config(mode);
  if (ckpt_config) apply_text(cfg, resume ? *ckpt_config : model_section(*ckpt_config), "checkpoint");
  if (!c.config_path.empty()) apply_text(cfg, read_text(c.config_path), c.config_path);
  for (const auto& a : c.args) apply_assignment(cfg, a, "command line");
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.train.mode = mode;
  validate(cfg);
  return cfg;
}

struct Data {
  data::Dataset train;
  data::Dataset test;
};

Data load_data(const RunConfig& cfg) {
  Data d;
  if (cfg.data.format == "toy") {
    if (cfg.model.image_h != cfg.model.image_w || cfg.model.channels != 1) {
      fail(ErrorCategory::config, "toy data is square and single-channel; got " + std::to_string(cfg.model.image_h) +
                                      "x" + std::to_string(cfg.model.image_w) + "x" +
                                      std::to_string(cfg.model.channels));
    }
    auto spec = cfg.data.toy;
    spec.size = cfg.model.image_h;
    auto toy = data::make_toy_dataset(spec);
    d.train = std::move(toy.train);
    d.test = std::move(toy.test);
  } else {
    data::LoadOptions opt;
    opt.num_classes = static_cast<int>(cfg.model.num_classes);
    opt.csv_channels = cfg.data.csv_channels;
    const auto fmt = data::parse_format(cfg.data.format);
    d.train = data::load_dataset(cfg.data.train_path, fmt, opt);
    if (!cfg.data.test_path.empty()) d.test = data::load_dataset(cfg.data.test_path, fmt, opt);
  }
  if (d.train.num_classes > static_cast<int>(cfg.model.num_classes)) {
    fail(ErrorCategory::config, "dataset has " + std::to_string(d.train.num_classes) + " classes, num_classes is " +
                                    std::to_string(cfg.model.num_classes));
  }
  d.train.num_classes = d.test.num_classes = static_cast<int>(cfg.model.num_classes);
  return d;
}

fs::path prepare_out(const Common& c) {
  fs::path out(c.out_dir.empty() ? "." : c.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorCategory::io, "cannot create output directory '" + out.string() + "': " + ec.message());
  return out;
}

RunLogRecord epoch_record(const train::EpochMetrics& m, const std::string& fp) {
  RunLogRecord r;
  r.mode = train::mode_name(m.mode);
  r.epoch = m.epoch;
  r.lr = m.lr;
  r.loss_joint = m.loss;
  r.loss_rec = m.rec;
  r.loss_cls = m.cls;
  r.accuracy = m.train_accuracy;
  if (m.seconds > 0) r.samples_per_sec = static_cast<double>(m.samples) / m.seconds;
  r.fingerprint = fp;
  return r;
}

template <typename T>
Checkpoint<T> make_checkpoint(const RunConfig& cfg, const train::TrainState<T>& st) {
  Checkpoint<T> ck;
  ck.config_text = canonical_text(cfg);
  ck.params = st.params;
  ck.opt = st.opt;
  ck.rng_seed = cfg.train.seed;
  ck.epoch = st.epoch;
  ck.step = st.step;
  return ck;
}

template <typename T>
int run_training(const Common& c, std::ostream& out) {
  const auto mode = mode_of(c.command);
  std::optional<Checkpoint<T>> ck;
  if (!c.ckpt.empty()) ck = load_checkpoint<T>(c.ckpt);
  const bool resume = ck && mode == train::Mode::pretrain;
  const RunConfig cfg = build_config(c, ck ? &ck->config_text : nullptr, resume);
  const Data d = load_data(cfg);
  const fs::path dir = prepare_out(c);
  const std::string fp = fingerprint_hex(fingerprint(cfg));

  train::TrainState<T> st;
  const auto classes = cfg.model.num_classes;
  if (mode == train::Mode::pretrain) {
    st.params = model::init_params<T>(cfg.model, cfg.train.seed);
    if (ck) {
      restore_params(st.params, ck->params, LoadMode::full);
      if (ck->opt) st.opt = *ck->opt;
      st.epoch = ck->epoch;
      st.step = ck->step;
    }
  } else {
    st.params = model::init_params<T>(cfg.model, cfg.train.seed);
    if (ck) {
      const auto copied = restore_params(st.params, ck->params, LoadMode::subset);
      for (const auto& e : st.params.entries()) {
        if (e.kind == model::ParamKind::trainable && model::is_encoder_param(e.name) &&
            std::find(copied.begin(), copied.end(), e.name) == copied.end()) {
          fail(ErrorCategory::load, "checkpoint lacks encoder tensor '" + e.name + "'");
        }
      }
    } else {
      log_warning(c.command + " without --ckpt starts from a random-init encoder");
    }
    if (mode == train::Mode::finetune) {
      train::prepare_finetune(st.params, cfg.model, classes, cfg.train.seed);
    } else {
      train::prepare_linprobe(st.params, cfg.model, classes, cfg.train.seed);
    }
  }

  RunLog log(dir / "run.log", cfg.log_timing);
  log.write_raw(config_record(canonical_text(cfg), fp));
  const auto head = mode == train::Mode::finetune   ? eval::HeadKind::task
                    : mode == train::Mode::linprobe ? eval::HeadKind::probe
                                                    : eval::HeadKind::pretrain;
  train::BatchSink sink;
  if (cfg.log_every > 0) {
    sink = [&](const train::BatchRecord& b) {
      if ((b.batch + 1) % cfg.log_every != 0) return;
      RunLogRecord r;
      r.kind = "batch";
      r.mode = train::mode_name(b.mode);
      r.epoch = b.epoch;
      r.step = b.step;
      r.lr = b.lr;
      r.loss_joint = b.loss;
      r.loss_rec = b.rec;
      r.loss_cls = b.cls;
      r.fingerprint = fp;
      log.write(r);
    };
  }
  auto on_epoch = [&](const train::EpochMetrics& m) {
    auto r = epoch_record(m, fp);
    r.step = st.step;
    if (mode != train::Mode::pretrain && !d.test.empty()) {
      r.accuracy = eval::evaluate_accuracy(st.params, cfg.model, d.test, head, cfg.eval_batch_size).accuracy;
    }
    log.write(r);
    log.flush();
    if (cfg.save_every > 0 && (m.epoch + 1) % cfg.save_every == 0) {
      save_checkpoint(dir / ("ckpt-epoch-" + std::to_string(m.epoch + 1) + ".smae"), make_checkpoint(cfg, st));
    }
  };
  try {
    train::train(d.train, st, cfg.model, cfg.train, on_epoch, sink);
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::io) {
      try {
        save_checkpoint(dir / "ckpt-abort.smae", make_checkpoint(cfg, st));
        log_warning("saved " + (dir / "ckpt-abort.smae").string() + " after an io failure");
      } catch (const Error&) {
        log_warning("final checkpoint attempt failed");
      }
    }
    throw;
  }
  save_checkpoint(dir / "ckpt-final.smae", make_checkpoint(cfg, st));
  out << "wrote " << (dir / "ckpt-final.smae").string() << " and " << (dir / "run.log").string() << " (fingerprint "
      << fp << ")\n";
  return 0;
}

template <typename T>
Checkpoint<T> require_ckpt(const Common& c) {
  if (c.ckpt.empty()) fail(ErrorCategory::usage, c.command + " needs --ckpt");
  return load_checkpoint<T>(c.ckpt);
}

template <typename T>
eval::HeadKind pick_head(const RunConfig& cfg, const model::ModelParams<T>& p) {
  if (cfg.eval_head == "task") return eval::HeadKind::task;
  if (cfg.eval_head == "probe") return eval::HeadKind::probe;
  if (cfg.eval_head == "pretrain") return eval::HeadKind::pretrain;
  if (p.contains("task_head.weight")) return eval::HeadKind::task;
  if (p.contains("probe.fc.weight")) return eval::HeadKind::probe;
  return eval::HeadKind::pretrain;
}

const char* head_name(eval::HeadKind h) {
  return h == eval::HeadKind::task ? "task" : h == eval::HeadKind::probe ? "probe" : "pretrain";
}

const data::Dataset& eval_split(const Data& d) {
  if (!d.test.empty()) return d.test;
  log_warning("no test split; evaluating on the training split");
  return d.train;
}

void append_report(const Common& c, const std::string& line) {
  if (c.out_dir.empty()) return;
  const fs::path dir = prepare_out(c);
  std::ofstream f(dir / "reports.jsonl", std::ios::app);
  f << line << "\n";
}

template <typename T>
int run_eval(const Common& c, std::ostream& out) {
  const auto ck = require_ckpt<T>(c);
  const RunConfig cfg = build_config(c, &ck.config_text, false);
  const Data d = load_data(cfg);
  const auto head = pick_head(cfg, ck.params);
  auto rep = eval::evaluate_accuracy(ck.params, cfg.model, eval_split(d), head, cfg.eval_batch_size,
                                     head == eval::HeadKind::pretrain ? cfg.train.loss.tau : 1.0);
  rep.fingerprint = fingerprint(cfg);
  const auto line = eval::eval_json(rep, head_name(head));
  out << line << "\n";
  append_report(c, line);
  return 0;
}

template <typename T>
int run_partial(const Common& c, std::ostream& out) {
  const auto ck = require_ckpt<T>(c);
  const RunConfig cfg = build_config(c, &ck.config_text, false);
  const Data d = load_data(cfg);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.partial_seeds; ++i) seeds.push_back(cfg.train.seed + i);
  const auto rep =
      eval::partial_patch_inference(ck.params, cfg.model, eval_split(d), cfg.partial_keep, seeds, cfg.eval_batch_size);
  const auto line = eval::partial_json(rep, fingerprint(cfg));
  out << line << "\n";
  append_report(c, line);
  return 0;
}

template <typename T>
int run_fewshot(const Common& c, std::ostream& out) {
  const auto ck = require_ckpt<T>(c);
  const RunConfig cfg = build_config(c, &ck.config_text, false);
  const Data d = load_data(cfg);
  if (d.test.empty()) fail(ErrorCategory::usage, "fewshot needs a test split");
  model::ModelParams<T> params = model::init_params<T>(cfg.model, cfg.train.seed);
  restore_params(params, ck.params, LoadMode::subset);
  const auto rep = eval::fewshot_protocol(params, cfg, d.train, d.test);
  const auto line = eval::fewshot_json(rep);
  out << line << "\n";
  append_report(c, line);
  return 0;
}

template <typename T>
int run_ablate(const Common& c, std::ostream& out) {
  const RunConfig cfg = build_config(c, nullptr, false);
  const Data d = load_data(cfg);
  if (d.test.empty()) fail(ErrorCategory::usage, "ablate needs a test split");
  const fs::path dir = prepare_out(c);
  std::ofstream jl(dir / "ablation.jsonl", std::ios::trunc);
  const auto rows = eval::ablation_grid<T>(cfg, d.train, d.test, [&](const eval::AblationRow& r) {
    jl << eval::ablation_jsonl({r});
    jl.flush();
  });
  const auto tsv = eval::ablation_tsv(rows);
  write_text(dir / "ablation.tsv", tsv);
  out << tsv;
  return 0;
}

int run_gradcheck(const Common& c, std::ostream& out) {
  const auto rep = train::full_loss_gradcheck(c.seed.value_or(7));
  out << rep.table();
  out << (rep.passed() ? "PASS" : "FAIL") << " max relative error " << rep.max_rel_err() << " (tol " << rep.tol
      << ")\n";
  return rep.passed() ? 0 : 1;
}

const char* kind_name(std::uint8_t k) {
  switch (static_cast<model::ParamKind>(k)) {
    case model::ParamKind::trainable: return "trainable";
    case model::ParamKind::frozen: return "frozen";
    case model::ParamKind::buffer: return "buffer";
  }
  return "?";
}

int run_inspect(const Common& c, std::ostream& out) {
  std::string path = c.ckpt;
  if (path.empty() && !c.args.empty()) path = c.args.front();
  if (path.empty()) fail(ErrorCategory::usage, "inspect needs a checkpoint path");
  const auto info = inspect_checkpoint(path);
  out << "version " << info.version << "\n";
  out << "dtype " << (info.dtype == kDtypeF32 ? "f32" : "f64") << "\n";
  out << "epoch " << info.epoch << "\n";
  out << "step " << info.step << "\n";
  out << "rng_seed " << info.rng_seed << "\n";
  out << "optimizer_state " << (info.has_optimizer ? "yes" : "no") << "\n";
  out << "tensors " << info.tensors.size() << "\n";
  for (const auto& t : info.tensors) {
    out << "  " << t.name << " " << diff::shape_str(t.shape) << " " << kind_name(t.kind) << "\n";
  }
  out << "config\n";
  std::istringstream cs(info.config_text);
  std::string line;
  while (std::getline(cs, line)) out << "  " << line << "\n";
  return 0;
}

template <typename T>
int run_typed(const Common& c, std::ostream& out) {
  const auto& cmd = c.command;
  if (cmd == "pretrain" || cmd == "finetune" || cmd == "linprobe") return run_training<T>(c, out);
  if (cmd == "eval") return run_eval<T>(c, out);
  if (cmd == "partial-eval") return run_partial<T>(c, out);
  if (cmd == "fewshot") return run_fewshot<T>(c, out);
  if (cmd == "ablate") return run_ablate<T>(c, out);
  fail(ErrorCategory::usage, "unknown subcommand '" + cmd + "'");
}

const std::vector<std::pair<std::string, std::string>>& subcommands() {
  static const std::vector<std::pair<std::string, std::string>> s{
      {"pretrain", "joint reconstruction + classification pre-training"},
      {"finetune", "end-to-end fine-tuning from a pre-trained checkpoint"},
      {"linprobe", "linear probe on frozen encoder features"},
      {"eval", "top-1 accuracy of a checkpoint's head"},
      {"partial-eval", "accuracy of the pre-training head on a subset of patches"},
      {"fewshot", "few-shot transfer protocol with grid search"},
      {"ablate", "pre-train / probe / fine-tune sweep along one ablation axis"},
      {"gradcheck", "finite-difference check of the full loss gradient"},
      {"inspect", "print a checkpoint's header, tensors and config"},
  };
  return s;
}

}  // namespace

std::string usage_text() {
  std::string s =
      "usage: supmae <subcommand> [--seed N] [--config FILE] [--out DIR] [--ckpt FILE]\n"
      "              [--precision f32|f64] [key=value ...]\n\nsubcommands:\n";
  for (const auto& [name, help] : subcommands()) {
    s += "  " + name + std::string(14 - name.size(), ' ') + help + "\n";
  }
  s += "\nConfig keys are `key = value` lines; command-line assignments win over the file.\n";
  return s;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  if (argc < 2) {
    err << usage_text();
    return 2;
  }
  const std::string cmd = argv[1];
  if (cmd == "-h" || cmd == "--help" || cmd == "help") {
    out << usage_text();
    return 0;
  }
  bool known = false;
  for (const auto& s : subcommands()) known = known || s.first == cmd;
  if (!known) {
    err << "unknown subcommand '" << cmd << "'\n" << usage_text();
    return 2;
  }

  Common c;
  c.command = cmd;
  CLI::App app{"supmae " + cmd};
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--config", c.config_path, "config file");
  app.add_option("--out", c.out_dir, "output directory");
  app.add_option("--ckpt", c.ckpt, "checkpoint to load");
  app.add_option("--precision", c.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("args", c.args, "key=value overrides");
  try {
    std::vector<std::string> rest;
    for (int i = argc - 1; i >= 2; --i) rest.emplace_back(argv[i]);
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << usage_text();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n" << usage_text();
    return 2;
  }
  if (seed_opt->count() > 0) c.seed = seed;

  diff::configure_threads_from_env();
  try {
    if (cmd == "gradcheck") return run_gradcheck(c, out);
    if (cmd == "inspect") return run_inspect(c, out);
    return c.precision == "f64" ? run_typed<double>(c, out) : run_typed<float>(c, out);
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return e.category() == ErrorCategory::usage ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace supmae::run
