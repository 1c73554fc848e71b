#include "supmae/eval/report.hpp"

#include <cmath>

#include <json.hpp>

#include "supmae/run/config_file.hpp"

namespace supmae::eval {

using nlohmann::ordered_json;

std::string eval_json(const EvalReport& r, const std::string& head) {
  ordered_json j;
  j["kind"] = "eval";
  j["head"] = head;
  j["accuracy"] = r.accuracy;
  j["loss"] = r.loss;
  j["n_samples"] = r.n_samples;
  j["keep_ratio"] = r.keep_ratio;
  j["per_class_accuracy"] = r.per_class_accuracy;
  j["fingerprint"] = run::fingerprint_hex(r.fingerprint);
  return j.dump();
}

std::string partial_json(const PartialReport& r, std::uint64_t fingerprint) {
  ordered_json j;
  j["kind"] = "partial_eval";
  j["keep_ratio"] = r.keep_ratio;
  j["seeds"] = r.seeds;
  j["accuracies"] = r.accuracies;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["fingerprint"] = run::fingerprint_hex(fingerprint);
  return j.dump();
}

std::string fewshot_json(const FewshotReport& r) {
  ordered_json j;
  j["kind"] = "fewshot";
  j["mode"] = train::mode_name(r.mode);
  j["shots"] = r.shots;
  ordered_json trials = ordered_json::array();
  for (const auto& t : r.trials) {
    ordered_json x;
    x["seed"] = t.seed;
    x["lr"] = t.lr;
    x["weight_decay"] = t.weight_decay;
    x["val_accuracy"] = std::isnan(t.val_accuracy) ? ordered_json(nullptr) : ordered_json(t.val_accuracy);
    x["test_accuracy"] = t.test_accuracy;
    x["train_samples"] = t.train_samples;
    trials.push_back(x);
  }
  j["trials"] = trials;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["fingerprint"] = run::fingerprint_hex(r.fingerprint);
  return j.dump();
}

}  // namespace supmae::eval
