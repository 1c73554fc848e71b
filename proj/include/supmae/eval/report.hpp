#pragma once

#include <string>

#include "supmae/eval/evaluate.hpp"
#include "supmae/eval/fewshot.hpp"

namespace supmae::eval {

// One-line JSON records; every one carries the config fingerprint as hex.
std::string eval_json(const EvalReport& r, const std::string& head);
std::string partial_json(const PartialReport& r, std::uint64_t fingerprint);
std::string fewshot_json(const FewshotReport& r);

}  // namespace supmae::eval
