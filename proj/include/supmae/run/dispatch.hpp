#pragma once

#include <ostream>
#include <string>

namespace supmae::run {

// Subcommands: pretrain, finetune, linprobe, eval, partial-eval, fewshot,
// ablate, gradcheck, inspect. Common flags: --seed, --config, --out, --ckpt,
// --precision {f32,f64}; trailing key=value arguments override the config.
//
// Returns 0 on success, 1 on a failure (one line `error: <category>: msg` on
// `err`), 2 on a usage error (usage text on `err`).
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string usage_text();

}  // namespace supmae::run
