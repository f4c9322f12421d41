#pragma once

#include <nlohmann/json.hpp>
#include <string>

namespace r2d2::pipeline {

using json = nlohmann::json;

// The full configuration tree with every stage's defaults.  Overlays may
// only touch keys that exist here; unknown keys are rejected so typos fail
// loudly instead of silently running with defaults.
json default_config();

// Deep merge: objects recurse, everything else is replaced.
void merge_config(json& base, const json& overlay, const std::string& path = "");

// Sets one dotted key ("train.lr"); the value string is parsed as JSON when
// possible and kept as a plain string otherwise.
void set_config_key(json& cfg, const std::string& dotted_key, const std::string& value);

json load_config_file(const std::string& path);

// Runs one stage: synth, perturb, train-warmup, train-r2d2, evaluate,
// contaminate or report.  Every stage writes its primary output plus a
// sibling <out>.manifest.json recording the resolved config, input and
// output checksums, and the seed.  Returns a one-line summary.
std::string run_stage(const std::string& stage, const json& cfg);

}  // namespace r2d2::pipeline
