#include <CLI11.hpp>
#include <cstdio>
#include <deque>
#include <string>
#include <vector>

#include "r2d2/r2d2.h"

namespace {

struct Binding {
  CLI::Option* opt = nullptr;
  std::string key;
  std::string value;
};

struct SessionGuard {
  r2d2_session* s;
  explicit SessionGuard(r2d2_session* s_in) : s(s_in) {}
  ~SessionGuard() { r2d2_session_free(s); }
};

int fail_status(r2d2_session* session) {
  std::fprintf(stderr, "error: %s\n", r2d2_session_last_error(session));
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"table-to-text training pipeline with faithfulness evaluation"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  std::string seed;
  bool print_config = false;
  app.add_option("--config", config_file, "JSON config file merged over the defaults");
  app.add_option("--set", overrides,
                 "config override as dotted key=value, e.g. train.lr=0.001 (repeatable)");
  auto* seed_opt = app.add_option("--seed", seed, "global seed");
  app.add_flag("--print-config", print_config, "print the resolved config and exit");

  std::deque<Binding> bindings;
  auto bind = [&bindings](CLI::App* cmd, const std::string& flag, const std::string& key,
                          const std::string& desc) {
    bindings.push_back(Binding{nullptr, key, ""});
    Binding& b = bindings.back();
    b.opt = cmd->add_option(flag, b.value, desc);
  };
  auto stage = [&app](const std::string& name, const std::string& desc) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->fallthrough();
    return cmd;
  };

  CLI::App* synth = stage("synth", "generate a synthetic table-to-text corpus");
  bind(synth, "--out", "synth.out", "corpus output path");
  bind(synth, "--num-examples", "synth.num_examples", "number of examples");

  CLI::App* perturb = stage("perturb", "build unfaithful variants of the references");
  bind(perturb, "--corpus", "data.corpus", "corpus path");
  bind(perturb, "--out", "perturb.out", "perturbations output path");
  bind(perturb, "--strategy", "perturb.strategy", "knowledge or model");
  bind(perturb, "--size", "perturb.size", "xsmall, small, medium, large or full");
  bind(perturb, "--checkpoint", "perturb.checkpoint", "generator checkpoint (model strategy)");

  CLI::App* warmup = stage("train-warmup", "likelihood-only generator training");
  bind(warmup, "--corpus", "data.corpus", "corpus path");
  bind(warmup, "--out", "train.out", "checkpoint output path");
  bind(warmup, "--epochs", "train.epochs", "training epochs");
  bind(warmup, "--lr", "train.lr", "learning rate");
  bind(warmup, "--log-out", "train.log_out", "training log output path");

  CLI::App* finetune = stage("train-r2d2", "joint detection + unlikelihood training");
  bind(finetune, "--corpus", "data.corpus", "corpus path");
  bind(finetune, "--perturbations", "perturb.out", "perturbations path");
  bind(finetune, "--init", "train.init_checkpoint", "checkpoint to start from");
  bind(finetune, "--out", "train.out", "checkpoint output path");
  bind(finetune, "--epochs", "train.epochs", "training epochs");
  bind(finetune, "--lr", "train.lr", "learning rate");
  bind(finetune, "--lambda", "train.lambda", "generation/detection mixing weight");
  bind(finetune, "--granularity", "train.rd_granularity", "sentence or token detection");
  bind(finetune, "--log-out", "train.log_out", "training log output path");

  CLI::App* evaluate = stage("evaluate", "decode and score a checkpoint");
  bind(evaluate, "--corpus", "data.corpus", "corpus path");
  bind(evaluate, "--checkpoint", "evaluate.checkpoint", "checkpoint to evaluate");
  bind(evaluate, "--split", "evaluate.split", "train, dev or all");
  bind(evaluate, "--perturbations", "evaluate.perturbations",
       "perturbations for discrimination scoring");
  bind(evaluate, "--out", "evaluate.out", "evaluation report path");

  CLI::App* contaminate = stage("contaminate", "grade metric reliability under contamination");
  bind(contaminate, "--corpus", "data.corpus", "corpus path");
  bind(contaminate, "--out", "contaminate.out", "reliability table path");
  bind(contaminate, "--scatter-out", "contaminate.scatter_out", "long-format TSV path");
  bind(contaminate, "--scorer", "contaminate.scorer", "external scorer, e.g. file:scores.jsonl");

  CLI::App* report = stage("report", "combine stage outputs into one document");
  bind(report, "--eval", "report.eval", "evaluation report to include");
  bind(report, "--reliability", "report.reliability", "reliability table to include");
  bind(report, "--warmup-log", "report.warmup_log", "warmup training log to include");
  bind(report, "--r2d2-log", "report.r2d2_log", "joint training log to include");
  bind(report, "--out", "report.out", "combined report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  r2d2_session* session = r2d2_session_new();
  if (session == nullptr) {
    std::fprintf(stderr, "error: out of memory\n");
    return 1;
  }
  SessionGuard guard(session);

  if (!config_file.empty() && r2d2_config_load_file(session, config_file.c_str()) != R2D2_OK)
    return fail_status(session);
  for (const std::string& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    if (r2d2_config_set(session, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()) != R2D2_OK)
      return fail_status(session);
  }
  if (seed_opt->count() > 0 && r2d2_config_set(session, "seed", seed.c_str()) != R2D2_OK)
    return fail_status(session);
  for (const Binding& b : bindings) {
    if (b.opt->count() == 0) continue;
    if (r2d2_config_set(session, b.key.c_str(), b.value.c_str()) != R2D2_OK)
      return fail_status(session);
  }

  if (print_config) {
    char* dump = r2d2_config_resolved(session);
    std::printf("%s\n", dump);
    r2d2_string_free(dump);
    return 0;
  }

  const std::string stage_name = app.get_subcommands().front()->get_name();
  char* summary = nullptr;
  if (r2d2_run(session, stage_name.c_str(), &summary) != R2D2_OK) return fail_status(session);
  if (summary != nullptr) {
    std::printf("%s\n", summary);
    r2d2_string_free(summary);
  }
  return 0;
}
