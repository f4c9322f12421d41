#include "pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <memory>

#include "contamination.hpp"
#include "corpus.hpp"
#include "entities.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "perturb.hpp"
#include "trainer.hpp"
#include "util.hpp"

namespace r2d2::pipeline {

json default_config() {
  return json{
      {"seed", 7},
      {"recognizer", "table"},
      {"data", {{"corpus", "corpus.jsonl"}}},
      {"synth",
       {{"num_examples", 100},
        {"min_rows", 3},
        {"max_rows", 6},
        {"persons", 40},
        {"countries", 16},
        {"years", 30},
        {"scores", 60},
        {"out", "corpus.jsonl"}}},
      {"perturb",
       {{"strategy", "knowledge"},
        {"size", "medium"},
        {"token_label_style", "prefix"},
        {"model_samples", 8},
        {"top_p", 0.9},
        {"max_sample_steps", 24},
        {"checkpoint", ""},
        {"out", "perturbations.jsonl"}}},
      {"model",
       {{"d_model", 128},
        {"layers", 2},
        {"heads", 4},
        {"ffn_mult", 4},
        {"dropout", 0.1},
        {"max_len", 256},
        {"detach_heads", false}}},
      {"train",
       {{"epochs", 15},
        {"batch_size", 8},
        {"lr", 5e-5},
        {"lambda", 0.5},
        {"rd_granularity", "token"},
        {"use_rd", true},
        {"use_ul", true},
        {"token_mean", false},
        {"dev_fraction", 0.1},
        {"divergence_abort", 1e4},
        {"init_checkpoint", ""},
        {"log_out", ""},
        {"out", "model.ckpt"}}},
      {"evaluate",
       {{"checkpoint", "model.ckpt"},
        {"split", "dev"},
        {"perturbations", ""},
        {"write_predictions", false},
        {"out", "eval.json"}}},
      {"contaminate",
       {{"percentages", json::array({0, 25, 50, 75, 100})},
        {"scorer", ""},
        {"scatter_out", ""},
        {"out", "reliability.json"}}},
      {"report",
       {{"eval", ""},
        {"reliability", ""},
        {"warmup_log", ""},
        {"r2d2_log", ""},
        {"out", "report.json"}}},
  };
}

void merge_config(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object())
    fail(Error::Kind::Config, "config section '" + (path.empty() ? "<root>" : path) +
                                  "' must be an object");
  for (const auto& [key, value] : overlay.items()) {
    std::string child = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) fail(Error::Kind::Config, "unknown config key: " + child);
    if (base[key].is_object()) {
      merge_config(base[key], value, child);
    } else {
      base[key] = value;
    }
  }
}

void set_config_key(json& cfg, const std::string& dotted_key, const std::string& value) {
  std::vector<std::string> parts = split(dotted_key, '.');
  json* node = &cfg;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty() || !node->is_object() || !node->contains(parts[i]))
      fail(Error::Kind::Config, "unknown config key: " + dotted_key);
    node = &(*node)[parts[i]];
  }
  if (node->is_object()) fail(Error::Kind::Config, dotted_key + " is a section, not a value");
  json parsed = json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? json(value) : parsed;
}

json load_config_file(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) fail(Error::Kind::Config, "config file is not valid JSON: " + path);
  return j;
}

namespace {

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& stage, const json& cfg,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json manifest;
  manifest["stage"] = stage;
  manifest["seed"] = cfg.at("seed");
  manifest["config"] = cfg;
  manifest["timestamp"] = iso_timestamp();
  manifest["inputs"] = json::object();
  for (const auto& path : inputs) manifest["inputs"][path] = file_checksum(path);
  manifest["outputs"] = json::object();
  for (const auto& path : outputs) manifest["outputs"][path] = file_checksum(path);
  write_file(outputs.front() + ".manifest.json", manifest.dump(2) + "\n");
}

std::uint64_t global_seed(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

PerturbConfig perturb_config(const json& cfg) {
  const json& p = cfg.at("perturb");
  PerturbConfig out;
  out.strategy = p.at("strategy").get<std::string>();
  out.size = p.at("size").get<std::string>();
  out.label_style = token_label_style_from_string(p.at("token_label_style").get<std::string>());
  out.seed = global_seed(cfg);
  out.model_samples = p.at("model_samples").get<int>();
  out.top_p = p.at("top_p").get<double>();
  out.max_sample_steps = p.at("max_sample_steps").get<int>();
  out.validate();
  return out;
}

ModelConfig model_config(const json& cfg, bool sentence_head, bool token_head) {
  const json& m = cfg.at("model");
  ModelConfig out;
  out.d_model = m.at("d_model").get<int>();
  out.layers = m.at("layers").get<int>();
  out.heads = m.at("heads").get<int>();
  out.ffn_mult = m.at("ffn_mult").get<int>();
  out.dropout = m.at("dropout").get<double>();
  out.max_len = m.at("max_len").get<int>();
  out.detach_heads = m.at("detach_heads").get<bool>();
  out.sentence_head = sentence_head;
  out.token_head = token_head;
  out.init_seed = global_seed(cfg);
  out.validate();
  return out;
}

TrainConfig train_config(const json& cfg) {
  const json& t = cfg.at("train");
  TrainConfig out;
  out.seed = global_seed(cfg);
  out.epochs = t.at("epochs").get<int>();
  out.batch_size = t.at("batch_size").get<int>();
  out.lr = t.at("lr").get<double>();
  out.lambda_weight = t.at("lambda").get<double>();
  out.rd_granularity = t.at("rd_granularity").get<std::string>();
  out.use_rd = t.at("use_rd").get<bool>();
  out.use_ul = t.at("use_ul").get<bool>();
  out.token_mean = t.at("token_mean").get<bool>();
  out.dev_fraction = t.at("dev_fraction").get<double>();
  out.divergence_abort = t.at("divergence_abort").get<double>();
  out.validate();
  return out;
}

json train_log_json(const TrainLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"groups", e.groups},
                      {"gen_sum", e.gen_sum},
                      {"det_sum", e.det_sum},
                      {"combined_sum", e.combined_sum}});
  return json{{"epochs", epochs}, {"optimizer_steps", log.optimizer_steps}};
}

std::vector<TableExample> pick_split(const std::vector<TableExample>& corpus,
                                     const std::string& split, double dev_fraction,
                                     std::uint64_t seed) {
  if (split == "all") return corpus;
  std::vector<TableExample> train, dev;
  split_dataset(corpus, dev_fraction, seed, &train, &dev);
  if (split == "train") return train;
  if (split == "dev") return dev;
  fail(Error::Kind::Config, "unknown split '" + split + "' (expected train, dev or all)");
}

class ModelSampler : public GeneratorSampler {
 public:
  ModelSampler(Model& model, double top_p, int max_steps)
      : model_(model), top_p_(top_p), max_steps_(max_steps) {}

  std::vector<std::vector<int>> sample(const std::vector<int>& src_ids,
                                       const std::vector<int>& prefix_ids, int k,
                                       Rng& rng) override {
    return model_.sample_continuations(src_ids, prefix_ids, k, top_p_, max_steps_, rng);
  }

 private:
  Model& model_;
  double top_p_;
  int max_steps_;
};

std::string run_synth(const json& cfg) {
  const json& s = cfg.at("synth");
  SyntheticSpec spec;
  spec.seed = global_seed(cfg);
  spec.num_examples = s.at("num_examples").get<int>();
  spec.min_rows = s.at("min_rows").get<int>();
  spec.max_rows = s.at("max_rows").get<int>();
  spec.persons = s.at("persons").get<int>();
  spec.countries = s.at("countries").get<int>();
  spec.years = s.at("years").get<int>();
  spec.scores = s.at("scores").get<int>();
  std::string out = s.at("out").get<std::string>();

  std::vector<TableExample> corpus = generate_synthetic(spec);
  save_dataset(out, corpus);
  write_manifest("synth", cfg, {}, {out});
  return "wrote " + std::to_string(corpus.size()) + " examples to " + out;
}

std::string run_perturb(const json& cfg) {
  std::string corpus_path = cfg.at("data").at("corpus").get<std::string>();
  std::string out = cfg.at("perturb").at("out").get<std::string>();
  std::vector<TableExample> corpus = load_dataset(corpus_path);
  PerturbConfig pcfg = perturb_config(cfg);
  auto recognizer = make_recognizer(cfg.at("recognizer").get<std::string>(), &corpus);

  std::vector<std::string> inputs{corpus_path};
  std::unique_ptr<Model> model;
  std::unique_ptr<ModelSampler> sampler;
  Vocabulary vocab;
  if (pcfg.strategy == "model") {
    std::string ckpt = cfg.at("perturb").at("checkpoint").get<std::string>();
    if (ckpt.empty())
      fail(Error::Kind::Config, "model-based perturbation needs perturb.checkpoint");
    model = std::make_unique<Model>(Model::load(ckpt));
    sampler = std::make_unique<ModelSampler>(*model, pcfg.top_p, pcfg.max_sample_steps);
    vocab = model->vocab();
    inputs.push_back(ckpt);
  } else {
    vocab = build_vocabulary(corpus);
  }

  std::vector<Perturbation> all;
  long skipped = 0;
  for (const auto& ex : corpus) {
    PerturbationSet set = generate_perturbations(ex, *recognizer, vocab, pcfg, sampler.get());
    if (!set.diagnostic.empty()) ++skipped;
    all.insert(all.end(), set.items.begin(), set.items.end());
  }
  save_perturbations(out, all);
  write_manifest("perturb", cfg, inputs, {out});
  return "wrote " + std::to_string(all.size()) + " perturbations to " + out +
         (skipped > 0 ? " (" + std::to_string(skipped) + " examples under quota)" : "");
}

std::string run_train_warmup(const json& cfg) {
  std::string corpus_path = cfg.at("data").at("corpus").get<std::string>();
  std::string out = cfg.at("train").at("out").get<std::string>();
  std::string log_out = cfg.at("train").at("log_out").get<std::string>();
  std::vector<TableExample> corpus = load_dataset(corpus_path);
  TrainConfig tcfg = train_config(cfg);

  std::vector<TableExample> train, dev;
  split_dataset(corpus, tcfg.dev_fraction, tcfg.seed, &train, &dev);
  Vocabulary vocab = build_vocabulary(corpus);
  Model model(model_config(cfg, false, false), vocab);
  TrainLog log = warmup_finetune(model, train, tcfg);
  model.save(out);

  std::vector<std::string> outputs{out};
  if (!log_out.empty()) {
    write_file(log_out, train_log_json(log).dump(2) + "\n");
    outputs.push_back(log_out);
  }
  write_manifest("train-warmup", cfg, {corpus_path}, outputs);
  double final_loss = log.epochs.empty() ? 0.0 : log.epochs.back().combined_sum;
  return "trained " + std::to_string(tcfg.epochs) + " epochs on " +
         std::to_string(train.size()) + " examples (final loss sum " +
         std::to_string(final_loss) + "), checkpoint " + out;
}

std::string run_train_r2d2(const json& cfg) {
  std::string corpus_path = cfg.at("data").at("corpus").get<std::string>();
  std::string pert_path = cfg.at("perturb").at("out").get<std::string>();
  std::string init_ckpt = cfg.at("train").at("init_checkpoint").get<std::string>();
  std::string out = cfg.at("train").at("out").get<std::string>();
  std::string log_out = cfg.at("train").at("log_out").get<std::string>();

  std::vector<TableExample> corpus = load_dataset(corpus_path);
  TrainConfig tcfg = train_config(cfg);
  bool token_head = tcfg.use_rd && tcfg.rd_granularity == "token";
  bool sentence_head = tcfg.use_rd && tcfg.rd_granularity == "sentence";

  std::vector<std::string> inputs{corpus_path, pert_path};
  Vocabulary vocab;
  std::unique_ptr<Model> warm;
  if (!init_ckpt.empty()) {
    warm = std::make_unique<Model>(Model::load(init_ckpt));
    vocab = warm->vocab();
    inputs.push_back(init_ckpt);
  } else {
    vocab = build_vocabulary(corpus);
  }

  ModelConfig mcfg = model_config(cfg, sentence_head, token_head);
  if (warm) {
    const ModelConfig& wc = warm->config();
    mcfg.d_model = wc.d_model;
    mcfg.layers = wc.layers;
    mcfg.heads = wc.heads;
    mcfg.ffn_mult = wc.ffn_mult;
    mcfg.max_len = wc.max_len;
  }
  Model model(mcfg, vocab);
  if (warm) copy_matching_params(*warm, model);

  std::vector<Perturbation> perturbations = load_perturbations(pert_path, vocab);
  std::vector<TableExample> train, dev;
  split_dataset(corpus, tcfg.dev_fraction, tcfg.seed, &train, &dev);
  TrainLog log = r2d2_finetune(model, train, perturbations, tcfg);
  model.save(out);

  std::vector<std::string> outputs{out};
  if (!log_out.empty()) {
    write_file(log_out, train_log_json(log).dump(2) + "\n");
    outputs.push_back(log_out);
  }
  write_manifest("train-r2d2", cfg, inputs, outputs);
  double final_loss = log.epochs.empty() ? 0.0 : log.epochs.back().combined_sum;
  return "trained " + std::to_string(tcfg.epochs) + " epochs on " +
         std::to_string(train.size()) + " examples (final loss sum " +
         std::to_string(final_loss) + "), checkpoint " + out;
}

std::string run_evaluate(const json& cfg) {
  const json& e = cfg.at("evaluate");
  std::string corpus_path = cfg.at("data").at("corpus").get<std::string>();
  std::string ckpt = e.at("checkpoint").get<std::string>();
  std::string pert_path = e.at("perturbations").get<std::string>();
  std::string out = e.at("out").get<std::string>();

  std::vector<TableExample> corpus = load_dataset(corpus_path);
  TrainConfig tcfg = train_config(cfg);
  std::vector<TableExample> subset =
      pick_split(corpus, e.at("split").get<std::string>(), tcfg.dev_fraction, tcfg.seed);
  if (subset.empty()) fail(Error::Kind::InvalidArgument, "selected split has no examples");

  Model model = Model::load(ckpt);
  auto recognizer = make_recognizer(cfg.at("recognizer").get<std::string>(), &corpus);
  EvalReport report = evaluate_model(model, subset, *recognizer);

  json j;
  j["examples"] = subset.size();
  j["bleu"] = {{"bleu", report.bleu.bleu},
               {"precisions", report.bleu.precisions},
               {"brevity_penalty", report.bleu.brevity_penalty},
               {"pred_len", report.bleu.pred_len},
               {"ref_len", report.bleu.ref_len}};
  auto ner_json = [](const NerMetrics& m) {
    return json{{"rc", m.rc}, {"ri", m.ri}, {"rm", m.rm}, {"mi", m.mi}, {"mm", m.mm}};
  };
  j["ner"] = {{"micro", ner_json(report.ner.micro)},
              {"macro", ner_json(report.ner.macro_avg)},
              {"empty_predictions", report.ner.empty_predictions},
              {"empty_references", report.ner.empty_references}};

  std::vector<std::string> inputs{corpus_path, ckpt};
  if (!pert_path.empty()) {
    std::vector<Perturbation> perturbations = load_perturbations(pert_path, model.vocab());
    DiscriminationEval disc = discrimination_eval(model, subset, perturbations);
    j["discrimination"] = {{"auc", disc.auc},
                           {"positives", disc.positive_scores.size()},
                           {"negatives", disc.negative_scores.size()}};
    j["mean_replaced_token_prob"] = mean_replaced_token_prob(model, subset, perturbations);
    inputs.push_back(pert_path);
  }
  if (e.at("write_predictions").get<bool>()) j["predictions"] = report.predictions;

  write_file(out, j.dump(2) + "\n");
  write_manifest("evaluate", cfg, inputs, {out});
  char summary[160];
  std::snprintf(summary, sizeof(summary), "bleu %.2f, rc %.2f, mi %.2f on %zu examples -> %s",
                report.bleu.bleu, report.ner.micro.rc, report.ner.micro.mi, subset.size(),
                out.c_str());
  return summary;
}

std::string run_contaminate(const json& cfg) {
  const json& c = cfg.at("contaminate");
  std::string corpus_path = cfg.at("data").at("corpus").get<std::string>();
  std::string out = c.at("out").get<std::string>();
  std::string scatter_out = c.at("scatter_out").get<std::string>();
  std::string scorer_spec = c.at("scorer").get<std::string>();

  ContaminationConfig ccfg;
  ccfg.percentages = c.at("percentages").get<std::vector<int>>();
  ccfg.seed = global_seed(cfg);
  ccfg.validate();

  std::vector<TableExample> corpus = load_dataset(corpus_path);
  Vocabulary vocab = build_vocabulary(corpus);
  auto recognizer = make_recognizer(cfg.at("recognizer").get<std::string>(), &corpus);
  ParallelCorpus parallel = build_parallel_corpus(corpus, *recognizer, vocab, ccfg.seed);

  std::unique_ptr<SentenceScorer> scorer;
  if (!scorer_spec.empty()) scorer = make_sentence_scorer(scorer_spec);
  ReliabilityReport report =
      reliability_table(corpus, parallel, *recognizer, ccfg, scorer.get());

  write_file(out, reliability_to_json(report) + "\n");
  std::vector<std::string> outputs{out};
  if (!scatter_out.empty()) {
    write_file(scatter_out, reliability_scatter_tsv(report));
    outputs.push_back(scatter_out);
  }
  write_manifest("contaminate", cfg, {corpus_path}, outputs);

  std::string verdicts;
  for (const auto& s : report.series) {
    if (!verdicts.empty()) verdicts += ", ";
    verdicts += s.metric + " " + s.verdict;
  }
  return "graded " + std::to_string(report.kept) + " references (" +
         std::to_string(report.excluded) + " excluded): " + verdicts;
}

std::string run_report(const json& cfg) {
  const json& r = cfg.at("report");
  std::string out = r.at("out").get<std::string>();
  json j;
  j["sections"] = json::object();
  std::vector<std::string> inputs;
  auto add_section = [&](const std::string& key) {
    std::string path = r.at(key).get<std::string>();
    if (path.empty()) return;
    json parsed = json::parse(read_file(path), nullptr, false);
    if (parsed.is_discarded()) fail(Error::Kind::Io, path + " is not valid JSON");
    j["sections"][key] = parsed;
    inputs.push_back(path);
  };
  add_section("eval");
  add_section("reliability");
  add_section("warmup_log");
  add_section("r2d2_log");
  if (inputs.empty()) fail(Error::Kind::Config, "report has no input sections configured");

  json highlights = json::object();
  if (j["sections"].contains("eval")) {
    const json& e = j["sections"]["eval"];
    if (e.contains("bleu")) highlights["bleu"] = e["bleu"]["bleu"];
    if (e.contains("ner")) {
      highlights["rc"] = e["ner"]["micro"]["rc"];
      highlights["mi"] = e["ner"]["micro"]["mi"];
    }
    if (e.contains("discrimination")) highlights["auc"] = e["discrimination"]["auc"];
  }
  if (j["sections"].contains("reliability")) {
    json verdicts = json::object();
    for (const auto& s : j["sections"]["reliability"]["series"])
      verdicts[s["metric"].get<std::string>()] = s["verdict"];
    highlights["metric_verdicts"] = verdicts;
  }
  j["highlights"] = highlights;

  write_file(out, j.dump(2) + "\n");
  write_manifest("report", cfg, inputs, {out});
  return "combined " + std::to_string(inputs.size()) + " sections into " + out;
}

}  // namespace

std::string run_stage(const std::string& stage, const json& cfg) {
  if (stage == "synth") return run_synth(cfg);
  if (stage == "perturb") return run_perturb(cfg);
  if (stage == "train-warmup") return run_train_warmup(cfg);
  if (stage == "train-r2d2") return run_train_r2d2(cfg);
  if (stage == "evaluate") return run_evaluate(cfg);
  if (stage == "contaminate") return run_contaminate(cfg);
  if (stage == "report") return run_report(cfg);
  fail(Error::Kind::InvalidArgument,
       "unknown stage '" + stage +
           "' (expected synth, perturb, train-warmup, train-r2d2, evaluate, contaminate or "
           "report)");
}

}  // namespace r2d2::pipeline
