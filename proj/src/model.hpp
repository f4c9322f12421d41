#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "corpus.hpp"
#include "util.hpp"

namespace r2d2 {

struct ModelConfig {
  int d_model = 128;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  double dropout = 0.1;
  int max_len = 256;
  bool sentence_head = false;
  bool token_head = false;
  // Train the heads as pure probes: their gradients do not reach the body.
  bool detach_heads = false;
  // Hidden width of the discrimination heads; 0 keeps them linear.
  int head_hidden = 0;
  std::uint64_t init_seed = 1;

  void validate() const;
  int head_dim() const { return d_model / heads; }
};

// One teacher-forced pass.  probs is (T x V) with softmax rows where
// T = |target| + 1 (the trailing step predicts the end marker);
// targets[t] is the gold id for step t.  Head outputs are present only
// when the corresponding head is enabled.
struct DecodeTrace {
  ad::NodeId probs = -1;
  ad::NodeId hidden = -1;
  ad::NodeId sentence_prob = -1;
  ad::NodeId token_probs = -1;
  std::vector<int> targets;
};

// Pre-norm transformer encoder-decoder over table token ids, with a shared
// input/output embedding and optional sigmoid heads on the decoder states
// (sentence level: last step; token level: every step).
class Model {
 public:
  Model(ModelConfig cfg, Vocabulary vocab);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  // dropout_rng enables dropout (training); pass nullptr for inference.
  // Non-const: the tape binds parameter storage for gradient accumulation.
  DecodeTrace forward(ad::Tape& tape, const std::vector<int>& src_ids,
                      const std::vector<int>& tgt_ids, Rng* dropout_rng);

  // probs(t, targets[t]) for every step of a trace.
  std::vector<double> gold_probs(const ad::Tape& tape, const DecodeTrace& trace) const;

  // Inference-only scores (no dropout, tape discarded).
  double sentence_score(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids);
  std::vector<double> token_scores(const std::vector<int>& src_ids,
                                   const std::vector<int>& tgt_ids);

  std::vector<int> greedy_decode(const std::vector<int>& src_ids, int max_steps);
  // k nucleus-sampled continuations of prefix_ids (each returned sequence
  // includes the prefix; stops at the end marker or max_steps new tokens).
  std::vector<std::vector<int>> sample_continuations(const std::vector<int>& src_ids,
                                                     const std::vector<int>& prefix_ids, int k,
                                                     double top_p, int max_steps, Rng& rng);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  ad::Parameter* find_parameter(const std::string& name);
  std::uint64_t parameter_fingerprint() const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  std::deque<ad::Parameter> params_;

  ad::Parameter& add_param(const std::string& name, Eigen::MatrixXd init);
  ad::Parameter& p(const std::string& name);
  const ad::Parameter& p(const std::string& name) const;

  ad::NodeId encode(ad::Tape& tape, const std::vector<int>& src_ids, Rng* dropout_rng);
  ad::NodeId attention(ad::Tape& tape, const std::string& prefix, ad::NodeId queries_in,
                       ad::NodeId keys_in, bool causal);
  ad::NodeId layer_norm(ad::Tape& tape, const std::string& prefix, ad::NodeId x);
  ad::NodeId ffn(ad::Tape& tape, const std::string& prefix, ad::NodeId x, Rng* dropout_rng);
  ad::NodeId maybe_dropout(ad::Tape& tape, ad::NodeId x, Rng* dropout_rng) const;
};

// Copies every parameter whose name and shape match; returns the copied
// names.  Parameters only present in dst (e.g. freshly added heads) keep
// their initial values.
std::vector<std::string> copy_matching_params(const Model& src, Model& dst);

// Smallest probability prefix reaching top_p: indices (descending by
// probability) and renormalized probabilities.
struct NucleusSupport {
  std::vector<int> ids;
  std::vector<double> probs;
};
NucleusSupport nucleus_filter(const Eigen::RowVectorXd& probs, double top_p);

}  // namespace r2d2
