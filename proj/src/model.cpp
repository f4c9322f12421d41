#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

namespace r2d2 {

using json = nlohmann::json;

void ModelConfig::validate() const {
  if (d_model <= 0) fail(Error::Kind::Config, "model width must be positive");
  if (heads <= 0 || d_model % heads != 0)
    fail(Error::Kind::Config, "head count must divide the model width");
  if (layers < 1) fail(Error::Kind::Config, "at least one layer is required");
  if (ffn_mult < 1) fail(Error::Kind::Config, "ffn multiplier must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(Error::Kind::Config, "dropout must be in [0, 1)");
  if (max_len < 2) fail(Error::Kind::Config, "max sequence length must be >= 2");
  if (head_hidden < 0) fail(Error::Kind::Config, "head hidden width must be >= 0");
}

Model::Model(ModelConfig cfg, Vocabulary vocab) : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.init_seed, {"model-init"}));
  int d = cfg_.d_model;
  int dh = cfg_.head_dim();
  int f = d * cfg_.ffn_mult;
  double sd_embed = 0.02;
  double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
  double sd_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  double sd_f = 1.0 / std::sqrt(static_cast<double>(f));

  add_param("embed", ad::gaussian_init(vocab_.size(), d, sd_embed, rng));
  add_param("pos_enc", ad::gaussian_init(cfg_.max_len, d, sd_embed, rng));
  add_param("pos_dec", ad::gaussian_init(cfg_.max_len, d, sd_embed, rng));

  auto add_ln = [&](const std::string& prefix) {
    add_param(prefix + ".g", Eigen::MatrixXd::Ones(1, d));
    add_param(prefix + ".b", Eigen::MatrixXd::Zero(1, d));
  };
  auto add_attn = [&](const std::string& prefix) {
    for (int h = 0; h < cfg_.heads; ++h) {
      std::string hp = prefix + ".h" + std::to_string(h);
      add_param(hp + ".wq", ad::gaussian_init(d, dh, sd_d, rng));
      add_param(hp + ".wk", ad::gaussian_init(d, dh, sd_d, rng));
      add_param(hp + ".wv", ad::gaussian_init(d, dh, sd_d, rng));
      add_param(hp + ".wo", ad::gaussian_init(dh, d, sd_dh, rng));
    }
  };
  auto add_ffn = [&](const std::string& prefix) {
    add_param(prefix + ".w1", ad::gaussian_init(d, f, sd_d, rng));
    add_param(prefix + ".b1", Eigen::MatrixXd::Zero(1, f));
    add_param(prefix + ".w2", ad::gaussian_init(f, d, sd_f, rng));
    add_param(prefix + ".b2", Eigen::MatrixXd::Zero(1, d));
  };

  for (int l = 0; l < cfg_.layers; ++l) {
    std::string lp = "enc" + std::to_string(l);
    add_ln(lp + ".ln1");
    add_attn(lp + ".attn");
    add_ln(lp + ".ln2");
    add_ffn(lp + ".ffn");
  }
  add_ln("enc_final");

  for (int l = 0; l < cfg_.layers; ++l) {
    std::string lp = "dec" + std::to_string(l);
    add_ln(lp + ".ln1");
    add_attn(lp + ".self");
    add_ln(lp + ".ln2");
    add_attn(lp + ".cross");
    add_ln(lp + ".ln3");
    add_ffn(lp + ".ffn");
  }
  add_ln("dec_final");

  auto add_head = [&](const std::string& prefix) {
    if (cfg_.head_hidden > 0) {
      int hh = cfg_.head_hidden;
      add_param(prefix + ".w1", ad::gaussian_init(d, hh, sd_d, rng));
      add_param(prefix + ".b1", Eigen::MatrixXd::Zero(1, hh));
      add_param(prefix + ".w2",
                ad::gaussian_init(hh, 1, 1.0 / std::sqrt(static_cast<double>(hh)), rng));
      add_param(prefix + ".b2", Eigen::MatrixXd::Zero(1, 1));
    } else {
      add_param(prefix + ".w", ad::gaussian_init(d, 1, sd_d, rng));
      add_param(prefix + ".b", Eigen::MatrixXd::Zero(1, 1));
    }
  };
  if (cfg_.sentence_head) add_head("sent_head");
  if (cfg_.token_head) add_head("tok_head");
}

ad::Parameter& Model::add_param(const std::string& name, Eigen::MatrixXd init) {
  params_.emplace_back(name, std::move(init));
  return params_.back();
}

ad::Parameter& Model::p(const std::string& name) {
  for (auto& prm : params_)
    if (prm.name == name) return prm;
  fail(Error::Kind::Runtime, "unknown parameter: " + name);
}

const ad::Parameter& Model::p(const std::string& name) const {
  for (const auto& prm : params_)
    if (prm.name == name) return prm;
  fail(Error::Kind::Runtime, "unknown parameter: " + name);
}

ad::Parameter* Model::find_parameter(const std::string& name) {
  for (auto& prm : params_)
    if (prm.name == name) return &prm;
  return nullptr;
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  out.reserve(params_.size());
  for (auto& prm : params_) out.push_back(&prm);
  return out;
}

std::vector<const ad::Parameter*> Model::parameters() const {
  std::vector<const ad::Parameter*> out;
  out.reserve(params_.size());
  for (const auto& prm : params_) out.push_back(&prm);
  return out;
}

std::uint64_t Model::parameter_fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& prm : params_) {
    h = fnv1a64(prm.name, h);
    for (long i = 0; i < prm.value.size(); ++i) {
      std::uint64_t bits;
      double v = prm.value.data()[i];
      std::memcpy(&bits, &v, 8);
      h = fnv1a64_u64(bits, h);
    }
  }
  return h;
}

ad::NodeId Model::maybe_dropout(ad::Tape& tape, ad::NodeId x, Rng* dropout_rng) const {
  if (dropout_rng == nullptr || cfg_.dropout <= 0.0) return x;
  return tape.dropout(x, cfg_.dropout, *dropout_rng);
}

ad::NodeId Model::layer_norm(ad::Tape& tape, const std::string& prefix, ad::NodeId x) {
  ad::NodeId n = tape.layer_norm_rows(x);
  n = tape.mul_rowvec(n, tape.param(p(prefix + ".g")));
  return tape.add_rowvec(n, tape.param(p(prefix + ".b")));
}

ad::NodeId Model::attention(ad::Tape& tape, const std::string& prefix, ad::NodeId queries_in,
                            ad::NodeId keys_in, bool causal) {
  int dh = cfg_.head_dim();
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  long tq = tape.value(queries_in).rows();
  long tk = tape.value(keys_in).rows();
  ad::NodeId mask = -1;
  if (causal) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(tq, tk);
    for (long r = 0; r < tq; ++r)
      for (long c = r + 1; c < tk; ++c) m(r, c) = -1e9;
    mask = tape.constant(std::move(m));
  }
  ad::NodeId out = -1;
  for (int h = 0; h < cfg_.heads; ++h) {
    std::string hp = prefix + ".h" + std::to_string(h);
    ad::NodeId q = tape.matmul(queries_in, tape.param(p(hp + ".wq")));
    ad::NodeId k = tape.matmul(keys_in, tape.param(p(hp + ".wk")));
    ad::NodeId v = tape.matmul(keys_in, tape.param(p(hp + ".wv")));
    ad::NodeId scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
    if (causal) scores = tape.add(scores, mask);
    ad::NodeId ctx = tape.matmul(tape.softmax_rows(scores), v);
    ad::NodeId proj = tape.matmul(ctx, tape.param(p(hp + ".wo")));
    out = out < 0 ? proj : tape.add(out, proj);
  }
  return out;
}

ad::NodeId Model::ffn(ad::Tape& tape, const std::string& prefix, ad::NodeId x, Rng* dropout_rng) {
  ad::NodeId h = tape.add_rowvec(tape.matmul(x, tape.param(p(prefix + ".w1"))),
                                 tape.param(p(prefix + ".b1")));
  h = tape.relu(h);
  h = maybe_dropout(tape, h, dropout_rng);
  return tape.add_rowvec(tape.matmul(h, tape.param(p(prefix + ".w2"))),
                         tape.param(p(prefix + ".b2")));
}

namespace {

std::vector<int> iota_ids(long n) {
  std::vector<int> v(static_cast<size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

ad::NodeId Model::encode(ad::Tape& tape, const std::vector<int>& src_ids, Rng* dropout_rng) {
  if (src_ids.empty()) fail(Error::Kind::InvalidArgument, "source sequence is empty");
  if (static_cast<int>(src_ids.size()) > cfg_.max_len)
    fail(Error::Kind::InvalidArgument,
         "source length " + std::to_string(src_ids.size()) + " exceeds max length " +
             std::to_string(cfg_.max_len));
  ad::NodeId x = tape.add(tape.rows(tape.param(p("embed")), src_ids),
                          tape.rows(tape.param(p("pos_enc")), iota_ids(src_ids.size())));
  x = maybe_dropout(tape, x, dropout_rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string lp = "enc" + std::to_string(l);
    ad::NodeId a = layer_norm(tape, lp + ".ln1", x);
    x = tape.add(x, maybe_dropout(tape, attention(tape, lp + ".attn", a, a, false), dropout_rng));
    ad::NodeId b = layer_norm(tape, lp + ".ln2", x);
    x = tape.add(x, maybe_dropout(tape, ffn(tape, lp + ".ffn", b, dropout_rng), dropout_rng));
  }
  return layer_norm(tape, "enc_final", x);
}

DecodeTrace Model::forward(ad::Tape& tape, const std::vector<int>& src_ids,
                           const std::vector<int>& tgt_ids, Rng* dropout_rng) {
  ad::NodeId enc_out = encode(tape, src_ids, dropout_rng);

  std::vector<int> dec_in;
  dec_in.reserve(tgt_ids.size() + 1);
  dec_in.push_back(Vocabulary::kBos);
  dec_in.insert(dec_in.end(), tgt_ids.begin(), tgt_ids.end());
  long t_steps = static_cast<long>(dec_in.size());
  if (t_steps > cfg_.max_len)
    fail(Error::Kind::InvalidArgument,
         "target length " + std::to_string(tgt_ids.size()) + " exceeds max length " +
             std::to_string(cfg_.max_len - 1));
  for (int id : dec_in)
    if (id < 0 || id >= vocab_.size())
      fail(Error::Kind::InvalidArgument, "target token id out of vocabulary");
  for (int id : src_ids)
    if (id < 0 || id >= vocab_.size())
      fail(Error::Kind::InvalidArgument, "source token id out of vocabulary");

  ad::NodeId y = tape.add(tape.rows(tape.param(p("embed")), dec_in),
                          tape.rows(tape.param(p("pos_dec")), iota_ids(t_steps)));
  y = maybe_dropout(tape, y, dropout_rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string lp = "dec" + std::to_string(l);
    ad::NodeId a = layer_norm(tape, lp + ".ln1", y);
    y = tape.add(y, maybe_dropout(tape, attention(tape, lp + ".self", a, a, true), dropout_rng));
    ad::NodeId b = layer_norm(tape, lp + ".ln2", y);
    y = tape.add(y,
                 maybe_dropout(tape, attention(tape, lp + ".cross", b, enc_out, false), dropout_rng));
    ad::NodeId c = layer_norm(tape, lp + ".ln3", y);
    y = tape.add(y, maybe_dropout(tape, ffn(tape, lp + ".ffn", c, dropout_rng), dropout_rng));
  }
  ad::NodeId hidden = layer_norm(tape, "dec_final", y);

  DecodeTrace trace;
  trace.hidden = hidden;
  trace.probs = tape.softmax_rows(tape.matmul(hidden, tape.transpose(tape.param(p("embed")))));
  trace.targets = tgt_ids;
  trace.targets.push_back(Vocabulary::kEos);

  ad::NodeId head_in = cfg_.detach_heads ? tape.detach(hidden) : hidden;
  if (cfg_.sentence_head) {
    ad::NodeId last = tape.rows(head_in, {static_cast<int>(t_steps - 1)});
    trace.sentence_prob = tape.sigmoid(
        tape.add(tape.matmul(last, tape.param(p("sent_head.w"))), tape.param(p("sent_head.b"))));
  }
  if (cfg_.token_head) {
    trace.token_probs = tape.sigmoid(tape.add_rowvec(
        tape.matmul(head_in, tape.param(p("tok_head.w"))), tape.param(p("tok_head.b"))));
  }
  return trace;
}

std::vector<double> Model::gold_probs(const ad::Tape& tape, const DecodeTrace& trace) const {
  const Eigen::MatrixXd& pm = tape.value(trace.probs);
  std::vector<double> out(trace.targets.size());
  for (size_t t = 0; t < trace.targets.size(); ++t)
    out[t] = pm(static_cast<long>(t), trace.targets[t]);
  return out;
}

double Model::sentence_score(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids) {
  ad::Tape tape;
  DecodeTrace trace = forward(tape, src_ids, tgt_ids, nullptr);
  if (cfg_.sentence_head) return tape.value(trace.sentence_prob)(0, 0);
  if (cfg_.token_head) {
    const auto& tp = tape.value(trace.token_probs);
    return tp(tp.rows() - 1, 0);
  }
  fail(Error::Kind::Runtime, "model has no discrimination head");
}

std::vector<double> Model::token_scores(const std::vector<int>& src_ids,
                                        const std::vector<int>& tgt_ids) {
  if (!cfg_.token_head) fail(Error::Kind::Runtime, "model has no token head");
  ad::Tape tape;
  DecodeTrace trace = forward(tape, src_ids, tgt_ids, nullptr);
  const auto& tp = tape.value(trace.token_probs);
  std::vector<double> out(static_cast<size_t>(tp.rows()));
  for (long t = 0; t < tp.rows(); ++t) out[static_cast<size_t>(t)] = tp(t, 0);
  return out;
}

std::vector<int> Model::greedy_decode(const std::vector<int>& src_ids, int max_steps) {
  std::vector<int> cur;
  for (int step = 0; step < max_steps; ++step) {
    ad::Tape tape;
    DecodeTrace trace = forward(tape, src_ids, cur, nullptr);
    const Eigen::MatrixXd& pm = tape.value(trace.probs);
    long last = pm.rows() - 1;
    int best = 0;
    pm.row(last).maxCoeff(&best);
    if (best == Vocabulary::kEos) break;
    cur.push_back(best);
    if (static_cast<int>(cur.size()) + 1 >= cfg_.max_len) break;
  }
  return cur;
}

NucleusSupport nucleus_filter(const Eigen::RowVectorXd& probs, double top_p) {
  if (!(top_p > 0.0 && top_p <= 1.0))
    fail(Error::Kind::InvalidArgument, "top_p must lie in (0, 1]");
  std::vector<int> order(static_cast<size_t>(probs.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs(a) > probs(b); });
  NucleusSupport sup;
  double cum = 0.0;
  for (int id : order) {
    sup.ids.push_back(id);
    cum += probs(id);
    if (cum >= top_p) break;
  }
  sup.probs.resize(sup.ids.size());
  for (size_t i = 0; i < sup.ids.size(); ++i)
    sup.probs[i] = probs(sup.ids[i]) / cum;
  return sup;
}

std::vector<std::vector<int>> Model::sample_continuations(const std::vector<int>& src_ids,
                                                          const std::vector<int>& prefix_ids,
                                                          int k, double top_p, int max_steps,
                                                          Rng& rng) {
  if (k < 0) fail(Error::Kind::InvalidArgument, "sample count must be non-negative");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<size_t>(k));
  for (int s = 0; s < k; ++s) {
    std::vector<int> cur = prefix_ids;
    for (int step = 0; step < max_steps; ++step) {
      ad::Tape tape;
      DecodeTrace trace = forward(tape, src_ids, cur, nullptr);
      const Eigen::MatrixXd& pm = tape.value(trace.probs);
      NucleusSupport sup = nucleus_filter(pm.row(pm.rows() - 1), top_p);
      double u = rng.uniform();
      double cum = 0.0;
      int chosen = sup.ids.back();
      for (size_t i = 0; i < sup.ids.size(); ++i) {
        cum += sup.probs[i];
        if (u < cum) {
          chosen = sup.ids[i];
          break;
        }
      }
      if (chosen == Vocabulary::kEos) break;
      cur.push_back(chosen);
      if (static_cast<int>(cur.size()) + 1 >= cfg_.max_len) break;
    }
    out.push_back(std::move(cur));
  }
  return out;
}

namespace {

void append_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

void append_u64(std::string& buf, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) fail(Error::Kind::Io, "checkpoint file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

constexpr char kCkptMagic[9] = "R2D2CKP1";

}  // namespace

void Model::save(const std::string& path) const {
  json cfg_json = {
      {"d_model", cfg_.d_model},     {"layers", cfg_.layers},
      {"heads", cfg_.heads},         {"ffn_mult", cfg_.ffn_mult},
      {"dropout", cfg_.dropout},     {"max_len", cfg_.max_len},
      {"sentence_head", cfg_.sentence_head}, {"token_head", cfg_.token_head},
      {"detach_heads", cfg_.detach_heads},
      {"init_seed", cfg_.init_seed}, {"vocab", vocab_.tokens()},
  };
  std::string header = cfg_json.dump();

  std::string buf;
  buf.append(kCkptMagic, 8);
  append_u32(buf, 1);
  append_u64(buf, header.size());
  buf += header;
  append_u32(buf, static_cast<std::uint32_t>(params_.size()));
  for (const auto& prm : params_) {
    append_u64(buf, prm.name.size());
    buf += prm.name;
    append_u32(buf, static_cast<std::uint32_t>(prm.value.rows()));
    append_u32(buf, static_cast<std::uint32_t>(prm.value.cols()));
    size_t nbytes = static_cast<size_t>(prm.value.size()) * 8;
    size_t off = buf.size();
    buf.resize(off + nbytes);
    std::memcpy(buf.data() + off, prm.value.data(), nbytes);
  }
  write_file(path, buf);
}

Model Model::load(const std::string& path) {
  std::string buf = read_file(path);
  Cursor cur{buf};
  if (cur.bytes(8) != std::string(kCkptMagic, 8))
    fail(Error::Kind::Io, "not a model checkpoint: " + path);
  std::uint32_t version = cur.u32();
  if (version != 1)
    fail(Error::Kind::Io, "unsupported checkpoint version " + std::to_string(version));
  std::uint64_t hlen = cur.u64();
  json cfg_json = json::parse(cur.bytes(hlen));

  ModelConfig cfg;
  cfg.d_model = cfg_json.at("d_model").get<int>();
  cfg.layers = cfg_json.at("layers").get<int>();
  cfg.heads = cfg_json.at("heads").get<int>();
  cfg.ffn_mult = cfg_json.at("ffn_mult").get<int>();
  cfg.dropout = cfg_json.at("dropout").get<double>();
  cfg.max_len = cfg_json.at("max_len").get<int>();
  cfg.sentence_head = cfg_json.at("sentence_head").get<bool>();
  cfg.token_head = cfg_json.at("token_head").get<bool>();
  cfg.detach_heads = cfg_json.at("detach_heads").get<bool>();
  cfg.init_seed = cfg_json.at("init_seed").get<std::uint64_t>();
  Vocabulary vocab = Vocabulary::from_token_list(cfg_json.at("vocab").get<std::vector<std::string>>());

  Model model(cfg, std::move(vocab));
  std::uint32_t count = cur.u32();
  if (count != model.params_.size())
    fail(Error::Kind::Io, "checkpoint parameter count mismatch: file has " +
                              std::to_string(count) + ", model expects " +
                              std::to_string(model.params_.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t nlen = cur.u64();
    std::string name = cur.bytes(nlen);
    std::uint32_t rows = cur.u32();
    std::uint32_t cols = cur.u32();
    ad::Parameter* prm = model.find_parameter(name);
    if (prm == nullptr) fail(Error::Kind::Io, "checkpoint has unknown parameter: " + name);
    if (prm->value.rows() != static_cast<long>(rows) ||
        prm->value.cols() != static_cast<long>(cols))
      fail(Error::Kind::Io, "checkpoint shape mismatch for " + name);
    size_t nbytes = static_cast<size_t>(rows) * cols * 8;
    std::string data = cur.bytes(nbytes);
    std::memcpy(prm->value.data(), data.data(), nbytes);
  }
  if (cur.pos != buf.size()) fail(Error::Kind::Io, "trailing bytes in checkpoint: " + path);
  return model;
}

std::vector<std::string> copy_matching_params(const Model& src, Model& dst) {
  std::vector<std::string> copied;
  for (const ad::Parameter* sp : src.parameters()) {
    ad::Parameter* dp = dst.find_parameter(sp->name);
    if (dp == nullptr) continue;
    if (dp->value.rows() != sp->value.rows() || dp->value.cols() != sp->value.cols()) continue;
    dp->value = sp->value;
    copied.push_back(sp->name);
  }
  return copied;
}

}  // namespace r2d2
