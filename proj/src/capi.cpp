#include "r2d2/r2d2.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <new>
#include <string>

#include "losses.hpp"
#include "pipeline.hpp"
#include "util.hpp"

struct r2d2_session {
  r2d2::pipeline::json config = r2d2::pipeline::default_config();
  std::string last_error;
};

namespace {

r2d2_status status_from_kind(r2d2::Error::Kind kind) {
  switch (kind) {
    case r2d2::Error::Kind::InvalidArgument: return R2D2_INVALID_ARGUMENT;
    case r2d2::Error::Kind::Io: return R2D2_IO;
    case r2d2::Error::Kind::Config: return R2D2_CONFIG;
    case r2d2::Error::Kind::Runtime: return R2D2_RUNTIME;
  }
  return R2D2_RUNTIME;
}

template <typename Fn>
r2d2_status guarded(r2d2_session* session, Fn&& fn) {
  if (session == nullptr) return R2D2_INVALID_ARGUMENT;
  session->last_error.clear();
  try {
    fn();
    return R2D2_OK;
  } catch (const r2d2::Error& e) {
    session->last_error = e.what();
    return status_from_kind(e.kind());
  } catch (const std::exception& e) {
    session->last_error = e.what();
    return R2D2_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

template <typename Fn>
double loss_guarded(Fn&& fn) {
  try {
    return fn();
  } catch (...) {
    return kNan;
  }
}

}  // namespace

extern "C" {

const char* r2d2_version(void) { return "1.0.0"; }

r2d2_session* r2d2_session_new(void) { return new (std::nothrow) r2d2_session(); }

void r2d2_session_free(r2d2_session* session) { delete session; }

const char* r2d2_session_last_error(const r2d2_session* session) {
  return session == nullptr ? "" : session->last_error.c_str();
}

r2d2_status r2d2_config_set(r2d2_session* session, const char* dotted_key, const char* value) {
  return guarded(session, [&] {
    if (dotted_key == nullptr || value == nullptr)
      r2d2::fail(r2d2::Error::Kind::InvalidArgument, "key and value must be non-NULL");
    r2d2::pipeline::set_config_key(session->config, dotted_key, value);
  });
}

r2d2_status r2d2_config_load_file(r2d2_session* session, const char* path) {
  return guarded(session, [&] {
    if (path == nullptr) r2d2::fail(r2d2::Error::Kind::InvalidArgument, "path must be non-NULL");
    r2d2::pipeline::json overlay = r2d2::pipeline::load_config_file(path);
    r2d2::pipeline::merge_config(session->config, overlay);
  });
}

char* r2d2_config_resolved(const r2d2_session* session) {
  if (session == nullptr) return nullptr;
  return dup_string(session->config.dump(2));
}

r2d2_status r2d2_run(r2d2_session* session, const char* stage, char** summary) {
  return guarded(session, [&] {
    if (stage == nullptr) r2d2::fail(r2d2::Error::Kind::InvalidArgument, "stage must be non-NULL");
    std::string message = r2d2::pipeline::run_stage(stage, session->config);
    if (summary != nullptr) *summary = dup_string(message);
  });
}

void r2d2_string_free(char* str) { std::free(str); }

double r2d2_loss_rd_sentence(double p_entailed, int label) {
  return loss_guarded([&] { return r2d2::losses::rd_sentence_loss(p_entailed, label); });
}

double r2d2_loss_rd_token(const double* probs, const int* labels, size_t n) {
  return loss_guarded([&] {
    if (n > 0 && (probs == nullptr || labels == nullptr))
      r2d2::fail(r2d2::Error::Kind::InvalidArgument, "null input");
    return r2d2::losses::rd_token_loss({probs, n}, {labels, n});
  });
}

double r2d2_loss_unlikelihood(const double* gold_probs, const int* span_mask, size_t n) {
  return loss_guarded([&] {
    if (n > 0 && (gold_probs == nullptr || span_mask == nullptr))
      r2d2::fail(r2d2::Error::Kind::InvalidArgument, "null input");
    return r2d2::losses::unlikelihood_loss({gold_probs, n}, {span_mask, n});
  });
}

double r2d2_loss_nll(const double* gold_probs, size_t n) {
  return loss_guarded([&] {
    if (n > 0 && gold_probs == nullptr)
      r2d2::fail(r2d2::Error::Kind::InvalidArgument, "null input");
    return r2d2::losses::nll_loss({gold_probs, n});
  });
}

double r2d2_loss_combined(double nll, const double* ul, size_t n_ul, double rd_true,
                          const double* rd_false, size_t n_rd_false, double lambda) {
  return loss_guarded([&] {
    if ((n_ul > 0 && ul == nullptr) || (n_rd_false > 0 && rd_false == nullptr))
      r2d2::fail(r2d2::Error::Kind::InvalidArgument, "null input");
    return r2d2::losses::r2d2_loss(nll, {ul, n_ul}, rd_true, {rd_false, n_rd_false}, lambda);
  });
}

}  // extern "C"
