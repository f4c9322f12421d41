#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace r2d2 {

// Thrown for every contract / IO / config violation in the core.  The C API
// and the CLI translate the category into an error code.
class Error : public std::runtime_error {
 public:
  enum class Kind { InvalidArgument, Io, Config, Runtime };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

[[noreturn]] inline void fail(Error::Kind kind, const std::string& msg) {
  throw Error(kind, msg);
}

// FNV-1a, 64-bit.  Used for seed derivation and artifact checksums.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t x, std::uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xff;
    h *= kFnvPrime;
  }
  return h;
}

// Derives an independent stream seed from a global seed and a list of name
// parts (e.g. {"perturb", example_id}).  Parallel and serial runs agree as
// long as they derive per-item seeds through this.
std::uint64_t derive_seed(std::uint64_t global_seed, std::initializer_list<std::string_view> parts);

// Deterministic RNG wrapper.  All sampling goes through hand-rolled
// transforms so that results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [0, n).  n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller.
  double gaussian();
  // Index drawn with probability weights[i] / sum(weights).
  std::size_t weighted_choice(const std::vector<double>& weights);
  // Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---- small string helpers ----

std::string lowercase(std::string_view s);
bool is_ascii_punct(char c);
// Collapses whitespace runs to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ---- file helpers ----

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
// Non-blank lines of a text file, in order, with 1-based line numbers.
std::vector<std::pair<int, std::string>> read_jsonl_lines(const std::string& path);
bool file_exists(const std::string& path);
// Hex FNV-1a checksum of a file's bytes.
std::string file_checksum(const std::string& path);

}  // namespace r2d2
