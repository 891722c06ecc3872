#ifndef RULEGRAPH_COMMON_H_
#define RULEGRAPH_COMMON_H_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rulegraph {

// Malformed or inconsistent input data (files, indices, configuration).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite objective or likelihood during optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misuse of an API or pipeline stage ordering.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ASCII case folding; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Byte offsets of UTF-8 code point starts, plus a final entry for size().
std::vector<std::size_t> utf8_boundaries(std::string_view s);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Deterministic generator with a fixed output sequence on every platform.
// The standard distributions are implementation-defined, so sampling helpers
// are written out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::string hex64(std::uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

// Fixed-point rendering with `digits` decimals ("%.*f").
std::string format_fixed(double v, int digits);

// Worker count: RULEGRAPH_THREADS when set to a positive integer, else the
// hardware concurrency (at least 1).
int thread_count();

// Calls fn(i) for i in [0, n) on up to `threads` workers. Work items are
// claimed dynamically, so fn must not depend on which worker runs it. The
// first exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace rulegraph

#endif  // RULEGRAPH_COMMON_H_
