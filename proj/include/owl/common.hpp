#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace owl {

inline constexpr const char* kToolVersion = "0.1.0";

// Every failure mode in the pipeline maps to one of these kinds so callers
// (and the CLI) can report machine-parsable errors.
enum class ErrorKind {
  dimension,
  mask,
  label,
  config,
  segment,
  duration,
  parse,
  spec,
  data,
  plan,
  numeric,
  ordering,
  dependency,
  join,
  metadata,
  io,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) {
  throw Error(k, msg);
}

// Deterministic RNG. All sampling goes through explicit transforms of the
// mt19937_64 stream so generated corpora are bit-reproducible regardless of
// how the standard library implements its distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    if (hi < lo) fail(ErrorKind::config, "uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Derived substream; deterministic in (current seed material, tag).
  Rng fork(uint64_t tag) { return Rng(mix(next_u64(), tag)); }

  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over bytes; used for config hashes embedded in artifacts.
uint64_t fnv1a64(const std::string& bytes);

}  // namespace owl
