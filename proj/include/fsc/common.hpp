#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fsc {

enum class Errc {
  EmptyInput,
  DegenerateExtent,
  InsufficientPoints,
  SizeMismatch,
  NotNormalized,
  EmptyReferenceSet,
  EmptyView,
  InvalidArgument,
  ConfigError,
  IoError,
  NonFiniteGradient,
  NonFiniteLoss,
  NumericError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DegenerateExtent: return "DegenerateExtent";
    case Errc::InsufficientPoints: return "InsufficientPoints";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::EmptyReferenceSet: return "EmptyReferenceSet";
    case Errc::EmptyView: return "EmptyView";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::NumericError: return "NumericError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Deterministic RNG. All draws are fully specified here (no std::
/// distributions, whose output is implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double real01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  uint64_t below(uint64_t n) {
    if (n == 0) fail(Errc::InvalidArgument, "Rng::below(0)");
    if ((n & (n - 1)) == 0) return gen_() & (n - 1);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; pairs cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = real01();
    } while (u1 <= 0.0);
    u2 = real01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Derives a child seed from a root seed and a path of stream tags.
  static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = splitmix64(seed);
    for (uint64_t p : path) h = splitmix64(h ^ splitmix64(p));
    return h;
  }

  std::mt19937_64& engine() { return gen_; }
  const std::mt19937_64& engine() const { return gen_; }

  /// Exact state round-trip: engine text stream plus the cached normal spare.
  std::string save_text() const {
    std::ostringstream os;
    os << gen_ << " " << (have_spare_ ? 1 : 0) << " ";
    uint64_t bits;
    std::memcpy(&bits, &spare_, sizeof(bits));
    os << bits;
    return os.str();
  }

  static Rng load_text(const std::string& text) {
    std::istringstream is(text);
    Rng r(0);
    int flag = 0;
    uint64_t bits = 0;
    is >> r.gen_ >> flag >> bits;
    if (!is) fail(Errc::IoError, "Rng::load_text: malformed state");
    r.have_spare_ = flag != 0;
    std::memcpy(&r.spare_, &bits, sizeof(bits));
    return r;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Worker cap for parallel sections; FSC_THREADS overrides.
inline int thread_budget() {
  if (const char* env = std::getenv("FSC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw > 16 ? 16 : hw);
}

/// Runs fn(i) for i in [0, n). Each index writes only its own slots, so
/// results are identical for any thread count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  const int workers = static_cast<int>(std::min<std::int64_t>(thread_budget(), n));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::atomic<std::int64_t> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fsc
