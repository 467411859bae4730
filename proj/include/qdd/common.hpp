#pragma once

// Shared plumbing: error type, seeded/derivable RNG streams, flat tensor
// aliases and a few numeric helpers used across the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace qdd {

using Vec = std::vector<double>;

// Errors carry a short machine-readable code ("degenerate-dimension",
// "shape-mismatch", "diverged", ...) next to the human-readable message.
// Validation errors map to CLI exit code 1, numerical ones to 2.
enum class ErrorKind { validation, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& what) {
  throw Error(ErrorKind::validation, code, what);
}

[[noreturn]] inline void fail_numerical(const std::string& code, const std::string& what) {
  throw Error(ErrorKind::numerical, code, what);
}

inline void require(bool cond, const std::string& code, const std::string& what) {
  if (!cond) fail(code, what);
}

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
  // FNV-1a, then mixed; used to turn stream names into derivation tags.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(h);
}

// A deterministic random stream. Streams form a tree: derive() creates a
// child whose draws are independent of the parent's position, so work can
// be split per-example / per-episode / per-trial without any ordering
// coupling between workers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed), engine_(splitmix64(seed)) {}

  Rng derive(std::uint64_t tag) const {
    return Rng(splitmix64(key_ ^ splitmix64(tag + 0x51bdCAFEull)));
  }
  Rng derive(std::string_view name) const { return derive(hash_name(name)); }
  Rng derive(std::string_view name, std::uint64_t index) const {
    return derive(hash_name(name) ^ splitmix64(index));
  }

  std::uint64_t key() const { return key_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal() { return normal_(engine_); }

  // Beta(a, b) via two gamma draws; result forced into the open interval.
  double beta(double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    double x = ga(engine_);
    double y = gb(engine_);
    double s = x + y;
    double t = s > 0.0 ? x / s : 0.5;
    t = std::min(t, std::nextafter(1.0, 0.0));
    t = std::max(t, std::nextafter(0.0, 1.0));
    return t;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double l2_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

// Index set [0, n) processed by `threads` workers. Each item must be
// independent (callers give every item its own derived RNG stream), so the
// result does not depend on the worker count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace qdd
