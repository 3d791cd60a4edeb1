#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace smile {

/// Base class for all errors raised by this library. `category()` is stable
/// and machine-readable; the CLI maps it onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

/// Mismatched or otherwise invalid tensor shapes.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

/// Non-finite values, NaN inputs, and other numeric breakdowns.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

/// Invalid configuration: bad hyperparameters, unknown keys, missing files,
/// mode mismatches.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

/// Training diverged (non-finite or exploding loss).
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& msg) : Error("divergence", msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic hashing and seed derivation
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a running hash. Used for dataset/checkpoint digests and for
/// deriving independent RNG sub-streams from a base seed.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= static_cast<std::uint64_t>(p[i]);
      h_ *= 0x100000001b3ULL;
    }
  }
  void update_u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    update(b, 8);
  }
  void update_str(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hex_digest(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
  return std::string(buf);
}

/// Derives an independent 64-bit seed from (base, tag, indices...). Streams
/// with distinct tags or indices never collide in practice, and derivation is
/// a pure function, so any part of a run can be reproduced in isolation.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  Fnv1a h;
  h.update_u64(base);
  h.update_str(tag);
  h.update_u64(a);
  h.update_u64(b);
  return h.digest();
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Round-trip-exact, locale-independent double formatting for CSV/report
/// output. Identical runs must produce byte-identical files.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace smile
