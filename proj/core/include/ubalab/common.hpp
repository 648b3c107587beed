#ifndef UBALAB_COMMON_HPP_
#define UBALAB_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace ubalab {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

// The single PRNG used everywhere. Streams are derived, never shared.
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Errors. Every failure surfaced by the library is one of these.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class EmptyMatrixError : public Error {
 public:
  using Error::Error;
};

class InsufficientCandidatesError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Seed derivation.
//
// A child seed is a pure function of (parent seed, stage name, indices):
// FNV-1a over the stage name, then every value folded in with splitmix64.
// Stage names in use: "select-items", "select-users", "accessible",
// "attack", "sim-attack", "sim-train", "victim", "random-alloc",
// "correlate", "repeat".

std::uint64_t SplitMix64(std::uint64_t x);
std::uint64_t DeriveSeed(std::uint64_t parent, std::string_view stage,
                         std::initializer_list<std::uint64_t> indices = {});

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a, 64 bit). Used for fingerprints, cache keys and
// manifest artifact hashes; stable across runs and platforms of equal
// endianness.

class Fnv1a64 {
 public:
  Fnv1a64& Update(const void* data, std::size_t size);
  Fnv1a64& Update(std::string_view s) {
    Update(s.data(), s.size());
    // Length terminator so "ab"+"c" and "a"+"bc" differ.
    return UpdateValue(static_cast<std::uint64_t>(s.size()));
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  Fnv1a64& UpdateValue(const T& value) {
    return Update(&value, sizeof(T));
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  Fnv1a64& UpdateSpan(std::span<const T> values) {
    UpdateValue(static_cast<std::uint64_t>(values.size()));
    return Update(values.data(), values.size_bytes());
  }

  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string HashToHex(std::uint64_t h);
std::uint64_t HashFile(const std::string& path);

// ---------------------------------------------------------------------------
// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// Work items must write to disjoint outputs. If any item throws, the
// exception of the lowest failing index is rethrown after all workers join,
// so error reporting does not depend on scheduling.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn,
                 unsigned threads = 0);

// Formats a double with enough digits to round-trip.
std::string FormatDouble(double v);

std::string LibraryVersion();

}  // namespace ubalab

#endif  // UBALAB_COMMON_HPP_
