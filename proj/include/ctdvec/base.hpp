// ctdvec/base.hpp
//
// Copyright 2026  The ctdvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CTDVEC_BASE_HPP
#define CTDVEC_BASE_HPP

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace ctdvec {

/// Every failure the library reports carries one of these codes, so callers
/// (and the CLI's machine-readable error line) can branch on the kind.
enum class ErrorCode {
  kIo,
  kMalformedHeader,
  kUnsupportedEncoding,
  kEmptyData,
  kEmptyFeature,
  kShape,
  kIndex,
  kUsage,
  kConfig,
  kTooShort,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kNumerical,
  kPrecondition,
  kLabeling,
  kLength,
  kListing,
  kEnrollment,
  kUndefinedScore,
  kTraining,
  kDependency,
};

inline const char *ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMalformedHeader: return "malformed-header";
    case ErrorCode::kUnsupportedEncoding: return "unsupported-encoding";
    case ErrorCode::kEmptyData: return "empty-data";
    case ErrorCode::kEmptyFeature: return "empty-feature";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kIndex: return "index";
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kTooShort: return "too-short";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kLabeling: return "labeling";
    case ErrorCode::kLength: return "length";
    case ErrorCode::kListing: return "listing";
    case ErrorCode::kEnrollment: return "enrollment";
    case ErrorCode::kUndefinedScore: return "undefined-score";
    case ErrorCode::kTraining: return "training";
    case ErrorCode::kDependency: return "dependency";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {
inline void AppendAll(std::ostringstream &) {}
template <typename Arg, typename... Args>
void AppendAll(std::ostringstream &os, const Arg &arg, const Args &...args) {
  os << arg;
  AppendAll(os, args...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void Fail(ErrorCode code, const Args &...args) {
  std::ostringstream os;
  detail::AppendAll(os, args...);
  throw Error(code, os.str());
}

// ---------------------------------------------------------------------------
// Logging.  Messages go to stderr by default; tests install a sink to capture
// warnings.

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3 };

class Logger {
 public:
  using Sink = std::function<void(LogLevel, const std::string &)>;

  static Logger &Instance() {
    static Logger logger;
    return logger;
  }

  void SetSink(Sink sink) {
    std::lock_guard<std::mutex> lock(mutex_);
    sink_ = std::move(sink);
  }
  void SetMinLevel(LogLevel level) { min_level_ = level; }
  LogLevel min_level() const { return min_level_; }

  void Write(LogLevel level, const std::string &msg) {
    if (level < min_level_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    if (sink_) {
      sink_(level, msg);
      return;
    }
    static constexpr const char *kTags[] = {"DEBUG", "INFO", "WARNING",
                                            "ERROR"};
    std::cerr << kTags[static_cast<int>(level)] << ": " << msg << '\n';
  }

 private:
  Logger() = default;
  std::mutex mutex_;
  Sink sink_;
  LogLevel min_level_ = LogLevel::kInfo;
};

template <typename... Args>
void Log(LogLevel level, const Args &...args) {
  if (level < Logger::Instance().min_level()) return;
  std::ostringstream os;
  detail::AppendAll(os, args...);
  Logger::Instance().Write(level, os.str());
}

template <typename... Args>
void LogInfo(const Args &...args) { Log(LogLevel::kInfo, args...); }
template <typename... Args>
void LogWarning(const Args &...args) { Log(LogLevel::kWarning, args...); }

// ---------------------------------------------------------------------------
// Seeds.  One global seed fans out to independent per-purpose seeds.

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t HashString(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view purpose) {
  return SplitMix64(seed ^ HashString(purpose));
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b = 0) {
  return SplitMix64(SplitMix64(SplitMix64(seed) ^ a) ^ (b + 0x51ED27ULL));
}

// ---------------------------------------------------------------------------
// Dense types.

template <typename Real>
using MatrixR =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

/// Runs fn(i) for i in [0, n) on `threads` workers.  Work is statically
/// partitioned, so each index is processed exactly once.
template <typename Fn>
void ParallelFor(std::size_t n, int threads, Fn &&fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ctdvec

#endif  // CTDVEC_BASE_HPP
