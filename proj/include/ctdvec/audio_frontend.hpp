// ctdvec/audio_frontend.hpp
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

// PCM WAV I/O and the log-Mel filterbank front end:
//   preemphasis -> Hamming-windowed frames -> |DFT| -> triangular Mel bank
//   -> log with floor -> per-utterance mean normalization.

#ifndef CTDVEC_AUDIO_FRONTEND_HPP
#define CTDVEC_AUDIO_FRONTEND_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ctdvec/base.hpp"
#include "ctdvec/binary_io.hpp"
#include "ctdvec/fft.hpp"

namespace ctdvec {

struct Waveform {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = 16000;

  double DurationSeconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

inline bool IsSupportedSampleRate(int hz) { return hz == 8000 || hz == 16000; }

// ---------------------------------------------------------------------------
// WAV

inline std::string EncodeWav(const Waveform &w) {
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(w.samples.size() * 2);
  ByteWriter out;
  out.PutMagic("RIFF");
  out.PutU32(36 + data_bytes);
  out.PutMagic("WAVE");
  out.PutMagic("fmt ");
  out.PutU32(16);
  out.PutU16(1);  // PCM
  out.PutU16(1);  // mono
  out.PutU32(static_cast<std::uint32_t>(w.sample_rate_hz));
  out.PutU32(static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  out.PutU16(2);
  out.PutU16(16);
  out.PutMagic("data");
  out.PutU32(data_bytes);
  for (std::int16_t s : w.samples) out.PutI16(s);
  return std::move(out.bytes());
}

inline Waveform DecodeWav(std::string_view bytes, const std::string &source) {
  ByteReader in(bytes, source);
  auto malformed = [&](const char *what) {
    Fail(ErrorCode::kMalformedHeader, source, ": ", what);
  };
  if (bytes.size() < 12) malformed("too short for a RIFF header");
  if (in.GetBytes(4) != "RIFF") malformed("missing RIFF tag");
  in.GetU32();
  if (in.GetBytes(4) != "WAVE") malformed("missing WAVE tag");

  bool have_fmt = false;
  Waveform w;
  while (true) {
    if (in.remaining() < 8) {
      if (!have_fmt) malformed("no fmt chunk");
      malformed("no data chunk");
    }
    std::string_view id = in.GetBytes(4);
    std::uint32_t size = in.GetU32();
    if (id == "fmt ") {
      if (size < 16 || in.remaining() < size) malformed("bad fmt chunk");
      std::uint16_t format = in.GetU16();
      std::uint16_t channels = in.GetU16();
      std::uint32_t rate = in.GetU32();
      in.GetU32();  // byte rate
      in.GetU16();  // block align
      std::uint16_t bits = in.GetU16();
      in.GetBytes(size - 16);
      if (size % 2) in.GetBytes(1);
      if (format != 1 || bits != 16 || channels != 1)
        Fail(ErrorCode::kUnsupportedEncoding, source, ": format ", format,
             ", ", channels, " channel(s), ", bits,
             " bits; only 16-bit PCM mono is supported");
      if (!IsSupportedSampleRate(static_cast<int>(rate)))
        Fail(ErrorCode::kUnsupportedEncoding, source, ": sample rate ", rate,
             " (supported: 8000, 16000)");
      w.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) malformed("data chunk before fmt chunk");
      if (size == 0) Fail(ErrorCode::kEmptyData, source, ": empty data chunk");
      if (size % 2) malformed("odd data chunk size for 16-bit audio");
      if (in.remaining() < size)
        Fail(ErrorCode::kTruncated, source, ": data chunk declares ", size,
             " bytes, file holds ", in.remaining());
      w.samples.resize(size / 2);
      for (auto &s : w.samples) s = in.GetI16();
      return w;
    } else {
      if (in.remaining() < size) malformed("chunk overruns file");
      in.GetBytes(size + (size % 2 ? 1 : 0));
    }
  }
}

inline Waveform ReadWav(const std::filesystem::path &path) {
  return DecodeWav(ReadFileBytes(path), path.string());
}

inline void WriteWav(const Waveform &w, const std::filesystem::path &path) {
  WriteFileBytes(path, EncodeWav(w));
}

// ---------------------------------------------------------------------------
// Features

/// T x D row-major features, T frames at `frame_shift_ms`.
struct FeatureMatrix {
  MatrixR<float> data;
  int frame_shift_ms = 10;

  FeatureMatrix() = default;
  explicit FeatureMatrix(MatrixR<float> m, int shift_ms = 10)
      : data(std::move(m)), frame_shift_ms(shift_ms) {}

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  bool empty() const { return data.rows() == 0; }
  bool AllFinite() const { return data.allFinite(); }
};

struct FbankConfig {
  int num_mel_bins = 40;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  double low_freq_hz = 20.0;
  /// Unset means nyquist - 40 Hz.
  std::optional<double> high_freq_hz;
  double log_floor = 1e-10;
  bool apply_cmn = true;

  double HighFreq(int sample_rate) const {
    return high_freq_hz ? *high_freq_hz : sample_rate / 2.0 - 40.0;
  }
  int FrameLength(int sample_rate) const {
    return static_cast<int>(std::lround(sample_rate * frame_length_ms / 1000.0));
  }
  int FrameShift(int sample_rate) const {
    return static_cast<int>(std::lround(sample_rate * frame_shift_ms / 1000.0));
  }
  void Validate(int sample_rate) const {
    if (num_mel_bins < 1) Fail(ErrorCode::kConfig, "num_mel_bins must be positive");
    if (frame_length_ms <= 0 || frame_shift_ms <= 0)
      Fail(ErrorCode::kConfig, "frame length/shift must be positive");
    double high = HighFreq(sample_rate);
    if (!(low_freq_hz > 0 && low_freq_hz < high && high <= sample_rate / 2.0))
      Fail(ErrorCode::kConfig, "need 0 < low_freq (", low_freq_hz,
           ") < high_freq (", high, ") <= nyquist (", sample_rate / 2.0, ")");
    if (!(log_floor > 0)) Fail(ErrorCode::kConfig, "log_floor must be positive");
  }
};

inline double HzToMel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double MelToHz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

/// Number of full frames: 1 + floor((n - len) / shift) when n >= len, else 0.
inline std::int64_t NumFrames(std::int64_t num_samples, int frame_length,
                              int frame_shift) {
  if (num_samples < frame_length) return 0;
  return 1 + (num_samples - frame_length) / frame_shift;
}

/// Center frequency (Hz) of Mel bin `k` under `cfg` at `sample_rate`.
inline double MelBinCenterHz(const FbankConfig &cfg, int sample_rate, int k) {
  double lo = HzToMel(cfg.low_freq_hz), hi = HzToMel(cfg.HighFreq(sample_rate));
  double delta = (hi - lo) / (cfg.num_mel_bins + 1);
  return MelToHz(lo + (k + 1) * delta);
}

/// Triangular filters in the Mel domain, sampled at FFT bin frequencies.
class MelBank {
 public:
  MelBank(const FbankConfig &cfg, int sample_rate, std::size_t fft_size)
      : weights_(cfg.num_mel_bins, std::vector<double>(fft_size / 2 + 1, 0.0)) {
    double lo = HzToMel(cfg.low_freq_hz), hi = HzToMel(cfg.HighFreq(sample_rate));
    double delta = (hi - lo) / (cfg.num_mel_bins + 1);
    double bin_hz = static_cast<double>(sample_rate) / fft_size;
    for (int m = 0; m < cfg.num_mel_bins; ++m) {
      double left = lo + m * delta, center = left + delta, right = center + delta;
      for (std::size_t k = 0; k <= fft_size / 2; ++k) {
        double mel = HzToMel(k * bin_hz);
        if (mel > left && mel < right) {
          weights_[m][k] =
              mel <= center ? (mel - left) / delta : (right - mel) / delta;
        }
      }
    }
  }

  void Apply(std::span<const double> magnitude, std::span<double> out) const {
    for (std::size_t m = 0; m < weights_.size(); ++m) {
      double acc = 0.0;
      const auto &w = weights_[m];
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * magnitude[k];
      out[m] = acc;
    }
  }

 private:
  std::vector<std::vector<double>> weights_;
};

/// Subtracts each column's mean in place.
inline void ApplyCmn(FeatureMatrix &f) {
  if (f.rows() == 0) return;
  Eigen::RowVectorXd mean = f.data.cast<double>().colwise().mean();
  for (Eigen::Index t = 0; t < f.rows(); ++t)
    for (Eigen::Index d = 0; d < f.cols(); ++d)
      f.data(t, d) = static_cast<float>(f.data(t, d) - mean(d));
}

namespace detail {

/// Preemphasized, windowed frames of `w`; calls fn(t, frame) per frame.
template <typename Fn>
void ForEachFrame(const Waveform &w, const FbankConfig &cfg, Fn &&fn) {
  const int len = cfg.FrameLength(w.sample_rate_hz);
  const int shift = cfg.FrameShift(w.sample_rate_hz);
  const std::int64_t num_frames =
      NumFrames(static_cast<std::int64_t>(w.samples.size()), len, shift);
  std::vector<double> emphasized(w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    double prev = i == 0 ? w.samples[0] : w.samples[i - 1];
    emphasized[i] = w.samples[i] - cfg.preemphasis * prev;
  }
  std::vector<double> window(len);
  for (int i = 0; i < len; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (len - 1));
  std::vector<double> frame(len);
  for (std::int64_t t = 0; t < num_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * shift;
    for (int i = 0; i < len; ++i) frame[i] = emphasized[start + i] * window[i];
    fn(t, std::span<const double>(frame));
  }
}

}  // namespace detail

/// Log-Mel energies without mean normalization.
inline FeatureMatrix ComputeLogMel(const Waveform &w, const FbankConfig &cfg) {
  if (!IsSupportedSampleRate(w.sample_rate_hz))
    Fail(ErrorCode::kUnsupportedEncoding, "sample rate ", w.sample_rate_hz);
  cfg.Validate(w.sample_rate_hz);
  const int len = cfg.FrameLength(w.sample_rate_hz);
  const std::int64_t num_frames =
      NumFrames(static_cast<std::int64_t>(w.samples.size()), len,
                cfg.FrameShift(w.sample_rate_hz));
  if (num_frames == 0)
    Fail(ErrorCode::kEmptyFeature, "utterance of ", w.samples.size(),
         " samples is shorter than one frame (", len, ")");

  Fft fft(NextPowerOfTwo(static_cast<std::size_t>(len)));
  MelBank bank(cfg, w.sample_rate_hz, fft.size());
  std::vector<std::complex<double>> scratch;
  std::vector<double> magnitude(fft.size() / 2 + 1), energies(cfg.num_mel_bins);
  MatrixR<float> out(num_frames, cfg.num_mel_bins);
  detail::ForEachFrame(w, cfg, [&](std::int64_t t, std::span<const double> frame) {
    fft.RealMagnitude(frame, magnitude, scratch);
    bank.Apply(magnitude, energies);
    for (int m = 0; m < cfg.num_mel_bins; ++m)
      out(t, m) = static_cast<float>(std::log(std::max(energies[m], cfg.log_floor)));
  });
  return FeatureMatrix(std::move(out), static_cast<int>(std::lround(cfg.frame_shift_ms)));
}

/// Fbank features; mean-normalized per utterance when cfg.apply_cmn.
inline FeatureMatrix ComputeFbank(const Waveform &w, const FbankConfig &cfg) {
  FeatureMatrix f = ComputeLogMel(w, cfg);
  if (cfg.apply_cmn) ApplyCmn(f);
  return f;
}

/// Row t of the output is rows t-left .. t+right of `f` concatenated; rows
/// outside the utterance are replaced by the nearest edge row.
inline FeatureMatrix SpliceFrames(const FeatureMatrix &f, int left = 4,
                                  int right = 4) {
  if (f.empty()) Fail(ErrorCode::kEmptyFeature, "cannot splice an empty feature matrix");
  if (left < 0 || right < 0) Fail(ErrorCode::kConfig, "splice context must be non-negative");
  const Eigen::Index rows = f.rows(), dim = f.cols();
  const int width = left + right + 1;
  MatrixR<float> out(rows, dim * width);
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int o = -left; o <= right; ++o) {
      Eigen::Index src = std::clamp<Eigen::Index>(t + o, 0, rows - 1);
      out.block(t, (o + left) * dim, 1, dim) = f.data.row(src);
    }
  }
  return FeatureMatrix(std::move(out), f.frame_shift_ms);
}

/// Optional 60-d MFCC export: c1..c19 + log energy, with deltas and
/// delta-deltas.  Nothing in the verification pipeline consumes it.
inline FeatureMatrix ComputeMfcc(const Waveform &w, FbankConfig cfg, int num_ceps = 19) {
  cfg.apply_cmn = false;
  FeatureMatrix logmel = ComputeLogMel(w, cfg);
  const int bins = cfg.num_mel_bins;
  if (num_ceps >= bins) Fail(ErrorCode::kConfig, "num_ceps must be < num_mel_bins");
  const Eigen::Index rows = logmel.rows();
  Eigen::MatrixXd base(rows, num_ceps + 1);
  std::vector<double> energy(rows);
  detail::ForEachFrame(w, cfg, [&](std::int64_t t, std::span<const double> frame) {
    double e = 0.0;
    for (double v : frame) e += v * v;
    energy[t] = std::log(std::max(e, cfg.log_floor));
  });
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int c = 1; c <= num_ceps; ++c) {
      double acc = 0.0;
      for (int m = 0; m < bins; ++m)
        acc += logmel.data(t, m) * std::cos(std::numbers::pi * c * (m + 0.5) / bins);
      base(t, c - 1) = acc * std::sqrt(2.0 / bins);
    }
    base(t, num_ceps) = energy[t];
  }
  auto delta = [rows](const Eigen::MatrixXd &x) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < rows; ++t) {
      for (int n = 1; n <= 2; ++n) {
        Eigen::Index fwd = std::min<Eigen::Index>(t + n, rows - 1);
        Eigen::Index back = std::max<Eigen::Index>(t - n, 0);
        d.row(t) += n * (x.row(fwd) - x.row(back));
      }
    }
    return Eigen::MatrixXd(d / 10.0);
  };
  Eigen::MatrixXd d1 = delta(base), d2 = delta(d1);
  MatrixR<float> out(rows, 3 * (num_ceps + 1));
  out << base.cast<float>(), d1.cast<float>(), d2.cast<float>();
  return FeatureMatrix(std::move(out), logmel.frame_shift_ms);
}

// ---------------------------------------------------------------------------
// Feature archive: "FEAT", u32 version, u32 rows, u32 cols, float32 data.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline std::string EncodeFeatures(const FeatureMatrix &f) {
  ByteWriter out;
  out.PutMagic("FEAT");
  out.PutU32(kFeatureFormatVersion);
  out.PutU32(static_cast<std::uint32_t>(f.rows()));
  out.PutU32(static_cast<std::uint32_t>(f.cols()));
  out.PutF32Array(std::span<const float>(f.data.data(), f.data.size()));
  return std::move(out.bytes());
}

inline FeatureMatrix DecodeFeatures(std::string_view bytes, const std::string &source) {
  ByteReader in(bytes, source);
  in.ExpectMagic("FEAT");
  in.ExpectVersion(kFeatureFormatVersion);
  std::uint32_t rows = in.GetU32(), cols = in.GetU32();
  if (in.remaining() < static_cast<std::size_t>(rows) * cols * 4)
    Fail(ErrorCode::kTruncated, source, ": ", rows, "x", cols,
         " features declared, only ", in.remaining(), " bytes left");
  MatrixR<float> m(rows, cols);
  in.GetF32Array(std::span<float>(m.data(), m.size()));
  in.ExpectEnd();
  return FeatureMatrix(std::move(m));
}

inline void WriteFeatures(const FeatureMatrix &f, const std::filesystem::path &path) {
  WriteFileBytes(path, EncodeFeatures(f));
}

inline FeatureMatrix ReadFeatures(const std::filesystem::path &path) {
  return DecodeFeatures(ReadFileBytes(path), path.string());
}

/// One line per utterance: "<utt-id> <speaker-id> <feature-path>".
struct FeatureEntry {
  std::string utt_id;
  std::string speaker_id;
  std::string path;
};

inline void WriteFeatureManifest(const std::vector<FeatureEntry> &entries,
                                 const std::filesystem::path &path) {
  std::string text;
  for (const auto &e : entries) text += e.utt_id + ' ' + e.speaker_id + ' ' + e.path + '\n';
  WriteFileBytes(path, text);
}

inline std::vector<FeatureEntry> ReadFeatureManifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open feature manifest ", path.string());
  std::vector<FeatureEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    FeatureEntry e;
    if (!(is >> e.utt_id >> e.speaker_id >> e.path))
      Fail(ErrorCode::kMalformedHeader, path.string(), ":", lineno,
           ": expected '<utt-id> <speaker-id> <path>'");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace ctdvec

#endif  // CTDVEC_AUDIO_FRONTEND_HPP
