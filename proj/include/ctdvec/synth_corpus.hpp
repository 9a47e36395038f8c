// ctdvec/synth_corpus.hpp
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

// Deterministic multi-speaker corpus of harmonic-plus-formant "speech".
//
// A speaker is a fundamental frequency, three formant resonances and a
// spectral tilt.  An utterance is a sequence of vowel-like segments whose
// formant targets move around the speaker's formants (content), with slow
// f0 drift, amplitude modulation and white noise at a fixed SNR.  Every
// random draw comes from a stream keyed by (seed, speaker, utterance), so
// the output does not depend on generation order or thread count.

#ifndef CTDVEC_SYNTH_CORPUS_HPP
#define CTDVEC_SYNTH_CORPUS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ctdvec/audio_frontend.hpp"
#include "ctdvec/base.hpp"
#include "ctdvec/nn/tensor.hpp"

namespace ctdvec {

struct SynthSpec {
  int num_speakers = 40;
  int utts_per_speaker = 20;
  double utt_seconds = 3.0;
  /// Utterance length is uniform in utt_seconds +- utt_seconds_jitter.
  double utt_seconds_jitter = 0.0;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
  double snr_db = 20.0;
  /// Maximum relative f0 excursion within an utterance.
  double f0_drift = 0.05;
  /// Maximum relative formant excursion of a content segment.
  double content_spread = 0.18;

  void Validate() const {
    if (num_speakers < 2) Fail(ErrorCode::kConfig, "synth: num_speakers must be >= 2");
    if (utts_per_speaker < 1) Fail(ErrorCode::kConfig, "synth: utts_per_speaker must be >= 1");
    if (utt_seconds - utt_seconds_jitter < 0.5)
      Fail(ErrorCode::kConfig, "synth: utterances must be at least 0.5 s");
    if (!IsSupportedSampleRate(sample_rate))
      Fail(ErrorCode::kConfig, "synth: sample_rate must be 8000 or 16000");
  }
};

struct SpeakerVoice {
  double f0_hz = 120.0;
  std::array<double, 3> formant_hz{};
  std::array<double, 3> bandwidth_hz{};
  std::array<double, 3> formant_gain{};
  double tilt_db_per_octave = -6.0;
  /// Per-utterance variation scales.
  double f0_jitter = 0.05;
  double formant_jitter = 0.05;
  double gain_jitter_db = 2.0;
};

inline std::string SpeakerId(int speaker) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%04d", speaker);
  return buf;
}

inline std::string UtteranceId(int speaker, int utt) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%04d-utt%03d", speaker, utt);
  return buf;
}

inline constexpr std::uint64_t kVoiceStream = 0xF0F0F0F0ULL;

inline SpeakerVoice MakeVoice(std::uint64_t seed, int speaker) {
  std::mt19937_64 rng(DeriveSeed(seed, static_cast<std::uint64_t>(speaker), kVoiceStream));
  auto uni = [&](double lo, double hi) { return nn::UniformRange(rng, lo, hi); };
  SpeakerVoice v;
  v.f0_hz = std::exp(uni(std::log(80.0), std::log(300.0)));
  // Formant ranges overlap slightly; sorting keeps them strictly increasing.
  std::array<double, 3> f{uni(300.0, 900.0), uni(850.0, 2400.0), uni(2300.0, 3600.0)};
  std::sort(f.begin(), f.end());
  if (f[1] - f[0] < 100.0) f[1] = f[0] + 100.0;
  if (f[2] - f[1] < 100.0) f[2] = f[1] + 100.0;
  v.formant_hz = f;
  for (int i = 0; i < 3; ++i) {
    v.bandwidth_hz[i] = uni(60.0, 160.0) * (1.0 + 0.5 * i);
    v.formant_gain[i] = uni(0.5, 1.0) / (1.0 + 0.6 * i);
  }
  v.tilt_db_per_octave = uni(-9.0, -3.0);
  v.f0_jitter = uni(0.04, 0.10);
  v.formant_jitter = uni(0.03, 0.07);
  v.gain_jitter_db = uni(1.0, 3.0);
  return v;
}

namespace detail {

inline double SpectralEnvelope(const SpeakerVoice &v, const std::array<double, 3> &formants,
                               double hz) {
  double env = 0.02;
  for (int i = 0; i < 3; ++i) {
    const double d = (hz - formants[i]) / (0.5 * v.bandwidth_hz[i]);
    env += v.formant_gain[i] / (1.0 + d * d);
  }
  return env * std::pow(10.0, v.tilt_db_per_octave * std::log2(std::max(hz, 50.0) / 100.0) / 20.0);
}

}  // namespace detail

/// Renders one utterance of `speaker` deterministically.
inline Waveform SynthesizeUtterance(const SynthSpec &spec, int speaker, int utt) {
  const SpeakerVoice voice = MakeVoice(spec.seed, speaker);
  std::mt19937_64 rng(DeriveSeed(spec.seed, static_cast<std::uint64_t>(speaker),
                                 static_cast<std::uint64_t>(utt) + 1));
  auto uni = [&](double lo, double hi) { return nn::UniformRange(rng, lo, hi); };

  const double seconds = spec.utt_seconds + uni(-spec.utt_seconds_jitter, spec.utt_seconds_jitter);
  const int sr = spec.sample_rate;
  const std::size_t num_samples = static_cast<std::size_t>(std::lround(seconds * sr));
  const double nyquist = sr / 2.0;

  // Content: piecewise segments with formant targets and loudness.
  struct Segment {
    std::size_t end;
    std::array<double, 3> formants;
    double loudness;
  };
  // Per-utterance vocal-tract scaling shared by all formants.
  const double tract = 1.0 + uni(-voice.formant_jitter, voice.formant_jitter);
  std::vector<Segment> segments;
  for (std::size_t pos = 0; pos < num_samples;) {
    Segment s;
    s.end = std::min(num_samples, pos + static_cast<std::size_t>(uni(0.08, 0.25) * sr));
    for (int i = 0; i < 3; ++i)
      s.formants[i] = tract * voice.formant_hz[i] * (1.0 + uni(-spec.content_spread, spec.content_spread));
    std::sort(s.formants.begin(), s.formants.end());
    s.loudness = uni(0.35, 1.0);
    segments.push_back(s);
    pos = s.end;
  }

  const double f0_base = voice.f0_hz * (1.0 + uni(-voice.f0_jitter, voice.f0_jitter));
  const double drift_rate = uni(0.2, 0.8);   // Hz of the slow drift
  const double drift_phase = uni(0.0, 2.0 * std::numbers::pi);
  const double am_rate = uni(2.0, 5.0);      // syllable-rate modulation
  const double am_phase = uni(0.0, 2.0 * std::numbers::pi);
  const double gain = std::pow(10.0, uni(-voice.gain_jitter_db, voice.gain_jitter_db) / 20.0);

  const int max_harmonics = static_cast<int>(nyquist / (f0_base * (1.0 - spec.f0_drift))) + 1;
  std::vector<double> harmonic_phase(max_harmonics);
  for (double &p : harmonic_phase) p = uni(0.0, 2.0 * std::numbers::pi);

  std::vector<double> signal(num_samples, 0.0);
  constexpr std::size_t kBlock = 80;
  constexpr double kCrossfade = 0.03;  // seconds of formant glide between segments
  double phase = 0.0;
  std::size_t seg = 0;
  std::vector<std::complex<double>> coeff(max_harmonics);
  for (std::size_t start = 0; start < num_samples; start += kBlock) {
    const double t = static_cast<double>(start) / sr;
    while (segments[seg].end <= start) ++seg;
    std::array<double, 3> formants = segments[seg].formants;
    double loud = segments[seg].loudness;
    if (seg > 0) {
      const double since = static_cast<double>(start - segments[seg - 1].end) / sr;
      if (since < kCrossfade) {
        const double a = since / kCrossfade;
        for (int i = 0; i < 3; ++i)
          formants[i] = (1 - a) * segments[seg - 1].formants[i] + a * formants[i];
        loud = (1 - a) * segments[seg - 1].loudness + a * loud;
      }
    }
    const double f0 = f0_base * (1.0 + spec.f0_drift * std::sin(2.0 * std::numbers::pi * drift_rate * t + drift_phase));
    const double am = loud * (0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase));
    const int harmonics = std::min(max_harmonics, static_cast<int>((nyquist - 100.0) / f0));
    for (int k = 0; k < harmonics; ++k) {
      const double amp = am * detail::SpectralEnvelope(voice, formants, (k + 1) * f0);
      coeff[k] = std::polar(amp, harmonic_phase[k]);
    }
    const std::complex<double> step = std::polar(1.0, 2.0 * std::numbers::pi * f0 / sr);
    std::complex<double> base = std::polar(1.0, phase);
    const std::size_t stop = std::min(num_samples, start + kBlock);
    for (std::size_t n = start; n < stop; ++n) {
      std::complex<double> z = base;
      double acc = 0.0;
      for (int k = 0; k < harmonics; ++k) {
        acc += coeff[k].real() * z.imag() + coeff[k].imag() * z.real();
        z *= base;
      }
      signal[n] = acc;
      base *= step;
    }
    phase = std::fmod(phase + 2.0 * std::numbers::pi * f0 / sr * static_cast<double>(stop - start),
                      2.0 * std::numbers::pi);
  }

  double peak = 0.0, power = 0.0;
  for (double s : signal) {
    peak = std::max(peak, std::abs(s));
    power += s * s;
  }
  const double scale = peak > 0 ? 0.3 * 32767.0 * gain / peak : 0.0;
  power = power / std::max<std::size_t>(1, num_samples) * scale * scale;
  const double noise_std = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));

  Waveform w;
  w.sample_rate_hz = sr;
  w.samples.resize(num_samples);
  for (std::size_t n = 0; n < num_samples; ++n) {
    const double v = signal[n] * scale + noise_std * nn::StandardNormal(rng);
    w.samples[n] = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Manifests: "<utt-id> <speaker-id> <wav-path> <duration-s>" per line.
// Relative wav paths are resolved against the manifest's directory.

struct ManifestEntry {
  std::string utt_id;
  std::string speaker_id;
  std::string wav_path;
  double duration_s = 0.0;
  bool operator==(const ManifestEntry &) const = default;
};

using Manifest = std::vector<ManifestEntry>;

inline std::string FormatManifest(const Manifest &m) {
  std::string text;
  char dur[32];
  for (const auto &e : m) {
    std::snprintf(dur, sizeof(dur), "%.3f", e.duration_s);
    text += e.utt_id + ' ' + e.speaker_id + ' ' + e.wav_path + ' ' + dur + '\n';
  }
  return text;
}

inline void WriteManifest(const Manifest &m, const std::filesystem::path &path) {
  WriteFileBytes(path, FormatManifest(m));
}

inline Manifest ReadManifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open manifest ", path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!(is >> e.utt_id >> e.speaker_id >> e.wav_path >> e.duration_s))
      Fail(ErrorCode::kMalformedHeader, path.string(), ":", lineno,
           ": expected '<utt-id> <speaker-id> <wav-path> <duration-s>'");
    m.push_back(std::move(e));
  }
  return m;
}

inline std::filesystem::path ResolveRelative(const std::filesystem::path &manifest_path,
                                             const std::string &entry_path) {
  std::filesystem::path p(entry_path);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

/// Writes wav/<utt-id>.wav for every utterance plus manifest.txt under
/// `out_dir`; returns the manifest.
inline Manifest GenerateCorpus(const SynthSpec &spec, const std::filesystem::path &out_dir,
                               int threads = 1) {
  spec.Validate();
  std::filesystem::create_directories(out_dir / "wav");
  Manifest m;
  for (int s = 0; s < spec.num_speakers; ++s)
    for (int u = 0; u < spec.utts_per_speaker; ++u)
      m.push_back({UtteranceId(s, u), SpeakerId(s), "wav/" + UtteranceId(s, u) + ".wav", 0.0});
  ParallelFor(m.size(), threads, [&](std::size_t i) {
    const int s = static_cast<int>(i) / spec.utts_per_speaker;
    const int u = static_cast<int>(i) % spec.utts_per_speaker;
    Waveform w = SynthesizeUtterance(spec, s, u);
    m[i].duration_s = w.DurationSeconds();
    WriteWav(w, out_dir / m[i].wav_path);
  });
  WriteManifest(m, out_dir / "manifest.txt");
  return m;
}

// ---------------------------------------------------------------------------

struct CorpusSplit {
  Manifest train;
  Manifest enroll;
  Manifest test;
};

/// Disjoint train/eval speakers; each eval speaker's utterances split into
/// `enroll_per_speaker` enrollment utterances (fewer if the speaker has too
/// few, always leaving one test utterance) and the rest for test.
inline CorpusSplit SplitCorpus(const Manifest &manifest, int train_speakers, int eval_speakers,
                               std::uint64_t seed, int enroll_per_speaker = 10) {
  std::map<std::string, Manifest> by_speaker;
  for (const auto &e : manifest) by_speaker[e.speaker_id].push_back(e);
  if (train_speakers < 0 || eval_speakers < 0 ||
      static_cast<std::size_t>(train_speakers + eval_speakers) > by_speaker.size())
    Fail(ErrorCode::kPrecondition, "split needs ", train_speakers, " + ", eval_speakers,
         " speakers, corpus has ", by_speaker.size());

  std::vector<std::string> speakers;
  for (const auto &kv : by_speaker) speakers.push_back(kv.first);
  std::mt19937_64 rng(DeriveSeed(seed, "split-speakers"));
  for (std::size_t i = speakers.size(); i > 1; --i)
    std::swap(speakers[i - 1], speakers[rng() % i]);

  CorpusSplit out;
  std::vector<std::string> train(speakers.begin(), speakers.begin() + train_speakers);
  std::vector<std::string> eval(speakers.begin() + train_speakers,
                                speakers.begin() + train_speakers + eval_speakers);
  std::sort(train.begin(), train.end());
  std::sort(eval.begin(), eval.end());
  for (const auto &s : train)
    out.train.insert(out.train.end(), by_speaker[s].begin(), by_speaker[s].end());
  for (const auto &s : eval) {
    Manifest utts = by_speaker[s];
    if (utts.size() < 2)
      Fail(ErrorCode::kPrecondition, "eval speaker ", s, " needs at least 2 utterances");
    std::mt19937_64 urng(DeriveSeed(seed, "split-utts:" + s));
    for (std::size_t i = utts.size(); i > 1; --i) std::swap(utts[i - 1], utts[urng() % i]);
    const std::size_t n_enroll =
        std::min<std::size_t>(static_cast<std::size_t>(enroll_per_speaker), utts.size() - 1);
    Manifest enroll(utts.begin(), utts.begin() + n_enroll);
    Manifest test(utts.begin() + n_enroll, utts.end());
    auto by_id = [](const ManifestEntry &a, const ManifestEntry &b) { return a.utt_id < b.utt_id; };
    std::sort(enroll.begin(), enroll.end(), by_id);
    std::sort(test.begin(), test.end(), by_id);
    out.enroll.insert(out.enroll.end(), enroll.begin(), enroll.end());
    out.test.insert(out.test.end(), test.begin(), test.end());
  }
  return out;
}

inline std::set<std::string> SpeakerSet(const Manifest &m) {
  std::set<std::string> s;
  for (const auto &e : m) s.insert(e.speaker_id);
  return s;
}

}  // namespace ctdvec

#endif  // CTDVEC_SYNTH_CORPUS_HPP
