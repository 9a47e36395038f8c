// ctdvec/pipeline.hpp
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

// End-to-end experiment plumbing: one JSON config, one seed, and a fixed
// directory layout.  Each stage stamps its output directory with the config
// it ran under, so re-running a finished stage is a no-op and running it
// under a different config is refused unless forced.

#ifndef CTDVEC_PIPELINE_HPP
#define CTDVEC_PIPELINE_HPP

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctdvec/audio_frontend.hpp"
#include "ctdvec/backend.hpp"
#include "ctdvec/ctdnn.hpp"
#include "ctdvec/dvector.hpp"
#include "ctdvec/evalkit.hpp"
#include "ctdvec/synth_corpus.hpp"
#include "ctdvec/train.hpp"

namespace ctdvec {

// ---------------------------------------------------------------------------
// Config sections that live outside their modules' JSON support.

inline Json FbankConfigToJson(const FbankConfig &c) {
  Json j{{"num_mel_bins", c.num_mel_bins},     {"frame_length_ms", c.frame_length_ms},
         {"frame_shift_ms", c.frame_shift_ms}, {"preemphasis", c.preemphasis},
         {"low_freq_hz", c.low_freq_hz},       {"log_floor", c.log_floor},
         {"apply_cmn", c.apply_cmn}};
  j["high_freq_hz"] = c.high_freq_hz ? Json(*c.high_freq_hz) : Json(nullptr);
  return j;
}

inline FbankConfig FbankConfigFromJson(const Json &j, const std::string &where) {
  RejectUnknownKeys(j, {"num_mel_bins", "frame_length_ms", "frame_shift_ms", "preemphasis", "low_freq_hz",
                        "high_freq_hz", "log_floor", "apply_cmn"},
                    where);
  FbankConfig c;
  ReadKey(j, "num_mel_bins", c.num_mel_bins, where);
  ReadKey(j, "frame_length_ms", c.frame_length_ms, where);
  ReadKey(j, "frame_shift_ms", c.frame_shift_ms, where);
  ReadKey(j, "preemphasis", c.preemphasis, where);
  ReadKey(j, "low_freq_hz", c.low_freq_hz, where);
  ReadKey(j, "log_floor", c.log_floor, where);
  ReadKey(j, "apply_cmn", c.apply_cmn, where);
  if (j.contains("high_freq_hz") && !j.at("high_freq_hz").is_null()) {
    double hi = 0;
    ReadKey(j, "high_freq_hz", hi, where);
    c.high_freq_hz = hi;
  }
  return c;
}

/// The seed is not part of this section; see PipelineConfig::SynthSeed().
inline Json SynthSpecToJson(const SynthSpec &s) {
  return Json{{"num_speakers", s.num_speakers},
              {"utts_per_speaker", s.utts_per_speaker},
              {"utt_seconds", s.utt_seconds},
              {"utt_seconds_jitter", s.utt_seconds_jitter},
              {"sample_rate", s.sample_rate},
              {"snr_db", s.snr_db},
              {"f0_drift", s.f0_drift},
              {"content_spread", s.content_spread}};
}

inline SynthSpec SynthSpecFromJson(const Json &j, const std::string &where) {
  RejectUnknownKeys(j, {"num_speakers", "utts_per_speaker", "utt_seconds", "utt_seconds_jitter", "sample_rate",
                        "snr_db", "f0_drift", "content_spread", "seed"},
                    where);
  SynthSpec s;
  ReadKey(j, "num_speakers", s.num_speakers, where);
  ReadKey(j, "utts_per_speaker", s.utts_per_speaker, where);
  ReadKey(j, "utt_seconds", s.utt_seconds, where);
  ReadKey(j, "utt_seconds_jitter", s.utt_seconds_jitter, where);
  ReadKey(j, "sample_rate", s.sample_rate, where);
  ReadKey(j, "snr_db", s.snr_db, where);
  ReadKey(j, "f0_drift", s.f0_drift, where);
  ReadKey(j, "content_spread", s.content_spread, where);
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation conditions: 0 is the full test utterance, n > 0 its first n frames.

inline std::string ConditionName(int frames) { return frames == 0 ? "full" : std::to_string(frames) + "f"; }

inline std::string ConditionLabel(int frames) {
  return frames == 0 ? "full" : std::to_string(frames) + " frames";
}

// ---------------------------------------------------------------------------

struct SplitOptions {
  int train_speakers = 32;
  int eval_speakers = 8;
  int enroll_per_speaker = 10;
};

struct PipelinePaths {
  std::filesystem::path root = "work";
  std::filesystem::path corpus, features, models, vectors, results;  // empty: <root>/<name>

  std::filesystem::path Corpus() const { return corpus.empty() ? root / "corpus" : corpus; }
  std::filesystem::path Features() const { return features.empty() ? root / "features" : features; }
  std::filesystem::path Models() const { return models.empty() ? root / "models" : models; }
  std::filesystem::path Vectors() const { return vectors.empty() ? root / "vectors" : vectors; }
  std::filesystem::path Results() const { return results.empty() ? root / "results" : results; }
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  PipelinePaths paths;
  /// Optional "<utt> <spk> <wav> <dur>" manifest of user audio; replaces synthesis.
  std::string corpus_manifest;
  SynthSpec synth;
  /// Pins the corpus independently of `seed`, so several training runs can
  /// share one corpus and evaluation set.
  std::optional<std::uint64_t> synth_seed;
  SplitOptions split;
  FbankConfig fbank;
  bool export_mfcc = false;
  /// num_speakers is taken from the training labels.
  CtdnnConfig model;
  TrainConfig train;
  /// Train on a seeded subset of this many training speakers; 0 = all.
  int num_train_speakers = 0;
  std::vector<BackendKind> backends = {BackendKind::kCosine, BackendKind::kLda, BackendKind::kPlda};
  BackendOptions backend;
  std::vector<int> test_frames = {0, 100, 50, 20};

  // One global seed fans out to fixed per-stage streams.
  std::uint64_t SynthSeed() const { return synth_seed ? *synth_seed : DeriveSeed(seed, "synth"); }
  std::uint64_t SplitSeed() const { return synth_seed ? DeriveSeed(*synth_seed, "split") : DeriveSeed(seed, "split"); }
  std::uint64_t SubsetSeed() const { return DeriveSeed(seed, "speaker-subset"); }
  std::uint64_t ModelSeed() const { return DeriveSeed(seed, "model-init"); }
  std::uint64_t TrainSeed() const { return DeriveSeed(seed, "train"); }

  bool NeedsTrainVectors() const {
    for (auto k : backends)
      if (k != BackendKind::kCosine) return true;
    return false;
  }

  void Validate() const {
    if (corpus_manifest.empty()) synth.Validate();
    if (split.train_speakers < 1 || split.eval_speakers < 1 || split.enroll_per_speaker < 1)
      Fail(ErrorCode::kConfig, "split: speaker and enrollment counts must be >= 1");
    if (num_train_speakers < 0 || num_train_speakers == 1 || num_train_speakers > split.train_speakers)
      Fail(ErrorCode::kConfig, "num_train_speakers must be 0 or in [2, ", split.train_speakers, "]");
    train.Validate();
    model.Validate();
    if (backends.empty()) Fail(ErrorCode::kConfig, "backend.kinds must not be empty");
    if (test_frames.empty()) Fail(ErrorCode::kConfig, "eval.test_frames must not be empty");
    std::set<int> seen;
    for (int f : test_frames) {
      if (f < 0) Fail(ErrorCode::kConfig, "eval.test_frames: ", f, " is negative");
      if (!seen.insert(f).second) Fail(ErrorCode::kConfig, "eval.test_frames: ", f, " repeated");
    }
  }

  Json ToJson() const {
    Json paths_j{{"root", paths.root.string()}};
    auto put = [&](const char *k, const std::filesystem::path &p) {
      if (!p.empty()) paths_j[k] = p.string();
    };
    put("corpus", paths.corpus);
    put("features", paths.features);
    put("models", paths.models);
    put("vectors", paths.vectors);
    put("results", paths.results);
    Json synth_j = SynthSpecToJson(synth);
    if (synth_seed) synth_j["seed"] = *synth_seed;
    Json kinds = Json::array();
    for (auto k : backends) kinds.push_back(BackendKindName(k));
    Json backend_j = backend.ToJson();
    backend_j["kinds"] = kinds;
    Json model_j = model.ToJson();
    model_j.erase("num_speakers");
    Json train_j = train.ToJson();
    train_j.erase("seed");
    return Json{{"seed", seed},
                {"paths", paths_j},
                {"corpus_manifest", corpus_manifest},
                {"synth", synth_j},
                {"split",
                 {{"train_speakers", split.train_speakers},
                  {"eval_speakers", split.eval_speakers},
                  {"enroll_per_speaker", split.enroll_per_speaker}}},
                {"fbank", FbankConfigToJson(fbank)},
                {"export_mfcc", export_mfcc},
                {"model", model_j},
                {"train", train_j},
                {"num_train_speakers", num_train_speakers},
                {"backend", backend_j},
                {"eval", {{"test_frames", test_frames}}}};
  }

  static PipelineConfig FromJson(const Json &j) {
    RejectUnknownKeys(j, {"seed", "paths", "corpus_manifest", "synth", "split", "fbank", "export_mfcc", "model",
                          "train", "num_train_speakers", "backend", "eval"},
                      "config");
    PipelineConfig c;
    ReadKey(j, "seed", c.seed, "config");
    ReadKey(j, "corpus_manifest", c.corpus_manifest, "config");
    ReadKey(j, "export_mfcc", c.export_mfcc, "config");
    ReadKey(j, "num_train_speakers", c.num_train_speakers, "config");
    if (j.contains("paths")) {
      const Json &p = j.at("paths");
      RejectUnknownKeys(p, {"root", "corpus", "features", "models", "vectors", "results"}, "config.paths");
      auto get = [&](const char *k, std::filesystem::path &out) {
        std::string s;
        ReadKey(p, k, s, "config.paths");
        if (!s.empty()) out = s;
      };
      get("root", c.paths.root);
      get("corpus", c.paths.corpus);
      get("features", c.paths.features);
      get("models", c.paths.models);
      get("vectors", c.paths.vectors);
      get("results", c.paths.results);
    }
    if (j.contains("synth")) {
      c.synth = SynthSpecFromJson(j.at("synth"), "config.synth");
      if (j.at("synth").contains("seed")) {
        std::uint64_t s = 0;
        ReadKey(j.at("synth"), "seed", s, "config.synth");
        c.synth_seed = s;
      }
    }
    if (j.contains("split")) {
      const Json &s = j.at("split");
      RejectUnknownKeys(s, {"train_speakers", "eval_speakers", "enroll_per_speaker"}, "config.split");
      ReadKey(s, "train_speakers", c.split.train_speakers, "config.split");
      ReadKey(s, "eval_speakers", c.split.eval_speakers, "config.split");
      ReadKey(s, "enroll_per_speaker", c.split.enroll_per_speaker, "config.split");
    }
    if (j.contains("fbank")) c.fbank = FbankConfigFromJson(j.at("fbank"), "config.fbank");
    if (j.contains("model")) {
      Json m = j.at("model");
      if (m.is_object() && m.contains("num_speakers"))
        Fail(ErrorCode::kConfig, "config.model.num_speakers: set by the training labels, remove it");
      if (m.is_object()) m["num_speakers"] = c.model.num_speakers;
      c.model = CtdnnConfig::FromJson(m, "config.model");
    }
    if (j.contains("train")) {
      if (j.at("train").is_object() && j.at("train").contains("seed"))
        Fail(ErrorCode::kConfig, "config.train.seed: derived from the top-level seed, remove it");
      c.train = TrainConfig::FromJson(j.at("train"), "config.train");
    }
    if (j.contains("backend")) {
      Json b = j.at("backend");
      if (b.is_object() && b.contains("kinds")) {
        c.backends.clear();
        const Json &kinds = b.at("kinds");
        if (!kinds.is_array()) Fail(ErrorCode::kConfig, "config.backend.kinds: expected an array");
        for (const auto &k : kinds) {
          if (!k.is_string()) Fail(ErrorCode::kConfig, "config.backend.kinds: expected strings");
          try {
            c.backends.push_back(ParseBackendKind(k.get<std::string>()));
          } catch (const Error &e) {
            Fail(ErrorCode::kConfig, "config.backend.kinds: ", e.what());
          }
        }
        b.erase("kinds");
      }
      c.backend = BackendOptions::FromJson(b, "config.backend");
    }
    if (j.contains("eval")) {
      const Json &e = j.at("eval");
      RejectUnknownKeys(e, {"test_frames"}, "config.eval");
      ReadKey(e, "test_frames", c.test_frames, "config.eval");
    }
    c.Validate();
    return c;
  }

  static PipelineConfig Load(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path)) Fail(ErrorCode::kDependency, "config file not found: ", path.string());
    Json j;
    try {
      j = Json::parse(ReadFileBytes(path));
    } catch (const nlohmann::json::exception &e) {
      Fail(ErrorCode::kConfig, path.string(), ": ", e.what());
    }
    return FromJson(j);
  }
};

// ---------------------------------------------------------------------------

struct ConditionCounts {
  int used = 0;
  int skipped = 0;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, int threads = 1, bool force = false)
      : cfg_(std::move(cfg)), threads_(std::max(threads, 1)), force_(force) {
    cfg_.Validate();
  }

  const PipelineConfig &config() const { return cfg_; }

  // -- synth ----------------------------------------------------------------

  /// Generates (or ingests) the corpus and writes the train/enroll/test lists.
  void Synth() {
    const auto dir = cfg_.paths.Corpus();
    Json inputs{{"corpus_manifest", cfg_.corpus_manifest},
                {"split",
                 {cfg_.split.train_speakers, cfg_.split.eval_speakers, cfg_.split.enroll_per_speaker}},
                {"split_seed", cfg_.SplitSeed()}};
    if (cfg_.corpus_manifest.empty()) {
      inputs["synth"] = SynthSpecToJson(cfg_.synth);
      inputs["synth_seed"] = cfg_.SynthSeed();
    }
    std::vector<std::filesystem::path> upstream;
    if (!cfg_.corpus_manifest.empty()) {
      RequireFile(cfg_.corpus_manifest, "the corpus_manifest named in the config");
      upstream.push_back(cfg_.corpus_manifest);
    }
    RunStage("synth", dir, inputs, upstream, [&] {
      Manifest m;
      if (cfg_.corpus_manifest.empty()) {
        SynthSpec spec = cfg_.synth;
        spec.seed = cfg_.SynthSeed();
        LogInfo("synthesizing ", spec.num_speakers, " speakers x ", spec.utts_per_speaker, " utterances");
        m = GenerateCorpus(spec, dir, threads_);
      } else {
        const std::filesystem::path src(cfg_.corpus_manifest);
        m = ReadManifest(src);
        for (auto &e : m) e.wav_path = std::filesystem::absolute(ResolveRelative(src, e.wav_path)).string();
        WriteManifest(m, dir / "manifest.txt");
      }
      CorpusSplit split = SplitCorpus(m, cfg_.split.train_speakers, cfg_.split.eval_speakers, cfg_.SplitSeed(),
                                      cfg_.split.enroll_per_speaker);
      WriteManifest(split.train, dir / "train.txt");
      WriteManifest(split.enroll, dir / "enroll.txt");
      WriteManifest(split.test, dir / "test.txt");
    });
  }

  // -- fbank ----------------------------------------------------------------

  void Fbank() {
    const auto corpus = cfg_.paths.Corpus(), dir = cfg_.paths.Features();
    for (const char *f : {"manifest.txt", "train.txt", "enroll.txt", "test.txt"}) RequireFile(corpus / f, "synth");
    Json inputs{{"fbank", FbankConfigToJson(cfg_.fbank)}, {"export_mfcc", cfg_.export_mfcc}};
    RunStage("fbank", dir, inputs, {Stamp(corpus, "synth")}, [&] {
      Manifest all = ReadManifest(corpus / "manifest.txt");
      std::filesystem::create_directories(dir / "feats");
      if (cfg_.export_mfcc) std::filesystem::create_directories(dir / "mfcc");
      std::vector<char> ok(all.size(), 0);
      ParallelFor(all.size(), threads_, [&](std::size_t i) {
        const auto wav = ResolveRelative(corpus / "manifest.txt", all[i].wav_path);
        Waveform w = ReadWav(wav);
        FeatureMatrix f;
        try {
          f = ComputeFbank(w, cfg_.fbank);
        } catch (const Error &e) {
          if (e.code() != ErrorCode::kEmptyFeature) throw;
          LogWarning(all[i].utt_id, ": ", e.what(), "; utterance dropped");
          return;
        }
        WriteFeatures(f, dir / "feats" / (all[i].utt_id + ".feat"));
        if (cfg_.export_mfcc) WriteFeatures(ComputeMfcc(w, cfg_.fbank), dir / "mfcc" / (all[i].utt_id + ".feat"));
        ok[i] = 1;
      });
      std::set<std::string> kept;
      for (std::size_t i = 0; i < all.size(); ++i)
        if (ok[i]) kept.insert(all[i].utt_id);
      for (const char *list : {"manifest.txt", "train.txt", "enroll.txt", "test.txt"}) {
        std::vector<FeatureEntry> entries;
        for (const auto &e : ReadManifest(corpus / list))
          if (kept.count(e.utt_id)) entries.push_back({e.utt_id, e.speaker_id, "feats/" + e.utt_id + ".feat"});
        WriteFeatureManifest(entries, dir / list);
      }
    });
  }

  // -- train ----------------------------------------------------------------

  void Train() {
    const auto feats = cfg_.paths.Features(), dir = cfg_.paths.Models();
    RequireFile(feats / "train.txt", "fbank");
    Json model_j = cfg_.model.ToJson();
    model_j.erase("num_speakers");
    Json train_j = cfg_.train.ToJson();
    train_j.erase("seed");
    Json inputs{{"model", model_j},
                {"train", train_j},
                {"num_train_speakers", cfg_.num_train_speakers},
                {"seed", cfg_.seed}};
    RunStage("train", dir, inputs, {Stamp(feats, "fbank")}, [&] {
      // A checkpoint is only resumed by the run that wrote it.
      const auto owner = dir / "checkpoint" / "owner.json";
      const std::string me = pending_stamp_.dump(2) + "\n";
      if (!std::filesystem::exists(owner) || ReadFileBytes(owner) != me) {
        std::filesystem::remove_all(dir / "checkpoint");
        std::filesystem::remove(dir / "train_log.jsonl");
      }
      auto utts = LoadLabeledFeatures(feats / "train.txt", threads_);
      std::set<std::string> speakers;
      for (const auto &u : utts) speakers.insert(u.speaker_id);
      std::vector<std::string> chosen(speakers.begin(), speakers.end());
      if (cfg_.num_train_speakers > 0) {
        if (static_cast<std::size_t>(cfg_.num_train_speakers) > chosen.size())
          Fail(ErrorCode::kConfig, "num_train_speakers ", cfg_.num_train_speakers, " exceeds the ", chosen.size(),
               " training speakers");
        std::mt19937_64 rng(cfg_.SubsetSeed());
        for (std::size_t i = chosen.size(); i > 1; --i) std::swap(chosen[i - 1], chosen[rng() % i]);
        chosen.resize(static_cast<std::size_t>(cfg_.num_train_speakers));
        std::sort(chosen.begin(), chosen.end());
        const std::set<std::string> keep(chosen.begin(), chosen.end());
        std::erase_if(utts, [&](const LabeledUtterance &u) { return !keep.count(u.speaker_id); });
      }
      LabelMap labels(chosen);
      CtdnnConfig mcfg = cfg_.model;
      mcfg.num_speakers = labels.size();
      TrainConfig tcfg = cfg_.train;
      tcfg.seed = cfg_.TrainSeed();
      FrameDataset train = MakeFrameDataset(std::move(utts), labels, mcfg);
      FrameDataset held = SplitHeldOut(train, tcfg.heldout_fraction, tcfg.seed);
      LogInfo("training on ", labels.size(), " speakers, ", train.NumWindows(), " windows (", held.NumWindows(),
              " held out)");
      std::filesystem::create_directories(dir / "checkpoint");
      WriteFileBytes(owner, me);
      labels.Save(dir / "labels.txt");
      Model model(mcfg, cfg_.ModelSeed());
      TrainState st = RunTraining(model, train, held, tcfg, dir / "train_log.jsonl", dir / "checkpoint", threads_);
      model.Save(dir / "model.ctdn");
      WriteFileBytes(dir / "train_state.json", st.ToJson().dump(2) + "\n");
    });
  }

  // -- extract --------------------------------------------------------------

  /// Enrollment vectors, speaker models and (if a trained backend is
  /// configured) training vectors, plus test vectors for every condition.
  void Extract() {
    ExtractBase();
    for (int f : cfg_.test_frames) ExtractCondition(f);
  }

  void ExtractBase() {
    const auto dir = cfg_.paths.Vectors();
    RequireModel();
    RequireFile(cfg_.paths.Features() / "enroll.txt", "fbank");
    const bool need_train = cfg_.NeedsTrainVectors();
    if (need_train) RequireFile(cfg_.paths.Features() / "train.txt", "fbank");
    RunStage("extract", dir, Json{{"train_vectors", need_train}}, ModelStamps(), [&] {
      const Model model = Model::Load(cfg_.paths.Models() / "model.ctdn");
      auto enroll = ExtractList(model, cfg_.paths.Features() / "enroll.txt", 0, nullptr);
      WriteDVectors(enroll, Dim(model), dir / "enroll.dvec");
      std::map<std::string, std::vector<const DVector *>> by_spk;
      for (const auto &v : enroll) by_spk[v.speaker_id].push_back(&v);
      std::vector<DVector> models;
      for (const auto &[spk, parts] : by_spk) models.push_back(EnrollFromVectors(parts, spk));
      WriteDVectors(models, Dim(model), dir / "speakers.dvec");
      if (need_train)
        WriteDVectors(ExtractList(model, cfg_.paths.Features() / "train.txt", 0, nullptr), Dim(model),
                      dir / "train.dvec");
    });
  }

  /// Test vectors from the first `frames` frames (0 = all).  Utterances too
  /// short for the condition are skipped with a warning and counted.
  ConditionCounts ExtractCondition(int frames) {
    const auto dir = cfg_.paths.Vectors();
    RequireModel();
    RequireFile(cfg_.paths.Features() / "test.txt", "fbank");
    const std::string name = ConditionName(frames);
    RunStage("extract-" + name, dir, Json{{"test_frames", frames}}, ModelStamps(), [&] {
      const Model model = Model::Load(cfg_.paths.Models() / "model.ctdn");
      ConditionCounts counts;
      auto test = ExtractList(model, cfg_.paths.Features() / "test.txt", frames, &counts);
      WriteDVectors(test, Dim(model), dir / ("test_" + name + ".dvec"));
      WriteFileBytes(dir / ("test_" + name + ".counts.json"),
                     Json{{"used", counts.used}, {"skipped", counts.skipped}}.dump(2) + "\n");
    });
    return ReadCounts(frames);
  }

  ConditionCounts ReadCounts(int frames) const {
    const auto p = cfg_.paths.Vectors() / ("test_" + ConditionName(frames) + ".counts.json");
    RequireFile(p, "extract");
    Json j = Json::parse(ReadFileBytes(p));
    return {j.at("used").get<int>(), j.at("skipped").get<int>()};
  }

  // -- backend-fit ------------------------------------------------------------

  void BackendFit() {
    const auto dir = cfg_.paths.Models();
    Json kinds = Json::array();
    for (auto k : cfg_.backends) kinds.push_back(BackendKindName(k));
    if (cfg_.NeedsTrainVectors()) RequireFile(cfg_.paths.Vectors() / "train.dvec", "extract");
    std::vector<std::filesystem::path> upstream;
    if (cfg_.NeedsTrainVectors()) upstream.push_back(Stamp(cfg_.paths.Vectors(), "extract"));
    RunStage("backend-fit", dir, Json{{"kinds", kinds}, {"options", cfg_.backend.ToJson()}}, upstream, [&] {
      MatrixD x;
      std::vector<int> labels;
      if (cfg_.NeedsTrainVectors()) {
        auto train = ReadDVectors(cfg_.paths.Vectors() / "train.dvec");
        if (train.empty()) Fail(ErrorCode::kPrecondition, "no training vectors for the backend");
        std::map<std::string, int> ids;
        for (const auto &v : train) ids.emplace(v.speaker_id, 0);
        int next = 0;
        for (auto &kv : ids) kv.second = next++;
        x.resize(static_cast<Eigen::Index>(train.size()), train[0].values.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
          x.row(static_cast<Eigen::Index>(i)) = train[i].values.transpose();
          labels.push_back(ids.at(train[i].speaker_id));
        }
      }
      for (auto kind : cfg_.backends)
        Backend::Fit(kind, x, labels, cfg_.backend).Save(dir / BackendFile(kind));
    });
  }

  // -- score / eval -----------------------------------------------------------

  void Score() {
    for (int f : cfg_.test_frames) ScoreCondition(f);
  }

  void ScoreCondition(int frames) {
    const auto vec = cfg_.paths.Vectors(), dir = cfg_.paths.Results();
    const std::string name = ConditionName(frames);
    RequireFile(vec / "speakers.dvec", "extract");
    RequireFile(vec / ("test_" + name + ".dvec"), "extract");
    for (auto k : cfg_.backends) RequireFile(cfg_.paths.Models() / BackendFile(k), "backend-fit");
    RunStage("score-" + name, dir, KindsJson(),
             {Stamp(vec, "extract"), Stamp(vec, "extract-" + name), Stamp(cfg_.paths.Models(), "backend-fit")},
             [&] {
      auto speakers = ReadDVectors(vec / "speakers.dvec");
      auto test = ReadDVectors(vec / ("test_" + name + ".dvec"));
      if (test.empty()) Fail(ErrorCode::kPrecondition, "condition ", name, " has no usable test utterances");
      TrialList trials = MakeTrials(speakers, test);
      for (auto k : cfg_.backends) {
        Backend b = Backend::Load(cfg_.paths.Models() / BackendFile(k));
        WriteTrials(ScoreTrials(trials, speakers, test, b, threads_), dir / TrialsFile(frames, k));
      }
    });
  }

  void Eval() {
    for (int f : cfg_.test_frames) EvalCondition(f);
  }

  /// EER and DET for one condition; returns the EER per backend.
  std::map<BackendKind, EerResult> EvalCondition(int frames) {
    const auto dir = cfg_.paths.Results();
    for (auto k : cfg_.backends) RequireFile(dir / TrialsFile(frames, k), "score");
    const std::string name = ConditionName(frames);
    RunStage("eval-" + name, dir, KindsJson(), {Stamp(dir, "score-" + name)}, [&] {
      for (auto k : cfg_.backends) {
        TrialList trials = ReadTrials(dir / TrialsFile(frames, k));
        const EerResult r = ComputeEer(trials);
        WriteFileBytes(dir / EerFile(frames, k), EerToJson(r).dump(2) + "\n");
        WriteFileBytes(dir / DetFile(frames, k), FormatDetCsv(DetPoints(trials)));
      }
    });
    std::map<BackendKind, EerResult> out;
    for (auto k : cfg_.backends) {
      Json j = Json::parse(ReadFileBytes(dir / EerFile(frames, k)));
      EerResult r;
      r.eer = j.at("eer").get<double>();
      r.threshold = j.at("threshold").get<double>();
      r.num_target = j.at("n_target").get<std::size_t>();
      r.num_nontarget = j.at("n_nontarget").get<std::size_t>();
      out[k] = r;
    }
    return out;
  }

  /// Extract, score and evaluate one condition (the --test-frames path).
  std::map<BackendKind, EerResult> EvaluateCondition(int frames) {
    ExtractCondition(frames);
    ScoreCondition(frames);
    return EvalCondition(frames);
  }

  // -- report -----------------------------------------------------------------

  /// report.json, a text table, one DET SVG per condition and a CSV of the
  /// full-length test d-vectors for external plotting.
  Json Report() {
    const auto dir = cfg_.paths.Results();
    for (int f : cfg_.test_frames)
      for (auto k : cfg_.backends) RequireFile(dir / EerFile(f, k), "eval");
    Json report_cfg = KindsJson();
    report_cfg["test_frames"] = cfg_.test_frames;
    std::vector<std::filesystem::path> upstream;
    for (int f : cfg_.test_frames) upstream.push_back(Stamp(dir, "eval-" + ConditionName(f)));
    RunStage("report", dir, report_cfg, upstream, [&] {
      Json conds = Json::array(), kinds = Json::array(), eer = Json::object(), counts = Json::object();
      for (auto k : cfg_.backends) kinds.push_back(BackendKindName(k));
      for (int f : cfg_.test_frames) {
        const std::string name = ConditionName(f);
        conds.push_back(name);
        Json row = Json::object();
        std::vector<std::pair<std::string, std::vector<DetPoint>>> curves;
        for (auto k : cfg_.backends) {
          row[BackendKindName(k)] = Json::parse(ReadFileBytes(dir / EerFile(f, k)));
          curves.push_back({BackendKindName(k), DetPoints(ReadTrials(dir / TrialsFile(f, k)))});
        }
        eer[name] = row;
        const ConditionCounts c = ReadCounts(f);
        counts[name] = {{"used", c.used}, {"skipped", c.skipped}};
        WriteFileBytes(dir / ("det_" + name + ".svg"), RenderDetSvg(curves));
      }
      Json report{{"seed", cfg_.seed}, {"conditions", conds}, {"backends", kinds}, {"eer", eer},
                  {"test_utterances", counts}};
      const auto state_path = cfg_.paths.Models() / "train_state.json";
      if (std::filesystem::exists(state_path)) {
        Json st = Json::parse(ReadFileBytes(state_path));
        report["training"] = {{"speakers", LabelMap::Load(cfg_.paths.Models() / "labels.txt").size()},
                              {"epochs", st.at("epoch")},
                              {"heldout_accuracy", st.at("heldout_accuracy")}};
      }
      WriteFileBytes(dir / "report.json", report.dump(2) + "\n");
      WriteFileBytes(dir / "report.txt", FormatReportTable(report));
      const auto full = cfg_.paths.Vectors() / "test_full.dvec";
      if (std::filesystem::exists(full)) WriteFileBytes(dir / "embeddings_test.csv", EmbeddingCsv(ReadDVectors(full)));
    });
    return Json::parse(ReadFileBytes(dir / "report.json"));
  }

  /// Every stage in order.
  Json RunAll() {
    Synth();
    Fbank();
    Train();
    Extract();
    BackendFit();
    Score();
    Eval();
    return Report();
  }

  static std::string FormatReportTable(const Json &report) {
    std::string out = "EER (%)";
    out.resize(14, ' ');
    for (const auto &k : report.at("backends")) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%10s", k.get<std::string>().c_str());
      out += buf;
    }
    out += '\n';
    for (const auto &c : report.at("conditions")) {
      std::string line = c.get<std::string>();
      line.resize(14, ' ');
      for (const auto &k : report.at("backends")) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%10.2f",
                      100.0 * report.at("eer").at(c.get<std::string>()).at(k.get<std::string>()).at("eer").get<double>());
        line += buf;
      }
      out += line + '\n';
    }
    return out;
  }

  static std::string BackendFile(BackendKind k) { return std::string("backend_") + BackendKindName(k) + ".bknd"; }
  static std::string TrialsFile(int frames, BackendKind k) {
    return "trials_" + ConditionName(frames) + "_" + BackendKindName(k) + ".txt";
  }
  static std::string EerFile(int frames, BackendKind k) {
    return "eer_" + ConditionName(frames) + "_" + BackendKindName(k) + ".json";
  }
  static std::string DetFile(int frames, BackendKind k) {
    return "det_" + ConditionName(frames) + "_" + BackendKindName(k) + ".csv";
  }

 private:
  static void RequireFile(const std::filesystem::path &p, const std::string &producer) {
    if (!std::filesystem::exists(p))
      Fail(ErrorCode::kDependency, "missing ", p.string(),
           producer.find(' ') == std::string::npos ? " (run `ctdvec " + producer + "` first)" : " (" + producer + ")");
  }

  void RequireModel() const {
    RequireFile(cfg_.paths.Models() / "model.ctdn", "train");
  }

  static std::uint32_t Dim(const Model &m) { return static_cast<std::uint32_t>(m.config().feature_dim); }

  Json KindsJson() const {
    Json kinds = Json::array();
    for (auto k : cfg_.backends) kinds.push_back(BackendKindName(k));
    return Json{{"kinds", kinds}};
  }

  static std::filesystem::path Stamp(const std::filesystem::path &dir, const std::string &stage) {
    return dir / ".stamps" / (stage + ".json");
  }

  std::vector<std::filesystem::path> ModelStamps() const {
    return {Stamp(cfg_.paths.Features(), "fbank"), Stamp(cfg_.paths.Models(), "train")};
  }

  /// Runs `fn` unless `dir` holds a stamp for `stage` with the same config and
  /// upstream digests.  A config mismatch is refused (it would silently mix
  /// results from two experiments); a changed upstream just reruns the stage.
  template <typename Fn>
  void RunStage(const std::string &stage, const std::filesystem::path &dir, const Json &config,
                const std::vector<std::filesystem::path> &upstream, Fn &&fn) {
    const auto stamp = Stamp(dir, stage);
    Json digests = Json::object();
    for (const auto &u : upstream) {
      char hex[17];
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(std::filesystem::exists(u) ? HashString(ReadFileBytes(u)) : 0));
      digests[u.filename().string()] = hex;
    }
    if (!force_ && std::filesystem::exists(stamp)) {
      Json prev;
      try {
        prev = Json::parse(ReadFileBytes(stamp));
      } catch (const nlohmann::json::exception &) {
        Fail(ErrorCode::kMalformedHeader, stamp.string(), ": unreadable stage stamp; rerun with --force");
      }
      if (!prev.is_object() || prev.value("config", Json()) != config)
        Fail(ErrorCode::kConfig, "stage '", stage, "' in ", dir.string(),
             " was produced under a different config; rerun with --force");
      if (prev.value("upstream", Json()) == digests) {
        LogInfo(stage, ": up to date");
        return;
      }
      LogInfo(stage, ": inputs changed, rerunning");
    }
    std::filesystem::create_directories(dir / ".stamps");
    std::filesystem::remove(stamp);
    pending_stamp_ = Json{{"config", config}, {"upstream", digests}};
    fn();
    WriteFileBytes(stamp, pending_stamp_.dump(2) + "\n");
  }

  std::vector<DVector> ExtractList(const Model &model, const std::filesystem::path &list, int frames,
                                   ConditionCounts *counts) const {
    auto entries = ReadFeatureManifest(list);
    const int rf = model.receptive_field().total;
    const int need = frames > 0 ? std::max(frames, rf) : rf;
    std::vector<std::optional<DVector>> out(entries.size());
    ParallelFor(entries.size(), threads_, [&](std::size_t i) {
      std::filesystem::path p(entries[i].path);
      if (p.is_relative()) p = list.parent_path() / p;
      FeatureMatrix f = ReadFeatures(p);
      if (f.rows() < need) {
        LogWarning(entries[i].utt_id, " has ", f.rows(), " frames, condition ", ConditionName(frames), " needs ",
                   need, "; skipped");
        return;
      }
      if (frames > 0) f = TruncateFrames(f, frames);
      out[i] = ExtractDVector(model, f, entries[i].utt_id, entries[i].speaker_id);
    });
    std::vector<DVector> vecs;
    int skipped = 0;
    for (auto &v : out) {
      if (v) vecs.push_back(std::move(*v));
      else ++skipped;
    }
    if (counts) *counts = {static_cast<int>(vecs.size()), skipped};
    return vecs;
  }

  static std::string EmbeddingCsv(const std::vector<DVector> &vecs) {
    std::string out = "utt_id,speaker_id";
    if (!vecs.empty())
      for (Eigen::Index i = 0; i < vecs[0].values.size(); ++i) out += ",d" + std::to_string(i);
    out += '\n';
    char buf[32];
    for (const auto &v : vecs) {
      out += v.utt_id + ',' + v.speaker_id;
      for (Eigen::Index i = 0; i < v.values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), ",%.7g", v.values(i));
        out += buf;
      }
      out += '\n';
    }
    return out;
  }

  PipelineConfig cfg_;
  int threads_;
  bool force_;
  Json pending_stamp_;
};

}  // namespace ctdvec

#endif  // CTDVEC_PIPELINE_HPP
