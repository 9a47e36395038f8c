// tools/ctdvec.cc
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

// Command-line front end: one subcommand per pipeline stage plus run-all.
// Failures print a single JSON object on stderr and exit nonzero.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ctdvec/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string work;
  bool force = false;
  int threads = 1;
  std::string manifest;
  std::optional<int> num_speakers;
  std::optional<int> test_frames;
};

ctdvec::PipelineConfig LoadConfig(const Options &o) {
  using namespace ctdvec;
  PipelineConfig cfg;
  Json j = Json::object();
  if (!o.config.empty()) {
    if (!std::filesystem::exists(o.config)) Fail(ErrorCode::kIo, "config file not found: ", o.config);
    try {
      j = Json::parse(ReadFileBytes(o.config));
    } catch (const nlohmann::json::exception &e) {
      Fail(ErrorCode::kConfig, o.config, ": ", e.what());
    }
  }
  // Command-line values win over the file.
  if (o.seed) j["seed"] = *o.seed;
  if (!o.work.empty()) j["paths"]["root"] = o.work;
  if (!o.manifest.empty()) j["corpus_manifest"] = o.manifest;
  if (o.num_speakers) j["num_train_speakers"] = *o.num_speakers;
  return PipelineConfig::FromJson(j);
}

void PrintCounts(int frames, const ctdvec::ConditionCounts &c,
                 const std::map<ctdvec::BackendKind, ctdvec::EerResult> &eer) {
  using namespace ctdvec;
  Json out{{"condition", ConditionName(frames)}, {"used", c.used}, {"skipped", c.skipped}};
  for (const auto &[k, r] : eer) out["eer"][BackendKindName(k)] = r.eer;
  std::cout << out.dump() << "\n";
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"CT-DNN d-vector speaker verification"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON experiment config");
  app.add_option("--seed", o.seed, "global seed (overrides the config)");
  app.add_option("--work", o.work, "work directory root (overrides the config)");
  app.add_flag("--force", o.force, "rerun stages even if already stamped");
  app.add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);

  auto *synth = app.add_subcommand("synth", "generate the corpus (or ingest --manifest) and split it");
  synth->add_option("--manifest", o.manifest, "use this WAV manifest instead of synthesizing");
  auto *fbank = app.add_subcommand("fbank", "compute filterbank features");
  auto *train = app.add_subcommand("train", "train the network");
  train->add_option("--num-speakers", o.num_speakers, "train on a seeded subset of this many speakers");
  auto *extract = app.add_subcommand("extract", "extract d-vectors");
  auto *bfit = app.add_subcommand("backend-fit", "fit the scoring backends");
  auto *score = app.add_subcommand("score", "score the trial list");
  auto *eval = app.add_subcommand("eval", "compute EER and DET points");
  eval->add_option("--test-frames", o.test_frames, "evaluate one condition: first N frames (0 = full)")
      ->check(CLI::NonNegativeNumber);
  auto *report = app.add_subcommand("report", "write the report");
  auto *all = app.add_subcommand("run-all", "run every stage");

  CLI11_PARSE(app, argc, argv);

  using namespace ctdvec;
  try {
    Pipeline p(LoadConfig(o), o.threads, o.force);
    if (synth->parsed()) {
      p.Synth();
    } else if (fbank->parsed()) {
      p.Fbank();
    } else if (train->parsed()) {
      p.Train();
    } else if (extract->parsed()) {
      p.Extract();
    } else if (bfit->parsed()) {
      p.BackendFit();
    } else if (score->parsed()) {
      p.Score();
    } else if (eval->parsed()) {
      if (o.test_frames) {
        p.ExtractBase();
        auto eer = p.EvaluateCondition(*o.test_frames);
        PrintCounts(*o.test_frames, p.ReadCounts(*o.test_frames), eer);
      } else {
        p.Eval();
      }
    } else if (report->parsed()) {
      std::cout << Pipeline::FormatReportTable(p.Report());
    } else if (all->parsed()) {
      std::cout << Pipeline::FormatReportTable(p.RunAll());
    }
  } catch (const Error &e) {
    std::cerr << Json{{"error", {{"code", ErrorCodeName(e.code())}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << Json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 3;
  }
  return 0;
}
