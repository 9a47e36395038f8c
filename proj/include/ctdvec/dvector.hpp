// ctdvec/dvector.hpp
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

// Utterance embeddings: the mean of the per-frame feature-layer outputs.

#ifndef CTDVEC_DVECTOR_HPP
#define CTDVEC_DVECTOR_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "ctdvec/audio_frontend.hpp"
#include "ctdvec/base.hpp"
#include "ctdvec/binary_io.hpp"
#include "ctdvec/ctdnn.hpp"

namespace ctdvec {

struct DVector {
  std::string utt_id;
  /// Empty for unlabeled sets.
  std::string speaker_id;
  std::uint32_t num_frames = 0;
  /// Means are accumulated in double; archives store float32.
  VectorD values;
};

/// Mean over the T - rf + 1 feature rows.
inline DVector ExtractDVector(const Model &model, const FeatureMatrix &fbank,
                              std::string utt_id = {}, std::string speaker_id = {}) {
  FeatureMatrix feats = model.ForwardFeatures(fbank);
  DVector d;
  d.utt_id = std::move(utt_id);
  d.speaker_id = std::move(speaker_id);
  d.num_frames = static_cast<std::uint32_t>(feats.rows());
  d.values = feats.data.cast<double>().colwise().sum().transpose() / static_cast<double>(feats.rows());
  return d;
}

/// Unweighted mean of per-utterance d-vectors.  Too-short utterances are
/// skipped with a warning; num_frames counts the frames actually averaged.
inline DVector EnrollSpeaker(const Model &model, const std::vector<FeatureMatrix> &utterances,
                             std::string speaker_id = {}) {
  const int rf = model.receptive_field().total;
  std::vector<DVector> parts;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].rows() < rf) {
      LogWarning("enrollment utterance ", i, " of ", speaker_id, " has ", utterances[i].rows(),
                 " frames (< ", rf, "); skipped");
      continue;
    }
    parts.push_back(ExtractDVector(model, utterances[i]));
  }
  if (parts.empty())
    Fail(ErrorCode::kEnrollment, "no usable enrollment utterance for speaker '", speaker_id, "'");
  DVector d;
  d.utt_id = speaker_id;
  d.speaker_id = std::move(speaker_id);
  d.values = VectorD::Zero(parts[0].values.size());
  for (const auto &p : parts) {
    d.values += p.values;
    d.num_frames += p.num_frames;
  }
  d.values /= static_cast<double>(parts.size());
  return d;
}

/// Same pooling from already-extracted utterance vectors.
inline DVector EnrollFromVectors(const std::vector<const DVector *> &parts, std::string speaker_id) {
  if (parts.empty())
    Fail(ErrorCode::kEnrollment, "no usable enrollment utterance for speaker '", speaker_id, "'");
  DVector d;
  d.utt_id = speaker_id;
  d.speaker_id = std::move(speaker_id);
  d.values = VectorD::Zero(parts[0]->values.size());
  for (const auto *p : parts) {
    if (p->values.size() != d.values.size())
      Fail(ErrorCode::kShape, "enrollment vectors of different dimension");
    d.values += p->values;
    d.num_frames += p->num_frames;
  }
  d.values /= static_cast<double>(parts.size());
  return d;
}

/// First n frames.
inline FeatureMatrix TruncateFrames(const FeatureMatrix &fbank, Eigen::Index n) {
  if (n < 0 || n > fbank.rows())
    Fail(ErrorCode::kLength, "cannot take ", n, " frames from an utterance of ", fbank.rows());
  return FeatureMatrix(fbank.data.topRows(n), fbank.frame_shift_ms);
}

// ---------------------------------------------------------------------------
// Archive: "DVEC", u32 version, u32 count, u32 dim, then per record:
// string utt-id, string speaker-id, u32 frames, dim x f32.

inline constexpr std::uint32_t kDVectorFormatVersion = 1;

inline std::string EncodeDVectors(const std::vector<DVector> &vecs, std::uint32_t dim) {
  ByteWriter out;
  out.PutMagic("DVEC");
  out.PutU32(kDVectorFormatVersion);
  out.PutU32(static_cast<std::uint32_t>(vecs.size()));
  out.PutU32(dim);
  std::vector<float> buf(dim);
  for (const auto &v : vecs) {
    if (v.values.size() != static_cast<Eigen::Index>(dim))
      Fail(ErrorCode::kShape, "d-vector ", v.utt_id, " has dim ", v.values.size(), ", archive ", dim);
    out.PutString(v.utt_id);
    out.PutString(v.speaker_id);
    out.PutU32(v.num_frames);
    for (std::uint32_t i = 0; i < dim; ++i) buf[i] = static_cast<float>(v.values(i));
    out.PutF32Array(std::span<const float>(buf));
  }
  return std::move(out.bytes());
}

inline std::vector<DVector> DecodeDVectors(std::string_view bytes, const std::string &source) {
  ByteReader in(bytes, source);
  in.ExpectMagic("DVEC");
  in.ExpectVersion(kDVectorFormatVersion);
  const std::uint32_t count = in.GetU32();
  const std::uint32_t dim = in.GetU32();
  if (static_cast<std::uint64_t>(dim) * 4 > bytes.size())
    Fail(ErrorCode::kTruncated, source, ": dimension ", dim, " exceeds the file size");
  std::vector<DVector> out;
  std::vector<float> buf(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    DVector d;
    d.utt_id = in.GetString();
    d.speaker_id = in.GetString();
    d.num_frames = in.GetU32();
    in.GetF32Array(std::span<float>(buf));
    d.values = Eigen::Map<const VectorR<float>>(buf.data(), dim).cast<double>();
    if (!d.values.allFinite()) Fail(ErrorCode::kNumerical, source, ": non-finite d-vector ", d.utt_id);
    out.push_back(std::move(d));
  }
  in.ExpectEnd();
  return out;
}

inline void WriteDVectors(const std::vector<DVector> &vecs, std::uint32_t dim,
                          const std::filesystem::path &path) {
  WriteFileBytes(path, EncodeDVectors(vecs, dim));
}

inline std::vector<DVector> ReadDVectors(const std::filesystem::path &path) {
  return DecodeDVectors(ReadFileBytes(path), path.string());
}

}  // namespace ctdvec

#endif  // CTDVEC_DVECTOR_HPP
