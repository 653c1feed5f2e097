// Copyright 2026 The dama-toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DAMA_TOYLM_CHECKPOINT_H_
#define DAMA_TOYLM_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dama/linalg/matrix.h"
#include "dama/toylm/config.h"

namespace dama::toylm {

// A named weight tensor. Rank-1 tensors are stored as a 1 x n matrix.
struct Tensor {
  std::vector<std::uint32_t> shape;
  linalg::MatrixF values;

  bool operator==(const Tensor&) const = default;
};

struct ModelCheckpoint {
  ModelConfig config;
  // Word for every token id; vocab.size() == config.vocab_size.
  std::vector<std::string> vocab;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  // Raises kInvalidArgument if a tensor is missing, extra or mis-shaped.
  void Validate() const;
  std::size_t ParameterCount() const;

  bool operator==(const ModelCheckpoint&) const = default;
};

namespace names {
inline constexpr const char* kEmbedding = "tok_embedding";
inline constexpr const char* kFinalNorm = "final_norm";
inline constexpr const char* kUnembedding = "unembedding";
std::string AttnNorm(std::size_t layer);
std::string Wq(std::size_t layer);
std::string Wk(std::size_t layer);
std::string Wv(std::size_t layer);
std::string Wo(std::size_t layer);
std::string MlpNorm(std::size_t layer);
std::string WIn(std::size_t layer);
std::string WGate(std::size_t layer);
std::string WOut(std::size_t layer);
}  // namespace names

// Tensor name -> expected shape for a config.
std::map<std::string, std::vector<std::uint32_t>> ExpectedShapes(
    const ModelConfig& config);

// Random initialization, deterministic in config.seed.
ModelCheckpoint InitCheckpoint(const ModelConfig& config,
                               std::vector<std::string> vocab);

// Returns a copy with W_out[layer] := left_factor * W_out[layer]. The product
// is formed in 64-bit and rounded once to 32-bit storage.
ModelCheckpoint ApplyWeightEdit(const ModelCheckpoint& ckpt, std::size_t layer,
                                const linalg::MatrixD& left_factor);

// DMK1 binary format: magic "DMK1", u32 header length, UTF-8 header of
// key=value lines, then per tensor: u16 name length, name, u8 rank,
// rank x u32 dims, row-major f32 values. All integers little-endian.
std::string SerializeCheckpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint ParseCheckpoint(const std::string& bytes);
void SaveCheckpoint(const ModelCheckpoint& ckpt,
                    const std::filesystem::path& path);
ModelCheckpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace dama::toylm

#endif  // DAMA_TOYLM_CHECKPOINT_H_
