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

#ifndef DAMA_TOYLM_CONFIG_H_
#define DAMA_TOYLM_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <string>

namespace dama::toylm {

// Shape of the toy decoder. RMS-norm, rotary positions and a gated SiLU MLP,
// W_out * (silu(W_gate x) * W_in x), in every block.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t max_seq = 32;
  std::uint64_t seed = 1;

  std::size_t head_dim() const { return d_model / n_heads; }

  // Raises kInvalidArgument when a count is zero, d_model is not divisible by
  // n_heads, the head dimension is odd (rotary pairs) or d_ff < d_model.
  void Validate() const;

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kRmsEpsilon = 1e-6;
inline constexpr double kRopeBase = 10000.0;

}  // namespace dama::toylm

#endif  // DAMA_TOYLM_CONFIG_H_
