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

#include "dama/cli/config.h"

#include <charconv>
#include <cmath>

#include "dama/common/error.h"

namespace dama::cli {
namespace {

// Defaults mirror the library defaults; "" means "not set".
const std::map<std::string, std::string>& Defaults() {
  static const std::map<std::string, std::string> d = {
      {"seed", "1"},
      {"professions", ""},
      {"corpus.n_sentences", "20000"},
      {"corpus.stereotype_strength", "0.9"},
      {"corpus.factual_strength", "0.9"},
      {"corpus.they_fraction", "0.1"},
      {"corpus.filler_fraction", "0.3"},
      {"corpus.coref_fraction", "0.15"},
      {"model.d_model", "64"},
      {"model.d_ff", "256"},
      {"model.n_layers", "4"},
      {"model.n_heads", "4"},
      {"model.max_seq", "32"},
      {"train.steps", "3000"},
      {"train.lr", "0.003"},
      {"train.batch_size", "32"},
      {"train.warmup_steps", "100"},
      {"train.min_lr_ratio", "0.1"},
      {"train.grad_clip", "1"},
      {"heldout.n_sentences", "2000"},
      {"split", "test"},
      {"split.fraction", "0.2"},
      {"templates.filter", "true"},
      {"templates.threshold", "0.008"},
      {"trace.component", "mlp"},
      {"noise.multiplier", "3"},
      {"noise.samples", "1"},
      {"dama.layer_lo_pct", "65"},
      {"dama.layer_hi_pct", "93"},
      {"dama.d_n", ""},
      {"dama.pls_target", "contrast"},
      {"dama.kl_prompts", "32"},
      {"dama.seeds", "1"},
      {"value.steps", "20"},
      {"value.lr", "0.5"},
      {"value.lambda1", "0.0625"},
      {"value.lambda2", "0.2"},
      {"sweep.d_n", "4,8,16,32"},
      {"sweep.start_layer", "2"},
      {"sweep.layer_counts", "1"},
  };
  return d;
}

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void BadValue(std::string_view key, const std::string& value,
                           const char* type) {
  throw Error(ErrorCode::kInvalidArgument, "config key '" + std::string(key) +
                                               "' expects " + type + ", got '" +
                                               value + "'");
}

}  // namespace

RunConfig::RunConfig() : values_(Defaults()) {}

void RunConfig::Set(std::string_view key, std::string_view value) {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown config key '" + std::string(key) + "'");
  }
  it->second = std::string(Trim(value));
}

void RunConfig::Merge(std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = Trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || Trim(line.substr(0, eq)).empty()) {
      throw Error(ErrorCode::kParseError,
                  "config line " + std::to_string(line_no) + " is not key=value");
    }
    Set(Trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

const std::string& RunConfig::Get(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown config key '" + std::string(key) + "'");
  }
  return it->second;
}

double RunConfig::GetDouble(std::string_view key) const {
  const std::string& v = Get(key);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    BadValue(key, v, "a number");
  }
  return out;
}

std::uint64_t RunConfig::GetUint(std::string_view key) const {
  const std::string& v = Get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    BadValue(key, v, "a non-negative integer");
  }
  return out;
}

bool RunConfig::GetBool(std::string_view key) const {
  const std::string& v = Get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  BadValue(key, v, "true or false");
}

std::vector<std::size_t> RunConfig::GetUintList(std::string_view key) const {
  const std::string& v = Get(key);
  std::vector<std::size_t> out;
  std::string_view rest = v;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = Trim(rest.substr(0, comma));
    std::size_t x = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      BadValue(key, v, "a comma-separated list of integers");
    }
    out.push_back(x);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string RunConfig::Serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t DeriveSeed(std::uint64_t seed, SeedStream stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull +
                    static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace dama::cli
