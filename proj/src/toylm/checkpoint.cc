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

#include "dama/toylm/checkpoint.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "dama/common/error.h"
#include "dama/common/io.h"

namespace dama::toylm {
namespace {

constexpr char kMagic[4] = {'D', 'M', 'K', '1'};

static_assert(std::endian::native == std::endian::little,
              "DMK1 I/O assumes a little-endian host");

void Invalid(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, what);
}

template <typename U>
void Put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U Get() {
    Need(sizeof(U));
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }
  std::string GetString(std::size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void GetFloats(float* dst, std::size_t n) {
    Need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw Error(ErrorCode::kParseError, "truncated DMK1 data");
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string FormatHeader(const ModelCheckpoint& ckpt) {
  const ModelConfig& c = ckpt.config;
  std::ostringstream h;
  h << "vocab_size=" << c.vocab_size << "\n"
    << "d_model=" << c.d_model << "\n"
    << "d_ff=" << c.d_ff << "\n"
    << "n_layers=" << c.n_layers << "\n"
    << "n_heads=" << c.n_heads << "\n"
    << "max_seq=" << c.max_seq << "\n"
    << "seed=" << c.seed << "\n"
    << "vocab=";
  for (std::size_t i = 0; i < ckpt.vocab.size(); ++i) {
    if (i > 0) h << ' ';
    h << ckpt.vocab[i];
  }
  h << "\n";
  return h.str();
}

std::uint64_t ParseCount(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError, "bad header value " + key + "=" + value);
  }
}

void ParseHeader(const std::string& text, ModelCheckpoint& ckpt) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, "header line without '=': " + line);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    ModelConfig& c = ckpt.config;
    if (key == "vocab_size") c.vocab_size = ParseCount(key, value);
    else if (key == "d_model") c.d_model = ParseCount(key, value);
    else if (key == "d_ff") c.d_ff = ParseCount(key, value);
    else if (key == "n_layers") c.n_layers = ParseCount(key, value);
    else if (key == "n_heads") c.n_heads = ParseCount(key, value);
    else if (key == "max_seq") c.max_seq = ParseCount(key, value);
    else if (key == "seed") c.seed = ParseCount(key, value);
    else if (key == "vocab") {
      std::istringstream words(value);
      std::string w;
      while (words >> w) ckpt.vocab.push_back(w);
    } else {
      throw Error(ErrorCode::kParseError, "unknown header key " + key);
    }
  }
}

}  // namespace

void ModelConfig::Validate() const {
  if (vocab_size == 0 || d_model == 0 || d_ff == 0 || n_layers == 0 ||
      n_heads == 0 || max_seq == 0) {
    Invalid("model counts must all be >= 1");
  }
  if (d_model % n_heads != 0) Invalid("d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) Invalid("head dimension must be even for rotary");
  if (d_ff < d_model) Invalid("d_ff must be >= d_model");
}

namespace names {
namespace {
std::string Layer(std::size_t l, const char* leaf) {
  return "layers." + std::to_string(l) + "." + leaf;
}
}  // namespace
std::string AttnNorm(std::size_t l) { return Layer(l, "attn_norm"); }
std::string Wq(std::size_t l) { return Layer(l, "attn.wq"); }
std::string Wk(std::size_t l) { return Layer(l, "attn.wk"); }
std::string Wv(std::size_t l) { return Layer(l, "attn.wv"); }
std::string Wo(std::size_t l) { return Layer(l, "attn.wo"); }
std::string MlpNorm(std::size_t l) { return Layer(l, "mlp_norm"); }
std::string WIn(std::size_t l) { return Layer(l, "mlp.w_in"); }
std::string WGate(std::size_t l) { return Layer(l, "mlp.w_gate"); }
std::string WOut(std::size_t l) { return Layer(l, "mlp.w_out"); }
}  // namespace names

std::map<std::string, std::vector<std::uint32_t>> ExpectedShapes(
    const ModelConfig& c) {
  const auto v = static_cast<std::uint32_t>(c.vocab_size);
  const auto d = static_cast<std::uint32_t>(c.d_model);
  const auto f = static_cast<std::uint32_t>(c.d_ff);
  std::map<std::string, std::vector<std::uint32_t>> shapes;
  shapes[names::kEmbedding] = {v, d};
  shapes[names::kFinalNorm] = {d};
  shapes[names::kUnembedding] = {v, d};
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    shapes[names::AttnNorm(l)] = {d};
    shapes[names::Wq(l)] = {d, d};
    shapes[names::Wk(l)] = {d, d};
    shapes[names::Wv(l)] = {d, d};
    shapes[names::Wo(l)] = {d, d};
    shapes[names::MlpNorm(l)] = {d};
    shapes[names::WIn(l)] = {f, d};
    shapes[names::WGate(l)] = {f, d};
    shapes[names::WOut(l)] = {d, f};
  }
  return shapes;
}

const Tensor& ModelCheckpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) Invalid("missing tensor " + name);
  return it->second;
}

Tensor& ModelCheckpoint::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) Invalid("missing tensor " + name);
  return it->second;
}

void ModelCheckpoint::Validate() const {
  config.Validate();
  if (vocab.size() != config.vocab_size) {
    Invalid("vocab has " + std::to_string(vocab.size()) + " words, config " +
            std::to_string(config.vocab_size));
  }
  const auto expected = ExpectedShapes(config);
  if (expected.size() != tensors.size()) {
    Invalid("checkpoint has " + std::to_string(tensors.size()) +
            " tensors, expected " + std::to_string(expected.size()));
  }
  for (const auto& [name, shape] : expected) {
    const Tensor& t = at(name);
    if (t.shape != shape) Invalid("tensor " + name + " has the wrong shape");
    const std::size_t rows = shape.size() == 1 ? 1 : shape[0];
    const std::size_t cols = shape.back();
    if (t.values.rows() != rows || t.values.cols() != cols) {
      Invalid("tensor " + name + " storage disagrees with its shape");
    }
  }
}

std::size_t ModelCheckpoint::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.values.size();
  return n;
}

ModelCheckpoint InitCheckpoint(const ModelConfig& config,
                               std::vector<std::string> vocab) {
  config.Validate();
  ModelCheckpoint ckpt;
  ckpt.config = config;
  ckpt.vocab = std::move(vocab);
  std::mt19937_64 rng(config.seed);
  const double d = static_cast<double>(config.d_model);
  const double f = static_cast<double>(config.d_ff);
  const double depth = std::sqrt(2.0 * static_cast<double>(config.n_layers));
  // Shapes iterate in name order, so the draw sequence is fixed.
  for (const auto& [name, shape] : ExpectedShapes(config)) {
    const std::size_t rows = shape.size() == 1 ? 1 : shape[0];
    const std::size_t cols = shape.back();
    Tensor t{shape, linalg::MatrixF(rows, cols)};
    if (shape.size() == 1) {
      for (float& x : t.values.data()) x = 1.0f;
    } else {
      double sigma = 1.0 / std::sqrt(d);
      if (name == names::kEmbedding) sigma = 1.0;
      if (name.ends_with("attn.wo")) sigma = 1.0 / std::sqrt(d) / depth;
      if (name.ends_with("mlp.w_out")) sigma = 1.0 / std::sqrt(f) / depth;
      std::normal_distribution<double> normal(0.0, sigma);
      for (float& x : t.values.data()) x = static_cast<float>(normal(rng));
    }
    ckpt.tensors.emplace(name, std::move(t));
  }
  ckpt.Validate();
  return ckpt;
}

ModelCheckpoint ApplyWeightEdit(const ModelCheckpoint& ckpt, std::size_t layer,
                                const linalg::MatrixD& left_factor) {
  const std::size_t d = ckpt.config.d_model;
  if (layer >= ckpt.config.n_layers) {
    throw Error(ErrorCode::kHookOutOfRange,
                "edit layer " + std::to_string(layer) + " out of range");
  }
  if (left_factor.rows() != d || left_factor.cols() != d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "left factor must be d_model x d_model");
  }
  ModelCheckpoint out = ckpt;
  Tensor& w = out.at(names::WOut(layer));
  const linalg::MatrixD product =
      linalg::Multiply(left_factor, linalg::Cast<double>(w.values));
  for (std::size_t i = 0; i < product.size(); ++i) {
    w.values.data()[i] = static_cast<float>(product.data()[i]);
  }
  return out;
}

std::string SerializeCheckpoint(const ModelCheckpoint& ckpt) {
  ckpt.Validate();
  std::string out(kMagic, 4);
  const std::string header = FormatHeader(ckpt);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& [name, t] : ckpt.tensors) {
    Put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    Put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::uint32_t dim : t.shape) Put<std::uint32_t>(out, dim);
    const auto values = t.values.data();
    out.append(reinterpret_cast<const char*>(values.data()),
               values.size() * sizeof(float));
  }
  return out;
}

ModelCheckpoint ParseCheckpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.GetString(4) != std::string(kMagic, 4)) {
    throw Error(ErrorCode::kParseError, "missing DMK1 magic");
  }
  ModelCheckpoint ckpt;
  const auto header_len = in.Get<std::uint32_t>();
  ParseHeader(in.GetString(header_len), ckpt);
  while (!in.done()) {
    const auto name_len = in.Get<std::uint16_t>();
    std::string name = in.GetString(name_len);
    const auto rank = in.Get<std::uint8_t>();
    if (rank != 1 && rank != 2) {
      throw Error(ErrorCode::kParseError, "unsupported rank for " + name);
    }
    Tensor t;
    for (int i = 0; i < rank; ++i) t.shape.push_back(in.Get<std::uint32_t>());
    const std::size_t rows = rank == 1 ? 1 : t.shape[0];
    std::vector<float> values(rows * t.shape.back());
    in.GetFloats(values.data(), values.size());
    t.values = linalg::MatrixF(rows, t.shape.back(), std::move(values));
    if (!ckpt.tensors.emplace(name, std::move(t)).second) {
      throw Error(ErrorCode::kParseError, "duplicate tensor " + name);
    }
  }
  ckpt.Validate();
  return ckpt;
}

void SaveCheckpoint(const ModelCheckpoint& ckpt,
                    const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeCheckpoint(ckpt));
}

ModelCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  return ParseCheckpoint(ReadFile(path));
}

}  // namespace dama::toylm
