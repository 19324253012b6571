/*
 * Copyright 2026 The specdapt Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// The four spectrum classifiers, built over the autodiff layer set.
//
//   MLP        dense stack (ReLU + dropout) -> dense to classes
//   CNN        conv1d stack (ReLU) -> flatten -> dense stack -> dense to classes
//   TBNN_LI    reshape bins into a token grid, fixed sinusoidal positions,
//              post-norm encoder blocks, flatten -> dense to classes
//   TBNN_OURS  learnable patch embedding (linear / MLP / small CNN), [CLS]
//              token, learnable or sinusoidal positions, pre-norm encoder
//              blocks, [CLS] -> MLP head
//
// Every model maps zscored spectra [B, n_bins] to logits [B, n_classes].

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "specdapt/autodiff.hpp"
#include "specdapt/core.hpp"

namespace specdapt::models {

enum class ArchKind { kMlp, kCnn, kTbnnLi, kTbnnOurs };
enum class EmbeddingMethod { kLinear, kMlp, kCnn };
enum class PositionalEncoding { kSinusoidal, kLearnable };

inline std::string to_string(ArchKind k) {
  switch (k) {
    case ArchKind::kMlp: return "MLP";
    case ArchKind::kCnn: return "CNN";
    case ArchKind::kTbnnLi: return "TBNN_LI";
    case ArchKind::kTbnnOurs: return "TBNN_OURS";
  }
  return "?";
}

inline ArchKind arch_from_string(const std::string& s) {
  if (s == "MLP") return ArchKind::kMlp;
  if (s == "CNN") return ArchKind::kCnn;
  if (s == "TBNN_LI") return ArchKind::kTbnnLi;
  if (s == "TBNN_OURS") return ArchKind::kTbnnOurs;
  throw ValidationError("unknown architecture '" + s + "'");
}

struct ArchSpec {
  ArchKind kind = ArchKind::kMlp;
  std::size_t n_bins = 1024;
  std::size_t n_classes = 8;
  double dropout = 0.0;

  // MLP hidden layers; CNN dense layers after the conv stack.
  std::vector<std::size_t> dense_units;
  // CNN.
  std::vector<std::size_t> conv_filters;
  std::size_t conv_kernel = 7;
  // Transformers.
  std::size_t attention_blocks = 4;
  std::size_t heads = 8;
  std::size_t ff_dim = 512;
  // TBNN_LI token grid: n_bins = li_tokens * li_width.
  std::size_t li_tokens = 32;
  // TBNN_OURS.
  std::size_t patch_size = 64;
  std::size_t embed_dim = 256;
  EmbeddingMethod embedding = EmbeddingMethod::kCnn;
  std::size_t embed_filters = 8;
  std::size_t embed_kernel = 3;
  PositionalEncoding positional = PositionalEncoding::kLearnable;

  std::size_t li_width() const { return li_tokens == 0 ? 0 : n_bins / li_tokens; }
  std::size_t n_patches() const { return patch_size == 0 ? 0 : n_bins / patch_size; }

  void validate() const {
    require(n_bins >= 2 && n_classes >= 2, "need n_bins >= 2 and n_classes >= 2");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    switch (kind) {
      case ArchKind::kMlp:
        for (auto u : dense_units) require(u > 0, "dense units must be positive");
        break;
      case ArchKind::kCnn:
        require(!conv_filters.empty(), "CNN needs at least one conv layer");
        require(conv_kernel >= 1, "conv kernel must be positive");
        for (auto f : conv_filters) require(f > 0, "conv filters must be positive");
        for (auto u : dense_units) require(u > 0, "dense units must be positive");
        break;
      case ArchKind::kTbnnLi:
        require(li_tokens > 0 && n_bins % li_tokens == 0,
                "TBNN_LI needs n_bins divisible by the token count");
        require(heads > 0 && li_width() % heads == 0,
                "TBNN_LI token width must be divisible by heads");
        require(li_width() % 2 == 0, "TBNN_LI token width must be even (sinusoidal table)");
        require(attention_blocks > 0 && ff_dim > 0, "TBNN_LI needs blocks and FF width");
        break;
      case ArchKind::kTbnnOurs:
        require(patch_size > 0 && n_bins % patch_size == 0,
                "TBNN_OURS needs n_bins divisible by the patch size");
        require(heads > 0 && embed_dim % heads == 0,
                "embedding dimension must be divisible by heads");
        require(attention_blocks > 0 && ff_dim > 0, "TBNN_OURS needs blocks and FF width");
        if (positional == PositionalEncoding::kSinusoidal)
          require(embed_dim % 2 == 0, "sinusoidal positions need an even embedding dimension");
        if (embedding == EmbeddingMethod::kCnn)
          require(embed_filters > 0 && embed_kernel > 0, "CNN embedding needs filters and kernel");
        break;
    }
  }

  // Best-run architecture values from the source-domain search.
  static ArchSpec reference(ArchKind kind, std::size_t n_classes) {
    ArchSpec s;
    s.kind = kind;
    s.n_classes = n_classes;
    switch (kind) {
      case ArchKind::kMlp:
        s.dense_units = {4096, 2048};
        s.dropout = 0.346;
        break;
      case ArchKind::kCnn:
        s.conv_filters = {32};
        s.conv_kernel = 7;
        s.dense_units = {2048, 1024};
        s.dropout = 0.101;
        break;
      case ArchKind::kTbnnLi:
        s.li_tokens = 32;
        s.attention_blocks = 5;
        s.heads = 4;
        s.ff_dim = 1024;
        s.dropout = 4.53e-4;
        break;
      case ArchKind::kTbnnOurs:
        s.patch_size = 64;
        s.embed_dim = 256;
        s.embedding = EmbeddingMethod::kCnn;
        s.embed_filters = 8;
        s.attention_blocks = 4;
        s.heads = 8;
        s.ff_dim = 512;
        s.positional = PositionalEncoding::kLearnable;
        s.dropout = 0.0198;
        break;
    }
    return s;
  }

  // Same topology at a width that trains in seconds on one CPU core.
  static ArchSpec desk(ArchKind kind, std::size_t n_classes, std::size_t n_bins = 1024) {
    ArchSpec s = reference(kind, n_classes);
    s.n_bins = n_bins;
    switch (kind) {
      case ArchKind::kMlp:
        s.dense_units = {128, 64};
        s.dropout = 0.2;
        break;
      case ArchKind::kCnn:
        s.conv_filters = {4};
        s.dense_units = {64};
        s.dropout = 0.1;
        break;
      case ArchKind::kTbnnLi:
        s.attention_blocks = 2;
        s.ff_dim = 64;
        break;
      case ArchKind::kTbnnOurs:
        s.embed_dim = 32;
        s.attention_blocks = 2;
        s.heads = 4;
        s.ff_dim = 64;
        s.dropout = 0.05;
        break;
    }
    return s;
  }
};

inline nlohmann::json to_json(const ArchSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)},
                      {"n_bins", s.n_bins},
                      {"n_classes", s.n_classes},
                      {"dropout", s.dropout}};
  switch (s.kind) {
    case ArchKind::kMlp:
      j["dense_units"] = s.dense_units;
      break;
    case ArchKind::kCnn:
      j["dense_units"] = s.dense_units;
      j["conv_filters"] = s.conv_filters;
      j["conv_kernel"] = s.conv_kernel;
      break;
    case ArchKind::kTbnnLi:
      j["li_tokens"] = s.li_tokens;
      j["attention_blocks"] = s.attention_blocks;
      j["heads"] = s.heads;
      j["ff_dim"] = s.ff_dim;
      break;
    case ArchKind::kTbnnOurs:
      j["patch_size"] = s.patch_size;
      j["embed_dim"] = s.embed_dim;
      j["embedding"] = s.embedding == EmbeddingMethod::kLinear ? "linear"
                       : s.embedding == EmbeddingMethod::kMlp  ? "mlp"
                                                                : "cnn";
      j["embed_filters"] = s.embed_filters;
      j["embed_kernel"] = s.embed_kernel;
      j["positional"] = s.positional == PositionalEncoding::kLearnable ? "learnable" : "sinusoidal";
      j["attention_blocks"] = s.attention_blocks;
      j["heads"] = s.heads;
      j["ff_dim"] = s.ff_dim;
      break;
  }
  return j;
}

// Missing fields fall back to the desk preset of the named kind.
inline ArchSpec arch_from_json(const nlohmann::json& j, std::size_t n_classes,
                               std::size_t n_bins) {
  try {
    const ArchKind kind = arch_from_string(j.at("kind").get<std::string>());
    const std::string preset = j.value("preset", std::string("desk"));
    ArchSpec s;
    if (preset == "desk")
      s = ArchSpec::desk(kind, n_classes, n_bins);
    else if (preset == "reference")
      s = ArchSpec::reference(kind, n_classes);
    else
      throw ValidationError("unknown architecture preset '" + preset + "'");
    s.n_bins = j.value("n_bins", n_bins);
    s.n_classes = j.value("n_classes", n_classes);
    s.dropout = j.value("dropout", s.dropout);
    s.dense_units = j.value("dense_units", s.dense_units);
    s.conv_filters = j.value("conv_filters", s.conv_filters);
    s.conv_kernel = j.value("conv_kernel", s.conv_kernel);
    s.attention_blocks = j.value("attention_blocks", s.attention_blocks);
    s.heads = j.value("heads", s.heads);
    s.ff_dim = j.value("ff_dim", s.ff_dim);
    s.li_tokens = j.value("li_tokens", s.li_tokens);
    s.patch_size = j.value("patch_size", s.patch_size);
    s.embed_dim = j.value("embed_dim", s.embed_dim);
    s.embed_filters = j.value("embed_filters", s.embed_filters);
    s.embed_kernel = j.value("embed_kernel", s.embed_kernel);
    if (j.contains("embedding")) {
      const auto e = j.at("embedding").get<std::string>();
      if (e == "linear") s.embedding = EmbeddingMethod::kLinear;
      else if (e == "mlp") s.embedding = EmbeddingMethod::kMlp;
      else if (e == "cnn") s.embedding = EmbeddingMethod::kCnn;
      else throw ValidationError("unknown embedding method '" + e + "'");
    }
    if (j.contains("positional")) {
      const auto p = j.at("positional").get<std::string>();
      if (p == "learnable") s.positional = PositionalEncoding::kLearnable;
      else if (p == "sinusoidal") s.positional = PositionalEncoding::kSinusoidal;
      else throw ValidationError("unknown positional encoding '" + p + "'");
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad architecture JSON: ") + e.what());
  }
}

// Architecture, parameters, and the ordered list of trainable layers. Each
// layer owns the parameters named "<layer>.<suffix>".
class ModelBundle {
 public:
  ArchSpec spec;
  ad::ParamStore params;
  std::vector<std::string> layers;

  std::vector<std::string> layer_params(const std::string& layer) const {
    std::vector<std::string> out;
    const std::string prefix = layer + ".";
    for (const auto& p : params.all())
      if (p.name.compare(0, prefix.size(), prefix) == 0) out.push_back(p.name);
    return out;
  }

  void set_layer_trainable(const std::string& layer, bool trainable) {
    for (const auto& name : layer_params(layer)) params.at(name).trainable = trainable;
  }

  // Builds logits [B, n_classes] for zscored input x [B, n_bins].
  ad::Var forward(ad::Graph& g, ad::Var x, bool training, Rng& rng) {
    require(g.value(x).rank() == 2 && g.value(x).dim(1) == spec.n_bins,
            "model input must be [B, " + std::to_string(spec.n_bins) + "]");
    Ctx c{g, training, rng};
    switch (spec.kind) {
      case ArchKind::kMlp: return forward_mlp(c, x);
      case ArchKind::kCnn: return forward_cnn(c, x);
      case ArchKind::kTbnnLi: return forward_li(c, x);
      case ArchKind::kTbnnOurs: return forward_ours(c, x);
    }
    throw ValidationError("unknown architecture");
  }

 private:
  struct Ctx {
    ad::Graph& g;
    bool training;
    Rng& rng;
  };

  ad::Var p(ad::Graph& g, const std::string& name) { return g.param(params.at(name)); }

  ad::Var dense(Ctx& c, ad::Var x, const std::string& layer) {
    return c.g.dense(x, p(c.g, layer + ".weight"), p(c.g, layer + ".bias"));
  }
  ad::Var norm(Ctx& c, ad::Var x, const std::string& layer) {
    return c.g.layer_norm(x, p(c.g, layer + ".gamma"), p(c.g, layer + ".beta"));
  }
  ad::Var drop(Ctx& c, ad::Var x) { return c.g.dropout(x, spec.dropout, c.training, c.rng); }

  ad::Var mha(Ctx& c, ad::Var x, const std::string& block) {
    ad::Var q = dense(c, x, block + ".attn_q");
    ad::Var k = dense(c, x, block + ".attn_k");
    ad::Var v = dense(c, x, block + ".attn_v");
    ad::Var o = c.g.attention(q, k, v, spec.heads);
    return drop(c, dense(c, o, block + ".attn_out"));
  }

  ad::Var feed_forward(Ctx& c, ad::Var x, const std::string& block) {
    ad::Var h = c.g.gelu(dense(c, x, block + ".ff1"));
    return drop(c, dense(c, drop(c, h), block + ".ff2"));
  }

  ad::Var forward_mlp(Ctx& c, ad::Var x) {
    ad::Var h = x;
    for (std::size_t i = 0; i < spec.dense_units.size(); ++i)
      h = drop(c, c.g.relu(dense(c, h, "dense" + std::to_string(i))));
    return dense(c, h, "out");
  }

  ad::Var forward_cnn(Ctx& c, ad::Var x) {
    const std::size_t B = c.g.value(x).dim(0);
    ad::Var h = c.g.reshape(x, {B, 1, spec.n_bins});
    for (std::size_t i = 0; i < spec.conv_filters.size(); ++i) {
      const std::string l = "conv" + std::to_string(i);
      h = c.g.relu(c.g.conv1d(h, p(c.g, l + ".weight"), p(c.g, l + ".bias"), ad::Padding::kValid));
    }
    const auto& hs = c.g.value(h).shape;
    h = drop(c, c.g.reshape(h, {B, hs[1] * hs[2]}));
    for (std::size_t i = 0; i < spec.dense_units.size(); ++i)
      h = drop(c, c.g.relu(dense(c, h, "dense" + std::to_string(i))));
    return dense(c, h, "out");
  }

  ad::Var forward_li(Ctx& c, ad::Var x) {
    const std::size_t B = c.g.value(x).dim(0), T = spec.li_tokens, D = spec.li_width();
    ad::Var h = c.g.reshape(x, {B, T, D});
    h = c.g.add(h, c.g.input(ad::sinusoidal_encoding(T, D)));
    for (std::size_t b = 0; b < spec.attention_blocks; ++b) {
      const std::string blk = "block" + std::to_string(b);
      h = norm(c, c.g.add(h, mha(c, h, blk)), blk + ".ln1");
      h = norm(c, c.g.add(h, feed_forward(c, h, blk)), blk + ".ln2");
    }
    h = c.g.reshape(h, {B, T * D});
    return dense(c, h, "out");
  }

  ad::Var forward_ours(Ctx& c, ad::Var x) {
    const std::size_t B = c.g.value(x).dim(0), P = spec.n_patches(), S = spec.patch_size;
    const std::size_t D = spec.embed_dim;
    ad::Var e;
    switch (spec.embedding) {
      case EmbeddingMethod::kLinear:
        e = dense(c, c.g.reshape(x, {B * P, S}), "embed_linear");
        break;
      case EmbeddingMethod::kMlp:
        e = dense(c, c.g.gelu(dense(c, c.g.reshape(x, {B * P, S}), "embed_mlp1")), "embed_mlp2");
        break;
      case EmbeddingMethod::kCnn: {
        ad::Var patches = c.g.reshape(x, {B * P, 1, S});
        ad::Var f = c.g.relu(c.g.conv1d(patches, p(c.g, "embed_conv.weight"),
                                        p(c.g, "embed_conv.bias"), ad::Padding::kSame));
        e = dense(c, c.g.reshape(f, {B * P, spec.embed_filters * S}), "embed_proj");
        break;
      }
    }
    ad::Var h = c.g.reshape(e, {B, P, D});
    h = c.g.prepend_token(p(c.g, "cls.token"), h);
    if (spec.positional == PositionalEncoding::kLearnable)
      h = c.g.add(h, p(c.g, "pos.table"));
    else
      h = c.g.add(h, c.g.input(ad::sinusoidal_encoding(P + 1, D)));
    h = drop(c, h);
    for (std::size_t b = 0; b < spec.attention_blocks; ++b) {
      const std::string blk = "block" + std::to_string(b);
      h = c.g.add(h, mha(c, norm(c, h, blk + ".ln1"), blk));
      h = c.g.add(h, feed_forward(c, norm(c, h, blk + ".ln2"), blk));
    }
    ad::Var cls = c.g.take_token(h, 0);
    ad::Var z = c.g.gelu(dense(c, norm(c, cls, "head_ln"), "head_fc"));
    return dense(c, drop(c, z), "head_out");
  }

};

namespace detail {

inline ad::Tensor glorot(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  ad::Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values) v = rng.uniform(-limit, limit);
  return t;
}

inline ad::Tensor normal(ad::Shape shape, double sd, Rng& rng) {
  ad::Tensor t(std::move(shape));
  for (auto& v : t.values) v = rng.normal(0.0, sd);
  return t;
}

class Builder {
 public:
  Builder(ModelBundle& m, Rng& rng) : m_(m), rng_(rng) {}

  void dense(const std::string& layer, std::size_t in, std::size_t out) {
    m_.params.add(layer + ".weight", glorot({in, out}, in, out, rng_));
    m_.params.add(layer + ".bias", ad::Tensor({out}, 0.0));
    m_.layers.push_back(layer);
  }
  void conv(const std::string& layer, std::size_t cin, std::size_t cout, std::size_t k) {
    m_.params.add(layer + ".weight", glorot({cout, cin, k}, cin * k, cout * k, rng_));
    m_.params.add(layer + ".bias", ad::Tensor({cout}, 0.0));
    m_.layers.push_back(layer);
  }
  void norm(const std::string& layer, std::size_t d) {
    m_.params.add(layer + ".gamma", ad::Tensor({d}, 1.0));
    m_.params.add(layer + ".beta", ad::Tensor({d}, 0.0));
    m_.layers.push_back(layer);
  }
  void tensor(const std::string& layer, const std::string& suffix, ad::Shape shape) {
    m_.params.add(layer + "." + suffix, normal(std::move(shape), 0.02, rng_));
    m_.layers.push_back(layer);
  }
  void attention(const std::string& blk, std::size_t d) {
    dense(blk + ".attn_q", d, d);
    dense(blk + ".attn_k", d, d);
    dense(blk + ".attn_v", d, d);
    dense(blk + ".attn_out", d, d);
  }
  void feed_forward(const std::string& blk, std::size_t d, std::size_t ff) {
    dense(blk + ".ff1", d, ff);
    dense(blk + ".ff2", ff, d);
  }

 private:
  ModelBundle& m_;
  Rng& rng_;
};

}  // namespace detail

// Glorot-uniform weights, zero biases, unit LayerNorm gains, N(0, 0.02) for
// the [CLS] token and learnable positions.
inline ModelBundle build(const ArchSpec& spec, Rng& rng) {
  spec.validate();
  ModelBundle m;
  m.spec = spec;
  detail::Builder b(m, rng);
  const std::size_t M = spec.n_classes;
  switch (spec.kind) {
    case ArchKind::kMlp: {
      std::size_t in = spec.n_bins;
      for (std::size_t i = 0; i < spec.dense_units.size(); ++i) {
        b.dense("dense" + std::to_string(i), in, spec.dense_units[i]);
        in = spec.dense_units[i];
      }
      b.dense("out", in, M);
      break;
    }
    case ArchKind::kCnn: {
      std::size_t channels = 1, length = spec.n_bins;
      for (std::size_t i = 0; i < spec.conv_filters.size(); ++i) {
        require(length >= spec.conv_kernel, "CNN: spectrum too short for the conv stack");
        b.conv("conv" + std::to_string(i), channels, spec.conv_filters[i], spec.conv_kernel);
        channels = spec.conv_filters[i];
        length = length - spec.conv_kernel + 1;
      }
      std::size_t in = channels * length;
      for (std::size_t i = 0; i < spec.dense_units.size(); ++i) {
        b.dense("dense" + std::to_string(i), in, spec.dense_units[i]);
        in = spec.dense_units[i];
      }
      b.dense("out", in, M);
      break;
    }
    case ArchKind::kTbnnLi: {
      const std::size_t D = spec.li_width();
      for (std::size_t k = 0; k < spec.attention_blocks; ++k) {
        const std::string blk = "block" + std::to_string(k);
        b.attention(blk, D);
        b.norm(blk + ".ln1", D);
        b.feed_forward(blk, D, spec.ff_dim);
        b.norm(blk + ".ln2", D);
      }
      b.dense("out", spec.li_tokens * D, M);
      break;
    }
    case ArchKind::kTbnnOurs: {
      const std::size_t D = spec.embed_dim, S = spec.patch_size;
      switch (spec.embedding) {
        case EmbeddingMethod::kLinear:
          b.dense("embed_linear", S, D);
          break;
        case EmbeddingMethod::kMlp:
          b.dense("embed_mlp1", S, D);
          b.dense("embed_mlp2", D, D);
          break;
        case EmbeddingMethod::kCnn:
          b.conv("embed_conv", 1, spec.embed_filters, spec.embed_kernel);
          b.dense("embed_proj", spec.embed_filters * S, D);
          break;
      }
      b.tensor("cls", "token", {D});
      if (spec.positional == PositionalEncoding::kLearnable)
        b.tensor("pos", "table", {spec.n_patches() + 1, D});
      for (std::size_t k = 0; k < spec.attention_blocks; ++k) {
        const std::string blk = "block" + std::to_string(k);
        b.norm(blk + ".ln1", D);
        b.attention(blk, D);
        b.norm(blk + ".ln2", D);
        b.feed_forward(blk, D, spec.ff_dim);
      }
      b.norm("head_ln", D);
      b.dense("head_fc", D, D);
      b.dense("head_out", D, M);
      break;
    }
  }
  return m;
}

// Rebuilds a bundle around loaded parameters, checking names and shapes.
inline ModelBundle with_params(const ArchSpec& spec, ad::ParamStore params) {
  Rng scratch(0);
  ModelBundle m = build(spec, scratch);
  require(params.size() == m.params.size(), "checkpoint does not match the architecture");
  for (const auto& p : m.params.all()) {
    require(params.contains(p.name), "checkpoint lacks parameter '" + p.name + "'");
    require(params.at(p.name).value.shape == p.value.shape,
            "checkpoint shape mismatch for '" + p.name + "'");
  }
  for (std::size_t i = 0; i < m.params.size(); ++i)
    require(params.all()[i].name == m.params.all()[i].name,
            "checkpoint parameter order does not match the architecture");
  m.params = std::move(params);
  return m;
}

struct Outputs {
  Matrix logits;
  Matrix probs;
};

// Eval-mode inference over already-zscored rows, in chunks.
inline Outputs infer(ModelBundle& model, const Matrix& inputs, std::size_t chunk = 128) {
  Outputs out;
  Rng unused(0);
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, inputs.size() - start);
    ad::Tensor x({n, model.spec.n_bins});
    for (std::size_t i = 0; i < n; ++i) {
      require(inputs[start + i].size() == model.spec.n_bins, "input width must equal n_bins");
      std::copy(inputs[start + i].begin(), inputs[start + i].end(),
                x.values.begin() + i * model.spec.n_bins);
    }
    ad::Graph g;
    ad::Var logits = model.forward(g, g.input(std::move(x)), false, unused);
    const ad::Tensor& z = g.value(logits);
    const std::size_t M = model.spec.n_classes;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(z.values.begin() + i * M, z.values.begin() + (i + 1) * M);
      std::vector<double> prob = row;
      ad::Graph::softmax_row(prob.data(), M);
      for (double v : prob)
        if (!std::isfinite(v)) throw NonFiniteError("non-finite probability");
      out.logits.push_back(std::move(row));
      out.probs.push_back(std::move(prob));
    }
  }
  return out;
}

inline Matrix predict_proba(ModelBundle& model, const Matrix& zscored) {
  return infer(model, zscored).probs;
}

}  // namespace specdapt::models
