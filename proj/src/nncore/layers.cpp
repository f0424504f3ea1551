#include "msp/nncore/layers.hpp"

#include <cmath>

#include "msp/common/errors.hpp"

namespace msp::nn {

Parameter& ParameterStore::add(const std::string& name, Tensor value) {
  if (find(name) != nullptr) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto* p = find(name);
  if (!p) throw ConfigError("unknown parameter: " + name);
  return *p;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Tensor random_normal(const Shape& shape, double stddev, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.values()) v = stddev * rng.normal();
  return t;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias, double init_scale)
    : weight_(&store.add(name + ".weight", random_normal({in, out}, init_scale / std::sqrt(double(in)), rng))) {
  if (with_bias) {
    bias_ = &store.add(name + ".bias", Tensor(Shape{out}));
  }
}

Var Linear::operator()(const Var& x) const { return linear(x, param(*weight_), bias_ ? param(*bias_) : nullptr); }

Conv1d::Conv1d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
               std::size_t stride, Rng& rng)
    : weight_(&store.add(name + ".weight", random_normal({kernel, in, out}, 1.0 / std::sqrt(double(kernel * in)), rng))),
      bias_(&store.add(name + ".bias", Tensor(Shape{out}))),
      stride_(stride),
      kernel_(kernel) {}

Var Conv1d::operator()(const Var& x) const { return conv1d(x, param(*weight_), param(*bias_), stride_); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim)
    : gamma_(&store.add(name + ".gamma", Tensor(Shape{dim}, 1.0))), beta_(&store.add(name + ".beta", Tensor(Shape{dim}))) {}

Var LayerNorm::operator()(const Var& x) const { return layer_norm(x, param(*gamma_), param(*beta_)); }

Embedding::Embedding(ParameterStore& store, const std::string& name, std::size_t rows, std::size_t dim, Rng& rng,
                     double stddev)
    : table_(&store.add(name + ".table", random_normal({rows, dim}, stddev, rng))) {}

Var Embedding::operator()(std::span<const int> ids) const { return embedding(param(*table_), ids); }

void TransformerBlockConfig::validate() const {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("transformer block: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (ffn_kernel % 2 == 0) {
    throw ConfigError("transformer block: feed-forward kernel must be odd");
  }
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name, const TransformerBlockConfig& cfg,
                                   Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  norm_attn_ = LayerNorm(store, name + ".norm_attn", cfg.dim);
  query_ = Linear(store, name + ".query", cfg.dim, cfg.dim, rng);
  key_ = Linear(store, name + ".key", cfg.dim, cfg.dim, rng);
  value_ = Linear(store, name + ".value", cfg.dim, cfg.dim, rng);
  out_ = Linear(store, name + ".out", cfg.dim, cfg.dim, rng);
  norm_ffn_ = LayerNorm(store, name + ".norm_ffn", cfg.dim);
  ffn_in_ = Conv1d(store, name + ".ffn_in", cfg.dim, cfg.ffn_dim, cfg.ffn_kernel, 1, rng);
  ffn_out_ = Conv1d(store, name + ".ffn_out", cfg.ffn_dim, cfg.dim, 1, 1, rng);
}

Var TransformerBlock::operator()(const Var& x, const AttentionMask* mask) const {
  if (x->value().cols() != cfg_.dim) {
    throw DimensionError("transformer block expects width " + std::to_string(cfg_.dim) + ", got " +
                         x->value().shape_string());
  }
  if (x->value().rows() == 0) {
    return x;
  }
  const Var h = norm_attn_(x);
  auto att = attention(query_(h), key_(h), value_(h), cfg_.heads, mask);
  const Var y = add(x, out_(att.out));
  const Var f = ffn_out_(relu(ffn_in_(norm_ffn_(y))));
  return add(y, f);
}

Tensor positional_encoding(std::size_t length, std::size_t dim, std::size_t offset) {
  Tensor pe = Tensor::matrix(length, dim);
  for (std::size_t t = 0; t < length; ++t) {
    const double pos = static_cast<double>(t + offset);
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe(t, i) = std::sin(pos * freq);
      if (i + 1 < dim) pe(t, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

}  // namespace msp::nn
