#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msp/common/rng.hpp"
#include "msp/nncore/ops.hpp"

namespace msp::nn {

/// Owns every Parameter of a model in registration order.
///
/// Parameters are heap-allocated so layer handles stay valid when the store
/// (or the model owning it) is moved.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  /// Registers a parameter; names must be unique (ConfigError otherwise).
  Parameter& add(const std::string& name, Tensor value);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const;
  void zero_grad();

  template <typename F>
  void for_each(F&& f) {
    for (auto& p : params_) f(*p);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& p : params_) f(static_cast<const Parameter&>(*p));
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Normal(0, stddev) tensor.
Tensor random_normal(const Shape& shape, double stddev, Rng& rng);

class Linear {
 public:
  Linear() = default;
  /// Weights ~ N(0, init_scale / sqrt(in)); zero bias.
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true, double init_scale = 1.0);

  Var operator()(const Var& x) const;
  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
         std::size_t stride, Rng& rng);

  Var operator()(const Var& x) const;
  std::size_t stride() const noexcept { return stride_; }
  std::size_t kernel() const noexcept { return kernel_; }
  Parameter& weight() const { return *weight_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  std::size_t stride_ = 1;
  std::size_t kernel_ = 1;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);
  Var operator()(const Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, std::size_t rows, std::size_t dim, Rng& rng,
            double stddev = 0.5);
  Var operator()(std::span<const int> ids) const;
  Parameter& table() const { return *table_; }
  std::size_t rows() const { return table_->value.rows(); }

 private:
  Parameter* table_ = nullptr;
};

struct TransformerBlockConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  /// Width of the first feed-forward convolution; 1 makes it position-wise.
  std::size_t ffn_kernel = 1;

  /// Throws ConfigError on dim % heads != 0 or an even kernel.
  void validate() const;
};

/// Pre-norm block: x + MHA(LN(x)), then x + Conv(ReLU(Conv(LN(x)))).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name, const TransformerBlockConfig& cfg, Rng& rng);

  Var operator()(const Var& x, const AttentionMask* mask = nullptr) const;
  const TransformerBlockConfig& config() const noexcept { return cfg_; }

 private:
  TransformerBlockConfig cfg_;
  LayerNorm norm_attn_;
  Linear query_;
  Linear key_;
  Linear value_;
  Linear out_;
  LayerNorm norm_ffn_;
  Conv1d ffn_in_;
  Conv1d ffn_out_;
};

/// Standard sinusoidal table for positions [offset, offset + length).
Tensor positional_encoding(std::size_t length, std::size_t dim, std::size_t offset = 0);

}  // namespace msp::nn
