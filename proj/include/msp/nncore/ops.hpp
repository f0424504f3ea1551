#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msp/nncore/autograd.hpp"

namespace msp::nn {

/// Boolean attention mask; allowed(q, k) == true lets query q see key k.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t queries, std::size_t keys, bool fill = true)
      : queries_(queries), keys_(keys), allowed_(queries * keys, fill ? 1 : 0) {}

  std::size_t queries() const noexcept { return queries_; }
  std::size_t keys() const noexcept { return keys_; }
  bool allowed(std::size_t q, std::size_t k) const { return allowed_[q * keys_ + k] != 0; }
  void set(std::size_t q, std::size_t k, bool allow) { allowed_[q * keys_ + k] = allow ? 1 : 0; }

  /// Only the diagonal is visible (square masks).
  static AttentionMask self_only(std::size_t n);

 private:
  std::size_t queries_ = 0;
  std::size_t keys_ = 0;
  std::vector<std::uint8_t> allowed_;
};

Var matmul(const Var& a, const Var& b);
/// out = x W + b. `b` may be null.
Var linear(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
/// x [N x M] plus a row vector broadcast over every row.
Var add_row(const Var& x, const Var& row);
Var scale(const Var& a, double s);
Var relu(const Var& a);
/// Per-row normalization with affine gain/bias (both [D]).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Gathers table rows; ids must lie in [0, rows).
Var embedding(const Var& table, std::span<const int> ids);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);

/// Same-padded strided 1-D convolution over time.
/// x: [T x Din], kernels: [k x Din x Dout], bias: [Dout] (may be null).
/// Output length is ceil(T / stride); k must be odd.
Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t stride);

/// Output length of conv1d for a given input length.
std::size_t conv1d_output_length(std::size_t length, std::size_t stride);

struct AttentionOutput {
  Var out;
  /// Per head, row-major [Lq x Lk]; masked entries are exactly zero.
  std::vector<Tensor> weights;
};

/// softmax(Q K^T / sqrt(d_head) + mask) V, computed independently per head on
/// equal column slices. heads == 1 gives plain scaled dot-product attention.
AttentionOutput attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
                          const AttentionMask* mask = nullptr);

/// Single-head form returning the weight matrix for inspection.
std::pair<Var, Tensor> scaled_dot_attention(const Var& q, const Var& k, const Var& v,
                                            const AttentionMask* mask = nullptr);

/// Mean negative log-softmax over positions whose target differs from
/// ignore_id. Returns a [1] tensor.
Var cross_entropy(const Var& logits, std::span<const int> targets, std::optional<int> ignore_id = std::nullopt);

}  // namespace msp::nn
