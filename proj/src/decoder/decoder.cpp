#include "msp/decoder/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "msp/common/errors.hpp"

namespace msp::decoder {

using nn::Tensor;
using nn::Var;

void DecoderConfig::validate() const {
  if (codebook_size < 2) {
    throw ConfigError("decoder: codebook_size must be at least 2");
  }
  if (max_generation_frames == 0) {
    throw ConfigError("decoder: max_generation_frames must be positive");
  }
  block_config().validate();
}

nn::TransformerBlockConfig DecoderConfig::block_config() const {
  // Kernel 1 keeps the feed-forward position-wise, which the AR causal mask relies on.
  return {.dim = model_dim, .heads = heads, .ffn_dim = ffn_dim, .ffn_kernel = 1};
}

nn::AttentionMask prefix_lm_mask(std::size_t text, std::size_t acoustic) {
  nn::AttentionMask mask(text + acoustic, text + acoustic, false);
  for (std::size_t q = 0; q < text + acoustic; ++q) {
    const std::size_t limit = q < text ? text : q + 1;
    for (std::size_t k = 0; k < limit; ++k) mask.set(q, k, true);
  }
  return mask;
}

AcousticDecoder::AcousticDecoder(nn::ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg,
                                 Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const auto d = cfg_.model_dim;
  const auto k = cfg_.codebook_size;
  for (std::size_t l = 1; l <= codec::kStages; ++l) {
    tables_.emplace_back(store, prefix + "acoustic_table" + std::to_string(l), l == 1 ? k + 1 : k, d, rng);
  }
  ar_bos_ = &store.add(prefix + "ar_bos", nn::random_normal({1, d}, 0.5, rng));
  for (std::size_t b = 0; b < cfg_.ar_blocks; ++b) {
    ar_blocks_.emplace_back(store, prefix + "ar_block" + std::to_string(b), cfg_.block_config(), rng);
  }
  ar_norm_ = nn::LayerNorm(store, prefix + "ar_norm", d);
  ar_head_ = nn::Linear(store, prefix + "ar_head", d, k + 1, rng, true, 0.1);
  stage_table_ = nn::Embedding(store, prefix + "stage_table", codec::kStages - 1, d, rng);
  for (std::size_t b = 0; b < cfg_.nar_blocks; ++b) {
    nar_blocks_.emplace_back(store, prefix + "nar_block" + std::to_string(b), cfg_.block_config(), rng);
  }
  nar_norm_ = nn::LayerNorm(store, prefix + "nar_norm", d);
  for (std::size_t s = 2; s <= codec::kStages; ++s) {
    nar_heads_.emplace_back(store, prefix + "nar_head" + std::to_string(s), d, k, rng, true, 0.1);
  }
}

Var AcousticDecoder::ar_forward(const Var& cond, std::span<const int> tokens) const {
  const auto& c = cond->value();
  if (c.cols() != cfg_.model_dim) {
    throw DimensionError("ar_forward: condition width " + std::to_string(c.cols()) + " but decoder uses " +
                         std::to_string(cfg_.model_dim));
  }
  for (int id : tokens) {
    if (id < 0 || id > cfg_.eos()) {
      throw ContractError("ar_forward: token " + std::to_string(id) + " outside [0," + std::to_string(cfg_.eos()) +
                          "]");
    }
  }
  const std::size_t t = tokens.size();
  const std::size_t l = c.rows();
  if (t == 0) {
    return nn::constant(Tensor::matrix(0, cfg_.codebook_size + 1));
  }
  // Teacher-forced inputs: BOS, then tokens shifted right by one.
  std::vector<Var> parts = {cond, nn::param(*ar_bos_)};
  if (t > 1) parts.push_back(tables_[0](tokens.first(t - 1)));
  Var acoustic = nn::concat_rows(std::vector<Var>(parts.begin() + 1, parts.end()));
  acoustic = nn::add(acoustic, nn::constant(nn::positional_encoding(t, cfg_.model_dim)));
  Var x = nn::concat_rows({cond, acoustic});
  const auto mask = prefix_lm_mask(l, t);
  for (const auto& block : ar_blocks_) x = block(x, &mask);
  return ar_head_(ar_norm_(nn::slice_rows(x, l, l + t)));
}

namespace {

int pick_token(std::span<const double> logits, const SamplingConfig& sampling, Rng& rng) {
  if (sampling.mode == SamplingConfig::Mode::kGreedy) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  if (!(sampling.temperature > 0.0) || sampling.top_k == 0) {
    throw ContractError("sampling: top-k needs k >= 1 and a positive temperature");
  }
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(sampling.top_k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](int a, int b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
  std::vector<double> probs(k);
  const double top = logits[order[0]];
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    probs[i] = std::exp((logits[order[i]] - top) / sampling.temperature);
    total += probs[i];
  }
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < k; ++i) {
    u -= probs[i];
    if (u < 0.0) return order[i];
  }
  return order[k - 1];
}

}  // namespace

ArResult AcousticDecoder::ar_generate(const Var& cond, std::span<const int> prompt_layer1,
                                      const SamplingConfig& sampling) const {
  nn::NoGradGuard no_grad;
  for (int id : prompt_layer1) {
    if (id < 0 || id >= static_cast<int>(cfg_.codebook_size)) {
      throw ContractError("ar_generate: prompt id " + std::to_string(id) + " is not a codec id");
    }
  }
  Rng rng(sampling.seed);
  std::vector<int> tokens(prompt_layer1.begin(), prompt_layer1.end());
  ArResult result;
  while (result.tokens.size() < cfg_.max_generation_frames) {
    // Row t predicts token t, so a placeholder slot exposes the next prediction.
    tokens.push_back(0);
    const Var logits = ar_forward(cond, tokens);
    tokens.pop_back();
    const int next = pick_token(logits->value().row(tokens.size()), sampling, rng);
    if (next == cfg_.eos()) {
      result.hit_eos = true;
      break;
    }
    tokens.push_back(next);
    result.tokens.push_back(next);
  }
  if (result.tokens.empty()) {
    spdlog::warn("ar_generate: empty generation (EOS emitted immediately)");
  }
  return result;
}

Var AcousticDecoder::embed_sum(const std::vector<std::span<const int>>& layers, std::size_t length) const {
  Var sum = nn::constant(Tensor::matrix(length, cfg_.model_dim));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != length) {
      throw DimensionError("acoustic layer " + std::to_string(l + 1) + " has " + std::to_string(layers[l].size()) +
                           " frames, expected " + std::to_string(length));
    }
    for (int id : layers[l]) {
      if (id < 0 || id >= static_cast<int>(cfg_.codebook_size)) {
        throw ContractError("acoustic layer " + std::to_string(l + 1) + ": id " + std::to_string(id) +
                            " is not a codec id");
      }
    }
    sum = nn::add(sum, tables_[l](layers[l]));
  }
  return sum;
}

Var AcousticDecoder::nar_input(const Var& cond, const codec::CodeGrid& prompt,
                               const std::vector<std::vector<int>>& predicted, std::size_t stage) const {
  if (stage < 2 || stage > codec::kStages) {
    throw ContractError("nar stage must be in [2,8], got " + std::to_string(stage));
  }
  if (predicted.size() != stage - 1) {
    throw ContractError("nar stage " + std::to_string(stage) + " needs " + std::to_string(stage - 1) +
                        " predicted layers, got " + std::to_string(predicted.size()));
  }
  if (cond->value().cols() != cfg_.model_dim) {
    throw DimensionError("nar_forward: condition width mismatch");
  }
  const std::size_t p = prompt.frames;
  const std::size_t t = predicted.front().size();
  if (t == 0) {
    throw EmptyInputError("nar_forward: empty target region");
  }
  std::vector<std::span<const int>> prompt_layers;
  for (std::size_t l = 0; l < stage; ++l) prompt_layers.emplace_back(prompt.layers[l]);
  std::vector<std::span<const int>> pred_layers(predicted.begin(), predicted.end());

  std::vector<Var> parts = {cond};
  if (p > 0) {
    parts.push_back(nn::add(embed_sum(prompt_layers, p), nn::constant(nn::positional_encoding(p, cfg_.model_dim))));
  }
  const int stage_id = static_cast<int>(stage - 2);
  const std::vector<int> stage_ids(t, stage_id);
  Var target = nn::add(embed_sum(pred_layers, t), nn::constant(nn::positional_encoding(t, cfg_.model_dim)));
  parts.push_back(nn::add(target, stage_table_(stage_ids)));
  return nn::concat_rows(parts);
}

Var AcousticDecoder::nar_forward(const Var& cond, const codec::CodeGrid& prompt,
                                 const std::vector<std::vector<int>>& predicted, std::size_t stage) const {
  Var x = nar_input(cond, prompt, predicted, stage);
  for (const auto& block : nar_blocks_) x = block(x);
  const std::size_t rows = x->value().rows();
  const std::size_t t = predicted.front().size();
  return nar_heads_[stage - 2](nar_norm_(nn::slice_rows(x, rows - t, rows)));
}

codec::CodeGrid AcousticDecoder::nar_generate(const Var& cond, const codec::CodeGrid& prompt,
                                              std::span<const int> layer1) const {
  static constexpr std::array<std::size_t, 7> kOrder = {2, 3, 4, 5, 6, 7, 8};
  return nar_generate(cond, prompt, layer1, kOrder);
}

codec::CodeGrid AcousticDecoder::nar_generate(const Var& cond, const codec::CodeGrid& prompt,
                                              std::span<const int> layer1,
                                              std::span<const std::size_t> order) const {
  std::vector<std::size_t> sorted(order.begin(), order.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::vector<std::size_t>{2, 3, 4, 5, 6, 7, 8}) {
    throw ContractError("nar_generate: stage order must be a permutation of 2..8");
  }
  nn::NoGradGuard no_grad;
  codec::CodeGrid grid(layer1.size(), cfg_.codebook_size);
  std::copy(layer1.begin(), layer1.end(), grid.layers[0].begin());
  if (layer1.empty()) return grid;
  for (std::size_t stage : order) {
    const std::vector<std::vector<int>> predicted(grid.layers.begin(),
                                                  grid.layers.begin() + static_cast<std::ptrdiff_t>(stage - 1));
    const Var logits = nar_forward(cond, prompt, predicted, stage);
    const auto& v = logits->value();
    for (std::size_t t = 0; t < layer1.size(); ++t) {
      const auto row = v.row(t);
      grid.layers[stage - 1][t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return grid;
}

}  // namespace msp::decoder
