#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "msp/common/errors.hpp"
#include "msp/decoder/decoder.hpp"

using namespace msp;
using namespace msp::decoder;
using msp::nn::Tensor;
using msp::nn::Var;

namespace {

DecoderConfig small_config() {
  DecoderConfig cfg;
  cfg.model_dim = 16;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  cfg.codebook_size = 8;
  cfg.max_generation_frames = 30;
  return cfg;
}

std::vector<int> random_ids(Rng& rng, std::size_t n, int upper) {
  std::vector<int> ids(n);
  for (auto& id : ids) id = static_cast<int>(rng.uniform_int(0, upper - 1));
  return ids;
}

codec::CodeGrid random_grid(Rng& rng, std::size_t frames, std::size_t k) {
  codec::CodeGrid g(frames, k);
  for (auto& layer : g.layers) layer = random_ids(rng, frames, static_cast<int>(k));
  return g;
}

std::vector<std::vector<int>> random_layers(Rng& rng, std::size_t count, std::size_t frames, std::size_t k) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_ids(rng, frames, static_cast<int>(k)));
  return out;
}

Var random_cond(Rng& rng, std::size_t rows, std::size_t dim) {
  return nn::constant(msp::testing::random_tensor({rows, dim}, rng));
}

double row_diff(const Tensor& a, const Tensor& b, std::size_t r) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) d = std::max(d, std::abs(a(r, c) - b(r, c)));
  return d;
}

}  // namespace

TEST(PrefixLmMask, TextSeesTextAcousticIsCausal) {
  const auto m = prefix_lm_mask(3, 4);
  for (std::size_t q = 0; q < 7; ++q) {
    for (std::size_t k = 0; k < 7; ++k) {
      const bool expected = k < 3 || (q >= 3 && k <= q);
      EXPECT_EQ(m.allowed(q, k), expected) << q << "," << k;
    }
  }
}

TEST(ArForward, ShapeAndEmptyCase) {
  Rng rng(1);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 5, 16);
  EXPECT_EQ(dec.ar_forward(cond, random_ids(rng, 9, 9))->value().shape(), (nn::Shape{9, 9}));
  EXPECT_EQ(dec.ar_forward(cond, {})->value().shape(), (nn::Shape{0, 9}));
  const std::vector<int> bad = {1, 9};
  EXPECT_THROW(dec.ar_forward(cond, bad), ContractError);
}

TEST(ArForward, FutureTokensHaveNoInfluence) {
  Rng rng(2);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 6, 16);
  const auto tokens = random_ids(rng, 14, 9);
  const Tensor base = dec.ar_forward(cond, tokens)->value();
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    auto changed = tokens;
    changed[t + 1] = (changed[t + 1] + 3) % 9;
    const Tensor out = dec.ar_forward(cond, changed)->value();
    for (std::size_t r = 0; r <= t; ++r) EXPECT_EQ(row_diff(base, out, r), 0.0) << "t=" << t << " row " << r;
    if (t + 2 < tokens.size()) {
      EXPECT_GT(row_diff(base, out, t + 2), 0.0);
    }
  }
}

TEST(ArForward, EveryTextRowReachesFirstPosition) {
  Rng rng(3);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Tensor cond = msp::testing::random_tensor({6, 16}, rng);
  const auto tokens = random_ids(rng, 5, 9);
  const Tensor base = dec.ar_forward(nn::constant(cond), tokens)->value();
  for (std::size_t j = 0; j < 6; ++j) {
    Tensor changed = cond;
    changed(j, 0) += 0.5;
    EXPECT_GT(row_diff(base, dec.ar_forward(nn::constant(changed), tokens)->value(), 0), 0.0) << j;
  }
}

TEST(ArForward, InitialLossNearUniform) {
  Rng rng(4);
  nn::ParameterStore store;
  DecoderConfig cfg;
  AcousticDecoder dec(store, "dec.", cfg, rng);
  auto tokens = random_ids(rng, 60, 64);
  tokens.push_back(cfg.eos());
  const auto loss = nn::cross_entropy(dec.ar_forward(random_cond(rng, 10, 64), tokens), tokens);
  EXPECT_NEAR(loss->value()[0], std::log(65.0), 0.1 * std::log(65.0));
}

TEST(ArForward, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int inst = 0; inst < 4; ++inst) {
    DecoderConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 16;
    cfg.codebook_size = 4;
    cfg.ar_blocks = 1;
    cfg.nar_blocks = 1;
    nn::ParameterStore store;
    AcousticDecoder dec(store, "dec.", cfg, rng);
    const Var cond = random_cond(rng, 3, 8);
    const auto tokens = random_ids(rng, 4, 5);
    const auto res = msp::testing::check_parameters(
        [&] { return nn::cross_entropy(dec.ar_forward(cond, tokens), tokens); }, store);
    EXPECT_LE(res.max_rel_error, 1e-5) << inst;
  }
}

TEST(ArGenerate, AlwaysEosModelGeneratesNothing) {
  Rng rng(6);
  nn::ParameterStore store;
  const auto cfg = small_config();
  AcousticDecoder dec(store, "dec.", cfg, rng);
  store.at("dec.ar_head.weight").value.fill(0.0);
  auto& bias = store.at("dec.ar_head.bias").value;
  bias.fill(0.0);
  bias[static_cast<std::size_t>(cfg.eos())] = 100.0;
  const std::vector<int> prefix = {1, 2, 3};
  const auto res = dec.ar_generate(random_cond(rng, 4, 16), prefix, {SamplingConfig::Mode::kGreedy});
  EXPECT_TRUE(res.tokens.empty());
  EXPECT_TRUE(res.hit_eos);
}

TEST(ArGenerate, BudgetValidIdsAndDeterminism) {
  Rng rng(7);
  nn::ParameterStore store;
  const auto cfg = small_config();
  AcousticDecoder dec(store, "dec.", cfg, rng);
  // Suppress EOS so the frame budget ends generation.
  store.at("dec.ar_head.bias").value[static_cast<std::size_t>(cfg.eos())] = -100.0;
  const Var cond = random_cond(rng, 4, 16);
  const std::vector<int> prefix = {1, 5};
  SamplingConfig greedy{SamplingConfig::Mode::kGreedy};
  const auto a = dec.ar_generate(cond, prefix, greedy);
  const auto b = dec.ar_generate(cond, prefix, greedy);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.tokens.size(), cfg.max_generation_frames);
  EXPECT_FALSE(a.hit_eos);
  SamplingConfig topk;
  topk.seed = 11;
  const auto c = dec.ar_generate(cond, prefix, topk);
  const auto d = dec.ar_generate(cond, prefix, topk);
  EXPECT_EQ(c.tokens, d.tokens);
  for (int id : c.tokens) {
    EXPECT_GE(id, 0);
    EXPECT_LT(id, 8);
  }
  const std::vector<int> bad_prefix = {8};
  EXPECT_THROW(dec.ar_generate(cond, bad_prefix, greedy), ContractError);
}

TEST(ArGenerate, GreedyPicksArgmaxOfForward) {
  Rng rng(8);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 4, 16);
  const std::vector<int> prefix = {2, 4, 6};
  const auto res = dec.ar_generate(cond, prefix, {SamplingConfig::Mode::kGreedy});
  std::vector<int> tokens = prefix;
  for (int next : res.tokens) {
    tokens.push_back(0);
    const Tensor logits = dec.ar_forward(cond, tokens)->value();
    tokens.pop_back();
    const auto row = logits.row(tokens.size());
    EXPECT_EQ(std::max_element(row.begin(), row.end()) - row.begin(), next);
    tokens.push_back(next);
  }
}

TEST(NarForward, ShapesAndPreconditions) {
  Rng rng(9);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 5, 16);
  for (std::size_t p : {0u, 6u}) {
    const auto prompt = random_grid(rng, p, 8);
    for (std::size_t t : {1u, 17u}) {
      for (std::size_t stage = 2; stage <= 8; ++stage) {
        EXPECT_EQ(dec.nar_forward(cond, prompt, random_layers(rng, stage - 1, t, 8), stage)->value().shape(),
                  (nn::Shape{t, 8}));
      }
    }
  }
  const auto prompt = random_grid(rng, 4, 8);
  EXPECT_THROW(dec.nar_forward(cond, prompt, random_layers(rng, 2, 5, 8), 2), ContractError);
  EXPECT_THROW(dec.nar_forward(cond, prompt, random_layers(rng, 0, 5, 8), 1), ContractError);
  EXPECT_THROW(dec.nar_forward(cond, prompt, random_layers(rng, 8, 5, 8), 9), ContractError);
  auto layers = random_layers(rng, 2, 5, 8);
  layers[1].pop_back();
  EXPECT_THROW(dec.nar_forward(cond, prompt, layers, 3), DimensionError);
}

TEST(NarForward, StageTwoSumsPromptLayersOneAndTwoButOnlyPredictedOne) {
  Rng rng(10);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 3, 16);
  const auto prompt = random_grid(rng, 6, 8);
  const auto predicted = random_layers(rng, 1, 7, 8);
  const Tensor before = dec.nar_input(cond, prompt, predicted, 2)->value();
  dec.table(2).table().value.fill(0.0);
  const Tensor after = dec.nar_input(cond, prompt, predicted, 2)->value();
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(row_diff(before, after, r), 0.0);
  for (std::size_t r = 3; r < 9; ++r) EXPECT_GT(row_diff(before, after, r), 0.0) << "prompt row " << r;
  for (std::size_t r = 9; r < 16; ++r) EXPECT_EQ(row_diff(before, after, r), 0.0) << "target row " << r;
}

TEST(NarForward, NarInputMatchesSummationOracle) {
  Rng rng(11);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 2, 16);
  const auto prompt = random_grid(rng, 3, 8);
  const std::size_t stage = 5;
  const auto predicted = random_layers(rng, stage - 1, 4, 8);
  const Tensor x = dec.nar_input(cond, prompt, predicted, stage)->value();
  const Tensor pe_p = nn::positional_encoding(3, 16);
  const Tensor pe_t = nn::positional_encoding(4, 16);
  const Tensor& stage_table = store.at("dec.stage_table.table").value;
  for (std::size_t c = 0; c < 16; ++c) {
    for (std::size_t t = 0; t < 3; ++t) {
      double expect = pe_p(t, c);
      for (std::size_t l = 1; l <= stage; ++l) {
        expect += dec.table(l).table().value(static_cast<std::size_t>(prompt.layers[l - 1][t]), c);
      }
      EXPECT_NEAR(x(2 + t, c), expect, 1e-12);
    }
    for (std::size_t t = 0; t < 4; ++t) {
      double expect = pe_t(t, c) + stage_table(stage - 2, c);
      for (std::size_t l = 1; l < stage; ++l) {
        expect += dec.table(l).table().value(static_cast<std::size_t>(predicted[l - 1][t]), c);
      }
      EXPECT_NEAR(x(5 + t, c), expect, 1e-12);
    }
  }
}

TEST(NarForward, InvariantToPromptLayersAboveStage) {
  Rng rng(12);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 4, 16);
  for (std::size_t stage = 2; stage <= 8; ++stage) {
    const auto prompt = random_grid(rng, 5, 8);
    const auto predicted = random_layers(rng, stage - 1, 6, 8);
    const Tensor base = dec.nar_forward(cond, prompt, predicted, stage)->value();
    for (int trial = 0; trial < 3; ++trial) {
      auto other = prompt;
      for (std::size_t l = stage; l < codec::kStages; ++l) other.layers[l] = random_ids(rng, 5, 8);
      EXPECT_LE(nn::max_abs_diff(base, dec.nar_forward(cond, other, predicted, stage)->value()), 1e-12);
    }
    if (stage < 8) {
      auto other = prompt;
      other.layers[stage - 1] = random_ids(rng, 5, 8);
      EXPECT_GT(nn::max_abs_diff(base, dec.nar_forward(cond, other, predicted, stage)->value()), 0.0);
    }
  }
}

TEST(NarForward, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (int inst = 0; inst < 4; ++inst) {
    DecoderConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 16;
    cfg.codebook_size = 4;
    cfg.ar_blocks = 1;
    cfg.nar_blocks = 1;
    nn::ParameterStore store;
    AcousticDecoder dec(store, "dec.", cfg, rng);
    const Var cond = random_cond(rng, 2, 8);
    const auto prompt = random_grid(rng, 2, 4);
    const std::size_t stage = static_cast<std::size_t>(2 + inst);
    const auto predicted = random_layers(rng, stage - 1, 3, 4);
    const auto targets = random_ids(rng, 3, 4);
    const auto res = msp::testing::check_parameters(
        [&] { return nn::cross_entropy(dec.nar_forward(cond, prompt, predicted, stage), targets); }, store);
    EXPECT_LE(res.max_rel_error, 1e-5) << inst;
  }
}

TEST(NarGenerate, EightLayersAndDeterministic) {
  Rng rng(14);
  nn::ParameterStore store;
  AcousticDecoder dec(store, "dec.", small_config(), rng);
  const Var cond = random_cond(rng, 4, 16);
  const auto prompt = random_grid(rng, 6, 8);
  const auto layer1 = random_ids(rng, 11, 8);
  const auto a = dec.nar_generate(cond, prompt, layer1);
  const auto b = dec.nar_generate(cond, prompt, layer1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.frames, 11u);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.layers[0], layer1);
  const std::vector<std::size_t> bad_order = {2, 3, 4, 5, 6, 7, 7};
  EXPECT_THROW(dec.nar_generate(cond, prompt, layer1, bad_order), ContractError);
}

TEST(NarGenerate, StageOrderMattersOnRiggedModel) {
  // Rig: blocks are identities, E_l(id) = 100 * 2^l * e_id, and head i scores
  // id k by coordinate k-1. The largest coordinate belongs to the highest
  // lower layer, so stage i predicts layer_{i-1} + 1 (mod K).
  Rng rng(15);
  nn::ParameterStore store;
  DecoderConfig cfg = small_config();
  cfg.codebook_size = 4;
  cfg.nar_blocks = 1;
  AcousticDecoder dec(store, "dec.", cfg, rng);
  for (const char* name : {"dec.nar_block0.out.weight", "dec.nar_block0.out.bias", "dec.nar_block0.ffn_out.weight",
                           "dec.nar_block0.ffn_out.bias", "dec.stage_table.table"}) {
    store.at(name).value.fill(0.0);
  }
  for (std::size_t l = 1; l <= 8; ++l) {
    auto& t = dec.table(l).table().value;
    t.fill(0.0);
    for (std::size_t id = 0; id < 4; ++id) t(id, id) = 100.0 * std::pow(2.0, static_cast<double>(l));
  }
  for (std::size_t s = 2; s <= 8; ++s) {
    auto& w = store.at("dec.nar_head" + std::to_string(s) + ".weight").value;
    w.fill(0.0);
    for (std::size_t k = 0; k < 4; ++k) w((k + 3) % 4, k) = 1.0;
  }
  const Var cond = random_cond(rng, 3, 16);
  const auto prompt = random_grid(rng, 4, 4);
  const std::vector<int> layer1 = {0, 1, 2, 3, 1};
  auto oracle = [&](std::span<const std::size_t> order) {
    codec::CodeGrid g(layer1.size(), 4);
    g.layers[0] = layer1;
    for (std::size_t s : order) {
      for (std::size_t t = 0; t < layer1.size(); ++t) g.layers[s - 1][t] = (g.layers[s - 2][t] + 1) % 4;
    }
    return g;
  };
  const std::vector<std::size_t> forward = {2, 3, 4, 5, 6, 7, 8};
  const std::vector<std::size_t> shuffled = {5, 2, 8, 3, 7, 4, 6};
  const auto a = dec.nar_generate(cond, prompt, layer1, forward);
  const auto b = dec.nar_generate(cond, prompt, layer1, shuffled);
  EXPECT_EQ(a, oracle(forward));
  EXPECT_EQ(b, oracle(shuffled));
  EXPECT_NE(a, b);
  EXPECT_EQ(dec.nar_generate(cond, prompt, layer1), a);
}
