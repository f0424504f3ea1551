#include "msp/nncore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eigen_view.hpp"
#include "msp/common/errors.hpp"

namespace msp::nn {

using detail::RowMatrix;
using detail::view;

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + t.shape_string());
  }
}

std::string pair_shapes(const Tensor& a, const Tensor& b) { return a.shape_string() + " and " + b.shape_string(); }

}  // namespace

AttentionMask AttentionMask::self_only(std::size_t n) {
  AttentionMask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i, true);
  return m;
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a->value();
  const Tensor& bv = b->value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " + pair_shapes(av, bv));
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& a = self.parent(0);
    const auto& b = self.parent(1);
    const auto g = view(self.grad());
    if (a->requires_grad()) view(a->grad()).noalias() += g * view(b->value()).transpose();
    if (b->requires_grad()) view(b->grad()).noalias() += view(a->value()).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x->value();
  const Tensor& wv = w->value();
  require_rank2(xv, "linear");
  require_rank2(wv, "linear");
  if (xv.cols() != wv.rows()) {
    throw DimensionError("linear: input " + xv.shape_string() + " does not conform to weight " + wv.shape_string());
  }
  if (b && b->value().size() != wv.cols()) {
    throw DimensionError("linear: bias " + b->value().shape_string() + " does not conform to weight " +
                         wv.shape_string());
  }
  Tensor out = Tensor::matrix(xv.rows(), wv.cols());
  auto o = view(out);
  o.noalias() = view(xv) * view(wv);
  if (b) {
    o.rowwise() += view(b->value(), 1, wv.cols()).row(0);
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_result(std::move(out), std::move(parents), [](Node& self) {
    const auto& x = self.parent(0);
    const auto& w = self.parent(1);
    const auto g = view(self.grad());
    if (x->requires_grad()) view(x->grad()).noalias() += g * view(w->value()).transpose();
    if (w->requires_grad()) view(w->grad()).noalias() += view(x->value()).transpose() * g;
    if (self.parent_count() > 2 && self.parent(2)->requires_grad()) {
      auto& bg = self.parent(2)->grad();
      view(bg, 1, bg.size()).row(0) += g.colwise().sum();
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (!a->value().same_shape(b->value())) {
    throw DimensionError("add: shape mismatch " + pair_shapes(a->value(), b->value()));
  }
  Tensor out = a->value();
  out += b->value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (self.parent(i)->requires_grad()) self.parent(i)->grad() += self.grad();
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  const Tensor& xv = x->value();
  require_rank2(xv, "add_row");
  if (row->value().size() != xv.cols()) {
    throw DimensionError("add_row: row " + row->value().shape_string() + " does not match " + xv.shape_string());
  }
  Tensor out = xv;
  view(out).rowwise() += view(row->value(), 1, xv.cols()).row(0);
  return make_result(std::move(out), {x, row}, [](Node& self) {
    if (self.parent(0)->requires_grad()) self.parent(0)->grad() += self.grad();
    if (self.parent(1)->requires_grad()) {
      auto& rg = self.parent(1)->grad();
      view(rg, 1, rg.size()).row(0) += view(self.grad()).colwise().sum();
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value();
  out *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    auto& pg = self.parent(0)->grad();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += s * g[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a->value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& in = self.parent(0)->value();
    auto& pg = self.parent(0)->grad();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) pg[i] += g[i];
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x->value();
  require_rank2(xv, "layer_norm");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (gamma->value().size() != d || beta->value().size() != d) {
    throw DimensionError("layer_norm: gain/bias " + gamma->value().shape_string() + " do not match " +
                         xv.shape_string());
  }
  Tensor normalized = Tensor::matrix(n, d);
  std::vector<double> inv_std(n);
  Tensor out = Tensor::matrix(n, d);
  const auto& g = gamma->value();
  const auto& b = beta->value();
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * inv_std[r];
      normalized(r, c) = xh;
      out(r, c) = xh * g[c] + b[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                       const auto& x = self.parent(0);
                       const auto& gamma = self.parent(1);
                       const auto& beta = self.parent(2);
                       const auto& g = self.grad();
                       const std::size_t n = normalized.rows();
                       const std::size_t d = normalized.cols();
                       const auto& gv = gamma->value();
                       if (gamma->requires_grad() || beta->requires_grad()) {
                         auto& gg = gamma->grad();
                         auto& bg = beta->grad();
                         for (std::size_t r = 0; r < n; ++r) {
                           for (std::size_t c = 0; c < d; ++c) {
                             if (gamma->requires_grad()) gg[c] += g(r, c) * normalized(r, c);
                             if (beta->requires_grad()) bg[c] += g(r, c);
                           }
                         }
                       }
                       if (!x->requires_grad()) return;
                       auto& xg = x->grad();
                       std::vector<double> dxh(d);
                       for (std::size_t r = 0; r < n; ++r) {
                         double mean_d = 0.0;
                         double mean_dx = 0.0;
                         for (std::size_t c = 0; c < d; ++c) {
                           dxh[c] = g(r, c) * gv[c];
                           mean_d += dxh[c];
                           mean_dx += dxh[c] * normalized(r, c);
                         }
                         mean_d /= static_cast<double>(d);
                         mean_dx /= static_cast<double>(d);
                         for (std::size_t c = 0; c < d; ++c) {
                           xg(r, c) += inv_std[r] * (dxh[c] - mean_d - normalized(r, c) * mean_dx);
                         }
                       }
                     });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const Tensor& tv = table->value();
  require_rank2(tv, "embedding");
  const std::size_t d = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.row(static_cast<std::size_t>(ids[i])).begin(), d, out.row(i).begin());
  }
  return make_result(std::move(out), {table}, [ids = std::vector<int>(ids.begin(), ids.end())](Node& self) {
    auto& tg = self.parent(0)->grad();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto dst = tg.row(static_cast<std::size_t>(ids[i]));
      const auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw ContractError("concat_rows: no inputs");
  }
  const std::size_t d = parts.front()->value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p->value(), "concat_rows");
    if (p->value().cols() != d) {
      throw DimensionError("concat_rows: column mismatch " + pair_shapes(parts.front()->value(), p->value()));
    }
    total += p->value().rows();
  }
  Tensor out = Tensor::matrix(total, d);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p->value();
    std::copy(v.storage().begin(), v.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(offset * d));
    offset += v.rows();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    const auto& g = self.grad();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.parent_count(); ++i) {
      const auto& p = self.parent(i);
      const std::size_t n = p->value().size();
      if (p->requires_grad()) {
        auto& pg = p->grad();
        for (std::size_t j = 0; j < n; ++j) pg[j] += g[offset + j];
      }
      offset += n;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  Tensor out = x->value().slice_rows(begin, end);
  return make_result(std::move(out), {x}, [begin](Node& self) {
    auto& pg = self.parent(0)->grad();
    const auto& g = self.grad();
    const std::size_t offset = begin * pg.cols();
    for (std::size_t j = 0; j < g.size(); ++j) pg[offset + j] += g[j];
  });
}

std::size_t conv1d_output_length(std::size_t length, std::size_t stride) {
  return length == 0 ? 0 : (length - 1) / stride + 1;
}

Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t stride) {
  const Tensor& xv = x->value();
  const Tensor& kv = kernels->value();
  require_rank2(xv, "conv1d");
  if (kv.rank() != 3) {
    throw DimensionError("conv1d: kernels must be [k x Din x Dout], got " + kv.shape_string());
  }
  const std::size_t k = kv.dim(0);
  const std::size_t din = kv.dim(1);
  const std::size_t dout = kv.dim(2);
  if (k % 2 == 0) {
    throw ContractError("conv1d: kernel width must be odd, got " + std::to_string(k));
  }
  if (stride == 0) {
    throw ContractError("conv1d: stride must be >= 1");
  }
  if (xv.rows() == 0) {
    throw EmptyInputError("conv1d: empty input sequence");
  }
  if (xv.cols() != din) {
    throw DimensionError("conv1d: input " + xv.shape_string() + " does not conform to kernels " + kv.shape_string());
  }
  if (bias && bias->value().size() != dout) {
    throw DimensionError("conv1d: bias " + bias->value().shape_string() + " does not conform to kernels " +
                         kv.shape_string());
  }
  const std::size_t t_in = xv.rows();
  const std::size_t t_out = conv1d_output_length(t_in, stride);
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);

  Tensor columns = Tensor::matrix(t_out, k * din);
  for (std::size_t j = 0; j < t_out; ++j) {
    for (std::size_t m = 0; m < k; ++m) {
      const auto src = static_cast<std::ptrdiff_t>(j * stride + m) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
      const auto in_row = xv.row(static_cast<std::size_t>(src));
      std::copy(in_row.begin(), in_row.end(), columns.row(j).begin() + static_cast<std::ptrdiff_t>(m * din));
    }
  }
  Tensor out = Tensor::matrix(t_out, dout);
  auto o = view(out);
  o.noalias() = view(columns) * view(kv, k * din, dout);
  if (bias) {
    o.rowwise() += view(bias->value(), 1, dout).row(0);
  }
  std::vector<Var> parents{x, kernels};
  if (bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents),
                     [columns = std::move(columns), stride, pad, k, din, dout](Node& self) {
                       const auto& x = self.parent(0);
                       const auto& kern = self.parent(1);
                       const auto g = view(self.grad());
                       if (kern->requires_grad()) {
                         view(kern->grad(), k * din, dout).noalias() += view(columns).transpose() * g;
                       }
                       if (self.parent_count() > 2 && self.parent(2)->requires_grad()) {
                         auto& bg = self.parent(2)->grad();
                         view(bg, 1, dout).row(0) += g.colwise().sum();
                       }
                       if (!x->requires_grad()) return;
                       RowMatrix dcol = g * view(kern->value(), k * din, dout).transpose();
                       auto& xg = x->grad();
                       const auto t_in = static_cast<std::ptrdiff_t>(xg.rows());
                       for (Eigen::Index j = 0; j < dcol.rows(); ++j) {
                         for (std::size_t m = 0; m < k; ++m) {
                           const auto src = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * stride + m) - pad;
                           if (src < 0 || src >= t_in) continue;
                           auto dst = xg.row(static_cast<std::size_t>(src));
                           for (std::size_t c = 0; c < din; ++c) {
                             dst[c] += dcol(j, static_cast<Eigen::Index>(m * din + c));
                           }
                         }
                       }
                     });
}

AttentionOutput attention(const Var& q, const Var& k, const Var& v, std::size_t heads, const AttentionMask* mask) {
  const Tensor& qv = q->value();
  const Tensor& kv = k->value();
  const Tensor& vv = v->value();
  require_rank2(qv, "attention");
  require_rank2(kv, "attention");
  require_rank2(vv, "attention");
  const std::size_t lq = qv.rows();
  const std::size_t lk = kv.rows();
  if (qv.cols() != kv.cols()) {
    throw DimensionError("attention: query/key widths differ for " + pair_shapes(qv, kv));
  }
  if (vv.rows() != lk) {
    throw DimensionError("attention: key/value lengths differ for " + pair_shapes(kv, vv));
  }
  if (heads == 0 || qv.cols() % heads != 0 || vv.cols() % heads != 0) {
    throw DimensionError("attention: widths " + pair_shapes(qv, vv) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (qv.cols() == 0) {
    throw DimensionError("attention: zero-width queries");
  }
  if (mask && (mask->queries() != lq || mask->keys() != lk)) {
    throw DimensionError("attention: mask is " + std::to_string(mask->queries()) + "x" +
                         std::to_string(mask->keys()) + " but scores are " + std::to_string(lq) + "x" +
                         std::to_string(lk));
  }
  const std::size_t dh = qv.cols() / heads;
  const std::size_t dvh = vv.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto eh = static_cast<Eigen::Index>(dh);
  const auto evh = static_cast<Eigen::Index>(dvh);

  Tensor out = Tensor::matrix(lq, vv.cols());
  std::vector<Tensor> weights;
  weights.reserve(heads);
  const auto qm = view(qv);
  const auto km = view(kv);
  const auto vm = view(vv);
  auto om = view(out);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h * dh);
    const auto v0 = static_cast<Eigen::Index>(h * dvh);
    Tensor p = Tensor::matrix(lq, lk);
    auto pm = view(p);
    pm.noalias() = qm.middleCols(c0, eh) * km.middleCols(c0, eh).transpose();
    pm *= inv_sqrt;
    for (std::size_t r = 0; r < lq; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < lk; ++c) {
        if (!mask || mask->allowed(r, c)) mx = std::max(mx, p(r, c));
      }
      if (!std::isfinite(mx)) {
        throw ContractError("attention: query row " + std::to_string(r) + " has no visible key");
      }
      double z = 0.0;
      for (std::size_t c = 0; c < lk; ++c) {
        if (!mask || mask->allowed(r, c)) {
          p(r, c) = std::exp(p(r, c) - mx);
          z += p(r, c);
        } else {
          p(r, c) = 0.0;
        }
      }
      for (std::size_t c = 0; c < lk; ++c) p(r, c) /= z;
    }
    om.middleCols(v0, evh).noalias() = pm * vm.middleCols(v0, evh);
    weights.push_back(std::move(p));
  }

  auto saved = weights;
  Var result = make_result(std::move(out), {q, k, v},
                           [probs = std::move(saved), heads, dh, dvh, inv_sqrt](Node& self) {
                             const auto& q = self.parent(0);
                             const auto& k = self.parent(1);
                             const auto& v = self.parent(2);
                             const auto qm = view(q->value());
                             const auto km = view(k->value());
                             const auto vm = view(v->value());
                             const auto g = view(self.grad());
                             const auto eh = static_cast<Eigen::Index>(dh);
                             const auto evh = static_cast<Eigen::Index>(dvh);
                             for (std::size_t h = 0; h < heads; ++h) {
                               const auto c0 = static_cast<Eigen::Index>(h * dh);
                               const auto v0 = static_cast<Eigen::Index>(h * dvh);
                               const auto pm = view(probs[h]);
                               const auto gh = g.middleCols(v0, evh);
                               if (v->requires_grad()) {
                                 view(v->grad()).middleCols(v0, evh).noalias() += pm.transpose() * gh;
                               }
                               if (!q->requires_grad() && !k->requires_grad()) continue;
                               RowMatrix dp = gh * vm.middleCols(v0, evh).transpose();
                               // Softmax Jacobian: dS = P * (dP - rowsum(dP * P)).
                               RowMatrix ds = pm.cwiseProduct(dp);
                               const Eigen::VectorXd row_dot = ds.rowwise().sum();
                               ds -= pm.cwiseProduct(row_dot.replicate(1, pm.cols()));
                               ds *= inv_sqrt;
                               if (q->requires_grad()) {
                                 view(q->grad()).middleCols(c0, eh).noalias() += ds * km.middleCols(c0, eh);
                               }
                               if (k->requires_grad()) {
                                 view(k->grad()).middleCols(c0, eh).noalias() += ds.transpose() * qm.middleCols(c0, eh);
                               }
                             }
                           });
  return AttentionOutput{std::move(result), std::move(weights)};
}

std::pair<Var, Tensor> scaled_dot_attention(const Var& q, const Var& k, const Var& v, const AttentionMask* mask) {
  auto res = attention(q, k, v, 1, mask);
  return {std::move(res.out), std::move(res.weights.front())};
}

Var cross_entropy(const Var& logits, std::span<const int> targets, std::optional<int> ignore_id) {
  const Tensor& lv = logits->value();
  require_rank2(lv, "cross_entropy");
  const std::size_t n = lv.rows();
  const std::size_t c = lv.cols();
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         lv.shape_string());
  }
  Tensor probs = Tensor::matrix(n, c);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const int t = targets[r];
    if (ignore_id && t == *ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw ContractError("cross_entropy: target " + std::to_string(t) + " outside [0," + std::to_string(c) + ")");
    }
    const auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs(r, j) = std::exp(row[j] - mx - log_z);
    total -= row[static_cast<std::size_t>(t)] - mx - log_z;
    ++counted;
  }
  if (counted == 0) {
    throw UndefinedLossError("cross_entropy: every position is ignored");
  }
  const double inv = 1.0 / static_cast<double>(counted);
  return make_result(Tensor::scalar(total * inv), {logits},
                     [probs = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end()), ignore_id,
                      inv](Node& self) {
                       auto& lg = self.parent(0)->grad();
                       const double g = self.grad()[0] * inv;
                       for (std::size_t r = 0; r < tg.size(); ++r) {
                         if (ignore_id && tg[r] == *ignore_id) continue;
                         auto dst = lg.row(r);
                         for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g * probs(r, j);
                         dst[static_cast<std::size_t>(tg[r])] -= g;
                       }
                     });
}

}  // namespace msp::nn
