#include "gram/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace gram {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(fmt::format("{}: expected a matrix, got shape {}", op, to_string(t.shape())));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, to_string(a.shape()), to_string(b.shape())));
  }
}

// C = A B
Tensor mm(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor c(Shape{n, m});
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = B + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

// C = A^T B
Tensor mm_tn(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor c(Shape{k, m});
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* bi = B + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      double* cp = C + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
  return c;
}

// C = A B^T, via an explicit transpose so the inner loop is a plain axpy
Tensor mm_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = b.rows(), k = b.cols();
  Tensor bt(Shape{k, m});
  const double* B = b.data().data();
  double* T = bt.data().data();
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < k; ++p) T[p * m + j] = B[j * k + p];
  return mm(a, bt);
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_matrix(a.value(), "matmul");
  require_matrix(b.value(), "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: inner dimensions disagree {} vs {}", to_string(a.shape()), to_string(b.shape())));
  }
  return make_result(
      mm(a.value(), b.value()), {a, b},
      [a, b](Node& self) {
        if (a.requires_grad()) accumulate(a, mm_nt(self.grad, b.value()));
        if (b.requires_grad()) accumulate(b, mm_tn(a.value(), self.grad));
      },
      "matmul");
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_result(
      std::move(y), {a, b},
      [a, b](Node& self) {
        accumulate(a, self.grad);
        accumulate(b, self.grad);
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result(
      std::move(y), {a, b},
      [a, b](Node& self) {
        accumulate(a, self.grad);
        if (b.requires_grad()) accumulate(b, map(self.grad, [](double g) { return -g; }));
      },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result(
      std::move(y), {a, b},
      [a, b](Node& self) {
        if (a.requires_grad()) {
          Tensor g = self.grad;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] *= b.value()[i];
          accumulate(a, g);
        }
        if (b.requires_grad()) {
          Tensor g = self.grad;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a.value()[i];
          accumulate(b, g);
        }
      },
      "mul");
}

Var add_bias(const Var& x, const Var& bias) {
  require_matrix(x.value(), "add_bias");
  if (bias.value().rank() != 1 || bias.value().size() != x.cols()) {
    throw ShapeError(fmt::format("add_bias: bias {} does not fit rows of {}", to_string(bias.shape()), to_string(x.shape())));
  }
  Tensor y = x.value();
  const std::size_t n = y.rows(), m = y.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y.at(i, j) += bias.value()[j];
  return make_result(
      std::move(y), {x, bias},
      [x, bias](Node& self) {
        accumulate(x, self.grad);
        if (bias.requires_grad()) {
          Tensor g(bias.shape());
          for (std::size_t i = 0; i < self.grad.rows(); ++i)
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad.at(i, j);
          accumulate(bias, g);
        }
      },
      "add_bias");
}

Var scale(const Var& x, double factor) {
  return make_result(
      map(x.value(), [factor](double v) { return v * factor; }), {x},
      [x, factor](Node& self) { accumulate(x, map(self.grad, [factor](double g) { return g * factor; })); },
      "scale");
}

Var scale_by(const Var& s, const Var& x) {
  const double k = s.value().item();
  return make_result(
      map(x.value(), [k](double v) { return k * v; }), {s, x},
      [s, x, k](Node& self) {
        if (x.requires_grad()) accumulate(x, map(self.grad, [k](double g) { return k * g; }));
        if (s.requires_grad()) {
          double dot = 0.0;
          for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * x.value()[i];
          Tensor g(s.shape(), dot);
          accumulate(s, g);
        }
      },
      "scale_by");
}

Var tanh(const Var& x) {
  Tensor y = map(x.value(), [](double v) { return std::tanh(v); });
  return make_result(
      std::move(y), {x},
      [x](Node& self) {
        Tensor g = self.grad;
        const Tensor& y = self.value();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
        accumulate(x, g);
      },
      "tanh");
}

Var relu(const Var& x) {
  return make_result(
      map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {x},
      [x](Node& self) {
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (!(x.value()[i] > 0.0)) g[i] = 0.0;
        accumulate(x, g);
      },
      "relu");
}

Var sum(const Var& x) {
  double s = 0.0;
  for (auto v : x.value().data()) s += v;
  return make_result(
      Tensor::scalar(s), {x}, [x](Node& self) { accumulate(x, Tensor(x.shape(), self.grad.item())); }, "sum");
}

Var softmax(const Var& x, int axis) {
  const Shape& shape = x.shape();
  const int rank = static_cast<int>(shape.size());
  const int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank) throw ShapeError(fmt::format("softmax: axis {} invalid for shape {}", axis, to_string(shape)));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= shape[i];
  for (int i = ax + 1; i < rank; ++i) inner *= shape[i];
  const std::size_t len = shape[ax];

  Tensor y(shape);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        y[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= z;
    }
  }
  return make_result(
      std::move(y), {x},
      [x, outer, inner, len](Node& self) {
        const Tensor& yv = self.value();
        Tensor g(yv.shape());
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k) dot += self.grad[base + k * inner] * yv[base + k * inner];
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t idx = base + k * inner;
              g[idx] = yv[idx] * (self.grad[idx] - dot);
            }
          }
        }
        accumulate(x, g);
      },
      "softmax");
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_matrix(x.value(), "layer_norm");
  const std::size_t n = x.rows(), m = x.cols();
  if (gain.value().size() != m || bias.value().size() != m) {
    throw ShapeError(fmt::format("layer_norm: affine terms {} / {} do not match width {}", to_string(gain.shape()),
                                 to_string(bias.shape()), m));
  }
  Tensor xhat(x.shape());
  std::vector<double> inv_std(n);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.value().row(i);
    double mean = 0.0;
    for (auto v : row) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (auto v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat.at(i, j) = (row[j] - mean) * inv_std[i];
      y.at(i, j) = xhat.at(i, j) * gain.value()[j] + bias.value()[j];
    }
  }
  return make_result(
      std::move(y), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const std::size_t n = xhat.rows(), m = xhat.cols();
        const Tensor& dy = self.grad;
        if (gain.requires_grad() || bias.requires_grad()) {
          Tensor dg(gain.shape()), db(bias.shape());
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              dg[j] += dy.at(i, j) * xhat.at(i, j);
              db[j] += dy.at(i, j);
            }
          accumulate(gain, dg);
          accumulate(bias, db);
        }
        if (x.requires_grad()) {
          Tensor dx(x.shape());
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t i = 0; i < n; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double dxh = dy.at(i, j) * gain.value()[j];
              s1 += dxh;
              s2 += dxh * xhat.at(i, j);
            }
            for (std::size_t j = 0; j < m; ++j) {
              const double dxh = dy.at(i, j) * gain.value()[j];
              dx.at(i, j) = inv_std[i] * (dxh - inv_m * s1 - xhat.at(i, j) * inv_m * s2);
            }
          }
          accumulate(x, dx);
        }
      },
      "layer_norm");
}

Var gather_rows(const Var& table, std::span<const TokenId> ids) {
  require_matrix(table.value(), "gather_rows");
  const std::size_t m = table.cols();
  std::vector<TokenId> rows(ids.begin(), ids.end());
  Tensor y(Shape{rows.size(), m});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= table.rows()) {
      throw std::out_of_range(fmt::format("gather_rows: id {} outside table of {} rows", rows[i], table.rows()));
    }
    auto src = table.value().row(static_cast<std::size_t>(rows[i]));
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return make_result(
      std::move(y), {table},
      [table, rows = std::move(rows)](Node& self) {
        Tensor g(table.shape());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          auto dst = g.row(static_cast<std::size_t>(rows[i]));
          auto src = self.grad.row(i);
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
        accumulate(table, g);
      },
      "gather_rows");
}

Var concat_rows(const Var& top, const Var& bottom) {
  require_matrix(top.value(), "concat_rows");
  require_matrix(bottom.value(), "concat_rows");
  if (top.cols() != bottom.cols()) {
    throw ShapeError(fmt::format("concat_rows: widths differ {} vs {}", to_string(top.shape()), to_string(bottom.shape())));
  }
  const std::size_t n1 = top.rows(), n2 = bottom.rows(), m = top.cols();
  std::vector<double> data;
  data.reserve((n1 + n2) * m);
  data.insert(data.end(), top.value().data().begin(), top.value().data().end());
  data.insert(data.end(), bottom.value().data().begin(), bottom.value().data().end());
  return make_result(
      Tensor(Shape{n1 + n2, m}, std::move(data)), {top, bottom},
      [top, bottom, n1, n2, m](Node& self) {
        auto g = self.grad.data();
        if (top.requires_grad()) accumulate(top, Tensor(Shape{n1, m}, std::vector<double>(g.begin(), g.begin() + n1 * m)));
        if (bottom.requires_grad())
          accumulate(bottom, Tensor(Shape{n2, m}, std::vector<double>(g.begin() + n1 * m, g.end())));
      },
      "concat_rows");
}

Var permute_rows(const Var& x, std::span<const std::size_t> order) {
  require_matrix(x.value(), "permute_rows");
  if (order.size() != x.rows()) throw ShapeError("permute_rows: order length must equal row count");
  std::vector<std::size_t> perm(order.begin(), order.end());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto src = x.value().row(perm.at(i));
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return make_result(
      std::move(y), {x},
      [x, perm = std::move(perm)](Node& self) {
        Tensor g(x.shape());
        for (std::size_t i = 0; i < perm.size(); ++i) {
          auto src = self.grad.row(i);
          std::copy(src.begin(), src.end(), g.row(perm[i]).begin());
        }
        accumulate(x, g);
      },
      "permute_rows");
}

Var attention(const Var& query, const Var& key, const Var& value, std::size_t heads, bool causal) {
  require_matrix(query.value(), "attention");
  require_matrix(key.value(), "attention");
  require_matrix(value.value(), "attention");
  const std::size_t n = query.rows(), m = key.rows(), d = query.cols();
  if (key.cols() != d || value.cols() != d || value.rows() != m) throw ShapeError("attention: query/key/value widths differ");
  if (heads == 0 || d % heads != 0) throw ShapeError(fmt::format("attention: width {} not divisible by {} heads", d, heads));
  if (m == 0) throw ShapeError("attention: empty key set");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& q = query.value();
  const Tensor& k = key.value();
  const Tensor& v = value.value();

  // probs[h][i][j]
  std::vector<double> probs(heads * n * m, 0.0);
  Tensor out(Shape{n, d});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t visible = causal ? std::min(i + 1, m) : m;
      double* p = &probs[(h * n + i) * m];
      double mx = -INFINITY;
      for (std::size_t j = 0; j < visible; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q.at(i, c0 + c) * k.at(j, c0 + c);
        p[j] = s * inv_sqrt;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < visible; ++j) p[j] /= z;
      for (std::size_t j = 0; j < visible; ++j) {
        const double pj = p[j];
        for (std::size_t c = 0; c < dh; ++c) out.at(i, c0 + c) += pj * v.at(j, c0 + c);
      }
    }
  }
  return make_result(
      std::move(out), {query, key, value},
      [query, key, value, heads, causal, dh, inv_sqrt, probs = std::move(probs)](Node& self) {
        const Tensor& q = query.value();
        const Tensor& k = key.value();
        const Tensor& v = value.value();
        const Tensor& dout = self.grad;
        const std::size_t n = q.rows(), m = k.rows();
        Tensor dq(q.shape()), dk(k.shape()), dv(v.shape());
        std::vector<double> dp(m);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t visible = causal ? std::min(i + 1, m) : m;
            const double* p = &probs[(h * n + i) * m];
            double dot = 0.0;
            for (std::size_t j = 0; j < visible; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) {
                s += dout.at(i, c0 + c) * v.at(j, c0 + c);
                dv.at(j, c0 + c) += p[j] * dout.at(i, c0 + c);
              }
              dp[j] = s;
              dot += s * p[j];
            }
            for (std::size_t j = 0; j < visible; ++j) {
              const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
              if (ds == 0.0) continue;
              for (std::size_t c = 0; c < dh; ++c) {
                dq.at(i, c0 + c) += ds * k.at(j, c0 + c);
                dk.at(j, c0 + c) += ds * q.at(i, c0 + c);
              }
            }
          }
        }
        accumulate(query, dq);
        accumulate(key, dk);
        accumulate(value, dv);
      },
      "attention");
}

Var token_nll_sum(const Var& logits, std::span<const TokenId> targets, TokenId pad_id, std::size_t& count,
                  double smoothing) {
  require_matrix(logits.value(), "cross_entropy");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw std::invalid_argument(fmt::format("cross_entropy: label smoothing {} outside [0, 1)", smoothing));
  }
  const std::size_t t = logits.rows(), vocab = logits.cols();
  if (targets.size() != t) {
    throw ShapeError(fmt::format("cross_entropy: {} targets for {} logit rows", targets.size(), t));
  }
  std::vector<TokenId> tg(targets.begin(), targets.end());
  Tensor probs(logits.shape());
  double total = 0.0;
  count = 0;
  for (std::size_t i = 0; i < t; ++i) {
    if (tg[i] == pad_id) continue;
    if (tg[i] < 0 || static_cast<std::size_t>(tg[i]) >= vocab) {
      throw std::out_of_range(fmt::format("cross_entropy: target id {} outside vocabulary of {}", tg[i], vocab));
    }
    auto row = logits.value().row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      probs.at(i, j) = std::exp(row[j] - mx);
      z += probs.at(i, j);
    }
    for (std::size_t j = 0; j < vocab; ++j) probs.at(i, j) /= z;
    const double log_z = mx + std::log(z);
    double nll = -(row[static_cast<std::size_t>(tg[i])] - log_z);
    if (smoothing > 0.0) {
      double uniform = 0.0;
      for (std::size_t j = 0; j < vocab; ++j) uniform += log_z - row[j];
      nll = (1.0 - smoothing) * nll + smoothing * uniform / static_cast<double>(vocab);
    }
    total += nll;
    ++count;
  }
  return make_result(
      Tensor::scalar(total), {logits},
      [logits, tg = std::move(tg), probs = std::move(probs), pad_id, smoothing](Node& self) {
        const double g = self.grad.item();
        Tensor d(logits.shape());
        const double spread = smoothing / static_cast<double>(d.cols());
        for (std::size_t i = 0; i < tg.size(); ++i) {
          if (tg[i] == pad_id) continue;
          for (std::size_t j = 0; j < d.cols(); ++j) d.at(i, j) = g * (probs.at(i, j) - spread);
          d.at(i, static_cast<std::size_t>(tg[i])) -= g * (1.0 - smoothing);
        }
        accumulate(logits, d);
      },
      "cross_entropy");
}

Var cross_entropy(const Var& logits, std::span<const TokenId> targets, TokenId pad_id) {
  std::size_t count = 0;
  Var total = token_nll_sum(logits, targets, pad_id, count);
  if (count == 0) throw std::invalid_argument("cross_entropy: empty loss support (every target is padding)");
  return scale(total, 1.0 / static_cast<double>(count));
}

}  // namespace gram
