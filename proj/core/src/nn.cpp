#include "gridgin/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace gridgin::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapC = Eigen::Map<const RowMat>;

MapC view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
MapM view(Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

const char* to_string(Pooling p) noexcept {
  switch (p) {
    case Pooling::Sum: return "sum";
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
  }
  return "?";
}

Pooling pooling_from_string(const std::string& s) {
  if (s == "sum") return Pooling::Sum;
  if (s == "mean") return Pooling::Mean;
  if (s == "max") return Pooling::Max;
  throw std::invalid_argument("unknown pooling '" + s + "'");
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}});
  return nodes_.size() - 1;
}

Matrix& Tape::grad(Var v) {
  auto& n = nodes_.at(v);
  if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::push(Matrix value, std::function<void(Tape&, Var)> backward) {
  nodes_.push_back({std::move(value), {}, record_ ? std::move(backward) : nullptr});
  return nodes_.size() - 1;
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a tape that does not record");
  require(nodes_.at(loss).value.size() == 1, "backward needs a scalar loss");
  grad(loss).fill(1.0);
  for (std::size_t i = loss + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

Var linear(Tape& t, Var x, Param& w, Param& b) {
  const Matrix& xv = t.value(x);
  require(xv.cols() == w.value.cols() && b.value.cols() == w.value.rows() && b.value.rows() == 1,
          "linear: input " + shape(xv) + " vs weight " + shape(w.value));
  Matrix y(xv.rows(), w.value.rows());
  view(y).noalias() = view(xv) * view(w.value).transpose();
  view(y).rowwise() += view(b.value).row(0);
  return t.push(std::move(y), [x, &w, &b](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    view(t.grad(x)).noalias() += view(gy) * view(w.value);
    view(w.grad).noalias() += view(gy).transpose() * view(t.value(x));
    view(b.grad).row(0) += view(gy).colwise().sum();
  });
}

Var relu(Tape& t, Var x) {
  Matrix y = t.value(x);
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(y), [x](Tape& t, Var self) {
    const auto& xv = t.value(x).values();
    const auto& gy = t.grad(self).values();
    auto& gx = t.grad(x).values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  require(t.value(a).same_shape(t.value(b)), "add: " + shape(t.value(a)) + " vs " + shape(t.value(b)));
  Matrix y = t.value(a);
  view(y) += view(t.value(b));
  return t.push(std::move(y), [a, b](Tape& t, Var self) {
    view(t.grad(a)) += view(t.grad(self));
    view(t.grad(b)) += view(t.grad(self));
  });
}

Var scale_one_plus(Tape& t, Var x, Param& eps) {
  require(eps.value.size() == 1, "scale_one_plus: eps must be 1x1");
  Matrix y = t.value(x);
  const double s = 1.0 + eps.value(0, 0);
  for (double& v : y.values()) v *= s;
  return t.push(std::move(y), [x, &eps](Tape& t, Var self) {
    const double s = 1.0 + eps.value(0, 0);
    view(t.grad(x)) += s * view(t.grad(self));
    eps.grad(0, 0) += view(t.grad(self)).cwiseProduct(view(t.value(x))).sum();
  });
}

Var neighbor_sum(Tape& t, Var x, const Adjacency& adj) {
  const Matrix& xv = t.value(x);
  require(xv.rows() == adj.nodes(), "neighbor_sum: rows " + shape(xv));
  const std::size_t d = xv.cols();
  Matrix y(adj.nodes(), d);
  for (std::size_t v = 0; v < adj.nodes(); ++v) {
    double* out = y.data() + v * d;
    for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
      const double* in = xv.data() + static_cast<std::size_t>(adj.neighbor[static_cast<std::size_t>(k)]) * d;
      for (std::size_t c = 0; c < d; ++c) out[c] += in[c];
    }
  }
  return t.push(std::move(y), [x, &adj](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    const std::size_t d = gy.cols();
    for (std::size_t v = 0; v < adj.nodes(); ++v) {
      const double* g = gy.data() + v * d;
      for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
        double* out = gx.data() + static_cast<std::size_t>(adj.neighbor[static_cast<std::size_t>(k)]) * d;
        for (std::size_t c = 0; c < d; ++c) out[c] += g[c];
      }
    }
  });
}

Var relu_message_sum(Tape& t, Var h, Var g, const Adjacency& adj) {
  const Matrix& hv = t.value(h);
  const Matrix& gv = t.value(g);
  require(hv.rows() == adj.nodes() && hv.cols() == gv.cols(),
          "relu_message_sum: h " + shape(hv) + ", g " + shape(gv));
  const std::size_t d = hv.cols();
  Matrix y(adj.nodes(), d);
  for (std::size_t v = 0; v < adj.nodes(); ++v) {
    double* out = y.data() + v * d;
    for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double* a = hv.data() + static_cast<std::size_t>(adj.neighbor[kk]) * d;
      const double* b = gv.data() + static_cast<std::size_t>(adj.edge[kk]) * d;
      for (std::size_t c = 0; c < d; ++c) {
        const double m = a[c] + b[c];
        out[c] += m > 0.0 ? m : 0.0;
      }
    }
  }
  return t.push(std::move(y), [h, g, &adj](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    const Matrix& hv = t.value(h);
    const Matrix& gv = t.value(g);
    Matrix& gh = t.grad(h);
    Matrix& gg = t.grad(g);
    const std::size_t d = gy.cols();
    for (std::size_t v = 0; v < adj.nodes(); ++v) {
      const double* up = gy.data() + v * d;
      for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const auto u = static_cast<std::size_t>(adj.neighbor[kk]);
        const auto e = static_cast<std::size_t>(adj.edge[kk]);
        for (std::size_t c = 0; c < d; ++c) {
          if (hv(u, c) + gv(e, c) > 0.0) {
            gh(u, c) += up[c];
            gg(e, c) += up[c];
          }
        }
      }
    }
  });
}

Var pool_rows(Tape& t, Var x, std::span<const std::size_t> seg, Pooling p) {
  const Matrix& xv = t.value(x);
  require(!seg.empty() && seg.back() == xv.rows(), "pool_rows: segments do not cover " + shape(xv));
  const std::size_t groups = seg.size() - 1;
  const std::size_t d = xv.cols();
  Matrix y(groups, d);
  std::vector<std::size_t> arg;
  if (p == Pooling::Max) arg.assign(groups * d, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < groups; ++i) {
    const std::size_t lo = seg[i];
    const std::size_t hi = seg[i + 1];
    if (lo == hi) continue;
    for (std::size_t c = 0; c < d; ++c) {
      if (p == Pooling::Max) {
        std::size_t best = lo;
        for (std::size_t r = lo + 1; r < hi; ++r) {
          if (xv(r, c) > xv(best, c)) best = r;
        }
        y(i, c) = xv(best, c);
        arg[i * d + c] = best;
      } else {
        double s = 0.0;
        for (std::size_t r = lo; r < hi; ++r) s += xv(r, c);
        y(i, c) = p == Pooling::Mean ? s / static_cast<double>(hi - lo) : s;
      }
    }
  }
  std::vector<std::size_t> segs(seg.begin(), seg.end());
  return t.push(std::move(y), [x, p, segs = std::move(segs), arg = std::move(arg)](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    const std::size_t d = gy.cols();
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      const std::size_t lo = segs[i];
      const std::size_t hi = segs[i + 1];
      if (lo == hi) continue;
      for (std::size_t c = 0; c < d; ++c) {
        if (p == Pooling::Max) {
          gx(arg[i * d + c], c) += gy(i, c);
          continue;
        }
        const double g = p == Pooling::Mean ? gy(i, c) / static_cast<double>(hi - lo) : gy(i, c);
        for (std::size_t r = lo; r < hi; ++r) gx(r, c) += g;
      }
    }
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    require(t.value(p).rows() == rows, "concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix y(rows, cols);
  std::size_t at = 0;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    view(y).middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(v.cols())) = view(v);
    at += v.cols();
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return t.push(std::move(y), [ids = std::move(ids)](Tape& t, Var self) {
    std::size_t at = 0;
    for (Var p : ids) {
      const auto c = static_cast<Eigen::Index>(t.value(p).cols());
      view(t.grad(p)) += view(t.grad(self)).middleCols(static_cast<Eigen::Index>(at), c);
      at += static_cast<std::size_t>(c);
    }
  });
}

Var sigmoid(Tape& t, Var x) {
  Matrix y = t.value(x);
  for (double& v : y.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return t.push(std::move(y), [x](Tape& t, Var self) {
    const auto& yv = t.value(self).values();
    const auto& gy = t.grad(self).values();
    auto& gx = t.grad(x).values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
  });
}

namespace {
constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;
}  // namespace

double bce(std::span<const double> p, std::span<const double> y) {
  require(p.size() == y.size() && !p.empty(), "bce: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kClampLo, kClampHi);
    s -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return s / static_cast<double>(p.size());
}

Var bce_loss(Tape& t, Var p, std::span<const double> targets) {
  const Matrix& pv = t.value(p);
  require(pv.cols() == 1 && pv.rows() == targets.size(), "bce_loss: predictions " + shape(pv));
  Matrix y(1, 1, bce(pv.values(), targets));
  std::vector<double> ys(targets.begin(), targets.end());
  return t.push(std::move(y), [p, ys = std::move(ys)](Tape& t, Var self) {
    const double g = t.grad(self)(0, 0) / static_cast<double>(ys.size());
    const auto& pv = t.value(p).values();
    auto& gp = t.grad(p).values();
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double q = pv[i];
      if (q < kClampLo || q > kClampHi) continue;
      gp[i] += g * (-ys[i] / q + (1.0 - ys[i]) / (1.0 - q));
    }
  });
}

Dense::Dense(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {}

void Dense::init(Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in()));
  for (double& v : weight.value.values()) v = uniform(rng, -bound, bound);
  for (double& v : bias.value.values()) v = uniform(rng, -bound, bound);
}

BatchNorm1d::BatchNorm1d(const std::string& name, std::size_t d)
    : gamma(name + ".gamma", 1, d),
      beta(name + ".beta", 1, d),
      running_mean(1, d, 0.0),
      running_var(1, d, 1.0) {
  gamma.value.fill(1.0);
}

Var BatchNorm1d::forward(Tape& t, Var x, Mode m) {
  const Matrix& xv = t.value(x);
  require(xv.cols() == dim(), "batch_norm: input " + shape(xv) + " vs dim " + std::to_string(dim()));
  const std::size_t n = xv.rows();
  const std::size_t d = dim();
  Matrix mean(1, d);
  Matrix inv_std(1, d);
  if (m == Mode::Train && n > 0) {
    view(mean) = view(xv).colwise().mean();
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double z = xv(r, c) - mean(0, c);
        s += z * z;
      }
      const double var = s / static_cast<double>(n);
      inv_std(0, c) = 1.0 / std::sqrt(var + epsilon);
      const double unbiased = n > 1 ? s / static_cast<double>(n - 1) : var;
      running_mean(0, c) = (1.0 - momentum) * running_mean(0, c) + momentum * mean(0, c);
      running_var(0, c) = (1.0 - momentum) * running_var(0, c) + momentum * unbiased;
    }
  } else {
    mean = running_mean;
    for (std::size_t c = 0; c < d; ++c) inv_std(0, c) = 1.0 / std::sqrt(running_var(0, c) + epsilon);
  }
  Matrix xhat(n, d);
  Matrix y(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (xv(r, c) - mean(0, c)) * inv_std(0, c);
      y(r, c) = gamma.value(0, c) * xhat(r, c) + beta.value(0, c);
    }
  }
  const bool batch_stats = m == Mode::Train && n > 0;
  return t.push(std::move(y), [this, x, batch_stats, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                                  Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    const std::size_t n = gy.rows();
    const std::size_t d = gy.cols();
    for (std::size_t c = 0; c < d; ++c) {
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        sum_g += gy(r, c);
        sum_gx += gy(r, c) * xhat(r, c);
      }
      gamma.grad(0, c) += sum_gx;
      beta.grad(0, c) += sum_g;
      const double k = gamma.value(0, c) * inv_std(0, c);
      if (!batch_stats) {
        for (std::size_t r = 0; r < n; ++r) gx(r, c) += k * gy(r, c);
        continue;
      }
      const double mg = sum_g / static_cast<double>(n);
      const double mgx = sum_gx / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) gx(r, c) += k * (gy(r, c) - mg - xhat(r, c) * mgx);
    }
  });
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& dims, bool plain_last) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpLayer l;
    const std::string prefix = name + "." + std::to_string(i);
    l.dense = Dense(prefix, dims[i], dims[i + 1]);
    const bool last = i + 2 == dims.size();
    l.batch_norm = !(last && plain_last);
    l.activation = last && plain_last ? Activation::Identity : Activation::ReLU;
    if (l.batch_norm) l.bn = BatchNorm1d(prefix + ".bn", dims[i + 1]);
    layers.push_back(std::move(l));
  }
}

void Mlp::init(Rng& rng) {
  for (auto& l : layers) l.dense.init(rng);
}

void Mlp::set_mode(Mode m) {
  for (auto& l : layers) l.bn.mode = m;
}

std::vector<Param*> Mlp::parameters() {
  std::vector<Param*> out;
  for (auto& l : layers) {
    out.push_back(&l.dense.weight);
    out.push_back(&l.dense.bias);
    if (l.batch_norm) {
      out.push_back(&l.bn.gamma);
      out.push_back(&l.bn.beta);
    }
  }
  return out;
}

std::vector<BatchNorm1d*> Mlp::batch_norms() {
  std::vector<BatchNorm1d*> out;
  for (auto& l : layers) {
    if (l.batch_norm) out.push_back(&l.bn);
  }
  return out;
}

Var Mlp::forward(Tape& t, Var x, Mode m) {
  for (auto& l : layers) {
    x = l.dense.forward(t, x);
    if (l.batch_norm) x = l.bn.forward(t, x, m);
    if (l.activation == Activation::ReLU) x = relu(t, x);
  }
  return x;
}

AdamState make_adam(std::span<Param* const> params, const AdamOptions& options) {
  AdamState s;
  s.options = options;
  for (const Param* p : params) {
    s.m.emplace_back(p->value.rows(), p->value.cols());
    s.v.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adam_step(std::span<Param* const> params, AdamState& s) {
  if (s.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");
  ++s.step;
  const auto& o = s.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.values();
    const auto& g = params[i]->grad.values();
    auto& m = s.m[i].values();
    auto& v = s.v[i].values();
    if (w.size() != m.size() || g.size() != w.size()) throw ShapeError("adam_step: shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

double grad_check(const std::function<Var(Tape&)>& loss, std::span<Param* const> params,
                  std::size_t samples, std::uint64_t seed, double h, double floor) {
  for (Param* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  std::size_t total = 0;
  for (const Param* p : params) total += p->value.size();
  if (total == 0) return 0.0;
  Rng rng(seed);
  auto eval = [&] {
    Tape t(false);
    return t.value(loss(t))(0, 0);
  };
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    auto k = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(total) - 1));
    std::size_t i = 0;
    while (k >= params[i]->value.size()) k -= params[i++]->value.size();
    double& w = params[i]->value.values()[k];
    const double saved = w;
    w = saved + h;
    const double up = eval();
    w = saved - h;
    const double down = eval();
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = params[i]->grad.values()[k];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  return worst;
}

}  // namespace gridgin::nn
