#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segcross::ag {

namespace {

size_t product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) n *= e;
  return n;
}

void check(bool cond, const std::string& msg) {
  if (!cond) fail(ErrorCode::InvalidArgument, msg);
}

}  // namespace

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data.assign(product(shape), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<size_t> shape, std::vector<double> data,
                    bool requires_grad) {
  check(product(shape) == data.size(), "tensor data size does not match shape");
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

Tensor Tensor::randu(Rng& rng, std::vector<size_t> shape, double lo, double hi,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) fail(ErrorCode::Internal, "use of undefined tensor");
  return *impl_;
}

const std::vector<size_t>& Tensor::shape() const { return impl().shape; }
size_t Tensor::numel() const { return impl().data.size(); }

size_t Tensor::rows() const {
  const auto& s = shape();
  check(s.size() == 1 || s.size() == 2, "rows(): tensor must be rank 1 or 2");
  return s.size() == 2 ? s[0] : 1;
}

size_t Tensor::cols() const {
  const auto& s = shape();
  check(s.size() == 1 || s.size() == 2, "cols(): tensor must be rank 1 or 2");
  return s.size() == 2 ? s[1] : s[0];
}

std::vector<double>& Tensor::data() const { return impl().data; }


double Tensor::value() const {
  check(numel() == 1, "value(): tensor is not a scalar");
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl().requires_grad = flag; }

std::vector<double>& Tensor::grad() const {
  auto& im = impl();
  if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0);
  return im.grad;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

void Tensor::zero_grad() {
  auto& im = impl();
  if (!im.grad.empty()) std::fill(im.grad.begin(), im.grad.end(), 0.0);
}

void Tape::backward(const Tensor& loss) {
  Tensor l = loss;
  if (l.numel() != 1)
    fail(ErrorCode::InvalidArgument, "backward(): loss must be a scalar");
  l.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace {

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

// Pulls the output gradient if any contribution reached it; otherwise the node
// contributes nothing and backward can skip it.
const std::vector<double>* out_grad(Tensor& out) {
  if (!out.has_grad()) return nullptr;
  return &out.grad();
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out = Tensor::zeros(a.shape(), any_grad(a, b));
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < go->size(); ++i) gb[i] += (*go)[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor out = Tensor::zeros(a.shape(), any_grad(a, b));
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < go->size(); ++i) gb[i] -= (*go)[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor out = Tensor::zeros(a.shape(), any_grad(a, b));
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < go->size(); ++i) gb[i] += (*go)[i] * a.data()[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape(), any_grad(a));
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  if (out.requires_grad()) {
    tape.record([a, c, out]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i] * c;
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), any_grad(a));
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = std::max(0.0, a.data()[i]);
  if (out.requires_grad()) {
    tape.record([a, out]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (size_t i = 0; i < go->size(); ++i)
        if (a.data()[i] > 0.0) ga[i] += (*go)[i];
    });
  }
  return out;
}

Tensor add_row_vector(Tape& tape, const Tensor& a, const Tensor& bias) {
  const size_t m = a.rows(), n = a.cols();
  check(bias.numel() == n, "add_row_vector: bias length must equal columns");
  Tensor out = Tensor::zeros(a.shape(), any_grad(a, bias));
  for (size_t r = 0; r < m; ++r)
    for (size_t c = 0; c < n; ++c)
      out.data()[r * n + c] = a.data()[r * n + c] + bias.data()[c];
  if (out.requires_grad()) {
    tape.record([a, bias, out, m, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i];
      }
      if (bias.requires_grad()) {
        auto& gb = bias.grad();
        for (size_t r = 0; r < m; ++r)
          for (size_t c = 0; c < n; ++c) gb[c] += (*go)[r * n + c];
      }
    });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank 2");
  const size_t m = a.shape()[0], k = a.shape()[1];
  check(b.shape()[0] == k, "matmul: inner extents do not match");
  const size_t n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n}, any_grad(a, b));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (size_t i = 0; i < m; ++i)
    for (size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      for (size_t j = 0; j < n; ++j) po[i * n + j] += av * pb[p * n + j];
    }
  if (out.requires_grad()) {
    tape.record([a, b, out, m, k, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      const double* g = go->data();
      if (a.requires_grad()) {
        auto& ga = a.grad();  // dA = dC . B^T
        const double* pb = b.data().data();
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) {
            const double gv = g[i * n + j];
            if (gv == 0.0) continue;
            for (size_t p = 0; p < k; ++p) ga[i * k + p] += gv * pb[p * n + j];
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();  // dB = A^T . dC
        const double* pa = a.data().data();
        for (size_t p = 0; p < k; ++p)
          for (size_t i = 0; i < m; ++i) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            for (size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  check(a.rank() == 2, "transpose: tensor must be rank 2");
  const size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m}, any_grad(a));
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  if (out.requires_grad()) {
    tape.record([a, out, m, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) ga[i * n + j] += (*go)[j * m + i];
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  const size_t m = a.rows(), p = a.cols(), q = b.cols();
  check(b.rows() == m, "concat_cols: row counts do not match");
  Tensor out = Tensor::zeros({m, p + q}, any_grad(a, b));
  for (size_t r = 0; r < m; ++r) {
    for (size_t c = 0; c < p; ++c)
      out.data()[r * (p + q) + c] = a.data()[r * p + c];
    for (size_t c = 0; c < q; ++c)
      out.data()[r * (p + q) + p + c] = b.data()[r * q + c];
  }
  if (out.requires_grad()) {
    tape.record([a, b, out, m, p, q]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t r = 0; r < m; ++r)
          for (size_t c = 0; c < p; ++c) ga[r * p + c] += (*go)[r * (p + q) + c];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t r = 0; r < m; ++r)
          for (size_t c = 0; c < q; ++c)
            gb[r * q + c] += (*go)[r * (p + q) + p + c];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: empty input");
  const size_t n = parts.front().cols();
  size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check(p.cols() == n, "concat_rows: column counts do not match");
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total, n}, rg);
  size_t row = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + row * n);
    row += p.rows();
  }
  if (out.requires_grad()) {
    tape.record([parts, out, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      size_t row = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (size_t i = 0; i < gp.size(); ++i) gp[i] += (*go)[row * n + i];
        }
        row += p.rows();
      }
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<size_t>& indices) {
  check(table.rank() == 2, "gather_rows: table must be rank 2");
  const size_t m = table.shape()[0], n = table.shape()[1];
  for (size_t idx : indices)
    check(idx < m, "gather_rows: index out of range");
  Tensor out = Tensor::zeros({indices.size(), n}, any_grad(table));
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy(table.data().begin() + indices[i] * n,
              table.data().begin() + (indices[i] + 1) * n,
              out.data().begin() + i * n);
  if (out.requires_grad()) {
    tape.record([table, indices, out, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gt = table.grad();
      for (size_t i = 0; i < indices.size(); ++i)
        for (size_t c = 0; c < n; ++c)
          gt[indices[i] * n + c] += (*go)[i * n + c];
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  const size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(a.shape(), any_grad(a));
  for (size_t r = 0; r < m; ++r) {
    const double* x = a.data().data() + r * n;
    double* y = out.data().data() + r * n;
    double mx = x[0];
    for (size_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (size_t c = 0; c < n; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (size_t c = 0; c < n; ++c) y[c] /= sum;
  }
  if (out.requires_grad()) {
    tape.record([a, out, m, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (size_t r = 0; r < m; ++r) {
        const double* y = out.data().data() + r * n;
        const double* g = go->data() + r * n;
        double dot = 0.0;
        for (size_t c = 0; c < n; ++c) dot += g[c] * y[c];
        for (size_t c = 0; c < n; ++c) ga[r * n + c] += y[c] * (g[c] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(Tape& tape, const Tensor& a, const Tensor& gain,
                       const Tensor& bias, double eps) {
  const size_t m = a.rows(), n = a.cols();
  check(n >= 1, "layer_norm_rows: empty rows");
  check(gain.numel() == n && bias.numel() == n,
        "layer_norm_rows: gain/bias length must equal columns");
  Tensor out = Tensor::zeros(a.shape(),
                             a.requires_grad() || gain.requires_grad() || bias.requires_grad());
  std::vector<double> mean(m), inv_std(m);
  for (size_t r = 0; r < m; ++r) {
    const double* x = a.data().data() + r * n;
    double mu = 0.0;
    for (size_t c = 0; c < n; ++c) mu += x[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (size_t c = 0; c < n; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(n);
    mean[r] = mu;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (size_t c = 0; c < n; ++c)
      out.data()[r * n + c] = gain.data()[c] * (x[c] - mu) * inv_std[r] + bias.data()[c];
  }
  if (out.requires_grad()) {
    tape.record([a, gain, bias, out, mean, inv_std, m, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      for (size_t r = 0; r < m; ++r) {
        const double* x = a.data().data() + r * n;
        const double* g = go->data() + r * n;
        const double is = inv_std[r];
        if (gain.requires_grad()) {
          auto& gg = gain.grad();
          for (size_t c = 0; c < n; ++c)
            gg[c] += g[c] * (x[c] - mean[r]) * is;
        }
        if (bias.requires_grad()) {
          auto& gb = bias.grad();
          for (size_t c = 0; c < n; ++c) gb[c] += g[c];
        }
        if (a.requires_grad()) {
          auto& ga = a.grad();
          // dxhat[c] = g[c] * gain[c]; standard layer-norm backward
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (size_t c = 0; c < n; ++c) {
            const double xhat = (x[c] - mean[r]) * is;
            const double dxhat = g[c] * gain.data()[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          const double inv_n = 1.0 / static_cast<double>(n);
          for (size_t c = 0; c < n; ++c) {
            const double xhat = (x[c] - mean[r]) * is;
            const double dxhat = g[c] * gain.data()[c];
            ga[r * n + c] +=
                is * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

MaxOverRows max_over_rows(Tape& tape, const Tensor& a) {
  const size_t k = a.rows(), d = a.cols();
  if (k == 0) fail(ErrorCode::InvalidArgument, "max_over_rows: empty input");
  MaxOverRows result;
  result.values = Tensor::zeros({1, d}, any_grad(a));
  result.argmax.assign(d, 0);
  for (size_t c = 0; c < d; ++c) {
    double best = a.data()[c];
    size_t best_row = 0;
    for (size_t r = 1; r < k; ++r) {
      const double v = a.data()[r * d + c];
      if (v > best) {  // strict: first occurrence wins ties
        best = v;
        best_row = r;
      }
    }
    result.values.data()[c] = best;
    result.argmax[c] = best_row;
  }
  if (result.values.requires_grad()) {
    Tensor out = result.values;
    std::vector<size_t> argmax = result.argmax;
    tape.record([a, out, argmax, d]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (size_t c = 0; c < d; ++c) ga[argmax[c] * d + c] += (*go)[c];
    });
  }
  return result;
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros({1}, any_grad(a));
  double s = 0.0;
  for (double v : a.data()) s += v;
  out.data()[0] = s;
  if (out.requires_grad()) {
    tape.record([a, out]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (double& g : ga) g += (*go)[0];
    });
  }
  return out;
}

Tensor mean_all(Tape& tape, const Tensor& a) {
  const double inv_n = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::zeros({1}, any_grad(a));
  double s = 0.0;
  for (double v : a.data()) s += v;
  out.data()[0] = s * inv_n;
  if (out.requires_grad()) {
    tape.record([a, out, inv_n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& ga = a.grad();
      for (double& g : ga) g += (*go)[0] * inv_n;
    });
  }
  return out;
}

Tensor cross_entropy_mean(Tape& tape, const Tensor& logits,
                          const std::vector<int>& labels, double positive_weight) {
  const size_t m = logits.rows(), n = logits.cols();
  check(m >= 1, "cross_entropy_mean: empty batch");
  check(labels.size() == m, "cross_entropy_mean: one label per row required");
  for (int label : labels)
    check(label >= 0 && static_cast<size_t>(label) < n,
          "cross_entropy_mean: label out of range");
  // Per-row probabilities are saved for the backward pass.
  std::vector<double> probs(m * n);
  std::vector<double> weights(m);
  double weight_total = 0.0;
  double loss = 0.0;
  for (size_t r = 0; r < m; ++r) {
    const double* x = logits.data().data() + r * n;
    double mx = x[0];
    for (size_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (size_t c = 0; c < n; ++c) {
      probs[r * n + c] = std::exp(x[c] - mx);
      sum += probs[r * n + c];
    }
    for (size_t c = 0; c < n; ++c) probs[r * n + c] /= sum;
    const double log_p = (x[labels[r]] - mx) - std::log(sum);
    const double w = labels[r] == 1 ? positive_weight : 1.0;
    weights[r] = w;
    weight_total += w;
    loss += -w * log_p;
  }
  loss /= weight_total;
  Tensor out = Tensor::from({1}, {loss}, any_grad(logits));
  if (out.requires_grad()) {
    tape.record([logits, labels, out, probs, weights, weight_total, m, n]() mutable {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gl = logits.grad();
      for (size_t r = 0; r < m; ++r) {
        const double scale = (*go)[0] * weights[r] / weight_total;
        for (size_t c = 0; c < n; ++c) {
          double delta = probs[r * n + c];
          if (static_cast<size_t>(labels[r]) == c) delta -= 1.0;
          gl[r * n + c] += scale * delta;
        }
      }
    });
  }
  return out;
}

void Adam::step(std::span<Tensor> params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].numel(), 0.0);
      v_[i].assign(params[i].numel(), 0.0);
    }
  }
  check(m_.size() == params.size(), "adam: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    check(m_[i].size() == p.numel(), "adam: parameter shape changed");
    auto& g = p.grad();
    auto& pd = p.data();
    for (size_t j = 0; j < pd.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      pd[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace segcross::ag
