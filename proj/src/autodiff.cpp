#include "activedt/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "activedt/error.hpp"

namespace adt::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                      shape_str(b));
}

Tape& same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument("tensors belong to different tapes");
  }
  return *a.tape();
}

std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : numel(s) / static_cast<std::size_t>(s.back()); }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t parameter_count(const ParamStore& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p.values.size();
  return n;
}

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  const int r = static_cast<int>(s.size());
  return s[static_cast<std::size_t>(axis < 0 ? axis + r : axis)];
}

std::span<const double> Tensor::values() const { return tape_->node(id_).value; }
std::span<const double> Tensor::grad() const { return tape_->node(id_).grad; }

double Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_str(shape()));
  return values()[0];
}

Tensor Tape::record(Shape shape, std::vector<double> value, bool requires_grad,
                    std::function<void(Tape&)> backward) {
  if (numel(shape) != value.size()) {
    throw ShapeMismatch("buffer of " + std::to_string(value.size()) + " values for shape " +
                        shape_str(shape));
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return record(std::move(shape), std::move(values), false, {});
}

Tensor Tape::constant(Shape shape, double fill) {
  const std::size_t n = numel(shape);
  return record(std::move(shape), std::vector<double>(n, fill), false, {});
}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  return record(std::move(shape), std::move(values), true, {});
}

Tensor Tape::parameter(const std::string& name, const Param& param) {
  Tensor t = variable(param.shape, param.values);
  params_.emplace_back(name, t.id());
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss recorded on a different tape");
  if (loss.size() != 1) throw NonScalarLoss("backward needs a scalar loss, got " + shape_str(loss.shape()));
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  grad_of(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this);
  }
}

Gradients Tape::gradients() const {
  Gradients out;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[id];
    std::vector<double> g = n.grad.empty() ? std::vector<double>(n.value.size(), 0.0) : n.grad;
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, std::move(g));
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return out;
}

// ---- operators --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) mismatch("matmul", sa, sb);
  const int m = sa[sa.size() - 2], k = sa.back();
  const int kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) mismatch("matmul", sa, sb);
  const bool shared = sb.size() == 2;
  if (!shared && (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
    mismatch("matmul", sa, sb);
  }
  const std::size_t batch = numel(Shape(sa.begin(), sa.end() - 2));
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(numel(out_shape));
  const std::size_t ia = a.id(), ib = b.id();
  const double* pa = tape.node(ia).value.data();
  const double* pb = tape.node(ib).value.data();
  if (shared) {
    MapMat(out.data(), static_cast<long>(batch) * m, n).noalias() =
        CMapMat(pa, static_cast<long>(batch) * m, k) * CMapMat(pb, k, n);
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      MapMat(out.data() + t * m * n, m, n).noalias() =
          CMapMat(pa + t * m * k, m, k) * CMapMat(pb + t * k * n, k, n);
    }
  }
  const bool rg = tape.node(ia).requires_grad || tape.node(ib).requires_grad;
  const std::size_t self = tape.size();
  return tape.record(std::move(out_shape), std::move(out), rg, [=](Tape& t) {
    const double* g = t.node(self).grad.data();
    const double* va = t.node(ia).value.data();
    const double* vb = t.node(ib).value.data();
    if (t.node(ia).requires_grad) {
      double* ga = t.grad_of(ia).data();
      if (shared) {
        MapMat(ga, static_cast<long>(batch) * m, k).noalias() +=
            CMapMat(g, static_cast<long>(batch) * m, n) * CMapMat(vb, k, n).transpose();
      } else {
        for (std::size_t s = 0; s < batch; ++s) {
          MapMat(ga + s * m * k, m, k).noalias() +=
              CMapMat(g + s * m * n, m, n) * CMapMat(vb + s * k * n, k, n).transpose();
        }
      }
    }
    if (t.node(ib).requires_grad) {
      double* gb = t.grad_of(ib).data();
      if (shared) {
        MapMat(gb, k, n).noalias() +=
            CMapMat(va, static_cast<long>(batch) * m, k).transpose() *
            CMapMat(g, static_cast<long>(batch) * m, n);
      } else {
        for (std::size_t s = 0; s < batch; ++s) {
          MapMat(gb + s * k * n, k, n).noalias() +=
              CMapMat(va + s * m * k, m, k).transpose() * CMapMat(g + s * m * n, m, n);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) mismatch("add", sa, sb);
  const std::size_t nb = numel(sb);
  const std::size_t reps = numel(sa) / std::max<std::size_t>(nb, 1);
  std::vector<double> out(tape.node(a.id()).value);
  const std::vector<double>& vb = tape.node(b.id()).value;
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < nb; ++i) out[r * nb + i] += vb[i];
  }
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.node(ia).requires_grad || tape.node(ib).requires_grad;
  const std::size_t self = tape.size();
  return tape.record(sa, std::move(out), rg, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    if (t.node(ia).requires_grad) {
      std::vector<double>& ga = t.grad_of(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.node(ib).requires_grad) {
      std::vector<double>& gb = t.grad_of(ib);
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < nb; ++i) gb[i] += g[r * nb + i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b);
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  const std::vector<double>& va = tape.node(a.id()).value;
  const std::vector<double>& vb = tape.node(b.id()).value;
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.node(ia).requires_grad || tape.node(ib).requires_grad;
  const std::size_t self = tape.size();
  return tape.record(a.shape(), std::move(out), rg, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    if (t.node(ia).requires_grad) {
      std::vector<double>& ga = t.grad_of(ia);
      const std::vector<double>& y = t.node(ib).value;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.node(ib).requires_grad) {
      std::vector<double>& gb = t.grad_of(ib);
      const std::vector<double>& x = t.node(ia).value;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

namespace {

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  Tape& tape = *a.tape();
  const std::vector<double>& x = tape.node(a.id()).value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(a.shape(), std::move(out), tape.node(ia).requires_grad, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    const std::vector<double>& xv = t.node(ia).value;
    const std::vector<double>& yv = t.node(self).value;
    std::vector<double>& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor softmax(const Tensor& a) {
  Tape& tape = *a.tape();
  if (a.rank() < 1) mismatch("softmax", a.shape(), a.shape());
  const std::size_t c = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = rows_of(a.shape());
  const std::vector<double>& x = tape.node(a.id()).value;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * c;
    double* yr = out.data() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) yr[j] /= z;
  }
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(a.shape(), std::move(out), tape.node(ia).requires_grad, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    const std::vector<double>& y = t.node(self).value;
    std::vector<double>& ga = t.grad_of(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Tape& tape = same_tape(x, gain);
  same_tape(x, bias);
  if (x.rank() < 1) mismatch("layer_norm", x.shape(), gain.shape());
  const int d = x.shape().back();
  if (gain.shape() != Shape{d}) mismatch("layer_norm", x.shape(), gain.shape());
  if (bias.shape() != Shape{d}) mismatch("layer_norm", x.shape(), bias.shape());
  const std::size_t n = static_cast<std::size_t>(d);
  const std::size_t rows = rows_of(x.shape());
  const std::vector<double>& xv = tape.node(x.id()).value;
  const std::vector<double>& gv = tape.node(gain.id()).value;
  const std::vector<double>& bv = tape.node(bias.id()).value;
  // Saved normalized activations and inverse std per row.
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool rg = tape.node(ix).requires_grad || tape.node(ig).requires_grad || tape.node(ib).requires_grad;
  const std::size_t self = tape.size();
  return tape.record(x.shape(), std::move(out), rg, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    const std::vector<double>& gv2 = t.node(ig).value;
    if (t.node(ig).requires_grad) {
      std::vector<double>& gg = t.grad_of(ig);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[r * n + j] * (*xhat)[r * n + j];
    }
    if (t.node(ib).requires_grad) {
      std::vector<double>& gb = t.grad_of(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
    }
    if (t.node(ix).requires_grad) {
      std::vector<double>& gx = t.grad_of(ix);
      for (std::size_t r = 0; r < rows; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[r * n + j] * gv2[j];
          s1 += dh;
          s2 += dh * (*xhat)[r * n + j];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[r * n + j] * gv2[j];
          gx[r * n + j] += (*inv_std)[r] * (dh - inv_n * s1 - (*xhat)[r * n + j] * inv_n * s2);
        }
      }
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> indices, const Shape& lead_shape) {
  Tape& tape = *table.tape();
  if (table.rank() != 2) mismatch("embedding_lookup", table.shape(), lead_shape);
  if (numel(lead_shape) != indices.size()) mismatch("embedding_lookup", lead_shape, Shape{static_cast<int>(indices.size())});
  const int vocab = table.dim(0);
  const std::size_t d = static_cast<std::size_t>(table.dim(1));
  const std::vector<double>& tv = tape.node(table.id()).value;
  std::vector<double> out(indices.size() * d);
  std::vector<int> idx(indices.begin(), indices.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= vocab) {
      throw ShapeMismatch("embedding_lookup: index " + std::to_string(idx[i]) + " outside table " +
                          shape_str(table.shape()));
    }
    std::copy_n(tv.begin() + static_cast<long>(static_cast<std::size_t>(idx[i]) * d), d,
                out.begin() + static_cast<long>(i * d));
  }
  Shape shape = lead_shape;
  shape.push_back(static_cast<int>(d));
  const std::size_t it = table.id();
  const std::size_t self = tape.size();
  return tape.record(std::move(shape), std::move(out), tape.node(it).requires_grad,
                     [=, idx = std::move(idx)](Tape& t) {
                       const std::vector<double>& g = t.node(self).grad;
                       std::vector<double>& gt = t.grad_of(it);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         const std::size_t row = static_cast<std::size_t>(idx[i]) * d;
                         for (std::size_t j = 0; j < d; ++j) gt[row + j] += g[i * d + j];
                       }
                     });
}

Tensor slice_last(const Tensor& a, int begin, int end) {
  Tape& tape = *a.tape();
  const Shape& sa = a.shape();
  if (sa.empty() || begin < 0 || end > sa.back() || begin >= end) {
    mismatch("slice_last", sa, Shape{begin, end});
  }
  const std::size_t c = static_cast<std::size_t>(sa.back());
  const std::size_t w = static_cast<std::size_t>(end - begin);
  const std::size_t rows = rows_of(sa);
  const std::vector<double>& x = tape.node(a.id()).value;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.begin() + static_cast<long>(r * c + static_cast<std::size_t>(begin)), w,
                out.begin() + static_cast<long>(r * w));
  }
  Shape shape = sa;
  shape.back() = end - begin;
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  const auto off = static_cast<std::size_t>(begin);
  return tape.record(std::move(shape), std::move(out), tape.node(ia).requires_grad, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    std::vector<double>& ga = t.grad_of(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) ga[r * c + off + j] += g[r * w + j];
  });
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_last: no inputs");
  Tape& tape = *parts[0].tape();
  const Shape& s0 = parts[0].shape();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    same_tape(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin())) mismatch("concat_last", s0, s);
    widths.push_back(static_cast<std::size_t>(s.back()));
    ids.push_back(p.id());
    total += widths.back();
    rg = rg || tape.node(p.id()).requires_grad;
  }
  const std::size_t rows = rows_of(s0);
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::vector<double>& x = tape.node(ids[k]).value;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.begin() + static_cast<long>(r * widths[k]), widths[k],
                  out.begin() + static_cast<long>(r * total + off));
    }
    off += widths[k];
  }
  Shape shape = s0;
  shape.back() = static_cast<int>(total);
  const std::size_t self = tape.size();
  return tape.record(std::move(shape), std::move(out), rg, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.node(ids[k]).requires_grad) {
        std::vector<double>& gk = t.grad_of(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) gk[r * widths[k] + j] += g[r * total + o + j];
      }
      o += widths[k];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  Tape& tape = *parts[0].tape();
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 2) mismatch("concat_rows", s0, s0);
  std::vector<std::size_t> ids, offsets;
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    same_tape(parts[0], p);
    if (p.rank() != 2 || p.dim(1) != s0[1]) mismatch("concat_rows", s0, p.shape());
    ids.push_back(p.id());
    offsets.push_back(total);
    total += p.size();
    rg = rg || tape.node(p.id()).requires_grad;
  }
  std::vector<double> out;
  out.reserve(total);
  for (std::size_t id : ids) {
    const std::vector<double>& x = tape.node(id).value;
    out.insert(out.end(), x.begin(), x.end());
  }
  const Shape shape{static_cast<int>(total / static_cast<std::size_t>(s0[1])), s0[1]};
  const std::size_t self = tape.size();
  return tape.record(shape, std::move(out), rg, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.node(ids[k]).requires_grad) continue;
      std::vector<double>& gk = t.grad_of(ids[k]);
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
    }
  });
}

Tensor transpose_last2(const Tensor& a) {
  Tape& tape = *a.tape();
  const Shape& sa = a.shape();
  if (sa.size() < 2) mismatch("transpose_last2", sa, sa);
  const int m = sa[sa.size() - 2], n = sa.back();
  const std::size_t batch = numel(sa) / (static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  const std::size_t mn = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
  const std::vector<double>& x = tape.node(a.id()).value;
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat(out.data() + b * mn, n, m) = CMapMat(x.data() + b * mn, m, n).transpose();
  }
  Shape shape = sa;
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(std::move(shape), std::move(out), tape.node(ia).requires_grad, [=](Tape& t) {
    const double* g = t.node(self).grad.data();
    double* ga = t.grad_of(ia).data();
    for (std::size_t b = 0; b < batch; ++b) {
      MapMat(ga + b * mn, m, n) += CMapMat(g + b * mn, n, m).transpose();
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  Tape& tape = *a.tape();
  if (numel(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(std::move(shape), tape.node(ia).value, tape.node(ia).requires_grad, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    std::vector<double>& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask, double value) {
  Tape& tape = *a.tape();
  const std::size_t n = a.size();
  if (mask.empty() || n % mask.size() != 0) {
    mismatch("masked_fill", a.shape(), Shape{static_cast<int>(mask.size())});
  }
  const std::size_t m = mask.size();
  std::vector<double> out(tape.node(a.id()).value);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i % m]) out[i] = value;
  }
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(a.shape(), std::move(out), tape.node(ia).requires_grad, [=](Tape& t) {
    const std::vector<double>& g = t.node(self).grad;
    std::vector<double>& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!mask[i % m]) ga[i] += g[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  Tape& tape = *a.tape();
  const std::vector<double>& x = tape.node(a.id()).value;
  double s = 0.0;
  for (double v : x) s += v;
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(Shape{}, {s}, tape.node(ia).requires_grad, [=](Tape& t) {
    const double g = t.node(self).grad[0];
    for (double& v : t.grad_of(ia)) v += g;
  });
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets,
                                 std::span<const double> weights) {
  Tape& tape = *logits.tape();
  if (logits.rank() < 1) mismatch("cross_entropy_from_logits", logits.shape(), Shape{});
  const std::size_t c = static_cast<std::size_t>(logits.shape().back());
  const std::size_t rows = rows_of(logits.shape());
  if (targets.size() != rows) {
    mismatch("cross_entropy_from_logits", logits.shape(), Shape{static_cast<int>(targets.size())});
  }
  if (!weights.empty() && weights.size() != rows) {
    mismatch("cross_entropy_from_logits", logits.shape(), Shape{static_cast<int>(weights.size())});
  }
  if (rows == 0) throw ShapeMismatch("cross_entropy_from_logits: no rows");
  const std::vector<double>& z = tape.node(logits.id()).value;
  auto probs = std::make_shared<std::vector<double>>(z.size());
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(rows, 1.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= c) {
      throw ShapeMismatch("cross_entropy_from_logits: target " + std::to_string(tgt[r]) +
                          " outside " + shape_str(logits.shape()));
    }
    const double* zr = z.data() + r * c;
    const double mx = *std::max_element(zr, zr + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += ((*probs)[r * c + j] = std::exp(zr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] /= s;
    const double log_z = mx + std::log(s);
    total += w[r] * (log_z - zr[tgt[r]]);
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const std::size_t il = logits.id();
  const std::size_t self = tape.size();
  return tape.record(Shape{}, {total * inv_rows}, tape.node(il).requires_grad,
                     [=, tgt = std::move(tgt), w = std::move(w)](Tape& t) {
                       const double g = t.node(self).grad[0] * inv_rows;
                       std::vector<double>& gl = t.grad_of(il);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<int>(j) == tgt[r] ? 1.0 : 0.0;
                           gl[r * c + j] += g * w[r] * ((*probs)[r * c + j] - onehot);
                         }
                       }
                     });
}

Tensor entropy_from_logits(const Tensor& logits) {
  Tape& tape = *logits.tape();
  if (logits.rank() < 1) mismatch("entropy_from_logits", logits.shape(), Shape{});
  const std::size_t c = static_cast<std::size_t>(logits.shape().back());
  const std::size_t rows = rows_of(logits.shape());
  if (rows == 0) throw ShapeMismatch("entropy_from_logits: no rows");
  const std::vector<double>& z = tape.node(logits.id()).value;
  auto probs = std::make_shared<std::vector<double>>(z.size());
  auto logp = std::make_shared<std::vector<double>>(z.size());
  auto ent = std::make_shared<std::vector<double>>(rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * c;
    const double mx = *std::max_element(zr, zr + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(zr[j] - mx);
    const double log_z = mx + std::log(s);
    double h = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double lp = zr[j] - log_z;
      const double p = std::exp(lp);
      (*logp)[r * c + j] = lp;
      (*probs)[r * c + j] = p;
      h -= p * lp;
    }
    (*ent)[r] = h;
    total += h;
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const std::size_t il = logits.id();
  const std::size_t self = tape.size();
  return tape.record(Shape{}, {total * inv_rows}, tape.node(il).requires_grad, [=](Tape& t) {
    const double g = t.node(self).grad[0] * inv_rows;
    std::vector<double>& gl = t.grad_of(il);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t k = r * c + j;
        gl[k] += -g * (*probs)[k] * ((*logp)[k] + (*ent)[r]);
      }
    }
  });
}

// ---- optimization ---------------------------------------------------------

double clip_grad_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g) v *= f;
  }
  return norm;
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeMismatch("adam_step: gradient for unknown parameter " + name);
    if (it->second.values.size() != g.size()) {
      throw ShapeMismatch("adam_step: parameter " + name + " has shape " + shape_str(it->second.shape) +
                          " but gradient has " + std::to_string(g.size()) + " values");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.values.size()) m.assign(p.values.size(), 0.0);
    if (v.size() != p.values.size()) v.assign(p.values.size(), 0.0);
    const auto git = grads.find(name);
    const std::vector<double>* g = git == grads.end() ? nullptr : &git->second;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

std::string params_to_json(const ParamStore& params) {
  nlohmann::json j;
  j["version"] = 1;
  nlohmann::json& ps = j["params"] = nlohmann::json::object();
  for (const auto& [name, p] : params) ps[name] = {{"shape", p.shape}, {"values", p.values}};
  return j.dump();
}

ParamStore params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.contains("version") || j["version"] != 1) throw FormatError("unsupported checkpoint version");
  ParamStore out;
  for (const auto& [name, entry] : j.at("params").items()) {
    Param p;
    p.shape = entry.at("shape").get<Shape>();
    p.values = entry.at("values").get<std::vector<double>>();
    if (numel(p.shape) != p.values.size()) {
      throw FormatError("checkpoint parameter " + name + " has inconsistent shape");
    }
    out.emplace(name, std::move(p));
  }
  return out;
}

}  // namespace adt::ad
