#include "xferlab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "xferlab/kernels.hpp"

namespace xferlab {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("shape dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
  if (shape_numel(s) != d.size()) throw ShapeError("shape/data size mismatch");
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(d);
  return t;
}

static std::size_t flat_index(const Tensor& t, std::initializer_list<int> idx) {
  if (idx.size() != t.shape.size()) throw ShapeError("index rank mismatch");
  std::size_t flat = 0;
  auto it = idx.begin();
  for (std::size_t d = 0; d < t.shape.size(); ++d, ++it) {
    if (*it < 0 || *it >= t.shape[d]) throw ShapeError("index out of range");
    flat = flat * static_cast<std::size_t>(t.shape[d]) + static_cast<std::size_t>(*it);
  }
  return flat;
}

double& Tensor::at(std::initializer_list<int> idx) { return data[flat_index(*this, idx)]; }
double Tensor::at(std::initializer_list<int> idx) const { return data[flat_index(*this, idx)]; }

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
}

std::size_t leading_rows(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) n *= static_cast<std::size_t>(shape[i]);
  return n;
}

}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

double Tape::scalar_val(Id id) const {
  if (nodes_[id].value.size() != 1) throw ShapeError("scalar_val: node is not scalar");
  return nodes_[id].value[0];
}

std::vector<double>& Tape::adj(Id id) {
  Node& n = nodes_[id];
  if (n.adjoint.size() != n.value.size()) n.adjoint.assign(n.value.size(), 0.0);
  return n.adjoint;
}

Tape::Id Tape::leaf(Tensor& t) {
  auto it = leaf_cache_.find(&t);
  if (it != leaf_cache_.end()) return it->second;
  check_finite("leaf", t.data);
  Node n;
  n.shape = t.shape;
  n.value = t.data;
  n.leaf = &t;
  n.needs_grad = t.requires_grad;
  Id id = push(std::move(n));
  leaf_cache_.emplace(&t, id);
  return id;
}

Tape::Id Tape::constant(std::vector<int> shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) throw ShapeError("constant: shape/data mismatch");
  check_finite("constant", data);
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(data);
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.shape != nb.shape) throw ShapeError("add: shape mismatch");
  Node n;
  n.shape = na.shape;
  n.value.resize(na.value.size());
  kern::active().add(na.value.data(), nb.value.data(), n.value.data(), n.value.size());
  check_finite("add", n.value);
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [a, b](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      if (t.wants_grad(a)) kern::active().axpy(1.0, g.data(), t.adj(a).data(), g.size());
      if (t.wants_grad(b)) kern::active().axpy(1.0, g.data(), t.adj(b).data(), g.size());
    };
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.shape != nb.shape) throw ShapeError("sub: shape mismatch");
  Node n;
  n.shape = na.shape;
  n.value.resize(na.value.size());
  kern::active().sub(na.value.data(), nb.value.data(), n.value.data(), n.value.size());
  check_finite("sub", n.value);
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [a, b](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      if (t.wants_grad(a)) kern::active().axpy(1.0, g.data(), t.adj(a).data(), g.size());
      if (t.wants_grad(b)) kern::active().axpy(-1.0, g.data(), t.adj(b).data(), g.size());
    };
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.shape != nb.shape) throw ShapeError("mul: shape mismatch");
  Node n;
  n.shape = na.shape;
  n.value.resize(na.value.size());
  kern::active().mul(na.value.data(), nb.value.data(), n.value.data(), n.value.size());
  check_finite("mul", n.value);
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [a, b](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      const auto& av = t.node(a).value;
      const auto& bv = t.node(b).value;
      if (t.wants_grad(a)) {
        auto& ga = t.adj(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (t.wants_grad(b)) {
        auto& gb = t.adj(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  const Node& na = nodes_[a];
  Node n;
  n.shape = na.shape;
  n.value.resize(na.value.size());
  kern::active().scale(c, na.value.data(), n.value.data(), n.value.size());
  check_finite("scale", n.value);
  n.needs_grad = na.needs_grad;
  if (n.needs_grad)
    n.back = [a, c](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      if (t.wants_grad(a)) kern::active().axpy(c, g.data(), t.adj(a).data(), g.size());
    };
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.shape.empty() || nb.shape.size() != 2) throw ShapeError("matmul: rank");
  const int k = na.shape.back();
  if (k != nb.shape[0]) throw ShapeError("matmul: inner dimension mismatch");
  const std::size_t m = leading_rows(na.shape);
  const std::size_t nn = static_cast<std::size_t>(nb.shape[1]);
  Node n;
  n.shape = na.shape;
  n.shape.back() = nb.shape[1];
  n.value.assign(m * nn, 0.0);
  kern::active().matmul_acc(na.value.data(), nb.value.data(), n.value.data(), m,
                            static_cast<std::size_t>(k), nn);
  check_finite("matmul", n.value);
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [a, b, m, k, nn](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      const auto& av = t.node(a).value;
      const auto& bv = t.node(b).value;
      const std::size_t ku = static_cast<std::size_t>(k);
      if (t.wants_grad(a)) {
        std::vector<double> bt(bv.size());
        kern::transpose(bv.data(), bt.data(), ku, nn);  // [k,n] -> [n,k]
        kern::active().matmul_acc(g.data(), bt.data(), t.adj(a).data(), m, nn, ku);
      }
      if (t.wants_grad(b)) {
        std::vector<double> at(av.size());
        kern::transpose(av.data(), at.data(), m, ku);  // [m,k] -> [k,m]
        kern::active().matmul_acc(at.data(), g.data(), t.adj(b).data(), ku, m, nn);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.shape.size() != 2 || nb.shape.size() != 2) throw ShapeError("matmul_nt: rank");
  if (na.shape[1] != nb.shape[1]) throw ShapeError("matmul_nt: inner dimension mismatch");
  const std::size_t m = static_cast<std::size_t>(na.shape[0]);
  const std::size_t k = static_cast<std::size_t>(na.shape[1]);
  const std::size_t nn = static_cast<std::size_t>(nb.shape[0]);
  Node n;
  n.shape = {na.shape[0], nb.shape[0]};
  n.value.assign(m * nn, 0.0);
  std::vector<double> bt(nb.value.size());
  kern::transpose(nb.value.data(), bt.data(), nn, k);  // [n,k] -> [k,n]
  kern::active().matmul_acc(na.value.data(), bt.data(), n.value.data(), m, k, nn);
  check_finite("matmul_nt", n.value);
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [a, b, m, k, nn](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      const auto& av = t.node(a).value;
      const auto& bv = t.node(b).value;
      if (t.wants_grad(a))
        kern::active().matmul_acc(g.data(), bv.data(), t.adj(a).data(), m, nn, k);
      if (t.wants_grad(b)) {
        std::vector<double> gt(g.size());
        kern::transpose(g.data(), gt.data(), m, nn);  // [m,n] -> [n,m]
        kern::active().matmul_acc(gt.data(), av.data(), t.adj(b).data(), nn, m, k);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::add_row(Id x, Id bias) {
  const Node& nx = nodes_[x];
  const Node& nb = nodes_[bias];
  if (nb.shape.size() != 1 || nx.shape.empty() || nx.shape.back() != nb.shape[0])
    throw ShapeError("add_row: bias dim mismatch");
  const std::size_t d = static_cast<std::size_t>(nb.shape[0]);
  const std::size_t rows = leading_rows(nx.shape);
  Node n;
  n.shape = nx.shape;
  n.value.resize(nx.value.size());
  for (std::size_t r = 0; r < rows; ++r)
    kern::active().add(nx.value.data() + r * d, nb.value.data(), n.value.data() + r * d, d);
  check_finite("add_row", n.value);
  n.needs_grad = nx.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [x, bias, rows, d](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      if (t.wants_grad(x)) kern::active().axpy(1.0, g.data(), t.adj(x).data(), g.size());
      if (t.wants_grad(bias)) {
        auto& gb = t.adj(bias);
        for (std::size_t r = 0; r < rows; ++r)
          kern::active().axpy(1.0, g.data() + r * d, gb.data(), d);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::add_outer(Id a, Id b) {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[1])
    throw ShapeError("add_outer: expects [m,d] and [n,d]");
  const std::size_t m = static_cast<std::size_t>(na.shape[0]);
  const std::size_t nn = static_cast<std::size_t>(nb.shape[0]);
  const std::size_t d = static_cast<std::size_t>(na.shape[1]);
  Node n;
  n.shape = {na.shape[0], nb.shape[0], na.shape[1]};
  n.value.resize(m * nn * d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nn; ++j)
      kern::active().add(na.value.data() + i * d, nb.value.data() + j * d,
                         n.value.data() + (i * nn + j) * d, d);
  check_finite("add_outer", n.value);
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [a, b, m, nn, d](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      if (t.wants_grad(a)) {
        auto& ga = t.adj(a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < nn; ++j)
            kern::active().axpy(1.0, g.data() + (i * nn + j) * d, ga.data() + i * d, d);
      }
      if (t.wants_grad(b)) {
        auto& gb = t.adj(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < nn; ++j)
            kern::active().axpy(1.0, g.data() + (i * nn + j) * d, gb.data() + j * d, d);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::layer_norm(Id x, Id gamma, Id beta, double eps) {
  const Node& nx = nodes_[x];
  const Node& ng = nodes_[gamma];
  const Node& nb = nodes_[beta];
  if (nx.shape.empty()) throw ShapeError("layer_norm: rank");
  const int d = nx.shape.back();
  if (ng.shape != std::vector<int>{d} || nb.shape != std::vector<int>{d})
    throw ShapeError("layer_norm: gamma/beta must be [d]");
  if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t du = static_cast<std::size_t>(d);
  const std::size_t rows = leading_rows(nx.shape);
  Node n;
  n.shape = nx.shape;
  n.value.resize(nx.value.size());
  std::vector<double> xhat(nx.value.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nx.value.data() + r * du;
    double mean = 0.0;
    for (std::size_t j = 0; j < du; ++j) mean += xr[j];
    mean /= static_cast<double>(du);
    double var = 0.0;
    for (std::size_t j = 0; j < du; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(du);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < du; ++j) {
      const double h = (xr[j] - mean) * inv;
      xhat[r * du + j] = h;
      n.value[r * du + j] = ng.value[j] * h + nb.value[j];
    }
  }
  check_finite("layer_norm", n.value);
  n.needs_grad = nx.needs_grad || ng.needs_grad || nb.needs_grad;
  if (n.needs_grad)
    n.back = [x, gamma, beta, rows, du, xhat = std::move(xhat),
              inv_std = std::move(inv_std)](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      const auto& gv = t.node(gamma).value;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * du;
        const double* hr = xhat.data() + r * du;
        if (t.wants_grad(gamma)) {
          auto& gg = t.adj(gamma);
          for (std::size_t j = 0; j < du; ++j) gg[j] += gr[j] * hr[j];
        }
        if (t.wants_grad(beta)) {
          auto& gb = t.adj(beta);
          for (std::size_t j = 0; j < du; ++j) gb[j] += gr[j];
        }
        if (t.wants_grad(x)) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < du; ++j) {
            const double dyg = gr[j] * gv[j];
            m1 += dyg;
            m2 += dyg * hr[j];
          }
          m1 /= static_cast<double>(du);
          m2 /= static_cast<double>(du);
          auto& gx = t.adj(x);
          for (std::size_t j = 0; j < du; ++j) {
            const double dyg = gr[j] * gv[j];
            gx[r * du + j] += inv_std[r] * (dyg - m1 - hr[j] * m2);
          }
        }
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::unary_map(Id x, const char* name, double (*f)(double),
                         double (*df_from_xy)(double, double)) {
  const Node& nx = nodes_[x];
  Node n;
  n.shape = nx.shape;
  n.value.resize(nx.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = f(nx.value[i]);
  check_finite(name, n.value);
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, df_from_xy](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const auto& g = t.node(self).adjoint;
      const auto& xv = t.node(x).value;
      const auto& yv = t.node(self).value;
      auto& gx = t.adj(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df_from_xy(xv[i], yv[i]);
    };
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id x) {
  return unary_map(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tape::Id Tape::tanh(Id x) {
  return unary_map(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tape::Id Tape::swish(Id x) {
  return unary_map(
      x, "swish", [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s + v * s * (1.0 - s);
      });
}

Tape::Id Tape::softmax(Id x) {
  const Node& nx = nodes_[x];
  if (nx.shape.empty()) throw ShapeError("softmax: rank");
  const std::size_t d = static_cast<std::size_t>(nx.shape.back());
  const std::size_t rows = leading_rows(nx.shape);
  Node n;
  n.shape = nx.shape;
  n.value.resize(nx.value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nx.value.data() + r * d;
    double mx = xr[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = std::exp(xr[j] - mx);
      n.value[r * d + j] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < d; ++j) n.value[r * d + j] *= inv;
  }
  check_finite("softmax", n.value);
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, rows, d](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const auto& g = t.node(self).adjoint;
      const auto& y = t.node(self).value;
      auto& gx = t.adj(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * d;
        const double* yr = y.data() + r * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += yr[j] * (gr[j] - dot);
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::log_softmax(Id x) {
  const Node& nx = nodes_[x];
  if (nx.shape.empty()) throw ShapeError("log_softmax: rank");
  const std::size_t d = static_cast<std::size_t>(nx.shape.back());
  const std::size_t rows = leading_rows(nx.shape);
  Node n;
  n.shape = nx.shape;
  n.value.resize(nx.value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nx.value.data() + r * d;
    double mx = xr[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < d; ++j) n.value[r * d + j] = xr[j] - lse;
  }
  check_finite("log_softmax", n.value);
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, rows, d](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const auto& g = t.node(self).adjoint;
      const auto& y = t.node(self).value;
      auto& gx = t.adj(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * d;
        const double* yr = y.data() + r * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += gr[j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += gr[j] - std::exp(yr[j]) * s;
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::dropout(Id x, double rate, RngStream rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  const Node& nx = nodes_[x];
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(nx.value.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = (rng.uniform() >= rate) ? keep_scale : 0.0;
  Node n;
  n.shape = nx.shape;
  n.value.resize(nx.value.size());
  kern::active().mul(nx.value.data(), mask.data(), n.value.data(), mask.size());
  check_finite("dropout", n.value);
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, mask = std::move(mask)](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const auto& g = t.node(self).adjoint;
      auto& gx = t.adj(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  return push(std::move(n));
}

Tape::Id Tape::embed(Id table, const std::vector<int>& ids) {
  const Node& nt = nodes_[table];
  if (nt.shape.size() != 2) throw ShapeError("embed: table must be 2-D");
  const int vocab = nt.shape[0];
  const std::size_t d = static_cast<std::size_t>(nt.shape[1]);
  for (int id : ids)
    if (id < 0 || id >= vocab) throw DataError("embed: token id out of range");
  Node n;
  n.shape = {static_cast<int>(ids.size()), nt.shape[1]};
  n.value.resize(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(n.value.data() + i * d,
                nt.value.data() + static_cast<std::size_t>(ids[i]) * d, d * sizeof(double));
  n.needs_grad = nt.needs_grad;
  if (n.needs_grad)
    n.back = [table, ids, d](Tape& t, Id self) {
      if (!t.wants_grad(table)) return;
      const auto& g = t.node(self).adjoint;
      auto& gt = t.adj(table);
      for (std::size_t i = 0; i < ids.size(); ++i)
        kern::active().axpy(1.0, g.data() + i * d,
                            gt.data() + static_cast<std::size_t>(ids[i]) * d, d);
    };
  return push(std::move(n));
}

Tape::Id Tape::rows(Id x, int r0, int r1) {
  const Node& nx = nodes_[x];
  if (nx.shape.size() != 2) throw ShapeError("rows: expects 2-D input");
  if (r0 < 0 || r1 > nx.shape[0] || r0 >= r1) throw ShapeError("rows: bad range");
  const std::size_t d = static_cast<std::size_t>(nx.shape[1]);
  Node n;
  n.shape = {r1 - r0, nx.shape[1]};
  n.value.assign(nx.value.begin() + r0 * static_cast<long>(d),
                 nx.value.begin() + r1 * static_cast<long>(d));
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, r0, d](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const auto& g = t.node(self).adjoint;
      kern::active().axpy(1.0, g.data(), t.adj(x).data() + static_cast<std::size_t>(r0) * d,
                          g.size());
    };
  return push(std::move(n));
}

Tape::Id Tape::slice_last(Id x, int j0, int j1) {
  const Node& nx = nodes_[x];
  if (nx.shape.empty()) throw ShapeError("slice_last: rank");
  const int d = nx.shape.back();
  if (j0 < 0 || j1 > d || j0 >= j1) throw ShapeError("slice_last: bad range");
  const std::size_t du = static_cast<std::size_t>(d);
  const std::size_t w = static_cast<std::size_t>(j1 - j0);
  const std::size_t rws = leading_rows(nx.shape);
  Node n;
  n.shape = nx.shape;
  n.shape.back() = j1 - j0;
  n.value.resize(rws * w);
  for (std::size_t r = 0; r < rws; ++r)
    std::memcpy(n.value.data() + r * w, nx.value.data() + r * du + j0, w * sizeof(double));
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, j0, du, w, rws](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const auto& g = t.node(self).adjoint;
      auto& gx = t.adj(x);
      for (std::size_t r = 0; r < rws; ++r)
        kern::active().axpy(1.0, g.data() + r * w, gx.data() + r * du + j0, w);
    };
  return push(std::move(n));
}

Tape::Id Tape::concat_last(const std::vector<Id>& xs) {
  if (xs.empty()) throw ShapeError("concat_last: no inputs");
  const std::size_t rws = leading_rows(nodes_[xs[0]].shape);
  std::vector<int> lead(nodes_[xs[0]].shape.begin(), nodes_[xs[0]].shape.end() - 1);
  int total = 0;
  std::vector<std::size_t> widths;
  for (Id id : xs) {
    const Node& nx = nodes_[id];
    if (std::vector<int>(nx.shape.begin(), nx.shape.end() - 1) != lead)
      throw ShapeError("concat_last: leading dims differ");
    widths.push_back(static_cast<std::size_t>(nx.shape.back()));
    total += nx.shape.back();
  }
  Node n;
  n.shape = lead;
  n.shape.push_back(total);
  const std::size_t tw = static_cast<std::size_t>(total);
  n.value.resize(rws * tw);
  n.needs_grad = false;
  std::size_t off = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Node& nx = nodes_[xs[i]];
    for (std::size_t r = 0; r < rws; ++r)
      std::memcpy(n.value.data() + r * tw + off, nx.value.data() + r * widths[i],
                  widths[i] * sizeof(double));
    off += widths[i];
    n.needs_grad = n.needs_grad || nx.needs_grad;
  }
  if (n.needs_grad)
    n.back = [xs, widths, rws, tw](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      std::size_t off = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (t.wants_grad(xs[i])) {
          auto& gx = t.adj(xs[i]);
          for (std::size_t r = 0; r < rws; ++r)
            kern::active().axpy(1.0, g.data() + r * tw + off, gx.data() + r * widths[i],
                                widths[i]);
        }
        off += widths[i];
      }
    };
  return push(std::move(n));
}

Tape::Id Tape::stack_rows(const std::vector<Id>& xs) {
  if (xs.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t d = nodes_[xs[0]].value.size();
  Node n;
  n.shape = {static_cast<int>(xs.size()), static_cast<int>(d)};
  n.value.resize(xs.size() * d);
  n.needs_grad = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Node& nx = nodes_[xs[i]];
    if (nx.value.size() != d) throw ShapeError("stack_rows: element size mismatch");
    std::memcpy(n.value.data() + i * d, nx.value.data(), d * sizeof(double));
    n.needs_grad = n.needs_grad || nx.needs_grad;
  }
  if (n.needs_grad)
    n.back = [xs, d](Tape& t, Id self) {
      const auto& g = t.node(self).adjoint;
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (t.wants_grad(xs[i]))
          kern::active().axpy(1.0, g.data() + i * d, t.adj(xs[i]).data(), d);
    };
  return push(std::move(n));
}

Tape::Id Tape::sum(Id x) {
  const Node& nx = nodes_[x];
  double s = 0.0;
  for (double v : nx.value) s += v;
  Node n;
  n.shape = {1};
  n.value = {s};
  check_finite("sum", n.value);
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x](Tape& t, Id self) {
      if (!t.wants_grad(x)) return;
      const double g = t.node(self).adjoint[0];
      auto& gx = t.adj(x);
      for (double& v : gx) v += g;
    };
  return push(std::move(n));
}

Tape::Id Tape::mean_scalars(const std::vector<Id>& xs) {
  if (xs.empty()) throw ShapeError("mean_scalars: no inputs");
  double s = 0.0;
  bool ng = false;
  for (Id id : xs) {
    s += scalar_val(id);
    ng = ng || nodes_[id].needs_grad;
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  Node n;
  n.shape = {1};
  n.value = {s * inv};
  check_finite("mean_scalars", n.value);
  n.needs_grad = ng;
  if (ng)
    n.back = [xs, inv](Tape& t, Id self) {
      const double g = t.node(self).adjoint[0] * inv;
      for (Id id : xs)
        if (t.wants_grad(id)) t.adj(id)[0] += g;
    };
  return push(std::move(n));
}

Tape::Id Tape::pick(Id x, std::size_t flat_index) {
  const Node& nx = nodes_[x];
  if (flat_index >= nx.value.size()) throw ShapeError("pick: index out of range");
  Node n;
  n.shape = {1};
  n.value = {nx.value[flat_index]};
  n.needs_grad = nx.needs_grad;
  if (n.needs_grad)
    n.back = [x, flat_index](Tape& t, Id self) {
      if (t.wants_grad(x)) t.adj(x)[flat_index] += t.node(self).adjoint[0];
    };
  return push(std::move(n));
}

Tape::Id Tape::logaddexp(Id a, Id b) {
  const double av = scalar_val(a);
  const double bv = scalar_val(b);
  const double m = std::max(av, bv);
  const double v = m + std::log(std::exp(av - m) + std::exp(bv - m));
  Node n;
  n.shape = {1};
  n.value = {v};
  check_finite("logaddexp", n.value);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  if (n.needs_grad) {
    const double wa = std::exp(av - v);
    const double wb = std::exp(bv - v);
    n.back = [a, b, wa, wb](Tape& t, Id self) {
      const double g = t.node(self).adjoint[0];
      if (t.wants_grad(a)) t.adj(a)[0] += g * wa;
      if (t.wants_grad(b)) t.adj(b)[0] += g * wb;
    };
  }
  return push(std::move(n));
}

void Tape::backward(Id loss) {
  if (loss < 0 || loss >= static_cast<Id>(nodes_.size()))
    throw ShapeError("backward: bad node id");
  if (nodes_[loss].value.size() != 1)
    throw ShapeError("backward: loss must be a scalar");
  adj(loss)[0] += 1.0;
  for (Id i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.adjoint.empty()) continue;
    if (n.back) n.back(*this, i);
    if (n.leaf && n.leaf->requires_grad) {
      n.leaf->ensure_grad();
      kern::active().axpy(1.0, n.adjoint.data(), n.leaf->grad.data(), n.adjoint.size());
    }
  }
}

}  // namespace xferlab
