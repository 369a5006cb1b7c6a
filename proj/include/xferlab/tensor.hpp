#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "xferlab/errors.hpp"
#include "xferlab/rng.hpp"

namespace xferlab {

std::size_t shape_numel(const std::vector<int>& shape);

// Dense row-major f64 tensor. Everything at this scale fits in plain vectors;
// grad stays empty until a backward pass touches the tensor.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0)
      : shape(std::move(s)), data(shape_numel(shape), fill) {}

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }
  static Tensor from(std::vector<int> s, std::vector<double> d);

  std::size_t numel() const { return data.size(); }
  int last_dim() const { return shape.empty() ? 1 : shape.back(); }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), 0.0);
  }
};

// Reverse-mode tape, rebuilt from scratch for every forward pass. Ops compute
// eagerly and record a backward closure; backward() sweeps the tape once in
// reverse and accumulates into leaf Tensor::grad buffers (trainable leaves
// only). Every forward op checks its output for NaN/Inf and throws
// NumericError instead of propagating.
class Tape {
 public:
  using Id = int;

  struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> adjoint;  // allocated lazily during backward
    std::function<void(Tape&, Id)> back;
    Tensor* leaf = nullptr;
    bool needs_grad = false;
  };

  // Leaves are cached per tape: repeated leaf(t) calls within one forward
  // share a node, so batch members accumulate into one adjoint.
  Id leaf(Tensor& t);
  Id constant(std::vector<int> shape, std::vector<double> data);
  Id constant_scalar(double v) { return constant({1}, {v}); }

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id neg(Id a) { return scale(a, -1.0); }

  // a: [..., k] treated as [prod(leading), k]; b: [k, n]
  Id matmul(Id a, Id b);
  // a: [m, k], b: [n, k]  ->  a * b^T : [m, n]
  Id matmul_nt(Id a, Id b);
  // x: [..., d] plus bias [d], broadcast over leading dims
  Id add_row(Id x, Id bias);
  // a: [m, d], b: [n, d]  ->  out[i,j,:] = a[i,:] + b[j,:] : [m, n, d]
  Id add_outer(Id a, Id b);

  Id layer_norm(Id x, Id gamma, Id beta, double eps);
  Id sigmoid(Id x);
  Id tanh(Id x);
  Id swish(Id x);
  Id softmax(Id x);      // over last dim
  Id log_softmax(Id x);  // over last dim

  // Inverted-scaling dropout; a train-path op (eval forwards simply skip it).
  // rate 0 is the identity and records nothing.
  Id dropout(Id x, double rate, RngStream rng);

  Id embed(Id table, const std::vector<int>& ids);

  Id rows(Id x, int r0, int r1);        // leading-dim slice of a 2-D tensor
  Id slice_last(Id x, int j0, int j1);  // last-dim slice
  Id concat_last(const std::vector<Id>& xs);
  Id stack_rows(const std::vector<Id>& xs);  // n tensors of d elements -> [n, d]

  Id sum(Id x);
  Id mean_scalars(const std::vector<Id>& xs);
  Id pick(Id x, std::size_t flat_index);  // one element -> scalar
  Id logaddexp(Id a, Id b);               // scalar inputs

  const std::vector<double>& val(Id id) const { return nodes_[id].value; }
  const std::vector<int>& shape_of(Id id) const { return nodes_[id].shape; }
  double scalar_val(Id id) const;
  std::size_t size() const { return nodes_.size(); }

  void backward(Id loss);

  // adjoint of `id`, allocated on demand (backward-closure plumbing)
  std::vector<double>& adj(Id id);
  bool wants_grad(Id id) const { return nodes_[id].needs_grad; }
  Node& node(Id id) { return nodes_[id]; }

 private:
  Id push(Node n);
  Id unary_map(Id x, const char* name, double (*f)(double),
               double (*df_from_xy)(double, double));

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, Id> leaf_cache_;
};

// Spec-facing convenience: zero the store's grads, then run the tape backward
// from `loss`. Gradients land in the trainable tensors' grad buffers.
class ParamStore;
void backward(Tape& tape, Tape::Id loss, ParamStore& store);

}  // namespace xferlab
