#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dssl/common.hpp"
#include "dssl/rng.hpp"

namespace dssl::nn {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense double-precision tensor. Double keeps finite-difference gradient
// checks meaningful at 1e-4 relative error.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s)
      : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), 0.0) {}
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor scalar(double v) {
    Tensor t(Shape{1});
    t.data[0] = v;
    return t;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

struct Node;
using Var = std::shared_ptr<Node>;

// One autograd node. Ops attach a backward closure that reads this node's
// grad and accumulates into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;  // grad tensor allocated
  std::vector<Var> parents;
  std::function<void(Node&)> backward_op;

  Tensor& ensure_grad() {
    if (!grad_ready) {
      grad = Tensor::zeros(value.shape);
      grad_ready = true;
    }
    return grad;
  }
};

Var make_param(Tensor value);     // leaf, requires grad
Var make_constant(Tensor value);  // leaf, no grad

// Reverse-mode sweep from a scalar root.
void backward(const Var& root);

// ---- ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);  // scale * x + shift
Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k] x [n,k]^T -> [m,n]
Var linear(const Var& x, const Var& w, const Var& b);  // w: [out,in]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var relu(const Var& x);
Var global_avg_pool(const Var& x);  // [B,C,H,W] -> [B,C]
Var l2_normalize_rows(const Var& x, double eps = 1e-12);
Var mean_all(const Var& x);  // -> scalar
// Row-wise cosine similarity of two [B,D] inputs -> [B]. Throws
// NumericError when a row has (near-)zero norm.
Var rowwise_cosine(const Var& a, const Var& b);
// mean_B(-sum_P targets * log_softmax(logits)) -> scalar.
Var soft_cross_entropy(const Var& logits, const Tensor& targets);
Var detach(const Var& x);  // stop-gradient

// Running statistics for batch norm live outside the graph.
struct BatchNormState {
  Tensor run_mean, run_var;
};
// Per-channel normalization: channel axis 1 for 4-D input, axis 1 for 2-D.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training, double momentum = 0.1,
               double eps = 1e-5);

// ---- layers ----
struct ParamRef {
  std::string name;
  Var var;
};
struct BufferRef {
  std::string name;
  Tensor* tensor;
};

struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
  Var weight, bias;

  Conv2d() = default;
  Conv2d(int in, int out, int k, int stride_, int pad_, Rng& rng);
  Var operator()(const Var& x) const {
    return conv2d(x, weight, bias, stride, pad);
  }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct Linear {
  int in_dim = 0, out_dim = 0;
  Var weight, bias;

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct BatchNorm {
  int features = 0;
  Var gamma, beta;
  BatchNormState state;
  double momentum = 0.1, eps = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(int features_);
  Var operator()(const Var& x, bool training) {
    return batch_norm(x, gamma, beta, state, training, momentum, eps);
  }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out);
};

// MLP head described layer by layer (linear [+ BN] [+ ReLU]).
struct MlpLayerSpec {
  int in = 0, out = 0;
  bool bn = false;
  bool relu = false;
};

struct Mlp {
  std::vector<MlpLayerSpec> spec;
  std::vector<Linear> linears;
  std::vector<BatchNorm> norms;  // parallel; unused entries have features==0

  Mlp() = default;
  Mlp(std::vector<MlpLayerSpec> layers, Rng& rng);
  Var forward(const Var& x, bool training);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out);
};

// ---- optimizers ----
void zero_grad(const std::vector<ParamRef>& params);
double grad_norm(const std::vector<ParamRef>& params);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Sizes state buffers for the given parameter list; must be called once
  // before step() or checkpoint restore.
  virtual void init(const std::vector<ParamRef>& params) = 0;
  virtual void step(const std::vector<ParamRef>& params, double lr) = 0;
  virtual std::string kind() const = 0;
  virtual std::vector<BufferRef> state_buffers() = 0;
};

class Sgd : public Optimizer {
 public:
  Sgd(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  void init(const std::vector<ParamRef>& params) override;
  void step(const std::vector<ParamRef>& params, double lr) override;
  std::string kind() const override { return "sgd"; }
  std::vector<BufferRef> state_buffers() override;

 private:
  double momentum_, weight_decay_;
  std::vector<Tensor> velocity_;
};

class Adam : public Optimizer {
 public:
  Adam(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay),
        step_count_(Shape{1}) {}
  void init(const std::vector<ParamRef>& params) override;
  void step(const std::vector<ParamRef>& params, double lr) override;
  std::string kind() const override { return "adam"; }
  std::vector<BufferRef> state_buffers() override;

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  Tensor step_count_;
  std::vector<Tensor> m_, v_;
};

}  // namespace dssl::nn
