#include "dssl/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dssl::nn {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_op) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  bool needs = false;
  for (const Var& p : node->parents) needs = needs || p->requires_grad;
  node->requires_grad = needs;
  if (needs) node->backward_op = std::move(backward_op);
  return node;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": " + shape_str(a->value.shape) +
                     " vs " + shape_str(b->value.shape));
}

}  // namespace

Var make_param(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

Var make_constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

void backward(const Var& root) {
  if (root->value.size() != 1)
    throw ShapeError("backward: root must be scalar");
  // Iterative postorder topological sort over grad-requiring nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  if (root->requires_grad) stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx == 0 && visited.count(node)) {
      stack.pop_back();
      continue;
    }
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (parent->requires_grad && !visited.count(parent))
        stack.emplace_back(parent, 0);
    } else {
      visited.insert(node);
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad().data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_op && node->grad_ready) node->backward_op(*node);
  }
}

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (std::int64_t i = 0; i < ga.size(); ++i) ga.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (std::int64_t i = 0; i < gb.size(); ++i) gb.data[i] += n.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (std::int64_t i = 0; i < ga.size(); ++i) ga.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (std::int64_t i = 0; i < gb.size(); ++i) gb.data[i] -= n.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (std::int64_t i = 0; i < ga.size(); ++i)
        ga.data[i] += n.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (std::int64_t i = 0; i < gb.size(); ++i)
        gb.data[i] += n.grad.data[i] * a->value.data[i];
    }
  });
}

Var affine(const Var& x, double scale, double shift) {
  Tensor out = x->value;
  for (double& v : out.data) v = scale * v + shift;
  return make_node(std::move(out), {x}, [x, scale](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (std::int64_t i = 0; i < gx.size(); ++i)
      gx.data[i] += scale * n.grad.data[i];
  });
}

// ---- matrix products ----

Var matmul(const Var& a, const Var& b) {
  if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
      a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul: " + shape_str(a->value.shape) + " x " +
                     shape_str(b->value.shape));
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out(Shape{m, n});
  MapRM(out.ptr(), m, n) = ConstMapRM(a->value.ptr(), m, k) *
                           ConstMapRM(b->value.ptr(), k, n);
  return make_node(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
    ConstMapRM g(nd.grad.ptr(), m, n);
    if (a->requires_grad)
      MapRM(a->ensure_grad().ptr(), m, k) +=
          g * ConstMapRM(b->value.ptr(), k, n).transpose();
    if (b->requires_grad)
      MapRM(b->ensure_grad().ptr(), k, n) +=
          ConstMapRM(a->value.ptr(), m, k).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
      a->value.dim(1) != b->value.dim(1))
    throw ShapeError("matmul_nt: " + shape_str(a->value.shape) + " x " +
                     shape_str(b->value.shape) + "^T");
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(0);
  Tensor out(Shape{m, n});
  MapRM(out.ptr(), m, n) = ConstMapRM(a->value.ptr(), m, k) *
                           ConstMapRM(b->value.ptr(), n, k).transpose();
  return make_node(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
    ConstMapRM g(nd.grad.ptr(), m, n);
    if (a->requires_grad)
      MapRM(a->ensure_grad().ptr(), m, k) += g * ConstMapRM(b->value.ptr(), n, k);
    if (b->requires_grad)
      MapRM(b->ensure_grad().ptr(), n, k) +=
          g.transpose() * ConstMapRM(a->value.ptr(), m, k);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.shape.size() != 2 || w->value.shape.size() != 2 ||
      x->value.dim(1) != w->value.dim(1))
    throw ShapeError("linear: x " + shape_str(x->value.shape) + ", w " +
                     shape_str(w->value.shape));
  const int batch = x->value.dim(0), in = x->value.dim(1), out_d = w->value.dim(0);
  if (b->value.size() != out_d) throw ShapeError("linear: bad bias size");

  Tensor out(Shape{batch, out_d});
  MapRM o(out.ptr(), batch, out_d);
  o = ConstMapRM(x->value.ptr(), batch, in) *
      ConstMapRM(w->value.ptr(), out_d, in).transpose();
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < out_d; ++c) out.data[static_cast<size_t>(r) * out_d + c] +=
        b->value.data[c];

  return make_node(std::move(out), {x, w, b}, [x, w, b, batch, in, out_d](Node& n) {
    ConstMapRM g(n.grad.ptr(), batch, out_d);
    if (x->requires_grad)
      MapRM(x->ensure_grad().ptr(), batch, in) +=
          g * ConstMapRM(w->value.ptr(), out_d, in);
    if (w->requires_grad)
      MapRM(w->ensure_grad().ptr(), out_d, in) +=
          g.transpose() * ConstMapRM(x->value.ptr(), batch, in);
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int r = 0; r < batch; ++r)
        for (int c = 0; c < out_d; ++c)
          gb.data[c] += n.grad.data[static_cast<size_t>(r) * out_d + c];
    }
  });
}

// ---- convolution ----

namespace {

struct ConvDims {
  int batch, in_ch, in_h, in_w, out_ch, k, stride, pad, out_h, out_w;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.shape.size() != 4 || w.shape.size() != 4)
    throw ShapeError("conv2d: expects 4-D input and weight");
  ConvDims d;
  d.batch = x.dim(0);
  d.in_ch = x.dim(1);
  d.in_h = x.dim(2);
  d.in_w = x.dim(3);
  d.out_ch = w.dim(0);
  d.k = w.dim(2);
  if (w.dim(1) != d.in_ch || w.dim(3) != d.k)
    throw ShapeError("conv2d: weight " + shape_str(w.shape) +
                     " does not match input " + shape_str(x.shape));
  d.stride = stride;
  d.pad = pad;
  d.out_h = (d.in_h + 2 * pad - d.k) / stride + 1;
  d.out_w = (d.in_w + 2 * pad - d.k) / stride + 1;
  if (d.out_h < 1 || d.out_w < 1)
    throw ShapeError("conv2d: output would be empty");
  return d;
}

// col layout: [in_ch * k * k, out_h * out_w], row-major.
void im2col(const double* x, const ConvDims& d, double* col) {
  const int cols = d.out_h * d.out_w;
  for (int c = 0; c < d.in_ch; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        double* row = col + (static_cast<size_t>(c) * d.k * d.k +
                             static_cast<size_t>(ky) * d.k + kx) *
                                cols;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) {
            std::fill(row + static_cast<size_t>(oy) * d.out_w,
                      row + static_cast<size_t>(oy + 1) * d.out_w, 0.0);
            continue;
          }
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            row[static_cast<size_t>(oy) * d.out_w + ox] =
                (ix < 0 || ix >= d.in_w)
                    ? 0.0
                    : x[(static_cast<size_t>(c) * d.in_h + iy) * d.in_w + ix];
          }
        }
      }
    }
  }
}

void col2im_accumulate(const double* col, const ConvDims& d, double* gx) {
  const int cols = d.out_h * d.out_w;
  for (int c = 0; c < d.in_ch; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const double* row = col + (static_cast<size_t>(c) * d.k * d.k +
                                   static_cast<size_t>(ky) * d.k + kx) *
                                      cols;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) continue;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.in_w) continue;
            gx[(static_cast<size_t>(c) * d.in_h + iy) * d.in_w + ix] +=
                row[static_cast<size_t>(oy) * d.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const ConvDims d = conv_dims(x->value, w->value, stride, pad);
  if (b->value.size() != d.out_ch) throw ShapeError("conv2d: bad bias size");

  const int kk = d.in_ch * d.k * d.k;
  const int cols = d.out_h * d.out_w;
  Tensor out(Shape{d.batch, d.out_ch, d.out_h, d.out_w});
  std::vector<double> col(static_cast<size_t>(kk) * cols);
  ConstMapRM wm(w->value.ptr(), d.out_ch, kk);
  for (int n = 0; n < d.batch; ++n) {
    im2col(x->value.ptr() + static_cast<size_t>(n) * d.in_ch * d.in_h * d.in_w,
           d, col.data());
    MapRM om(out.ptr() + static_cast<size_t>(n) * d.out_ch * cols, d.out_ch,
             cols);
    om = wm * ConstMapRM(col.data(), kk, cols);
    for (int oc = 0; oc < d.out_ch; ++oc)
      om.row(oc).array() += b->value.data[oc];
  }

  return make_node(std::move(out), {x, w, b}, [x, w, b, d, kk, cols](Node& n) {
    std::vector<double> col(static_cast<size_t>(kk) * cols);
    std::vector<double> gcol(static_cast<size_t>(kk) * cols);
    ConstMapRM wm(w->value.ptr(), d.out_ch, kk);
    for (int i = 0; i < d.batch; ++i) {
      ConstMapRM g(n.grad.ptr() + static_cast<size_t>(i) * d.out_ch * cols,
                   d.out_ch, cols);
      if (w->requires_grad || b->requires_grad || x->requires_grad) {
        im2col(x->value.ptr() +
                   static_cast<size_t>(i) * d.in_ch * d.in_h * d.in_w,
               d, col.data());
      }
      if (w->requires_grad)
        MapRM(w->ensure_grad().ptr(), d.out_ch, kk) +=
            g * ConstMapRM(col.data(), kk, cols).transpose();
      if (b->requires_grad) {
        Tensor& gb = b->ensure_grad();
        for (int oc = 0; oc < d.out_ch; ++oc) gb.data[oc] += g.row(oc).sum();
      }
      if (x->requires_grad) {
        MapRM(gcol.data(), kk, cols) = wm.transpose() * g;
        col2im_accumulate(gcol.data(), d,
                          x->ensure_grad().ptr() +
                              static_cast<size_t>(i) * d.in_ch * d.in_h *
                                  d.in_w);
      }
    }
  });
}

// ---- activations / pooling / norms ----

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {x}, [x](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (std::int64_t i = 0; i < gx.size(); ++i)
      if (x->value.data[i] > 0.0) gx.data[i] += n.grad.data[i];
  });
}

Var global_avg_pool(const Var& x) {
  if (x->value.shape.size() != 4)
    throw ShapeError("global_avg_pool: expects 4-D input");
  const int batch = x->value.dim(0), ch = x->value.dim(1);
  const int hw = x->value.dim(2) * x->value.dim(3);
  Tensor out(Shape{batch, ch});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      const double* p =
          x->value.ptr() + (static_cast<size_t>(n) * ch + c) * hw;
      double s = 0.0;
      for (int i = 0; i < hw; ++i) s += p[i];
      out.data[static_cast<size_t>(n) * ch + c] = s / hw;
    }
  return make_node(std::move(out), {x}, [x, batch, ch, hw](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (int i = 0; i < batch; ++i)
      for (int c = 0; c < ch; ++c) {
        const double g =
            n.grad.data[static_cast<size_t>(i) * ch + c] / hw;
        double* p = gx.ptr() + (static_cast<size_t>(i) * ch + c) * hw;
        for (int j = 0; j < hw; ++j) p[j] += g;
      }
  });
}

Var l2_normalize_rows(const Var& x, double eps) {
  if (x->value.shape.size() != 2)
    throw ShapeError("l2_normalize_rows: expects 2-D input");
  const int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out(Shape{rows, cols});
  std::vector<double> norms(rows);
  for (int r = 0; r < rows; ++r) {
    const double* p = x->value.ptr() + static_cast<size_t>(r) * cols;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += p[c] * p[c];
    const double norm = std::sqrt(std::max(s, eps * eps));
    norms[r] = norm;
    for (int c = 0; c < cols; ++c)
      out.data[static_cast<size_t>(r) * cols + c] = p[c] / norm;
  }
  // The backward closure reads the output through the Node& argument, so it
  // never needs to capture its own Var (which would leak via a cycle).
  return make_node(std::move(out), {x}, [x, rows, cols, norms](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const double* y = n.value.ptr() + static_cast<size_t>(r) * cols;
      const double* g = n.grad.ptr() + static_cast<size_t>(r) * cols;
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += g[c] * y[c];
      double* out_g = gx.ptr() + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c)
        out_g[c] += (g[c] - dot * y[c]) / norms[r];
    }
  });
}

Var mean_all(const Var& x) {
  const std::int64_t n = x->value.size();
  if (n == 0) throw ShapeError("mean_all: empty input");
  double s = 0.0;
  for (double v : x->value.data) s += v;
  Tensor out = Tensor::scalar(s / n);
  return make_node(std::move(out), {x}, [x, n](Node& nd) {
    const double g = nd.grad.data[0] / n;
    Tensor& gx = x->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) gx.data[i] += g;
  });
}

Var rowwise_cosine(const Var& a, const Var& b) {
  check_same_shape(a, b, "rowwise_cosine");
  if (a->value.shape.size() != 2)
    throw ShapeError("rowwise_cosine: expects 2-D inputs");
  const int rows = a->value.dim(0), cols = a->value.dim(1);
  Tensor out(Shape{rows});
  std::vector<double> na(rows), nb(rows);
  for (int r = 0; r < rows; ++r) {
    const double* pa = a->value.ptr() + static_cast<size_t>(r) * cols;
    const double* pb = b->value.ptr() + static_cast<size_t>(r) * cols;
    double sa = 0.0, sb = 0.0, dot = 0.0;
    for (int c = 0; c < cols; ++c) {
      sa += pa[c] * pa[c];
      sb += pb[c] * pb[c];
      dot += pa[c] * pb[c];
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    if (na[r] < 1e-12 || nb[r] < 1e-12)
      throw NumericError("rowwise_cosine: zero-norm vector");
    out.data[r] = dot / (na[r] * nb[r]);
  }
  return make_node(std::move(out), {a, b}, [a, b, rows, cols, na, nb](Node& n) {
      for (int r = 0; r < rows; ++r) {
        const double g = n.grad.data[r];
        const double cosv = n.value.data[r];
        const double* pa = a->value.ptr() + static_cast<size_t>(r) * cols;
        const double* pb = b->value.ptr() + static_cast<size_t>(r) * cols;
        if (a->requires_grad) {
          double* ga = a->ensure_grad().ptr() + static_cast<size_t>(r) * cols;
          for (int c = 0; c < cols; ++c)
            ga[c] += g * (pb[c] / (na[r] * nb[r]) -
                          cosv * pa[c] / (na[r] * na[r]));
        }
        if (b->requires_grad) {
          double* gb = b->ensure_grad().ptr() + static_cast<size_t>(r) * cols;
          for (int c = 0; c < cols; ++c)
            gb[c] += g * (pa[c] / (na[r] * nb[r]) -
                          cosv * pb[c] / (nb[r] * nb[r]));
        }
      }
  });
}

Var soft_cross_entropy(const Var& logits, const Tensor& targets) {
  if (logits->value.shape.size() != 2 || !logits->value.same_shape(targets))
    throw ShapeError("soft_cross_entropy: logits/targets mismatch");
  const int rows = logits->value.dim(0), cols = logits->value.dim(1);
  Tensor probs(Shape{rows, cols});
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double* z = logits->value.ptr() + static_cast<size_t>(r) * cols;
    const double* t = targets.ptr() + static_cast<size_t>(r) * cols;
    double mx = z[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, z[c]);
    double lse = 0.0;
    for (int c = 0; c < cols; ++c) lse += std::exp(z[c] - mx);
    lse = std::log(lse) + mx;
    for (int c = 0; c < cols; ++c) {
      probs.data[static_cast<size_t>(r) * cols + c] = std::exp(z[c] - lse);
      total -= t[c] * (z[c] - lse);
    }
  }
  Tensor out = Tensor::scalar(total / rows);
  Tensor targets_copy = targets;
  return make_node(
      std::move(out), {logits},
      [logits, probs = std::move(probs), targets_copy = std::move(targets_copy),
       rows, cols](Node& n) {
        const double g = n.grad.data[0] / rows;
        Tensor& gx = logits->ensure_grad();
        for (std::int64_t i = 0; i < gx.size(); ++i)
          gx.data[i] += g * (probs.data[i] - targets_copy.data[i]);
      });
}

Var detach(const Var& x) { return make_constant(x->value); }

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training, double momentum,
               double eps) {
  const size_t ndim = x->value.shape.size();
  if (ndim != 2 && ndim != 4) throw ShapeError("batch_norm: 2-D or 4-D input");
  const int batch = x->value.dim(0);
  const int ch = x->value.dim(1);
  const int hw = ndim == 4 ? x->value.dim(2) * x->value.dim(3) : 1;
  const std::int64_t m = static_cast<std::int64_t>(batch) * hw;
  if (gamma->value.size() != ch || beta->value.size() != ch)
    throw ShapeError("batch_norm: parameter size mismatch");
  if (training && m < 2)
    throw ShapeError("batch_norm: training needs more than one value per channel");

  auto x_at = [&](int n, int c, int i) -> double {
    return x->value.data[(static_cast<size_t>(n) * ch + c) * hw + i];
  };

  std::vector<double> mean(ch), var(ch);
  if (training) {
    for (int c = 0; c < ch; ++c) {
      double s = 0.0;
      for (int n = 0; n < batch; ++n)
        for (int i = 0; i < hw; ++i) s += x_at(n, c, i);
      mean[c] = s / m;
      double v = 0.0;
      for (int n = 0; n < batch; ++n)
        for (int i = 0; i < hw; ++i) {
          const double d = x_at(n, c, i) - mean[c];
          v += d * d;
        }
      var[c] = v / m;  // biased, used for normalization
    }
    if (state.run_mean.size() != ch) {
      state.run_mean = Tensor(Shape{ch});
      state.run_var = Tensor(Shape{ch});
      for (int c = 0; c < ch; ++c) state.run_var.data[c] = 1.0;
    }
    for (int c = 0; c < ch; ++c) {
      state.run_mean.data[c] =
          (1.0 - momentum) * state.run_mean.data[c] + momentum * mean[c];
      const double unbiased = m > 1 ? var[c] * m / (m - 1) : var[c];
      state.run_var.data[c] =
          (1.0 - momentum) * state.run_var.data[c] + momentum * unbiased;
    }
  } else {
    if (state.run_mean.size() != ch)
      throw ValidationError("batch_norm: eval before any training step");
    for (int c = 0; c < ch; ++c) {
      mean[c] = state.run_mean.data[c];
      var[c] = state.run_var.data[c];
    }
  }

  std::vector<double> inv_std(ch);
  for (int c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out(x->value.shape);
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      const double g = gamma->value.data[c], b = beta->value.data[c];
      for (int i = 0; i < hw; ++i) {
        const size_t j = (static_cast<size_t>(n) * ch + c) * hw + i;
        out.data[j] = (x->value.data[j] - mean[c]) * inv_std[c] * g + b;
      }
    }

  return make_node(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean, inv_std, training, batch, ch, hw, m](Node& n) {
        // Accumulate per-channel reductions first.
        std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
        for (int i = 0; i < batch; ++i)
          for (int c = 0; c < ch; ++c)
            for (int j = 0; j < hw; ++j) {
              const size_t idx = (static_cast<size_t>(i) * ch + c) * hw + j;
              const double xhat =
                  (x->value.data[idx] - mean[c]) * inv_std[c];
              sum_g[c] += n.grad.data[idx];
              sum_gx[c] += n.grad.data[idx] * xhat;
            }
        if (gamma->requires_grad) {
          Tensor& gg = gamma->ensure_grad();
          for (int c = 0; c < ch; ++c) gg.data[c] += sum_gx[c];
        }
        if (beta->requires_grad) {
          Tensor& gb = beta->ensure_grad();
          for (int c = 0; c < ch; ++c) gb.data[c] += sum_g[c];
        }
        if (x->requires_grad) {
          Tensor& gx = x->ensure_grad();
          for (int i = 0; i < batch; ++i)
            for (int c = 0; c < ch; ++c) {
              const double gscale = gamma->value.data[c] * inv_std[c];
              for (int j = 0; j < hw; ++j) {
                const size_t idx = (static_cast<size_t>(i) * ch + c) * hw + j;
                const double xhat =
                    (x->value.data[idx] - mean[c]) * inv_std[c];
                if (training) {
                  gx.data[idx] += gscale * (n.grad.data[idx] -
                                            sum_g[c] / m -
                                            xhat * sum_gx[c] / m);
                } else {
                  gx.data[idx] += gscale * n.grad.data[idx];
                }
              }
            }
        }
      });
}

// ---- layers ----

namespace {

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Conv2d::Conv2d(int in, int out, int k, int stride_, int pad_, Rng& rng)
    : in_ch(in), out_ch(out), ksize(k), stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in) * k * k);
  weight = make_param(uniform_init(Shape{out, in, k, k}, bound, rng));
  bias = make_param(uniform_init(Shape{out}, bound, rng));
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Linear::Linear(int in, int out, Rng& rng) : in_dim(in), out_dim(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = make_param(uniform_init(Shape{out, in}, bound, rng));
  bias = make_param(uniform_init(Shape{out}, bound, rng));
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BatchNorm::BatchNorm(int features_) : features(features_) {
  Tensor g(Shape{features});
  for (double& v : g.data) v = 1.0;
  gamma = make_param(std::move(g));
  beta = make_param(Tensor(Shape{features}));
  state.run_mean = Tensor(Shape{features});
  state.run_var = Tensor(Shape{features});
  for (double& v : state.run_var.data) v = 1.0;
}

void BatchNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNorm::collect_buffers(const std::string& prefix,
                                std::vector<BufferRef>& out) {
  out.push_back({prefix + ".run_mean", &state.run_mean});
  out.push_back({prefix + ".run_var", &state.run_var});
}

Mlp::Mlp(std::vector<MlpLayerSpec> layers, Rng& rng) : spec(std::move(layers)) {
  linears.reserve(spec.size());
  norms.resize(spec.size());
  for (size_t i = 0; i < spec.size(); ++i) {
    linears.emplace_back(spec[i].in, spec[i].out, rng);
    if (spec[i].bn) norms[i] = BatchNorm(spec[i].out);
  }
}

Var Mlp::forward(const Var& x, bool training) {
  Var h = x;
  for (size_t i = 0; i < spec.size(); ++i) {
    h = linears[i](h);
    if (spec[i].bn) h = norms[i](h, training);
    if (spec[i].relu) h = relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (size_t i = 0; i < spec.size(); ++i) {
    linears[i].collect(prefix + ".linear" + std::to_string(i), out);
    if (spec[i].bn)
      norms[i].collect(prefix + ".bn" + std::to_string(i), out);
  }
}

void Mlp::collect_buffers(const std::string& prefix,
                          std::vector<BufferRef>& out) {
  for (size_t i = 0; i < spec.size(); ++i)
    if (spec[i].bn)
      norms[i].collect_buffers(prefix + ".bn" + std::to_string(i), out);
}

// ---- optimizers ----

void zero_grad(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    if (p.var->grad_ready)
      std::fill(p.var->grad.data.begin(), p.var->grad.data.end(), 0.0);
  }
}

double grad_norm(const std::vector<ParamRef>& params) {
  double s = 0.0;
  for (const ParamRef& p : params) {
    if (!p.var->grad_ready) continue;
    for (double g : p.var->grad.data) s += g * g;
  }
  return std::sqrt(s);
}

void Sgd::init(const std::vector<ParamRef>& params) {
  if (velocity_.size() == params.size()) return;
  velocity_.clear();
  for (const ParamRef& p : params)
    velocity_.push_back(Tensor::zeros(p.var->value.shape));
}

void Sgd::step(const std::vector<ParamRef>& params, double lr) {
  init(params);
  for (size_t i = 0; i < params.size(); ++i) {
    Node& node = *params[i].var;
    if (!node.grad_ready) node.ensure_grad();
    Tensor& v = velocity_[i];
    for (std::int64_t j = 0; j < node.value.size(); ++j) {
      const double g = node.grad.data[j] + weight_decay_ * node.value.data[j];
      v.data[j] = momentum_ * v.data[j] + g;
      node.value.data[j] -= lr * v.data[j];
    }
  }
}

std::vector<BufferRef> Sgd::state_buffers() {
  std::vector<BufferRef> out;
  for (size_t i = 0; i < velocity_.size(); ++i)
    out.push_back({"sgd.velocity" + std::to_string(i), &velocity_[i]});
  return out;
}

void Adam::init(const std::vector<ParamRef>& params) {
  if (m_.size() == params.size()) return;
  m_.clear();
  v_.clear();
  for (const ParamRef& p : params) {
    m_.push_back(Tensor::zeros(p.var->value.shape));
    v_.push_back(Tensor::zeros(p.var->value.shape));
  }
}

void Adam::step(const std::vector<ParamRef>& params, double lr) {
  init(params);
  step_count_.data[0] += 1.0;
  const double t = step_count_.data[0];
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (size_t i = 0; i < params.size(); ++i) {
    Node& node = *params[i].var;
    if (!node.grad_ready) node.ensure_grad();
    for (std::int64_t j = 0; j < node.value.size(); ++j) {
      const double g = node.grad.data[j] + weight_decay_ * node.value.data[j];
      m_[i].data[j] = beta1_ * m_[i].data[j] + (1.0 - beta1_) * g;
      v_[i].data[j] = beta2_ * v_[i].data[j] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i].data[j] / bc1;
      const double vhat = v_[i].data[j] / bc2;
      node.value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<BufferRef> Adam::state_buffers() {
  std::vector<BufferRef> out;
  out.push_back({"adam.step_count", &step_count_});
  for (size_t i = 0; i < m_.size(); ++i) {
    out.push_back({"adam.m" + std::to_string(i), &m_[i]});
    out.push_back({"adam.v" + std::to_string(i), &v_[i]});
  }
  return out;
}

}  // namespace dssl::nn
