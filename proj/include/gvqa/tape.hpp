// tape.hpp — define-by-run reverse-mode automatic differentiation.
//
// A Tape records one forward pass as an append-only node list; backward()
// walks the list in exact reverse creation order and returns gradients for
// every named parameter the pass consumed. Tapes are single-owner; the
// parameter tensors they reference are read-only and may be shared across
// concurrently running tapes.
#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gvqa/tensor.hpp"

namespace gvqa {

using GradientMap = std::map<std::string, Tensor>;
using ParamStore = std::map<std::string, Tensor>;

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class EmptyPoolError : public Error {
 public:
  using Error::Error;
};

class Tape {
 public:
  enum class Pool { mean, sum, max };

  Var constant(Tensor value) { return push(std::move(value), nullptr); }

  // Registers (or re-uses) a named parameter leaf. `storage` must outlive the
  // tape and stay unmodified until backward() has run.
  Var param(const std::string& name, const Tensor& storage) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (nodes_[it->second].external != &storage)
        throw Error("parameter '" + name + "' registered twice with different storage");
      return Var{it->second};
    }
    Node n;
    n.external = &storage;
    n.param_name = name;
    nodes_.push_back(std::move(n));
    params_[name] = nodes_.size() - 1;
    return Var{nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return nodes_[v.id].val(); }

  // ---- differentiable operations -------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = use(a);
    const Tensor& B = use(b);
    A.require_rank(2);
    if (B.rank() != 1 && B.rank() != 2)
      throw ShapeError("matmul rhs must be rank-1 or rank-2, got " + shape_str(B.shape));
    const std::size_t m = A.rows(), k = A.cols();
    const std::size_t inner = B.shape[0];
    if (inner != k)
      throw ShapeError("matmul dimension mismatch: " + shape_str(A.shape) + " x " +
                       shape_str(B.shape));
    Tensor out;
    if (B.rank() == 1) {
      out = Tensor({m});
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += A.at(i, j) * B.at(j);
        out.at(i) = s;
      }
    } else {
      const std::size_t n = B.cols();
      out = Tensor({m, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double aij = A.at(i, j);
          for (std::size_t c = 0; c < n; ++c) out.at(i, c) += aij * B.at(j, c);
        }
    }
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      const std::size_t m = A.rows(), k = A.cols();
      Tensor dA({m, k});
      Tensor dB(B.shape);
      if (B.rank() == 1) {
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g.at(i);
          for (std::size_t j = 0; j < k; ++j) {
            dA.at(i, j) += gi * B.at(j);
            dB.at(j) += gi * A.at(i, j);
          }
        }
      } else {
        const std::size_t n = B.cols();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < n; ++c) {
            const double gic = g.at(i, c);
            for (std::size_t j = 0; j < k; ++j) {
              dA.at(i, j) += gic * B.at(j, c);
              dB.at(j, c) += gic * A.at(i, j);
            }
          }
      }
      t.accumulate(a, dA);
      t.accumulate(b, dB);
    });
  }

  Var add(Var a, Var b) {
    const Tensor& A = use(a);
    const Tensor& B = use(b);
    require_same_shape(A, B, "add");
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += B.data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    const Tensor& A = use(a);
    const Tensor& B = use(b);
    require_same_shape(A, B, "sub");
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= B.data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
      t.accumulate(a, g);
      Tensor neg = g;
      for (double& v : neg.data) v = -v;
      t.accumulate(b, neg);
    });
  }

  Var hadamard(Var a, Var b) {
    const Tensor& A = use(a);
    const Tensor& B = use(b);
    require_same_shape(A, B, "hadamard");
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= B.data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      Tensor dA(A.shape), dB(B.shape);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        dA.data[i] = g.data[i] * B.data[i];
        dB.data[i] = g.data[i] * A.data[i];
      }
      t.accumulate(a, dA);
      t.accumulate(b, dB);
    });
  }

  Var sigmoid(Var x) {
    Tensor out = use(x);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    std::size_t self = nodes_.size();
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].backprop = [x, self](Tape& t, const Tensor& g) {
      const Tensor& y = t.nodes_[self].val();
      Tensor dx(y.shape);
      for (std::size_t i = 0; i < y.numel(); ++i)
        dx.data[i] = g.data[i] * y.data[i] * (1.0 - y.data[i]);
      t.accumulate(x, dx);
    };
    return r;
  }

  Var tanh(Var x) {
    Tensor out = use(x);
    for (double& v : out.data) v = std::tanh(v);
    std::size_t self = nodes_.size();
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].backprop = [x, self](Tape& t, const Tensor& g) {
      const Tensor& y = t.nodes_[self].val();
      Tensor dx(y.shape);
      for (std::size_t i = 0; i < y.numel(); ++i) dx.data[i] = g.data[i] * (1.0 - y.data[i] * y.data[i]);
      t.accumulate(x, dx);
    };
    return r;
  }

  Var relu(Var x) {
    Tensor out = use(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
      const Tensor& in = t.value(x);
      Tensor dx(in.shape);
      for (std::size_t i = 0; i < in.numel(); ++i) dx.data[i] = in.data[i] > 0.0 ? g.data[i] : 0.0;
      t.accumulate(x, dx);
    });
  }

  Var scale(Var x, double c) {
    Tensor out = use(x);
    for (double& v : out.data) v *= c;
    return push(std::move(out), [x, c](Tape& t, const Tensor& g) {
      Tensor dx = g;
      for (double& v : dx.data) v *= c;
      t.accumulate(x, dx);
    });
  }

  Var log(Var x) {
    Tensor out = use(x);
    for (double& v : out.data) v = std::log(v);
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
      const Tensor& in = t.value(x);
      Tensor dx(in.shape);
      for (std::size_t i = 0; i < in.numel(); ++i) dx.data[i] = g.data[i] / in.data[i];
      t.accumulate(x, dx);
    });
  }

  Var clamp_min(Var x, double lo) {
    Tensor out = use(x);
    for (double& v : out.data) v = std::max(v, lo);
    return push(std::move(out), [x, lo](Tape& t, const Tensor& g) {
      const Tensor& in = t.value(x);
      Tensor dx(in.shape);
      for (std::size_t i = 0; i < in.numel(); ++i) dx.data[i] = in.data[i] > lo ? g.data[i] : 0.0;
      t.accumulate(x, dx);
    });
  }

  // rank-1 concatenation, [a ; b]
  Var concat(Var a, Var b) {
    const Tensor& A = use(a);
    const Tensor& B = use(b);
    A.require_rank(1);
    B.require_rank(1);
    Tensor out({A.numel() + B.numel()});
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.numel());
    const std::size_t split = A.numel();
    return push(std::move(out), [a, b, split](Tape& t, const Tensor& g) {
      Tensor dA({split});
      Tensor dB({g.numel() - split});
      std::copy(g.data.begin(), g.data.begin() + split, dA.data.begin());
      std::copy(g.data.begin() + split, g.data.end(), dB.data.begin());
      t.accumulate(a, dA);
      t.accumulate(b, dB);
    });
  }

  // x / max(||x||, 1e-12)
  static constexpr double kNormEps = 1e-12;
  Var l2_normalize(Var x) {
    const Tensor& in = use(x);
    in.require_rank(1);
    const double norm = l2_norm(in);
    const double denom = std::max(norm, kNormEps);
    Tensor out = in;
    for (double& v : out.data) v /= denom;
    const bool clamped = norm < kNormEps;
    return push(std::move(out), [x, denom, clamped](Tape& t, const Tensor& g) {
      const Tensor& in = t.value(x);
      Tensor dx(in.shape);
      if (clamped) {
        for (std::size_t i = 0; i < in.numel(); ++i) dx.data[i] = g.data[i] / denom;
      } else {
        double xg = 0.0;
        for (std::size_t i = 0; i < in.numel(); ++i) xg += in.data[i] * g.data[i];
        const double d3 = denom * denom * denom;
        for (std::size_t i = 0; i < in.numel(); ++i)
          dx.data[i] = g.data[i] / denom - in.data[i] * xg / d3;
      }
      t.accumulate(x, dx);
    });
  }

  Var softmax(Var x) {
    const Tensor& in = use(x);
    in.require_rank(1);
    Tensor out = in;
    const double mx = *std::max_element(out.data.begin(), out.data.end());
    double sum = 0.0;
    for (double& v : out.data) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : out.data) v /= sum;
    std::size_t self = nodes_.size();
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].backprop = [x, self](Tape& t, const Tensor& g) {
      const Tensor& y = t.nodes_[self].val();
      double yg = 0.0;
      for (std::size_t i = 0; i < y.numel(); ++i) yg += y.data[i] * g.data[i];
      Tensor dx(y.shape);
      for (std::size_t i = 0; i < y.numel(); ++i) dx.data[i] = y.data[i] * (g.data[i] - yg);
      t.accumulate(x, dx);
    };
    return r;
  }

  // Commutative reduction over equally shaped members. Max routes its gradient
  // to the first maximal member of each entry.
  Var set_pool(Pool kind, const std::vector<Var>& members) {
    if (members.empty()) throw EmptyPoolError("set_pool over an empty member sequence");
    const Tensor& first = use(members[0]);
    for (std::size_t m = 1; m < members.size(); ++m) require_same_shape(first, use(members[m]), "set_pool");
    const std::size_t n = members.size();
    Tensor out(first.shape);
    std::vector<std::size_t> argmax;
    switch (kind) {
      case Pool::sum:
      case Pool::mean:
        for (const Var& m : members) {
          const Tensor& v = value(m);
          for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += v.data[i];
        }
        if (kind == Pool::mean)
          for (double& v : out.data) v /= static_cast<double>(n);
        break;
      case Pool::max:
        argmax.assign(out.numel(), 0);
        out = value(members[0]);
        for (std::size_t m = 1; m < n; ++m) {
          const Tensor& v = value(members[m]);
          for (std::size_t i = 0; i < out.numel(); ++i)
            if (v.data[i] > out.data[i]) {
              out.data[i] = v.data[i];
              argmax[i] = m;
            }
        }
        break;
    }
    std::vector<Var> mem = members;
    return push(std::move(out), [mem, kind, n, argmax](Tape& t, const Tensor& g) {
      switch (kind) {
        case Pool::sum:
          for (const Var& m : mem) t.accumulate(m, g);
          break;
        case Pool::mean: {
          Tensor gm = g;
          for (double& v : gm.data) v /= static_cast<double>(n);
          for (const Var& m : mem) t.accumulate(m, gm);
          break;
        }
        case Pool::max:
          for (std::size_t m = 0; m < mem.size(); ++m) {
            Tensor dm(g.shape);
            bool any = false;
            for (std::size_t i = 0; i < g.numel(); ++i)
              if (argmax[i] == m) {
                dm.data[i] = g.data[i];
                any = true;
              }
            if (any) t.accumulate(mem[m], dm);
          }
          break;
      }
    });
  }

  // x[index] as a scalar
  Var pick(Var x, std::size_t index) {
    const Tensor& in = use(x);
    in.require_rank(1);
    if (index >= in.numel())
      throw ShapeError("pick index " + std::to_string(index) + " out of range for " +
                       shape_str(in.shape));
    return push(Tensor::scalar(in.at(index)), [x, index](Tape& t, const Tensor& g) {
      Tensor dx(t.value(x).shape);
      dx.at(index) = g.at(0);
      t.accumulate(x, dx);
    });
  }

  // row r of a rank-2 tensor (embedding lookup)
  Var row(Var m, std::size_t r) {
    const Tensor& in = use(m);
    in.require_rank(2);
    if (r >= in.rows())
      throw ShapeError("row index " + std::to_string(r) + " out of range for " +
                       shape_str(in.shape));
    Tensor out({in.cols()});
    for (std::size_t j = 0; j < in.cols(); ++j) out.at(j) = in.at(r, j);
    return push(std::move(out), [m, r](Tape& t, const Tensor& g) {
      const Tensor& in = t.value(m);
      Tensor dm(in.shape);
      for (std::size_t j = 0; j < in.cols(); ++j) dm.at(r, j) = g.at(j);
      t.accumulate(m, dm);
    });
  }

  Var sum_all(Var x) {
    const Tensor& in = use(x);
    double s = 0.0;
    for (double v : in.data) s += v;
    return push(Tensor::scalar(s), [x](Tape& t, const Tensor& g) {
      Tensor dx(t.value(x).shape);
      for (double& v : dx.data) v = g.at(0);
      t.accumulate(x, dx);
    });
  }

  Var mean_all(Var x) {
    const Tensor& in = use(x);
    const std::size_t n = in.numel();
    double s = 0.0;
    for (double v : in.data) s += v;
    return push(Tensor::scalar(s / static_cast<double>(n)), [x, n](Tape& t, const Tensor& g) {
      Tensor dx(t.value(x).shape);
      const double gi = g.at(0) / static_cast<double>(n);
      for (double& v : dx.data) v = gi;
      t.accumulate(x, dx);
    });
  }

  // scalar Var times tensor Var
  Var smul(Var s, Var x) {
    const Tensor& sv = use(s);
    if (sv.numel() != 1) throw ShapeError("smul scalar operand has shape " + shape_str(sv.shape));
    Tensor out = use(x);
    const double c = sv.at(0);
    for (double& v : out.data) v *= c;
    return push(std::move(out), [s, x](Tape& t, const Tensor& g) {
      const Tensor& xs = t.value(x);
      const double c = t.value(s).at(0);
      double ds = 0.0;
      Tensor dx(xs.shape);
      for (std::size_t i = 0; i < xs.numel(); ++i) {
        ds += g.data[i] * xs.data[i];
        dx.data[i] = g.data[i] * c;
      }
      t.accumulate(s, Tensor::scalar(ds));
      t.accumulate(x, dx);
    });
  }

  // Inverted dropout: kept entries are scaled by 1/(1-rate) so eval needs no
  // rescaling. The mask is drawn from `rng` at record time.
  Var dropout(Var x, double rate, Rng& rng) {
    const Tensor& in = use(x);
    if (rate <= 0.0) return scale(x, 1.0);
    Tensor mask(in.shape);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mask.data) v = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = in;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= mask.data[i];
    return push(std::move(out), [x, mask](Tape& t, const Tensor& g) {
      Tensor dx(g.shape);
      for (std::size_t i = 0; i < g.numel(); ++i) dx.data[i] = g.data[i] * mask.data[i];
      t.accumulate(x, dx);
    });
  }

  Var affine(Var w, Var x, Var b) { return add(matmul(w, x), b); }

  // ---- backward -------------------------------------------------------------

  GradientMap backward(Var loss) {
    if (backward_done_) throw Error("backward() already ran on this tape");
    backward_done_ = true;
    Node& ln = nodes_.at(loss.id);
    if (ln.val().numel() != 1)
      throw ShapeError("backward requires a scalar loss, got shape " + shape_str(ln.val().shape));
    ln.grad = Tensor::ones(ln.val().shape);
    ln.has_grad = true;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backprop) n.backprop(*this, n.grad);
    }
    GradientMap out;
    for (const auto& [name, id] : params_) {
      const Node& n = nodes_[id];
      if (!n.consumed) continue;
      out[name] = n.has_grad ? n.grad : Tensor::zeros_like(n.val());
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::string param_name;
    bool consumed = false;
    Tensor grad;
    bool has_grad = false;
    std::function<void(Tape&, const Tensor&)> backprop;
    const Tensor& val() const { return external ? *external : owned; }
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  bool backward_done_ = false;

  const Tensor& use(Var v) {
    Node& n = nodes_.at(v.id);
    n.consumed = true;
    return n.val();
  }

  static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
      throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape) + " vs " +
                       shape_str(b.shape));
  }

  Var push(Tensor value, std::function<void(Tape&, const Tensor&)> bp) {
    Node n;
    n.owned = std::move(value);
    n.backprop = std::move(bp);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  void accumulate(Var v, const Tensor& delta) {
    Node& n = nodes_.at(v.id);
    if (!n.has_grad) {
      n.grad = Tensor(n.val().shape);
      n.has_grad = true;
    }
    for (std::size_t i = 0; i < delta.numel(); ++i) n.grad.data[i] += delta.data[i];
  }

  friend struct TapeTestAccess;
};

}  // namespace gvqa
