#include "mtlrank/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace mtlrank::ag {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    check(tape == nullptr || tape == t->tape, "op inputs recorded on different tapes");
    tape = t->tape;
  }
  return tape;
}

void ensure_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(std::string(op) + ": non-finite output");
  }
}

using BackFn = std::function<void(Tape&, const std::vector<double>&)>;

Tensor finish(std::vector<std::size_t> shape, std::vector<double> data, Tape* tape,
              BackFn back) {
  Tensor out(std::move(shape), std::move(data));
  if (tape != nullptr) {
    out.tape = tape;
    out.node = tape->push(out.size(), std::move(back));
  }
  return out;
}

// out(p x r) += A(p x q) * B(q x r)
void matmul_acc(const double* a, std::size_t p, std::size_t q, const double* b,
                std::size_t r, double* out) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      if (aik == 0.0) continue;
      const double* brow = b + k * r;
      double* orow = out + i * r;
      for (std::size_t j = 0; j < r; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  check(shape_size(shape) == data.size(),
        "tensor data length does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(const std::vector<std::size_t>& shape) {
  return Tensor(shape, std::vector<double>(shape_size(shape), 0.0));
}

Tensor Tensor::full(const std::vector<std::size_t>& shape, double v) {
  return Tensor(shape, std::vector<double>(shape_size(shape), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::size_t Tensor::rows() const {
  check(shape.size() == 2, "rows(): tensor is not 2-D");
  return shape[0];
}

std::size_t Tensor::cols() const {
  check(shape.size() == 2, "cols(): tensor is not 2-D");
  return shape[1];
}

std::size_t Tensor::last_dim() const { return shape.empty() ? 1 : shape.back(); }

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

double Tensor::item() const {
  check(size() == 1, "item(): tensor is not a scalar");
  return data[0];
}

// --- Tape --------------------------------------------------------------------

void Tape::watch(Tensor& t) {
  check(!t.on_tape(), "watch(): tensor already on a tape");
  t.tape = this;
  t.node = push(t.size(), nullptr);
}

int Tape::push(std::size_t out_size, BackFn back) {
  nodes_.push_back(Node{out_size, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::add_grad(int node, const double* g, std::size_t n) {
  if (node < 0) return;  // constant input, no gradient tracked
  auto& buf = grads_[static_cast<std::size_t>(node)];
  check(buf.size() == n, "gradient size mismatch");
  for (std::size_t i = 0; i < n; ++i) buf[i] += g[i];
}

void Tape::add_grad(int node, const std::vector<double>& g) {
  add_grad(node, g.data(), g.size());
}

void Tape::backward(const Tensor& root) {
  check(root.on_tape() && root.tape == this, "backward: root is not on this tape");
  check(root.size() == 1, "backward: root is not a scalar");
  grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i].assign(nodes_[i].size, 0.0);
  grads_[static_cast<std::size_t>(root.node)][0] = 1.0;
  for (int i = root.node; i >= 0; --i) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this, grads_[static_cast<std::size_t>(i)]);
  }
}

const std::vector<double>& Tape::grad(int node) const {
  check(node >= 0 && static_cast<std::size_t>(node) < grads_.size(),
        "grad(): node has no gradient buffer (run backward first)");
  return grads_[static_cast<std::size_t>(node)];
}

Tensor Tape::grad_tensor(const Tensor& t) const {
  check(t.on_tape() && t.tape == this, "grad_tensor(): tensor is not on this tape");
  return Tensor(t.shape, grad(t.node));
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul: inputs must be 2-D");
  check(a.cols() == b.rows(),
        "matmul: shape mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape));
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  std::vector<double> out(p * r, 0.0);
  matmul_acc(a.data.data(), p, q, b.data.data(), r, out.data());
  ensure_finite(out, "matmul");

  Tape* tape = common_tape({&a, &b});
  BackFn back;
  if (tape) {
    back = [an = a.node, bn = b.node, av = a.data, bv = b.data, p, q,
            r](Tape& t, const std::vector<double>& g) {
      if (an >= 0) {  // dA = g * B^T
        std::vector<double> da(p * q, 0.0);
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < r; ++j) {
            const double gij = g[i * r + j];
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < q; ++k) da[i * q + k] += gij * bv[k * r + j];
          }
        t.add_grad(an, da);
      }
      if (bn >= 0) {  // dB = A^T * g
        std::vector<double> db(q * r, 0.0);
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t k = 0; k < q; ++k) {
            const double aik = av[i * q + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < r; ++j) db[k * r + j] += aik * g[i * r + j];
          }
        t.add_grad(bn, db);
      }
    };
  }
  return finish({p, r}, std::move(out), tape, std::move(back));
}

namespace {

// Shared by add/sub; sign applies to b.
Tensor addsub(const Tensor& a, const Tensor& b, double sign, const char* name) {
  const bool broadcast = b.ndim() == 1 && a.last_dim() == b.size() && a.shape != b.shape;
  check(broadcast || a.shape == b.shape,
        std::string(name) + ": shape mismatch " + shape_str(a.shape) + " vs " +
            shape_str(b.shape));
  const std::size_t n = a.size(), c = a.last_dim();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a.data[i] + sign * (broadcast ? b.data[i % c] : b.data[i]);
  ensure_finite(out, name);

  Tape* tape = common_tape({&a, &b});
  BackFn back;
  if (tape) {
    back = [an = a.node, bn = b.node, broadcast, n, c, sign,
            bsize = b.size()](Tape& t, const std::vector<double>& g) {
      t.add_grad(an, g);
      if (bn < 0) return;
      if (!broadcast) {
        if (sign > 0) {
          t.add_grad(bn, g);
        } else {
          std::vector<double> db(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) db[i] = -g[i];
          t.add_grad(bn, db);
        }
      } else {
        std::vector<double> db(bsize, 0.0);
        for (std::size_t i = 0; i < n; ++i) db[i % c] += sign * g[i];
        t.add_grad(bn, db);
      }
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return addsub(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return addsub(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape == b.shape, "mul: shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data[i] * b.data[i];
  ensure_finite(out, "mul");

  Tape* tape = common_tape({&a, &b});
  BackFn back;
  if (tape) {
    back = [an = a.node, bn = b.node, av = a.data,
            bv = b.data](Tape& t, const std::vector<double>& g) {
      if (an >= 0) {
        std::vector<double> da(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv[i];
        t.add_grad(an, da);
      }
      if (bn >= 0) {
        std::vector<double> db(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * av[i];
        t.add_grad(bn, db);
      }
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

Tensor scale(const Tensor& a, double c) {
  check(std::isfinite(c), "scale: factor must be finite");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data[i] * c;
  ensure_finite(out, "scale");

  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, c](Tape& t, const std::vector<double>& g) {
      std::vector<double> da(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * c;
      t.add_grad(an, da);
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

Tensor transpose(const Tensor& a) {
  check(a.ndim() == 2, "transpose: input must be 2-D");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data[i * c + j];

  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, r, c](Tape& t, const std::vector<double>& g) {
      std::vector<double> da(g.size());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] = g[j * r + i];
      t.add_grad(an, da);
    };
  }
  return finish({c, r}, std::move(out), tape, std::move(back));
}

Tensor reshape(const Tensor& a, const std::vector<std::size_t>& shape) {
  check(shape_size(shape) == a.size(),
        "reshape: element count mismatch " + shape_str(a.shape) + " -> " + shape_str(shape));
  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node](Tape& t, const std::vector<double>& g) { t.add_grad(an, g); };
  }
  return finish(shape, a.data, tape, std::move(back));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const std::size_t nd = parts.front().ndim();
  check(nd == 1 || nd == 2, "concat: inputs must be 1-D or 2-D");
  check(axis == 0 || (axis == 1 && nd == 2), "concat: bad axis");
  for (const Tensor& p : parts)
    check(p.ndim() == nd, "concat: mixed ranks");

  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  Tape* tape = nullptr;
  for (const Tensor* p : ptrs)
    if (p->on_tape()) {
      check(tape == nullptr || tape == p->tape, "op inputs recorded on different tapes");
      tape = p->tape;
    }

  std::vector<std::size_t> shape;
  std::vector<double> out;
  std::vector<int> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node);

  if (nd == 1 || axis == 0) {
    // Flat layouts are contiguous per part.
    std::size_t lead = 0;
    const std::size_t tail = nd == 2 ? parts.front().cols() : 0;
    std::vector<std::size_t> sizes;
    for (const Tensor& p : parts) {
      if (nd == 2) check(p.cols() == tail, "concat: column mismatch");
      lead += nd == 2 ? p.rows() : p.size();
      sizes.push_back(p.size());
      out.insert(out.end(), p.data.begin(), p.data.end());
    }
    shape = nd == 2 ? std::vector<std::size_t>{lead, tail} : std::vector<std::size_t>{lead};
    BackFn back;
    if (tape) {
      back = [nodes, sizes](Tape& t, const std::vector<double>& g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < nodes.size(); ++p) {
          t.add_grad(nodes[p], g.data() + off, sizes[p]);
          off += sizes[p];
        }
      };
    }
    return finish(std::move(shape), std::move(out), tape, std::move(back));
  }

  // axis == 1: widen rows
  const std::size_t r = parts.front().rows();
  std::size_t total_cols = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    check(p.rows() == r, "concat: row mismatch");
    widths.push_back(p.cols());
    total_cols += p.cols();
  }
  out.resize(r * total_cols);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.data.begin() + i * p.cols(), p.data.begin() + (i + 1) * p.cols(),
                out.begin() + i * total_cols + off);
    off += p.cols();
  }
  BackFn back;
  if (tape) {
    back = [nodes, widths, r, total_cols](Tape& t, const std::vector<double>& g) {
      std::size_t col = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (nodes[p] >= 0) {
          std::vector<double> dp(r * widths[p]);
          for (std::size_t i = 0; i < r; ++i)
            std::copy(g.begin() + i * total_cols + col,
                      g.begin() + i * total_cols + col + widths[p],
                      dp.begin() + i * widths[p]);
          t.add_grad(nodes[p], dp);
        }
        col += widths[p];
      }
    };
  }
  return finish({r, total_cols}, std::move(out), tape, std::move(back));
}

Tensor softmax_lastdim(const Tensor& a) {
  const std::size_t c = a.last_dim();
  check(c >= 1 && a.size() % c == 0, "softmax: bad shape");
  const std::size_t rws = a.size() / c;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < rws; ++i) {
    const double* x = a.data.data() + i * c;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, x[j]);
    check(std::isfinite(m), "softmax over a fully masked row");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::isinf(x[j]) && x[j] < 0 ? 0.0 : std::exp(x[j] - m);
      out[i * c + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  ensure_finite(out, "softmax");

  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, ov = out, rws, c](Tape& t, const std::vector<double>& g) {
      std::vector<double> da(ov.size());
      for (std::size_t i = 0; i < rws; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * ov[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          da[i * c + j] = (g[i * c + j] - dot) * ov[i * c + j];
      }
      t.add_grad(an, da);
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

Tensor logsumexp_lastdim(const Tensor& a) {
  const std::size_t c = a.last_dim();
  check(c >= 1 && a.size() % c == 0, "logsumexp: bad shape");
  const std::size_t rws = a.size() / c;
  std::vector<double> out(rws);
  for (std::size_t i = 0; i < rws; ++i) {
    const double* x = a.data.data() + i * c;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, x[j]);
    check(std::isfinite(m), "logsumexp over a fully masked row");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      s += std::isinf(x[j]) && x[j] < 0 ? 0.0 : std::exp(x[j] - m);
    out[i] = m + std::log(s);
  }
  ensure_finite(out, "logsumexp");

  std::vector<std::size_t> shape(a.shape.begin(), a.shape.end() - 1);
  if (shape.empty()) shape = {1};

  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, xv = a.data, lse = out, rws, c](Tape& t,
                                                         const std::vector<double>& g) {
      std::vector<double> da(xv.size());
      for (std::size_t i = 0; i < rws; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double x = xv[i * c + j];
          da[i * c + j] =
              std::isinf(x) && x < 0 ? 0.0 : g[i] * std::exp(x - lse[i]);
        }
      t.add_grad(an, da);
    };
  }
  return finish(std::move(shape), std::move(out), tape, std::move(back));
}

namespace {

Tensor unary(const Tensor& a, const char* name, double (*fwd)(double),
             std::function<std::vector<double>(const std::vector<double>& x,
                                               const std::vector<double>& out,
                                               const std::vector<double>& g)>
                 bwd) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fwd(a.data[i]);
  ensure_finite(out, name);
  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, xv = a.data, ov = out,
            bwd = std::move(bwd)](Tape& t, const std::vector<double>& g) {
      t.add_grad(an, bwd(xv, ov, g));
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

}  // namespace

Tensor log(const Tensor& a) {
  return unary(a, "log", [](double x) { return std::log(x); },
               [](const std::vector<double>& x, const std::vector<double>&,
                  const std::vector<double>& g) {
                 std::vector<double> da(x.size());
                 for (std::size_t i = 0; i < x.size(); ++i) da[i] = g[i] / x[i];
                 return da;
               });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); },
               [](const std::vector<double>&, const std::vector<double>& out,
                  const std::vector<double>& g) {
                 std::vector<double> da(out.size());
                 for (std::size_t i = 0; i < out.size(); ++i) da[i] = g[i] * out[i];
                 return da;
               });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](const std::vector<double>& x, const std::vector<double>&,
                  const std::vector<double>& g) {
                 std::vector<double> da(x.size());
                 for (std::size_t i = 0; i < x.size(); ++i)
                   da[i] = x[i] > 0.0 ? g[i] : 0.0;
                 return da;
               });
}

Tensor layernorm_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps) {
  const std::size_t c = x.last_dim();
  check(gain.size() == c && bias.size() == c, "layernorm: gain/bias length mismatch");
  check(eps >= 0.0, "layernorm: negative eps");
  const std::size_t rws = x.size() / c;

  std::vector<double> norm(x.size());  // (x - mean) / sqrt(var + eps)
  std::vector<double> inv(rws);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rws; ++i) {
    const double* row = x.data.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      norm[i * c + j] = (row[j] - mean) * inv[i];
      out[i * c + j] = norm[i * c + j] * gain.data[j] + bias.data[j];
    }
  }
  ensure_finite(out, "layernorm");

  Tape* tape = common_tape({&x, &gain, &bias});
  BackFn back;
  if (tape) {
    back = [xn = x.node, gn = gain.node, bn = bias.node, norm, inv,
            gv = gain.data, rws, c](Tape& t, const std::vector<double>& g) {
      if (xn >= 0) {
        std::vector<double> dx(norm.size());
        for (std::size_t i = 0; i < rws; ++i) {
          double mean_dy = 0.0, mean_dyy = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dy = g[i * c + j] * gv[j];
            mean_dy += dy;
            mean_dyy += dy * norm[i * c + j];
          }
          mean_dy /= static_cast<double>(c);
          mean_dyy /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) {
            const double dy = g[i * c + j] * gv[j];
            dx[i * c + j] = inv[i] * (dy - mean_dy - norm[i * c + j] * mean_dyy);
          }
        }
        t.add_grad(xn, dx);
      }
      if (gn >= 0) {
        std::vector<double> dg(c, 0.0);
        for (std::size_t i = 0; i < rws; ++i)
          for (std::size_t j = 0; j < c; ++j) dg[j] += g[i * c + j] * norm[i * c + j];
        t.add_grad(gn, dg);
      }
      if (bn >= 0) {
        std::vector<double> db(c, 0.0);
        for (std::size_t i = 0; i < rws; ++i)
          for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
        t.add_grad(bn, db);
      }
    };
  }
  return finish(x.shape, std::move(out), tape, std::move(back));
}

Tensor dropout(const Tensor& a, double keep, bool train, Rng& rng) {
  check(keep > 0.0 && keep <= 1.0, "dropout: keep probability outside (0, 1]");
  Tape* tape = common_tape({&a});
  if (!train || keep >= 1.0) {
    BackFn back;
    if (tape) {
      back = [an = a.node](Tape& t, const std::vector<double>& g) { t.add_grad(an, g); };
    }
    return finish(a.shape, a.data, tape, std::move(back));
  }
  std::vector<double> factor(a.size());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    factor[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
    out[i] = a.data[i] * factor[i];
  }
  ensure_finite(out, "dropout");
  BackFn back;
  if (tape) {
    back = [an = a.node, factor](Tape& t, const std::vector<double>& g) {
      std::vector<double> da(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * factor[i];
      t.add_grad(an, da);
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

Tensor masked_fill(const Tensor& a, const Mask& fill, double value) {
  check(fill.size() == a.size(), "masked_fill: mask size mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = fill[i] ? value : a.data[i];
    if (!fill[i]) check(std::isfinite(out[i]), "masked_fill: non-finite output");
  }
  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, fill](Tape& t, const std::vector<double>& g) {
      std::vector<double> da(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = fill[i] ? 0.0 : g[i];
      t.add_grad(an, da);
    };
  }
  return finish(a.shape, std::move(out), tape, std::move(back));
}

namespace {

Tensor reduce(const Tensor& a, bool mean, const char* name) {
  double s = 0.0;
  for (double x : a.data) s += x;
  const double denom = mean ? static_cast<double>(a.size()) : 1.0;
  std::vector<double> out{s / denom};
  ensure_finite(out, name);
  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, n = a.size(), denom](Tape& t, const std::vector<double>& g) {
      t.add_grad(an, std::vector<double>(n, g[0] / denom));
    };
  }
  return finish({1}, std::move(out), tape, std::move(back));
}

}  // namespace

Tensor reduce_sum(const Tensor& a) { return reduce(a, false, "reduce_sum"); }
Tensor reduce_mean(const Tensor& a) { return reduce(a, true, "reduce_mean"); }

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  check(a.ndim() == 1 || a.ndim() == 2, "gather_rows: input must be 1-D or 2-D");
  const std::size_t c = a.ndim() == 2 ? a.cols() : 1;
  const std::size_t r = a.size() / c;
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] < r, "gather_rows: index out of range");
    std::copy(a.data.begin() + idx[i] * c, a.data.begin() + (idx[i] + 1) * c,
              out.begin() + i * c);
  }
  std::vector<std::size_t> shape =
      a.ndim() == 2 ? std::vector<std::size_t>{idx.size(), c}
                    : std::vector<std::size_t>{idx.size()};
  Tape* tape = common_tape({&a});
  BackFn back;
  if (tape) {
    back = [an = a.node, idx, r, c](Tape& t, const std::vector<double>& g) {
      std::vector<double> da(r * c, 0.0);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) da[idx[i] * c + j] += g[i * c + j];
      t.add_grad(an, da);
    };
  }
  return finish(std::move(shape), std::move(out), tape, std::move(back));
}

// --- finite differences --------------------------------------------------------

double finite_diff_check(const std::function<Tensor(Tape*, Tensor&)>& f,
                         const std::vector<double>& point, double h) {
  check(h > 0.0, "finite_diff_check: step must be positive");
  check(!point.empty(), "finite_diff_check: empty point");

  Tape tape;
  Tensor leaf({point.size()}, point);
  tape.watch(leaf);
  Tensor root = f(&tape, leaf);
  check(root.size() == 1, "finite_diff_check: f must return a scalar");
  tape.backward(root);
  const std::vector<double> analytic = tape.grad(leaf.node);

  auto probe = [&](std::vector<double> p) {
    const std::size_t n = p.size();
    Tensor free({n}, std::move(p));
    Tensor v = f(nullptr, free);
    check(v.size() == 1 && std::isfinite(v.item()),
          "finite_diff_check: non-finite probe value");
    return v.item();
  };

  double worst = 0.0;
  std::vector<double> p = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    p[i] = point[i] + h;
    const double fp = probe(p);
    p[i] = point[i] - h;
    const double fm = probe(p);
    p[i] = point[i];
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - fd) /
                       std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace mtlrank::ag
