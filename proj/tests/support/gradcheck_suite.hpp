#pragma once

// Finite-difference sweeps over every forward op kind. Shared between the
// tensor unit tests and the acceptance suite.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtlrank/rng.hpp"
#include "mtlrank/tensor.hpp"

namespace gradcheck {

namespace ag = mtlrank::ag;

// Slices [offset, offset+len) out of the 1-D parameter leaf and reshapes it.
inline ag::Tensor slice_param(const ag::Tensor& leaf, std::size_t offset,
                              const std::vector<std::size_t>& shape) {
  std::size_t len = 1;
  for (auto d : shape) len *= d;
  std::vector<std::size_t> idx(len);
  for (std::size_t i = 0; i < len; ++i) idx[i] = offset + i;
  return ag::reshape(ag::gather_rows(leaf, idx), shape);
}

// Reduces an op output to a scalar through a fixed random weighting so that
// asymmetric gradients are exercised.
inline ag::Tensor weigh(const ag::Tensor& out, const std::vector<double>& w) {
  ag::Tensor weights(out.shape, w);
  return ag::reduce_sum(ag::mul(out, weights));
}

struct Case {
  std::vector<double> point;
  std::function<ag::Tensor(ag::Tape*, ag::Tensor&)> f;
};

// One random instance per call; kind indexes the op under test.
inline Case make_case(const std::string& kind, mtlrank::Rng& rng) {
  auto dims = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
  };
  auto rand_vec = [&](std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
  };

  Case c;
  if (kind == "matmul") {
    const std::size_t p = dims(1, 3), q = dims(1, 3), r = dims(1, 3);
    c.point = rand_vec(p * q + q * r, -1.0, 1.0);
    auto w = rand_vec(p * r, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto a = slice_param(leaf, 0, {p, q});
      auto b = slice_param(leaf, p * q, {q, r});
      return weigh(ag::matmul(a, b), w);
    };
  } else if (kind == "add" || kind == "sub" || kind == "mul") {
    const std::size_t r = dims(1, 3), cdim = dims(1, 4);
    c.point = rand_vec(2 * r * cdim, -1.0, 1.0);
    auto w = rand_vec(r * cdim, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto a = slice_param(leaf, 0, {r, cdim});
      auto b = slice_param(leaf, r * cdim, {r, cdim});
      auto out = kind == "add" ? ag::add(a, b) : kind == "sub" ? ag::sub(a, b) : ag::mul(a, b);
      return weigh(out, w);
    };
  } else if (kind == "add-broadcast") {
    const std::size_t r = dims(2, 4), cdim = dims(1, 4);
    c.point = rand_vec(r * cdim + cdim, -1.0, 1.0);
    auto w = rand_vec(r * cdim, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto a = slice_param(leaf, 0, {r, cdim});
      auto b = slice_param(leaf, r * cdim, {cdim});
      return weigh(ag::add(a, b), w);
    };
  } else if (kind == "scale") {
    const std::size_t n = dims(1, 6);
    const double factor = rng.uniform(-2.0, 2.0);
    c.point = rand_vec(n, -1.0, 1.0);
    auto w = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::scale(slice_param(leaf, 0, {n}), factor), w);
    };
  } else if (kind == "transpose") {
    const std::size_t r = dims(1, 4), cdim = dims(1, 4);
    c.point = rand_vec(r * cdim, -1.0, 1.0);
    auto w = rand_vec(r * cdim, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::transpose(slice_param(leaf, 0, {r, cdim})), w);
    };
  } else if (kind == "reshape") {
    const std::size_t r = dims(1, 3), cdim = dims(1, 4);
    c.point = rand_vec(r * cdim, -1.0, 1.0);
    auto w = rand_vec(r * cdim, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::reshape(slice_param(leaf, 0, {r, cdim}), {cdim, r}), w);
    };
  } else if (kind == "concat-rows" || kind == "concat-cols") {
    const bool rows = kind == "concat-rows";
    const std::size_t shared = dims(1, 3), a1 = dims(1, 3), a2 = dims(1, 3);
    const std::size_t n1 = rows ? a1 * shared : shared * a1;
    const std::size_t n2 = rows ? a2 * shared : shared * a2;
    c.point = rand_vec(n1 + n2, -1.0, 1.0);
    auto w = rand_vec(n1 + n2, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto a = slice_param(leaf, 0, rows ? std::vector<std::size_t>{a1, shared}
                                         : std::vector<std::size_t>{shared, a1});
      auto b = slice_param(leaf, n1, rows ? std::vector<std::size_t>{a2, shared}
                                          : std::vector<std::size_t>{shared, a2});
      return weigh(ag::concat({a, b}, rows ? 0 : 1), w);
    };
  } else if (kind == "softmax" || kind == "logsumexp") {
    const std::size_t r = dims(1, 3), cdim = dims(2, 5);
    c.point = rand_vec(r * cdim, -2.0, 2.0);
    auto w = rand_vec(kind == "softmax" ? r * cdim : r, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto x = slice_param(leaf, 0, {r, cdim});
      auto out = kind == "softmax" ? ag::softmax_lastdim(x) : ag::logsumexp_lastdim(x);
      return weigh(out, w);
    };
  } else if (kind == "log") {
    const std::size_t n = dims(1, 6);
    c.point = rand_vec(n, 0.5, 2.0);
    auto w = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::log(slice_param(leaf, 0, {n})), w);
    };
  } else if (kind == "exp") {
    const std::size_t n = dims(1, 6);
    c.point = rand_vec(n, -1.0, 1.0);
    auto w = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::exp(slice_param(leaf, 0, {n})), w);
    };
  } else if (kind == "relu") {
    const std::size_t n = dims(1, 6);
    // keep points away from the kink
    c.point.resize(n);
    for (auto& x : c.point) {
      x = rng.uniform(0.01, 1.0);
      if (rng.uniform() < 0.5) x = -x;
    }
    auto w = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::relu(slice_param(leaf, 0, {n})), w);
    };
  } else if (kind == "layernorm") {
    const std::size_t r = dims(1, 3), cdim = dims(2, 5);
    c.point = rand_vec(r * cdim + 2 * cdim, -1.5, 1.5);
    auto w = rand_vec(r * cdim, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto x = slice_param(leaf, 0, {r, cdim});
      auto gain = slice_param(leaf, r * cdim, {cdim});
      auto bias = slice_param(leaf, r * cdim + cdim, {cdim});
      return weigh(ag::layernorm_lastdim(x, gain, bias), w);
    };
  } else if (kind == "dropout") {
    const std::size_t n = dims(2, 8);
    const std::uint64_t seed = rng.next_u64();
    c.point = rand_vec(n, -1.0, 1.0);
    auto w = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      mtlrank::Rng stream(seed);  // fixed stream: f stays deterministic
      return weigh(ag::dropout(slice_param(leaf, 0, {n}), 0.7, true, stream), w);
    };
  } else if (kind == "masked-fill") {
    const std::size_t n = dims(2, 8);
    ag::Mask fill(n, 0);
    for (auto& m : fill) m = rng.uniform() < 0.3 ? 1 : 0;
    c.point = rand_vec(n, -1.0, 1.0);
    auto w = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::masked_fill(slice_param(leaf, 0, {n}), fill, 0.7), w);
    };
  } else if (kind == "reduce-sum" || kind == "reduce-mean") {
    const std::size_t n = dims(1, 8);
    c.point = rand_vec(n, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      auto x = slice_param(leaf, 0, {n});
      return kind == "reduce-sum" ? ag::reduce_sum(x) : ag::reduce_mean(x);
    };
  } else if (kind == "gather-rows") {
    const std::size_t r = dims(2, 4), cdim = dims(1, 3), picks = dims(1, 5);
    std::vector<std::size_t> idx(picks);
    for (auto& i : idx) i = rng.below(r);  // repeats allowed: exercises scatter-add
    c.point = rand_vec(r * cdim, -1.0, 1.0);
    auto w = rand_vec(picks * cdim, -1.0, 1.0);
    c.f = [=](ag::Tape*, ag::Tensor& leaf) {
      return weigh(ag::gather_rows(slice_param(leaf, 0, {r, cdim}), idx), w);
    };
  } else {
    mtlrank::fail("unknown gradcheck kind: " + kind);
  }
  return c;
}

inline const std::vector<std::string>& op_kinds() {
  static const std::vector<std::string> kinds = {
      "matmul",      "add",        "add-broadcast", "sub",        "mul",
      "scale",       "transpose",  "reshape",       "concat-rows", "concat-cols",
      "softmax",     "logsumexp",  "log",           "exp",        "relu",
      "layernorm",   "dropout",    "masked-fill",   "reduce-sum", "reduce-mean",
      "gather-rows"};
  return kinds;
}

struct KindResult {
  std::string kind;
  double max_err = 0.0;
};

inline std::vector<KindResult> run_forward_op_gradchecks(int instances, std::uint64_t seed) {
  std::vector<KindResult> results;
  mtlrank::Rng rng(seed);
  for (const auto& kind : op_kinds()) {
    KindResult r{kind, 0.0};
    for (int i = 0; i < instances; ++i) {
      Case c = make_case(kind, rng);
      r.max_err = std::max(r.max_err, ag::finite_diff_check(c.f, c.point, 1e-6));
    }
    results.push_back(r);
  }
  return results;
}

}  // namespace gradcheck
