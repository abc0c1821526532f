#include "ckc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ckc/errors.hpp"

namespace ckc {

// ---------------------------------------------------------------- Tape

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const {
  const auto& n = nodes_[v.id];
  return n.param ? n.param->value : n.value;
}

Matrix& Tape::grad(Var v) {
  auto& n = nodes_[v.id];
  if (n.param) return n.param->grad;
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows())
    n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return nodes_[v.id].needs_grad; });
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (!record_) throw ContractViolation("backward() on a non-recording tape");
  if (value(loss).size() != 1) throw DimensionError("backward() needs a scalar loss");
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward) continue;
    if (n.grad.empty()) continue;  // nothing flowed in
    n.backward(*this);
  }
}

double Tape::scalar(Var v) const {
  const auto& m = value(v);
  if (m.size() != 1) throw DimensionError("scalar() of a " + m.shape_string() + " node");
  return m[0];
}

namespace ad {
namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

void acc(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// Every op below captures its own id the same way: the node about to be
// pushed lands at index t.size().
#define CKC_SELF static_cast<std::uint32_t>(t.size())

Var matmul(Tape& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  Matrix out(A.rows(), B.cols());
  gemm_acc(A, B, out);
  return t.push(std::move(out), {a, b}, [a, b, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    if (tp.needs_grad(a)) gemm_nt_acc(g, tp.value(b), tp.grad(a));
    if (tp.needs_grad(b)) gemm_tn_acc(tp.value(a), g, tp.grad(b));
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "add");
  Matrix out = t.value(a);
  acc(out, t.value(b));
  return t.push(std::move(out), {a, b}, [a, b, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    if (tp.needs_grad(a)) acc(tp.grad(a), g);
    if (tp.needs_grad(b)) acc(tp.grad(b), g);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const auto& A = t.value(a);
  const auto& R = t.value(row);
  if (R.rows() != 1 || R.cols() != A.cols())
    throw DimensionError("add_row: " + A.shape_string() + " + " + R.shape_string());
  Matrix out = A;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += R[j];
  return t.push(std::move(out), {a, row}, [a, row, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    if (tp.needs_grad(a)) acc(tp.grad(a), g);
    if (tp.needs_grad(row)) {
      auto& gr = tp.grad(row);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "sub");
  Matrix out = t.value(a);
  const auto& B = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return t.push(std::move(out), {a, b}, [a, b, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    if (tp.needs_grad(a)) acc(tp.grad(a), g);
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a);
  const auto& B = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return t.push(std::move(out), {a, b}, [a, b, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad(a);
      const auto& vb = tp.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad(b);
      const auto& va = tp.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Tape& t, Var a, double c) {
  Matrix out = t.value(a);
  for (auto& v : out.data()) v *= c;
  return t.push(std::move(out), {a}, [a, c, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    auto& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var one_minus(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (auto& v : out.data()) v = 1.0 - v;
  return t.push(std::move(out), {a}, [a, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    auto& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (auto& v : out.data()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return t.push(std::move(out), {a}, [a, id = CKC_SELF](Tape& tp) {
    const Var self{id};
    const auto& g = tp.grad(self);
    const auto& y = tp.value(self);
    auto& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (auto& v : out.data()) v = std::tanh(v);
  return t.push(std::move(out), {a}, [a, id = CKC_SELF](Tape& tp) {
    const Var self{id};
    const auto& g = tp.grad(self);
    const auto& y = tp.value(self);
    auto& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rows() != B.rows()) throw DimensionError("concat_cols: " + A.shape_string() + " | " + B.shape_string());
  Matrix out(A.rows(), A.cols() + B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    std::copy(A.row_span(i).begin(), A.row_span(i).end(), out.row_span(i).begin());
    std::copy(B.row_span(i).begin(), B.row_span(i).end(), out.row_span(i).begin() + static_cast<std::ptrdiff_t>(A.cols()));
  }
  const std::size_t split = A.cols();
  return t.push(std::move(out), {a, b}, [a, b, split, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < split; ++j) ga(i, j) += g(i, j);
    }
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = split; j < g.cols(); ++j) gb(i, j - split) += g(i, j);
    }
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts, std::size_t cols) {
  std::size_t total = 0;
  for (auto p : parts) {
    const auto& m = t.value(p);
    if (m.rows() == 0) continue;
    if (m.cols() != cols) throw DimensionError("concat_rows: width " + std::to_string(m.cols()) + " != " + std::to_string(cols));
    total += m.rows();
  }
  Matrix out(total, cols);
  std::vector<std::pair<Var, std::size_t>> offsets;
  std::size_t r = 0;
  for (auto p : parts) {
    const auto& m = t.value(p);
    if (m.rows() == 0) continue;
    std::copy(m.data().begin(), m.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
    offsets.emplace_back(p, r);
    r += m.rows();
  }
  return t.push(std::move(out), parts, [offsets = std::move(offsets), cols, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    for (const auto& [p, start] : offsets) {
      if (!tp.needs_grad(p)) continue;
      auto& gp = tp.grad(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[start * cols + i];
    }
  });
}

Var mean_rows(Tape& t, Var a) {
  const auto& A = t.value(a);
  Matrix out(1, A.cols());
  const std::size_t m = A.rows();
  if (m > 0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) out[j] += A(i, j);
    for (auto& v : out.data()) v /= static_cast<double>(m);
  }
  return t.push(std::move(out), {a}, [a, m, id = CKC_SELF](Tape& tp) {
    if (m == 0) return;
    const auto& g = tp.grad(Var{id});
    auto& ga = tp.grad(a);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g[j] * inv;
  });
}

Var max_rows(Tape& t, Var a) {
  const auto& A = t.value(a);
  Matrix out(1, A.cols());
  std::vector<std::size_t> arg(A.cols(), 0);
  if (A.rows() > 0) {
    for (std::size_t j = 0; j < A.cols(); ++j) {
      double best = A(0, j);
      for (std::size_t i = 1; i < A.rows(); ++i) {
        if (A(i, j) > best) {
          best = A(i, j);
          arg[j] = i;
        }
      }
      out[j] = best;
    }
  }
  const bool empty = A.rows() == 0;
  return t.push(std::move(out), {a}, [a, arg = std::move(arg), empty, id = CKC_SELF](Tape& tp) {
    if (empty) return;
    const auto& g = tp.grad(Var{id});
    auto& ga = tp.grad(a);
    for (std::size_t j = 0; j < g.cols(); ++j) ga(arg[j], j) += g[j];
  });
}

Var maximum(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "maximum");
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  Matrix out(A.rows(), A.cols());
  std::vector<bool> from_a(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) {
    from_a[i] = A[i] >= B[i];
    out[i] = from_a[i] ? A[i] : B[i];
  }
  return t.push(std::move(out), {a, b}, [a, b, from_a = std::move(from_a), id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    const bool ga_on = tp.needs_grad(a), gb_on = tp.needs_grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (from_a[i]) {
        if (ga_on) tp.grad(a)[i] += g[i];
      } else if (gb_on) {
        tp.grad(b)[i] += g[i];
      }
    }
  });
}

Var dot(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "dot");
  Matrix out(1, 1);
  out[0] = ckc::dot(t.value(a).data(), t.value(b).data());
  return t.push(std::move(out), {a, b}, [a, b, id = CKC_SELF](Tape& tp) {
    const double g = tp.grad(Var{id})[0];
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad(a);
      const auto& vb = tp.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * vb[i];
    }
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad(b);
      const auto& va = tp.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * va[i];
    }
  });
}

Var gather(Tape& t, Var src, std::span<const GatherEntry> entries, std::size_t out_rows) {
  const auto& S = t.value(src);
  const std::size_t d = S.cols();
  Matrix out(out_rows, d);
  for (const auto& e : entries) {
    if (e.out_row >= out_rows || e.in_row >= S.rows()) throw BoundsError("gather entry out of range");
    const double* s = S.data().data() + e.in_row * d;
    double* o = out.data().data() + e.out_row * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += e.coeff * s[j];
  }
  std::vector<GatherEntry> kept;
  if (t.recording() && t.needs_grad(src)) kept.assign(entries.begin(), entries.end());
  return t.push(std::move(out), {src}, [src, kept = std::move(kept), d, id = CKC_SELF](Tape& tp) {
    const auto& g = tp.grad(Var{id});
    auto& gs = tp.grad(src);
    for (const auto& e : kept) {
      const double* gr = g.data().data() + e.out_row * d;
      double* o = gs.data().data() + e.in_row * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += e.coeff * gr[j];
    }
  });
}

Var rows(Tape& t, Var src, std::span<const std::uint32_t> indices) {
  std::vector<GatherEntry> entries;
  entries.reserve(indices.size());
  for (std::uint32_t i = 0; i < indices.size(); ++i) entries.push_back({i, indices[i], 1.0});
  return gather(t, src, entries, indices.size());
}

Var masked_softmax_nll(Tape& t, Var logits, std::span<const std::uint32_t> mask,
                       std::span<const std::uint32_t> gold) {
  const auto& L = t.value(logits);
  if (L.rows() != 1) throw DimensionError("masked_softmax_nll expects a 1 x n logit row");
  if (mask.empty()) throw ContractViolation("masked softmax over an empty mask");
  for (auto m : mask)
    if (m >= L.cols()) throw BoundsError("mask index out of range");
  for (auto g : gold)
    if (std::find(mask.begin(), mask.end(), g) == mask.end())
      throw ContractViolation("gold index " + std::to_string(g) + " lies outside the mask");
  auto probs = masked_softmax(L.data(), mask);
  // -log p(g) = logsumexp(mask) - logit(g), stable when p underflows.
  double mx = -std::numeric_limits<double>::infinity();
  for (auto j : mask) mx = std::max(mx, L[j]);
  double z = 0.0;
  for (auto j : mask) z += std::exp(L[j] - mx);
  const double lse = mx + std::log(z);
  double loss = 0.0;
  for (auto g : gold) loss += lse - L[g];
  std::vector<std::uint32_t> m(mask.begin(), mask.end());
  std::vector<std::uint32_t> gv(gold.begin(), gold.end());
  Matrix out(1, 1);
  out[0] = loss;
  return t.push(std::move(out), {logits},
                [logits, m = std::move(m), gv = std::move(gv), probs = std::move(probs), id = CKC_SELF](Tape& tp) {
                  const double g = tp.grad(Var{id})[0];
                  auto& gl = tp.grad(logits);
                  const double n_gold = static_cast<double>(gv.size());
                  for (auto j : m) gl[j] += g * n_gold * probs[j];
                  for (auto j : gv) gl[j] -= g;
                });
}

#undef CKC_SELF

}  // namespace ad

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint32_t> mask) {
  std::vector<double> probs(logits.size(), 0.0);
  if (mask.empty()) return probs;
  double mx = -std::numeric_limits<double>::infinity();
  for (auto m : mask) mx = std::max(mx, logits[m]);
  double s = 0.0;
  for (auto m : mask) {
    probs[m] = std::exp(logits[m] - mx);
    s += probs[m];
  }
  for (auto m : mask) probs[m] /= s;
  return probs;
}

}  // namespace ckc
