#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ckc/params.hpp"
#include "ckc/tensor.hpp"

namespace ckc {

// Reverse-mode tape over the handful of dense operations the models need.
// Parameter leaves alias their ParamStore slot, so backward() accumulates
// straight into Parameter::grad.
class Tape {
 public:
  struct Var {
    std::uint32_t id = 0;
  };
  using Backward = std::function<void(Tape&)>;

  // With record == false no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(Var v) const;
  // Allocated lazily; zero until something flows in.
  Matrix& grad(Var v);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Result node of an operation. `inputs` decide whether a gradient is needed.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Matrix value, std::span<const Var> inputs, Backward backward);

  // Seeds d(loss)/d(loss) = 1 on a 1x1 node and runs closures in reverse.
  void backward(Var loss);

  // Scalar value of a 1x1 node.
  double scalar(Var v) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    Backward backward;
  };
  bool record_;
  std::vector<Node> nodes_;
};

using Var = Tape::Var;

namespace ad {

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
// a (m x n) + row (1 x n) broadcast over rows.
Var add_row(Tape& t, Var a, Var row);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var one_minus(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var concat_cols(Tape& t, Var a, Var b);
// Empty list or all-empty inputs give a 0 x cols matrix.
Var concat_rows(Tape& t, std::span<const Var> parts, std::size_t cols);
// Column-wise pooling to 1 x n; zero rows yield the zero vector.
Var mean_rows(Tape& t, Var a);
Var max_rows(Tape& t, Var a);
// Elementwise max; ties route the gradient to `a`.
Var maximum(Tape& t, Var a, Var b);
// Sum of elementwise products of equally shaped inputs, as a 1x1.
Var dot(Tape& t, Var a, Var b);

struct GatherEntry {
  std::uint32_t out_row;
  std::uint32_t in_row;
  double coeff;
};
// out(out_row) += coeff * src(in_row); out has `out_rows` rows.
Var gather(Tape& t, Var src, std::span<const GatherEntry> entries, std::size_t out_rows);
Var rows(Tape& t, Var src, std::span<const std::uint32_t> indices);

// Softmax restricted to `mask` (entries off the mask get probability zero);
// loss = sum over gold of -log p(gold). Gold must lie inside the mask.
Var masked_softmax_nll(Tape& t, Var logits, std::span<const std::uint32_t> mask,
                       std::span<const std::uint32_t> gold);

}  // namespace ad

// Plain-value helpers shared by inference code.
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint32_t> mask);

}  // namespace ckc
