#pragma once

#include <cstddef>
#include <vector>

#include "oplm/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its operands. Matrix ops take rank-2 operands; a rank-1 operand is read as
// a single row where noted.

namespace oplm {

// Elementwise (operands must share a shape).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var scale(Var a, Var s);  // s is a scalar node
Var add_scalar(Var a, double c);
Var square(Var a);
Var reciprocal(Var a);
Var log(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);  // derivative at 0 is 0
Var identity(Var a);

/// Row-wise softmax of a rank-2 tensor (rank 1 is one row).
Var softmax(Var a);

// Linear algebra.
Var matmul(Var a, Var b);     // a[m x k] * b[k x n]
Var matmul_bt(Var a, Var b);  // a[m x k] * b[n x k]^T
Var matmul_at(Var a, Var b);  // a[k x m]^T * b[k x n]
Var transpose(Var a);
Var add_row(Var x, Var row);  // x[m x n] + row[n] broadcast down the rows
Var add_col(Var x, Var col);  // x[m x n] + col[m] broadcast across the columns
Var scale_rows(Var x, Var s);  // row i of x times s[i]
Var outer(Var u, Var v);       // rank-1 operands
Var frobenius_norm(Var m);     // gradient at the zero matrix is 0

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var row_sums(Var x);   // [m x 1]
Var row_norms(Var x);  // [m x 1], gradient 0 on zero rows

// Structural.
Var reshape(Var a, Shape shape);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var slice_rows(Var x, std::size_t begin, std::size_t count);

/// Tiles x[d x w] `times` times downwards: row i*d + j of the result is row j.
Var repeat_rows(Var x, std::size_t times);

/// Inverse layout of repeat_rows: x[times*d x w] -> mean over the `times` blocks.
Var mean_groups(Var x, std::size_t times);

// Losses (scalar results).
Var mse(Var prediction, Var target);
/// -mean over rows of sum_j y_j log p_j. Rows of y must be one-hot.
Var cross_entropy(Var probabilities, Var onehot);
/// cross_entropy(softmax(logits), onehot) with the stable fused gradient.
Var softmax_cross_entropy(Var logits, Var onehot);

// Plain-tensor helpers shared by ops and oracles.
Tensor softmax_rows(const Tensor& logits);
Tensor matmul_values(const Tensor& a, const Tensor& b);
Tensor transpose_values(const Tensor& a);

}  // namespace oplm
