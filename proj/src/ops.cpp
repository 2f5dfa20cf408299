#include "oplm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace oplm {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_matrixish(const Tensor& t, const char* op) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + shape_string(t.shape()));
  }
}

void require_same(Var a, Var b, const char* op) { require_same_shape(a.value(), b.value(), op); }

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor transpose_values(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  view(out) = view(a).transpose();
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  require_matrixish(logits, "softmax");
  Tensor out(logits.shape());
  const std::size_t r = logits.rows();
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = logits.data().data() + i * c;
    double* o = out.data().data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return out;
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  require_same(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b},
                         [ia, ib](const Tensor& g, Tape& t) {
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         },
                         "add");
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b},
                         [ia, ib](const Tensor& g, Tape& t) {
                           t.accumulate(ia, g);
                           t.accumulate(ib, g * -1.0);
                         },
                         "sub");
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(hadamard(a.value(), b.value()), {a, b},
                         [ia, ib](const Tensor& g, Tape& t) {
                           if (t.requires_grad(ia)) t.accumulate(ia, hadamard(g, t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, hadamard(g, t.value(ia)));
                         },
                         "mul");
}

Var scale(Var a, double s) {
  const auto ia = a.id();
  return a.tape().record(a.value() * s, {a},
                         [ia, s](const Tensor& g, Tape& t) { t.accumulate(ia, g * s); },
                         "scale");
}

Var scale(Var a, Var s) {
  if (s.value().size() != 1) throw ShapeError("scale: factor must be a scalar node");
  const auto ia = a.id(), is = s.id();
  return a.tape().record(a.value() * s.value()[0], {a, s},
                         [ia, is](const Tensor& g, Tape& t) {
                           const Tensor& sv = t.value(is);
                           t.accumulate(ia, g * sv[0]);
                           Tensor gs(sv.shape(), dot(g, t.value(ia)));
                           t.accumulate(is, std::move(gs));
                         },
                         "scale");
}

Var add_scalar(Var a, double c) {
  const auto ia = a.id();
  return a.tape().record(map_values(a.value(), [c](double v) { return v + c; }), {a},
                         [ia](const Tensor& g, Tape& t) { t.accumulate(ia, g); }, "add_scalar");
}

Var square(Var a) {
  const auto ia = a.id();
  return a.tape().record(map_values(a.value(), [](double v) { return v * v; }), {a},
                         [ia](const Tensor& g, Tape& t) {
                           t.accumulate(ia, hadamard(g, t.value(ia)) * 2.0);
                         },
                         "square");
}

Var reciprocal(Var a) {
  const auto ia = a.id();
  return a.tape().record(map_values(a.value(), [](double v) { return 1.0 / v; }), {a},
                         [ia](const Tensor& g, Tape& t) {
                           const Tensor& x = t.value(ia);
                           Tensor out(x.shape());
                           for (std::size_t i = 0; i < x.size(); ++i) out[i] = -g[i] / (x[i] * x[i]);
                           t.accumulate(ia, std::move(out));
                         },
                         "reciprocal");
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  const auto ia = a.id();
  return a.tape().record(map_values(a.value(), [](double v) { return std::log(v); }), {a},
                         [ia](const Tensor& g, Tape& t) {
                           const Tensor& x = t.value(ia);
                           Tensor out(x.shape());
                           for (std::size_t i = 0; i < x.size(); ++i) out[i] = g[i] / x[i];
                           t.accumulate(ia, std::move(out));
                         },
                         "log");
}

Var sigmoid(Var a) {
  const auto ia = a.id();
  const auto iy = a.tape().size();  // id the output node will get
  return a.tape().record(map_values(a.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); }),
                         {a},
                         [ia, iy](const Tensor& g, Tape& t) {
                           const Tensor& y = t.value(iy);
                           Tensor d(y.shape());
                           for (std::size_t i = 0; i < y.size(); ++i) d[i] = g[i] * y[i] * (1.0 - y[i]);
                           t.accumulate(ia, std::move(d));
                         },
                         "sigmoid");
}

Var tanh(Var a) {
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().record(map_values(a.value(), [](double v) { return std::tanh(v); }), {a},
                         [ia, iy](const Tensor& g, Tape& t) {
                           const Tensor& y = t.value(iy);
                           Tensor d(y.shape());
                           for (std::size_t i = 0; i < y.size(); ++i) d[i] = g[i] * (1.0 - y[i] * y[i]);
                           t.accumulate(ia, std::move(d));
                         },
                         "tanh");
}

Var relu(Var a) {
  const auto ia = a.id();
  return a.tape().record(map_values(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a},
                         [ia](const Tensor& g, Tape& t) {
                           const Tensor& x = t.value(ia);
                           Tensor d(x.shape());
                           for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
                           t.accumulate(ia, std::move(d));
                         },
                         "relu");
}

Var identity(Var a) { return a; }

Var softmax(Var a) {
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().record(softmax_rows(a.value()), {a},
                         [ia, iy](const Tensor& g, Tape& t) {
                           const Tensor& y = t.value(iy);
                           const std::size_t r = y.rows(), c = y.cols();
                           Tensor d(y.shape());
                           for (std::size_t i = 0; i < r; ++i) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * y[i * c + j];
                             for (std::size_t j = 0; j < c; ++j) {
                               d[i * c + j] = y[i * c + j] * (g[i * c + j] - s);
                             }
                           }
                           t.accumulate(ia, std::move(d));
                         },
                         "softmax");
}

// ------------------------------------------------------------ linear algebra

Var matmul(Var a, Var b) {
  require_rank2(a.value(), "matmul");
  require_rank2(b.value(), "matmul");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(matmul_values(a.value(), b.value()), {a, b},
                         [ia, ib](const Tensor& g, Tape& t) {
                           const Tensor& av = t.value(ia);
                           const Tensor& bv = t.value(ib);
                           if (t.requires_grad(ia)) {
                             Tensor ga(av.shape());
                             view(ga).noalias() = view(g) * view(bv).transpose();
                             t.accumulate(ia, std::move(ga));
                           }
                           if (t.requires_grad(ib)) {
                             Tensor gb(bv.shape());
                             view(gb).noalias() = view(av).transpose() * view(g);
                             t.accumulate(ib, std::move(gb));
                           }
                         },
                         "matmul");
}

Var matmul_bt(Var a, Var b) {
  require_rank2(a.value(), "matmul_bt");
  require_rank2(b.value(), "matmul_bt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_bt: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()) +
                     "^T");
  }
  Tensor out({av.rows(), bv.rows()});
  view(out).noalias() = view(av) * view(bv).transpose();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib](const Tensor& g, Tape& t) {
                           const Tensor& av = t.value(ia);
                           const Tensor& bv = t.value(ib);
                           if (t.requires_grad(ia)) {
                             Tensor ga(av.shape());
                             view(ga).noalias() = view(g) * view(bv);
                             t.accumulate(ia, std::move(ga));
                           }
                           if (t.requires_grad(ib)) {
                             Tensor gb(bv.shape());
                             view(gb).noalias() = view(g).transpose() * view(av);
                             t.accumulate(ib, std::move(gb));
                           }
                         },
                         "matmul_bt");
}

Var matmul_at(Var a, Var b) {
  require_rank2(a.value(), "matmul_at");
  require_rank2(b.value(), "matmul_at");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw ShapeError("matmul_at: " + shape_string(av.shape()) + "^T x " + shape_string(bv.shape()));
  }
  Tensor out({av.cols(), bv.cols()});
  view(out).noalias() = view(av).transpose() * view(bv);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib](const Tensor& g, Tape& t) {
                           const Tensor& av = t.value(ia);
                           const Tensor& bv = t.value(ib);
                           if (t.requires_grad(ia)) {
                             Tensor ga(av.shape());
                             view(ga).noalias() = view(bv) * view(g).transpose();
                             t.accumulate(ia, std::move(ga));
                           }
                           if (t.requires_grad(ib)) {
                             Tensor gb(bv.shape());
                             view(gb).noalias() = view(av) * view(g);
                             t.accumulate(ib, std::move(gb));
                           }
                         },
                         "matmul_at");
}

Var transpose(Var a) {
  require_rank2(a.value(), "transpose");
  const auto ia = a.id();
  return a.tape().record(transpose_values(a.value()), {a},
                         [ia](const Tensor& g, Tape& t) { t.accumulate(ia, transpose_values(g)); },
                         "transpose");
}

Var add_row(Var x, Var row) {
  require_rank2(x.value(), "add_row");
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.size() != xv.cols()) {
    throw ShapeError("add_row: row " + shape_string(rv.shape()) + " vs " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  view(out).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(rv.data().data(), rv.size());
  const auto ix = x.id(), ir = row.id();
  return x.tape().record(std::move(out), {x, row},
                         [ix, ir](const Tensor& g, Tape& t) {
                           t.accumulate(ix, g);
                           if (t.requires_grad(ir)) {
                             Tensor gr(t.value(ir).shape());
                             Eigen::Map<Eigen::RowVectorXd>(gr.data().data(), gr.size()) =
                                 view(g).colwise().sum();
                             t.accumulate(ir, std::move(gr));
                           }
                         },
                         "add_row");
}

Var add_col(Var x, Var col) {
  require_rank2(x.value(), "add_col");
  const Tensor& xv = x.value();
  const Tensor& cv = col.value();
  if (cv.size() != xv.rows()) {
    throw ShapeError("add_col: col " + shape_string(cv.shape()) + " vs " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  view(out).colwise() += Eigen::Map<const Eigen::VectorXd>(cv.data().data(), cv.size());
  const auto ix = x.id(), ic = col.id();
  return x.tape().record(std::move(out), {x, col},
                         [ix, ic](const Tensor& g, Tape& t) {
                           t.accumulate(ix, g);
                           if (t.requires_grad(ic)) {
                             Tensor gc(t.value(ic).shape());
                             Eigen::Map<Eigen::VectorXd>(gc.data().data(), gc.size()) =
                                 view(g).rowwise().sum();
                             t.accumulate(ic, std::move(gc));
                           }
                         },
                         "add_col");
}

Var scale_rows(Var x, Var s) {
  require_rank2(x.value(), "scale_rows");
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  if (sv.size() != xv.rows()) {
    throw ShapeError("scale_rows: factors " + shape_string(sv.shape()) + " vs " +
                     shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t c = xv.cols();
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= sv[i];
  }
  const auto ix = x.id(), is = s.id();
  return x.tape().record(std::move(out), {x, s},
                         [ix, is, c](const Tensor& g, Tape& t) {
                           const Tensor& xv = t.value(ix);
                           const Tensor& sv = t.value(is);
                           const std::size_t r = xv.rows();
                           if (t.requires_grad(ix)) {
                             Tensor gx(xv.shape());
                             for (std::size_t i = 0; i < r; ++i) {
                               for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = g[i * c + j] * sv[i];
                             }
                             t.accumulate(ix, std::move(gx));
                           }
                           if (t.requires_grad(is)) {
                             Tensor gs(sv.shape());
                             for (std::size_t i = 0; i < r; ++i) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * xv[i * c + j];
                               gs[i] = acc;
                             }
                             t.accumulate(is, std::move(gs));
                           }
                         },
                         "scale_rows");
}

Var outer(Var u, Var v) {
  const Tensor& uv = u.value();
  const Tensor& vv = v.value();
  if (uv.rank() != 1 || vv.rank() != 1) throw ShapeError("outer: operands must be vectors");
  if (uv.empty() || vv.empty()) throw ShapeError("outer: empty operand");
  const std::size_t m = uv.size(), n = vv.size();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = uv[i] * vv[j];
  }
  const auto iu = u.id(), iv = v.id();
  return u.tape().record(std::move(out), {u, v},
                         [iu, iv, m, n](const Tensor& g, Tape& t) {
                           const Tensor& uv = t.value(iu);
                           const Tensor& vv = t.value(iv);
                           Tensor gu({m}), gv({n});
                           for (std::size_t i = 0; i < m; ++i) {
                             for (std::size_t j = 0; j < n; ++j) {
                               gu[i] += g[i * n + j] * vv[j];
                               gv[j] += g[i * n + j] * uv[i];
                             }
                           }
                           t.accumulate(iu, std::move(gu));
                           t.accumulate(iv, std::move(gv));
                         },
                         "outer");
}

Var frobenius_norm(Var m) {
  const double norm = l2_norm(m.value());
  const auto im = m.id();
  return m.tape().record(Tensor::scalar(norm), {m},
                         [im, norm](const Tensor& g, Tape& t) {
                           if (norm == 0.0) return;
                           t.accumulate(im, t.value(im) * (g[0] / norm));
                         },
                         "frobenius_norm");
}

// ---------------------------------------------------------------- reductions

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a},
                         [ia](const Tensor& g, Tape& t) {
                           t.accumulate(ia, Tensor(t.value(ia).shape(), g[0]));
                         },
                         "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sums(Var x) {
  require_rank2(x.value(), "row_sums");
  const Tensor& xv = x.value();
  Tensor out({xv.rows(), 1});
  Eigen::Map<Eigen::VectorXd>(out.data().data(), out.size()) = view(xv).rowwise().sum();
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix](const Tensor& g, Tape& t) {
                           const Tensor& xv = t.value(ix);
                           Tensor gx(xv.shape());
                           view(gx).colwise() = Eigen::Map<const Eigen::VectorXd>(g.data().data(), g.size());
                           t.accumulate(ix, std::move(gx));
                         },
                         "row_sums");
}

Var row_norms(Var x) {
  require_rank2(x.value(), "row_norms");
  const Tensor& xv = x.value();
  Tensor out({xv.rows(), 1});
  Eigen::Map<Eigen::VectorXd>(out.data().data(), out.size()) = view(xv).rowwise().norm();
  const auto ix = x.id();
  Tensor norms = out;
  return x.tape().record(std::move(out), {x},
                         [ix, norms = std::move(norms)](const Tensor& g, Tape& t) {
                           const Tensor& xv = t.value(ix);
                           const std::size_t r = xv.rows(), c = xv.cols();
                           Tensor gx(xv.shape());
                           for (std::size_t i = 0; i < r; ++i) {
                             if (norms[i] == 0.0) continue;
                             const double f = g[i] / norms[i];
                             for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = xv[i * c + j] * f;
                           }
                           t.accumulate(ix, std::move(gx));
                         },
                         "row_norms");
}

// ---------------------------------------------------------------- structural

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia](const Tensor& g, Tape& t) {
                           t.accumulate(ia, g.reshaped(t.value(ia).shape()));
                         },
                         "reshape");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t r = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != r) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Tensor out({r, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().cols();
    view(out).middleCols(offset, w) = view(p.value());
    offset += w;
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [ids, widths, r](const Tensor& g, Tape& t) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            Tensor gp({r, widths[k]});
            view(gp) = view(g).middleCols(offset, widths[k]);
            t.accumulate(ids[k], std::move(gp));
          }
          offset += widths[k];
        }
      },
      "concat_cols");
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t c = parts.front().value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> heights;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.value().cols() != c) throw ShapeError("concat_rows: column counts differ");
    heights.push_back(p.value().rows());
    ids.push_back(p.id());
    total += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(total * c);
  for (const Var& p : parts) {
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  return parts.front().tape().record(
      Tensor({total, c}, std::move(data)), parts,
      [ids, heights, c](const Tensor& g, Tape& t) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t n = heights[k] * c;
          if (t.requires_grad(ids[k])) {
            std::vector<double> part(g.data().begin() + offset, g.data().begin() + offset + n);
            t.accumulate(ids[k], Tensor({heights[k], c}, std::move(part)));
          }
          offset += n;
        }
      },
      "concat_rows");
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  require_rank2(x.value(), "slice_cols");
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tensor out({xv.rows(), count});
  view(out) = view(xv).middleCols(begin, count);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, begin, count](const Tensor& g, Tape& t) {
                           Tensor gx(t.value(ix).shape());
                           view(gx).middleCols(begin, count) = view(g);
                           t.accumulate(ix, std::move(gx));
                         },
                         "slice_cols");
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  require_rank2(x.value(), "slice_rows");
  const Tensor& xv = x.value();
  if (begin + count > xv.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = xv.cols();
  std::vector<double> data(xv.data().begin() + begin * c, xv.data().begin() + (begin + count) * c);
  const auto ix = x.id();
  return x.tape().record(Tensor({count, c}, std::move(data)), {x},
                         [ix, begin, c](const Tensor& g, Tape& t) {
                           Tensor gx(t.value(ix).shape());
                           std::copy(g.data().begin(), g.data().end(), gx.data().begin() + begin * c);
                           t.accumulate(ix, std::move(gx));
                         },
                         "slice_rows");
}

Var repeat_rows(Var x, std::size_t times) {
  require_rank2(x.value(), "repeat_rows");
  if (times == 0) throw ShapeError("repeat_rows: times must be positive");
  const Tensor& xv = x.value();
  const std::size_t block = xv.size();
  std::vector<double> data;
  data.reserve(block * times);
  for (std::size_t k = 0; k < times; ++k) {
    data.insert(data.end(), xv.data().begin(), xv.data().end());
  }
  const auto ix = x.id();
  return x.tape().record(Tensor({xv.rows() * times, xv.cols()}, std::move(data)), {x},
                         [ix, times, block](const Tensor& g, Tape& t) {
                           Tensor gx(t.value(ix).shape());
                           for (std::size_t k = 0; k < times; ++k) {
                             for (std::size_t i = 0; i < block; ++i) gx[i] += g[k * block + i];
                           }
                           t.accumulate(ix, std::move(gx));
                         },
                         "repeat_rows");
}

Var mean_groups(Var x, std::size_t times) {
  require_rank2(x.value(), "mean_groups");
  const Tensor& xv = x.value();
  if (times == 0 || xv.rows() % times != 0) {
    throw ShapeError("mean_groups: " + std::to_string(xv.rows()) + " rows not divisible by " +
                     std::to_string(times));
  }
  const std::size_t d = xv.rows() / times;
  const std::size_t block = d * xv.cols();
  Tensor out({d, xv.cols()});
  for (std::size_t k = 0; k < times; ++k) {
    for (std::size_t i = 0; i < block; ++i) out[i] += xv[k * block + i];
  }
  const double inv = 1.0 / static_cast<double>(times);
  out *= inv;
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, times, block, inv](const Tensor& g, Tape& t) {
                           Tensor gx(t.value(ix).shape());
                           for (std::size_t k = 0; k < times; ++k) {
                             for (std::size_t i = 0; i < block; ++i) gx[k * block + i] = g[i] * inv;
                           }
                           t.accumulate(ix, std::move(gx));
                         },
                         "mean_groups");
}

// -------------------------------------------------------------------- losses

Var mse(Var prediction, Var target) {
  require_same(prediction, target, "mse");
  const Tensor& p = prediction.value();
  const Tensor& y = target.value();
  if (p.empty()) throw ShapeError("mse: empty operands");
  const double n = static_cast<double>(p.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  const auto ip = prediction.id(), iy = target.id();
  return prediction.tape().record(Tensor::scalar(s / n), {prediction, target},
                                  [ip, iy, n](const Tensor& g, Tape& t) {
                                    Tensor d = t.value(ip) - t.value(iy);
                                    d *= 2.0 * g[0] / n;
                                    if (t.requires_grad(iy)) t.accumulate(iy, d * -1.0);
                                    t.accumulate(ip, std::move(d));
                                  },
                                  "mse");
}

namespace {
void require_onehot(const Tensor& y, const char* op) {
  const std::size_t r = y.rows(), c = y.cols();
  for (std::size_t i = 0; i < r; ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = y[i * c + j];
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ContractError(std::string(op) + ": targets must be one-hot rows");
  }
}
}  // namespace

Var cross_entropy(Var probabilities, Var onehot) {
  require_same(probabilities, onehot, "cross_entropy");
  require_matrixish(probabilities.value(), "cross_entropy");
  const Tensor& p = probabilities.value();
  const Tensor& y = onehot.value();
  require_onehot(y, "cross_entropy");
  const double rows = static_cast<double>(p.rows());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0) {
      if (!(p[i] > 0.0)) throw NumericError("cross_entropy: zero probability on target class");
      s -= y[i] * std::log(p[i]);
    }
  }
  const auto ip = probabilities.id();
  const auto iy = onehot.id();
  return probabilities.tape().record(Tensor::scalar(s / rows), {probabilities, onehot},
                                     [ip, iy, rows](const Tensor& g, Tape& t) {
                                       const Tensor& p = t.value(ip);
                                       const Tensor& y = t.value(iy);
                                       Tensor d(p.shape());
                                       for (std::size_t i = 0; i < p.size(); ++i) {
                                         if (y[i] != 0.0) d[i] = -g[0] * y[i] / (p[i] * rows);
                                       }
                                       t.accumulate(ip, std::move(d));
                                     },
                                     "cross_entropy");
}

Var softmax_cross_entropy(Var logits, Var onehot) {
  require_same(logits, onehot, "softmax_cross_entropy");
  require_matrixish(logits.value(), "softmax_cross_entropy");
  const Tensor& z = logits.value();
  const Tensor& y = onehot.value();
  require_onehot(y, "softmax_cross_entropy");
  const std::size_t r = z.rows(), c = z.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const double* zi = z.data().data() + i * c;
    const double mx = *std::max_element(zi, zi + c);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(zi[j] - mx);
    lse = mx + std::log(lse);
    for (std::size_t j = 0; j < c; ++j) s -= y[i * c + j] * (zi[j] - lse);
  }
  const double rows = static_cast<double>(r);
  const auto iz = logits.id(), iy = onehot.id();
  return logits.tape().record(Tensor::scalar(s / rows), {logits, onehot},
                              [iz, iy, rows](const Tensor& g, Tape& t) {
                                Tensor d = softmax_rows(t.value(iz)) - t.value(iy);
                                d *= g[0] / rows;
                                t.accumulate(iz, std::move(d));
                              },
                              "softmax_cross_entropy");
}

}  // namespace oplm
