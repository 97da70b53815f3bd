#pragma once

#include <functional>

#include "fsc/point_cloud.hpp"

namespace fsc {

/// Reverse-mode autodiff tape over dense Eigen matrices. Values are computed
/// eagerly; backward() replays the tape in reverse insertion order, which
/// keeps gradient accumulation deterministic.
template <typename Scalar>
class Graph {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var constant(Mat v) { return push(std::move(v), false); }
  Var param(Mat v) { return push(std::move(v), true); }

  const Mat& value(Var x) const { return node(x).value; }
  const Mat& grad(Var x) const { return node(x).grad; }
  Eigen::Index rows(Var x) const { return node(x).value.rows(); }
  Eigen::Index cols(Var x) const { return node(x).value.cols(); }

  // ---- arithmetic -------------------------------------------------------

  Var matmul(Var a, Var b) {
    require(cols(a) == rows(b), Errc::SizeMismatch, "matmul: inner dimensions differ");
    Var out = push(value(a) * value(b), tracked(a) || tracked(b));
    attach(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad.noalias() += g * value(b).transpose();
      if (tracked(b)) node(b).grad.noalias() += value(a).transpose() * g;
    });
    return out;
  }

  Var add(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), Errc::SizeMismatch, "add: shape mismatch");
    Var out = push(value(a) + value(b), tracked(a) || tracked(b));
    attach(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad += g;
      if (tracked(b)) node(b).grad += g;
    });
    return out;
  }

  Var sub(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), Errc::SizeMismatch, "sub: shape mismatch");
    Var out = push(value(a) - value(b), tracked(a) || tracked(b));
    attach(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad += g;
      if (tracked(b)) node(b).grad -= g;
    });
    return out;
  }

  Var cmul(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), Errc::SizeMismatch, "cmul: shape mismatch");
    Var out = push(value(a).cwiseProduct(value(b)), tracked(a) || tracked(b));
    attach(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad += g.cwiseProduct(value(b));
      if (tracked(b)) node(b).grad += g.cwiseProduct(value(a));
    });
    return out;
  }

  Var scale(Var a, Scalar s) {
    Var out = push(value(a) * s, tracked(a));
    attach(out, [this, a, out, s] {
      if (tracked(a)) node(a).grad += node(out).grad * s;
    });
    return out;
  }

  Var add_scalar(Var a, Scalar s) {
    Var out = push((value(a).array() + s).matrix(), tracked(a));
    attach(out, [this, a, out] {
      if (tracked(a)) node(a).grad += node(out).grad;
    });
    return out;
  }

  Var transpose(Var a) {
    Var out = push(value(a).transpose(), tracked(a));
    attach(out, [this, a, out] {
      if (tracked(a)) node(a).grad += node(out).grad.transpose();
    });
    return out;
  }

  /// (n x d) plus a (1 x d) row broadcast down the rows.
  Var add_row(Var a, Var row) {
    require(rows(row) == 1 && cols(row) == cols(a), Errc::SizeMismatch, "add_row: bad row shape");
    Var out = push(value(a).rowwise() + value(row).row(0), tracked(a) || tracked(row));
    attach(out, [this, a, row, out] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad += g;
      if (tracked(row)) node(row).grad += g.colwise().sum();
    });
    return out;
  }

  // ---- nonlinearities ---------------------------------------------------

  Var relu(Var a) {
    Var out = push(value(a).cwiseMax(Scalar(0)), tracked(a));
    attach(out, [this, a, out] {
      if (!tracked(a)) return;
      node(a).grad += node(out).grad.cwiseProduct(
          (value(a).array() > Scalar(0)).template cast<Scalar>().matrix());
    });
    return out;
  }

  Var leaky_relu(Var a, Scalar slope) {
    Var out = push(value(a).cwiseMax(value(a) * slope), tracked(a));
    attach(out, [this, a, out, slope] {
      if (!tracked(a)) return;
      const Mat mask = (value(a).array() > Scalar(0))
                           .select(Mat::Ones(rows(a), cols(a)),
                                   Mat::Constant(rows(a), cols(a), slope));
      node(a).grad += node(out).grad.cwiseProduct(mask);
    });
    return out;
  }

  Var sigmoid(Var a) {
    Mat s = ((-value(a).array()).exp() + Scalar(1)).inverse().matrix();
    Var out = push(std::move(s), tracked(a));
    attach(out, [this, a, out] {
      if (!tracked(a)) return;
      const auto& s = value(out).array();
      node(a).grad += node(out).grad.cwiseProduct((s * (Scalar(1) - s)).matrix());
    });
    return out;
  }

  /// Elementwise sqrt(x + eps); eps keeps the derivative finite at zero.
  Var sqrt_shifted(Var a, Scalar eps) {
    Var out = push((value(a).array() + eps).sqrt().matrix(), tracked(a));
    attach(out, [this, a, out] {
      if (!tracked(a)) return;
      node(a).grad +=
          node(out).grad.cwiseProduct((Scalar(0.5) * value(out).array().inverse()).matrix());
    });
    return out;
  }

  // ---- normalizations ---------------------------------------------------

  /// Softmax taken independently within each column (down the rows).
  Var col_softmax(Var a) {
    Mat v = value(a);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const Scalar mx = v.col(j).maxCoeff();
      v.col(j) = (v.col(j).array() - mx).exp();
      v.col(j) /= v.col(j).sum();
    }
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out] {
      if (!tracked(a)) return;
      const Mat& s = value(out);
      const Mat& g = node(out).grad;
      Mat res(s.rows(), s.cols());
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const Scalar dot = s.col(j).dot(g.col(j));
        res.col(j) = s.col(j).cwiseProduct((g.col(j).array() - dot).matrix());
      }
      node(a).grad += res;
    });
    return out;
  }

  /// Rows divided by their sum (entries assumed >= 0). A row summing to
  /// exactly zero is left as zeros rather than dividing by zero.
  Var l1_normalize_rows(Var a) {
    const Eigen::Index n = rows(a), d = cols(a);
    Mat v(n, d);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sums(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar s = value(a).row(i).sum();
      sums[i] = s == Scalar(0) ? Scalar(1) : s;
      v.row(i) = value(a).row(i) / sums[i];
    }
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out, sums] {
      if (!tracked(a)) return;
      const Mat& y = value(out);
      const Mat& g = node(out).grad;
      Mat res(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const Scalar dot = y.row(i).dot(g.row(i));
        res.row(i) = (g.row(i).array() - dot) / sums[i];
      }
      node(a).grad += res;
    });
    return out;
  }

  // ---- shape ops --------------------------------------------------------

  /// Column-wise max over rows -> (1 x d). Ties route the gradient to the
  /// lowest row index.
  Var max_pool_rows(Var a) {
    const Eigen::Index n = rows(a), d = cols(a);
    Mat v(1, d);
    std::vector<Eigen::Index> arg(static_cast<size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < n; ++i)
        if (value(a)(i, j) > value(a)(best, j)) best = i;
      arg[static_cast<size_t>(j)] = best;
      v(0, j) = value(a)(best, j);
    }
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out, arg] {
      if (!tracked(a)) return;
      const Mat& g = node(out).grad;
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        node(a).grad(arg[static_cast<size_t>(j)], j) += g(0, j);
    });
    return out;
  }

  Var broadcast_row(Var row, Eigen::Index n) {
    require(rows(row) == 1, Errc::SizeMismatch, "broadcast_row: input is not a row");
    Var out = push(value(row).replicate(n, 1), tracked(row));
    attach(out, [this, row, out] {
      if (tracked(row)) node(row).grad += node(out).grad.colwise().sum();
    });
    return out;
  }

  Var concat_cols(Var a, Var b) {
    require(rows(a) == rows(b), Errc::SizeMismatch, "concat_cols: row mismatch");
    Mat v(rows(a), cols(a) + cols(b));
    v << value(a), value(b);
    Var out = push(std::move(v), tracked(a) || tracked(b));
    const Eigen::Index ca = cols(a);
    attach(out, [this, a, b, out, ca] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad += g.leftCols(ca);
      if (tracked(b)) node(b).grad += g.rightCols(g.cols() - ca);
    });
    return out;
  }

  Var concat_rows(Var a, Var b) {
    require(cols(a) == cols(b), Errc::SizeMismatch, "concat_rows: column mismatch");
    Mat v(rows(a) + rows(b), cols(a));
    v << value(a), value(b);
    Var out = push(std::move(v), tracked(a) || tracked(b));
    const Eigen::Index ra = rows(a);
    attach(out, [this, a, b, out, ra] {
      const Mat& g = node(out).grad;
      if (tracked(a)) node(a).grad += g.topRows(ra);
      if (tracked(b)) node(b).grad += g.bottomRows(g.rows() - ra);
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 1 && start + count <= cols(a), Errc::SizeMismatch,
            "slice_cols: range out of bounds");
    Var out = push(value(a).middleCols(start, count), tracked(a));
    attach(out, [this, a, out, start, count] {
      if (tracked(a)) node(a).grad.middleCols(start, count) += node(out).grad;
    });
    return out;
  }

  Var gather_rows(Var a, std::vector<Eigen::Index> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), cols(a));
    for (size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] >= 0 && idx[i] < rows(a), Errc::SizeMismatch, "gather_rows: index out of range");
      v.row(static_cast<Eigen::Index>(i)) = value(a).row(idx[i]);
    }
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out, idx = std::move(idx)] {
      if (!tracked(a)) return;
      const Mat& g = node(out).grad;
      for (size_t i = 0; i < idx.size(); ++i)
        node(a).grad.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    });
    return out;
  }

  /// Row i of the input becomes rows [i*times, (i+1)*times).
  Var repeat_rows(Var a, Eigen::Index times) {
    require(times >= 1, Errc::SizeMismatch, "repeat_rows: times must be positive");
    const Eigen::Index n = rows(a), d = cols(a);
    Mat v(n * times, d);
    for (Eigen::Index i = 0; i < n; ++i) v.middleRows(i * times, times) = value(a).row(i).replicate(times, 1);
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out, times] {
      if (!tracked(a)) return;
      const Mat& g = node(out).grad;
      for (Eigen::Index i = 0; i < rows(a); ++i)
        node(a).grad.row(i) += g.middleRows(i * times, times).colwise().sum();
    });
    return out;
  }

  /// Per-segment column-wise max; segment s covers rows
  /// [offsets[s], offsets[s+1]) of the input. Ties to the lowest row.
  Var segment_max_rows(Var a, std::vector<Eigen::Index> offsets) {
    require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == rows(a),
            Errc::SizeMismatch, "segment_max_rows: bad offsets");
    const Eigen::Index ns = static_cast<Eigen::Index>(offsets.size()) - 1;
    const Eigen::Index d = cols(a);
    Mat v(ns, d);
    std::vector<Eigen::Index> arg(static_cast<size_t>(ns * d));
    for (Eigen::Index s = 0; s < ns; ++s) {
      const Eigen::Index lo = offsets[static_cast<size_t>(s)], hi = offsets[static_cast<size_t>(s) + 1];
      require(hi > lo, Errc::SizeMismatch, "segment_max_rows: empty segment");
      for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::Index best = lo;
        for (Eigen::Index i = lo + 1; i < hi; ++i)
          if (value(a)(i, j) > value(a)(best, j)) best = i;
        arg[static_cast<size_t>(s * d + j)] = best;
        v(s, j) = value(a)(best, j);
      }
    }
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out, arg = std::move(arg), d] {
      if (!tracked(a)) return;
      const Mat& g = node(out).grad;
      for (Eigen::Index s = 0; s < g.rows(); ++s)
        for (Eigen::Index j = 0; j < d; ++j)
          node(a).grad(arg[static_cast<size_t>(s * d + j)], j) += g(s, j);
    });
    return out;
  }

  /// Sparse placement: output is (n x d) zeros with entry (target_rows[j], j)
  /// set to rowvec(0, j). Inverse of reading one element per column.
  Var scatter_cols_to_rows(Var rowvec, std::vector<Eigen::Index> target_rows, Eigen::Index n) {
    require(rows(rowvec) == 1, Errc::SizeMismatch, "scatter_cols_to_rows: input is not a row");
    const Eigen::Index d = cols(rowvec);
    require(static_cast<Eigen::Index>(target_rows.size()) == d, Errc::SizeMismatch,
            "scatter_cols_to_rows: one target row per column required");
    Mat v = Mat::Zero(n, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      require(target_rows[static_cast<size_t>(j)] >= 0 && target_rows[static_cast<size_t>(j)] < n,
              Errc::SizeMismatch, "scatter_cols_to_rows: target out of range");
      v(target_rows[static_cast<size_t>(j)], j) = value(rowvec)(0, j);
    }
    Var out = push(std::move(v), tracked(rowvec));
    attach(out, [this, rowvec, out, target_rows = std::move(target_rows)] {
      if (!tracked(rowvec)) return;
      const Mat& g = node(out).grad;
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        node(rowvec).grad(0, j) += g(target_rows[static_cast<size_t>(j)], j);
    });
    return out;
  }

  /// Row-major reshape (the (i, j) walk order of a row-major scan).
  Var reshape(Var a, Eigen::Index r, Eigen::Index c) {
    require(r * c == rows(a) * cols(a), Errc::SizeMismatch, "reshape: element count differs");
    const Eigen::Index c0 = cols(a);
    Mat v(r, c);
    for (Eigen::Index k = 0; k < r * c; ++k) v(k / c, k % c) = value(a)(k / c0, k % c0);
    Var out = push(std::move(v), tracked(a));
    attach(out, [this, a, out, r, c, c0] {
      if (!tracked(a)) return;
      const Mat& g = node(out).grad;
      for (Eigen::Index k = 0; k < r * c; ++k) node(a).grad(k / c0, k % c0) += g(k / c, k % c);
    });
    return out;
  }

  // ---- reductions -------------------------------------------------------

  Var sum_all(Var a) {
    Var out = push(Mat::Constant(1, 1, value(a).sum()), tracked(a));
    attach(out, [this, a, out] {
      if (tracked(a))
        node(a).grad.array() += node(out).grad(0, 0);
    });
    return out;
  }

  Var mean_all(Var a) {
    const Scalar inv = Scalar(1) / Scalar(rows(a) * cols(a));
    return scale(sum_all(a), inv);
  }

  /// Registers an opaque forward value with a caller-supplied backward.
  /// backward(upstream, grad_a) must accumulate into grad_a.
  Var custom(Var a, Mat value_out,
             std::function<void(const Mat& upstream, Mat& grad_a)> back) {
    Var out = push(std::move(value_out), tracked(a));
    attach(out, [this, a, out, back = std::move(back)] {
      if (tracked(a)) back(node(out).grad, node(a).grad);
    });
    return out;
  }

  // ---- driver -----------------------------------------------------------

  /// Seeds d(out)/d(out) = upstream and sweeps the tape once. May be called
  /// once per graph instance.
  void backward(Var out, const Mat& upstream) {
    require(!swept_, Errc::InvalidArgument, "Graph::backward: tape already swept");
    require(upstream.rows() == rows(out) && upstream.cols() == cols(out), Errc::SizeMismatch,
            "Graph::backward: upstream shape mismatch");
    swept_ = true;
    for (auto& n : nodes_)
      if (n.needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    if (!node(out).needs_grad) return;
    node(out).grad = upstream;
    for (int i = out.id; i >= 0; --i)
      if (nodes_[static_cast<size_t>(i)].back && nodes_[static_cast<size_t>(i)].needs_grad)
        nodes_[static_cast<size_t>(i)].back();
  }

  void backward_scalar(Var out) {
    require(rows(out) == 1 && cols(out) == 1, Errc::SizeMismatch,
            "backward_scalar: output is not 1x1");
    backward(out, Mat::Ones(1, 1));
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Node& node(Var x) { return nodes_.at(static_cast<size_t>(x.id)); }
  const Node& node(Var x) const { return nodes_.at(static_cast<size_t>(x.id)); }
  bool tracked(Var x) const { return node(x).needs_grad; }

  Var push(Mat v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void attach(Var out, std::function<void()> back) {
    if (node(out).needs_grad) node(out).back = std::move(back);
  }

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace fsc
