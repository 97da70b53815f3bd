#pragma once

#include <algorithm>
#include <numeric>

#include "fsc/point_cloud.hpp"

namespace fsc {

/// Static 3-d kd-tree over a snapshot of the input points.
/// Nearest-neighbor ties are broken toward the lower point index.
template <typename Scalar>
class KdTree {
 public:
  struct Hit {
    Eigen::Index index;
    Scalar distance;  // Euclidean
  };

  explicit KdTree(const PointMatrix<Scalar>& pts, int leaf_size = 16)
      : pts_(pts), leaf_size_(std::max(1, leaf_size)) {
    require(pts_.rows() > 0, Errc::EmptyInput, "KdTree: empty point set");
    check_finite(pts_, "KdTree input");
    order_.resize(static_cast<size_t>(pts_.rows()));
    std::iota(order_.begin(), order_.end(), Eigen::Index(0));
    nodes_.reserve(static_cast<size_t>(2 * pts_.rows() / leaf_size_ + 2));
    root_ = build(0, pts_.rows());
  }

  Eigen::Index size() const { return pts_.rows(); }
  const PointMatrix<Scalar>& points() const { return pts_; }

  /// k nearest points to q, ascending by (distance, index).
  std::vector<Hit> knn(const Eigen::RowVector3<Scalar>& q, int k) const {
    require(k >= 1, Errc::InvalidArgument, "KdTree::knn: k must be positive");
    require(static_cast<Eigen::Index>(k) <= pts_.rows(), Errc::InsufficientPoints,
            "KdTree::knn: k exceeds point count");
    std::vector<Cand> heap;
    heap.reserve(static_cast<size_t>(k));
    search_knn(root_, q, static_cast<size_t>(k), heap);
    std::sort(heap.begin(), heap.end(),
              [](const Cand& a, const Cand& b) { return a.d2 != b.d2 ? a.d2 < b.d2 : a.idx < b.idx; });
    std::vector<Hit> out(heap.size());
    for (size_t i = 0; i < heap.size(); ++i)
      out[i] = Hit{heap[i].idx, std::sqrt(heap[i].d2)};
    return out;
  }

  /// Indices of all points within radius r of q (inclusive), ascending.
  /// Set exclude to skip one index (typically the query point itself).
  std::vector<Eigen::Index> radius(const Eigen::RowVector3<Scalar>& q, Scalar r,
                                   Eigen::Index exclude = -1) const {
    require(r >= Scalar(0), Errc::InvalidArgument, "KdTree::radius: negative radius");
    std::vector<Eigen::Index> out;
    search_radius(root_, q, r * r, exclude, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    Scalar split = 0;
    Eigen::Index begin = 0, end = 0;  // leaf range in order_
    int left = -1, right = -1;
  };

  struct Cand {
    Scalar d2;
    Eigen::Index idx;
  };

  // "worse" = farther, or equal distance with higher index
  static bool worse(const Cand& a, const Cand& b) {
    return a.d2 != b.d2 ? a.d2 > b.d2 : a.idx > b.idx;
  }
  static bool heap_less(const Cand& a, const Cand& b) { return worse(b, a); }

  int build(Eigen::Index begin, Eigen::Index end) {
    Node n;
    n.begin = begin;
    n.end = end;
    const int id = static_cast<int>(nodes_.size());
    if (end - begin <= leaf_size_) {
      nodes_.push_back(n);
      return id;
    }
    Eigen::RowVector3<Scalar> lo = pts_.row(order_[begin]);
    Eigen::RowVector3<Scalar> hi = lo;
    for (Eigen::Index i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(pts_.row(order_[i]));
      hi = hi.cwiseMax(pts_.row(order_[i]));
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) {  // all points coincide
      nodes_.push_back(n);
      return id;
    }
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) {
                       const Scalar ca = pts_(a, axis), cb = pts_(b, axis);
                       return ca != cb ? ca < cb : a < b;
                     });
    n.axis = axis;
    n.split = pts_(order_[mid], axis);
    nodes_.push_back(n);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void scan_leaf(const Node& n, const Eigen::RowVector3<Scalar>& q, size_t k,
                 std::vector<Cand>& heap) const {
    for (Eigen::Index i = n.begin; i < n.end; ++i) {
      const Eigen::Index idx = order_[i];
      const Scalar d2 = (pts_.row(idx) - q).squaredNorm();
      const Cand c{d2, idx};
      if (heap.size() < k) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end(), heap_less);
      } else if (worse(heap.front(), c)) {
        std::pop_heap(heap.begin(), heap.end(), heap_less);
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end(), heap_less);
      }
    }
  }

  void search_knn(int node_id, const Eigen::RowVector3<Scalar>& q, size_t k,
                  std::vector<Cand>& heap) const {
    const Node& n = nodes_[static_cast<size_t>(node_id)];
    if (n.axis < 0) {
      scan_leaf(n, q, k, heap);
      return;
    }
    const Scalar delta = q[n.axis] - n.split;
    const int near = delta < Scalar(0) ? n.left : n.right;
    const int far = delta < Scalar(0) ? n.right : n.left;
    search_knn(near, q, k, heap);
    // ties may hide a lower index on the far side, so prune on > only
    if (heap.size() < k || delta * delta <= heap.front().d2) search_knn(far, q, k, heap);
  }

  void search_radius(int node_id, const Eigen::RowVector3<Scalar>& q, Scalar r2,
                     Eigen::Index exclude, std::vector<Eigen::Index>& out) const {
    const Node& n = nodes_[static_cast<size_t>(node_id)];
    if (n.axis < 0) {
      for (Eigen::Index i = n.begin; i < n.end; ++i) {
        const Eigen::Index idx = order_[i];
        if (idx == exclude) continue;
        if ((pts_.row(idx) - q).squaredNorm() <= r2) out.push_back(idx);
      }
      return;
    }
    const Scalar delta = q[n.axis] - n.split;
    const int near = delta < Scalar(0) ? n.left : n.right;
    const int far = delta < Scalar(0) ? n.right : n.left;
    search_radius(near, q, r2, exclude, out);
    if (delta * delta <= r2) search_radius(far, q, r2, exclude, out);
  }

  PointMatrix<Scalar> pts_;
  int leaf_size_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace fsc
