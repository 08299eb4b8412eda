// Static 3-d tree for nearest-neighbour queries over an Eigen point matrix.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace secad {

template <typename Scalar>
class KdTree3 {
 public:
  using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

  explicit KdTree3(Points points) : pts_(std::move(points)) {
    if (pts_.rows() == 0)
      throw std::invalid_argument("KdTree3: empty point set");
    index_.resize(static_cast<size_t>(pts_.rows()));
    std::iota(index_.begin(), index_.end(), Eigen::Index{0});
    nodes_.reserve(index_.size() / kLeafSize * 2 + 2);
    build(0, static_cast<Eigen::Index>(index_.size()));
  }

  // Squared Euclidean distance from q to the nearest stored point.
  Scalar nearest_sq(const Vec3& q) const {
    Scalar best = std::numeric_limits<Scalar>::max();
    Eigen::Index ignored = -1;
    search(0, q, best, ignored);
    return best;
  }

  // Row index (into the constructor matrix) of the nearest stored point.
  Eigen::Index nearest_index(const Vec3& q) const {
    Scalar best = std::numeric_limits<Scalar>::max();
    Eigen::Index hit = -1;
    search(0, q, best, hit);
    return hit;
  }

  Eigen::Index size() const { return pts_.rows(); }

 private:
  static constexpr Eigen::Index kLeafSize = 8;

  struct Node {
    int axis = -1;  // -1 marks a leaf
    Scalar split = 0;
    Eigen::Index lo = 0, hi = 0;  // leaf range in index_
    int left = -1, right = -1;
  };

  int build(Eigen::Index lo, Eigen::Index hi) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (hi - lo <= kLeafSize) {
      nodes_[id].lo = lo;
      nodes_[id].hi = hi;
      return id;
    }
    // split the widest axis at its median
    Vec3 mn = pts_.row(index_[static_cast<size_t>(lo)]);
    Vec3 mx = mn;
    for (Eigen::Index i = lo + 1; i < hi; ++i) {
      const Vec3 p = pts_.row(index_[static_cast<size_t>(i)]);
      mn = mn.cwiseMin(p);
      mx = mx.cwiseMax(p);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const Eigen::Index mid = lo + (hi - lo) / 2;
    std::nth_element(index_.begin() + lo, index_.begin() + mid,
                     index_.begin() + hi,
                     [&](Eigen::Index a, Eigen::Index b) {
                       return pts_(a, axis) < pts_(b, axis);
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = pts_(index_[static_cast<size_t>(mid)], axis);
    const int l = build(lo, mid);
    const int r = build(mid, hi);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int id, const Vec3& q, Scalar& best, Eigen::Index& hit) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.axis < 0) {
      for (Eigen::Index i = n.lo; i < n.hi; ++i) {
        const Eigen::Index row = index_[static_cast<size_t>(i)];
        const Scalar d = (pts_.row(row).transpose() - q).squaredNorm();
        if (d < best) {
          best = d;
          hit = row;
        }
      }
      return;
    }
    const Scalar delta = q[n.axis] - n.split;
    const int near = delta < 0 ? n.left : n.right;
    const int far = delta < 0 ? n.right : n.left;
    search(near, q, best, hit);
    if (delta * delta < best) search(far, q, best, hit);
  }

  Points pts_;
  std::vector<Eigen::Index> index_;
  std::vector<Node> nodes_;
};

}  // namespace secad
