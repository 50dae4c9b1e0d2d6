#include "spc/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include <Eigen/Eigenvalues>

#include "spc/error.hpp"

namespace spc {

namespace {

  struct Candidate {
    double d2;
    int row;
    bool operator<(const Candidate& o) const
    {
      return d2 < o.d2 || (d2 == o.d2 && row < o.row);
    }
  };

  // Bounded set of the k best candidates; top() is the worst kept.
  class BestK {
  public:
    explicit BestK(size_t k) : k_(k) {}

    void push(double d2, int row)
    {
      Candidate c{d2, row};
      if (heap_.size() < k_) {
        heap_.push(c);
      } else if (c < heap_.top()) {
        heap_.pop();
        heap_.push(c);
      }
    }

    bool full() const { return heap_.size() == k_; }
    double worst() const
    {
      return full() ? heap_.top().d2 : std::numeric_limits<double>::infinity();
    }

    std::vector<Candidate> sorted()
    {
      std::vector<Candidate> out;
      while (!heap_.empty()) {
        out.push_back(heap_.top());
        heap_.pop();
      }
      std::reverse(out.begin(), out.end());
      return out;
    }

  private:
    size_t k_;
    std::priority_queue<Candidate> heap_;
  };

}  // namespace

KdIndex::KdIndex(const Mat& points, int leaf_size)
  : n_(points.rows), dim_(int(points.cols)), leaf_size_(std::max(1, leaf_size))
{
  if (dim_ < 1 || dim_ > kernels::kMaxDim)
    throw Error(Errc::kInvalidArgument, "KdIndex supports 1..8 dimensions");
  if (n_ > size_t(std::numeric_limits<int>::max()))
    throw Error(Errc::kInvalidArgument, "too many points for KdIndex");

  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), 0);
  if (n_ > 0) {
    build_src_ = &points;
    nodes_.reserve(2 * n_ / size_t(leaf_size_) + 2);
    build(0, int(n_), 0);
    build_src_ = nullptr;
  }

  cols_.assign(dim_, std::vector<double>(n_));
  ids_.resize(n_);
  for (size_t i = 0; i < n_; ++i) {
    for (int d = 0; d < dim_; ++d)
      cols_[d][i] = points(size_t(order_[i]), size_t(d));
    ids_[i] = double(order_[i]);
  }
}

int
KdIndex::build(int begin, int end, int depth)
{
  const Mat& p = *build_src_;
  int id = int(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_)
    return id;

  // Split on the axis of largest extent.
  int axis = 0;
  double best_extent = -1;
  for (int d = 0; d < dim_; ++d) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = begin; i < end; ++i) {
      double v = p(size_t(order_[i]), size_t(d));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_extent) {
      best_extent = hi - lo;
      axis = d;
    }
  }
  if (best_extent <= 0)
    return id;  // all points coincide

  int mid = begin + (end - begin) / 2;
  auto key = [&](int row) { return p(size_t(row), size_t(axis)); };
  std::nth_element(
    order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
    [&](int a, int b) {
      return key(a) < key(b) || (key(a) == key(b) && a < b);
    });

  double split = key(order_[mid]);
  int left = build(begin, mid, depth + 1);
  int right = build(mid, end, depth + 1);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

kernels::Columns
KdIndex::columns() const
{
  kernels::Columns c;
  for (int d = 0; d < dim_; ++d)
    c.col[d] = cols_[d].data();
  c.id = ids_.data();
  c.dim = dim_;
  return c;
}

void
KdIndex::check_query(std::span<const double> query) const
{
  if (n_ == 0)
    throw Error(Errc::kEmptyIndex, "query on an empty index");
  if (query.size() != size_t(dim_))
    throw Error(Errc::kInvalidArgument, "query dimension mismatch");
}

Neighbor
KdIndex::nearest(std::span<const double> query) const
{
  check_query(query);
  const auto cols = columns();
  kernels::Nearest best{std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity()};

  // Explicit stack of (node, lower bound on squared distance).
  std::vector<std::pair<int, double>> stack{{0, 0.0}};
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > best.d2)
      continue;
    const Node& n = nodes_[size_t(id)];
    if (n.axis < 0) {
      kernels::nearest_scan(
        query.data(), cols, size_t(n.begin), size_t(n.end), best);
      continue;
    }
    double diff = query[size_t(n.axis)] - n.split;
    int near = diff < 0 ? n.left : n.right;
    int far = diff < 0 ? n.right : n.left;
    stack.push_back({far, diff * diff});
    stack.push_back({near, bound});
  }
  return {int(best.id), std::sqrt(best.d2)};
}

std::vector<Neighbor>
KdIndex::knn(std::span<const double> query, size_t k) const
{
  if (k == 0)
    throw Error(Errc::kInvalidArgument, "knn requires k >= 1");
  check_query(query);

  const auto cols = columns();
  BestK best(std::min(k, n_));
  std::vector<double> buf(size_t(leaf_size_) + 8);

  std::vector<std::pair<int, double>> stack{{0, 0.0}};
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > best.worst())
      continue;
    const Node& n = nodes_[size_t(id)];
    if (n.axis < 0) {
      size_t len = size_t(n.end - n.begin);
      if (buf.size() < len)
        buf.resize(len);
      kernels::squared_distances(
        query.data(), cols, size_t(n.begin), size_t(n.end), buf.data());
      for (size_t i = 0; i < len; ++i)
        best.push(buf[i], order_[size_t(n.begin) + i]);
      continue;
    }
    double diff = query[size_t(n.axis)] - n.split;
    int near = diff < 0 ? n.left : n.right;
    int far = diff < 0 ? n.right : n.left;
    stack.push_back({far, diff * diff});
    stack.push_back({near, bound});
  }

  std::vector<Neighbor> out;
  for (const auto& c : best.sorted())
    out.push_back({c.row, std::sqrt(c.d2)});
  while (out.size() < k)
    out.push_back(out.front());
  return out;
}

std::vector<Neighbor>
KdIndex::within(std::span<const double> query, double radius) const
{
  check_query(query);
  const double r2 = radius * radius;
  const auto cols = columns();
  std::vector<Candidate> found;
  std::vector<double> buf(size_t(leaf_size_) + 8);

  std::vector<std::pair<int, double>> stack{{0, 0.0}};
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > r2)
      continue;
    const Node& n = nodes_[size_t(id)];
    if (n.axis < 0) {
      size_t len = size_t(n.end - n.begin);
      if (buf.size() < len)
        buf.resize(len);
      kernels::squared_distances(
        query.data(), cols, size_t(n.begin), size_t(n.end), buf.data());
      for (size_t i = 0; i < len; ++i)
        if (buf[i] <= r2)
          found.push_back({buf[i], order_[size_t(n.begin) + i]});
      continue;
    }
    double diff = query[size_t(n.axis)] - n.split;
    int near = diff < 0 ? n.left : n.right;
    int far = diff < 0 ? n.right : n.left;
    stack.push_back({far, diff * diff});
    stack.push_back({near, bound});
  }
  std::sort(found.begin(), found.end());
  std::vector<Neighbor> out;
  out.reserve(found.size());
  for (const auto& c : found)
    out.push_back({c.row, std::sqrt(c.d2)});
  return out;
}

std::vector<int>
KdIndex::ball_query(std::span<const double> query, size_t k, double radius) const
{
  if (k == 0 || !(radius > 0))
    throw Error(Errc::kInvalidArgument, "ball_query requires k >= 1, radius > 0");

  std::vector<int> rows;
  auto in_ball = within(query, radius);
  if (in_ball.empty()) {
    for (const auto& nb : knn(query, k))
      rows.push_back(nb.row);
    return rows;
  }
  for (size_t i = 0; i < in_ball.size() && i < k; ++i)
    rows.push_back(in_ball[i].row);
  while (rows.size() < k)
    rows.push_back(rows.front());
  return rows;
}

//----------------------------------------------------------------------------

std::vector<int>
nearest_rows(const Mat& queries, const Mat& reference, std::vector<double>* d2)
{
  if (reference.rows == 0)
    throw Error(Errc::kEmptyIndex, "nearest_rows: empty reference");
  if (queries.cols != reference.cols)
    throw Error(Errc::kInvalidArgument, "nearest_rows: dimension mismatch");

  std::vector<int> idx(queries.rows);
  if (d2)
    d2->assign(queries.rows, 0.0);

  if (reference.rows <= 64) {
    // Small references: a flat SoA scan beats building a tree.
    const size_t n = reference.rows;
    std::vector<std::vector<double>> cols(reference.cols, std::vector<double>(n));
    std::vector<double> ids(n);
    for (size_t i = 0; i < n; ++i) {
      for (size_t d = 0; d < reference.cols; ++d)
        cols[d][i] = reference(i, d);
      ids[i] = double(i);
    }
    kernels::Columns c;
    for (size_t d = 0; d < reference.cols; ++d)
      c.col[d] = cols[d].data();
    c.id = ids.data();
    c.dim = int(reference.cols);
    for (size_t q = 0; q < queries.rows; ++q) {
      kernels::Nearest best{std::numeric_limits<double>::infinity(),
                            std::numeric_limits<double>::infinity()};
      kernels::nearest_scan(queries.row(q).data(), c, 0, n, best);
      idx[q] = int(best.id);
      if (d2)
        (*d2)[q] = best.d2;
    }
    return idx;
  }

  KdIndex index(reference);
  for (size_t q = 0; q < queries.rows; ++q) {
    Neighbor nb = index.nearest(queries.row(q));
    idx[q] = nb.row;
    if (d2) {
      double s = 0;
      for (size_t d = 0; d < queries.cols; ++d) {
        double diff = reference(size_t(nb.row), d) - queries(q, d);
        s = s + diff * diff;
      }
      (*d2)[q] = s;
    }
  }
  return idx;
}

//----------------------------------------------------------------------------

std::vector<int>
farthest_point_sample(const Mat& points, size_t m, int start)
{
  if (start < 0 || size_t(start) >= points.rows)
    throw Error(Errc::kInvalidArgument, "farthest_point_sample: bad start row");
  int s = start;
  return farthest_point_sample(points, m, std::span<const int>(&s, 1));
}

std::vector<int>
farthest_point_sample(const Mat& points, size_t m, std::span<const int> initial)
{
  const size_t n = points.rows;
  if (m < 1 || m > n)
    throw Error(
      Errc::kInvalidArgument, "farthest_point_sample requires 1 <= m <= N");
  if (points.cols > size_t(kernels::kMaxDim))
    throw Error(Errc::kInvalidArgument, "farthest_point_sample: too many columns");

  std::vector<std::vector<double>> cols(points.cols, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t d = 0; d < points.cols; ++d)
      cols[d][i] = points(i, d);
  kernels::Columns c;
  for (size_t d = 0; d < points.cols; ++d)
    c.col[d] = cols[d].data();
  c.dim = int(points.cols);

  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::vector<double> buf(n);
  std::vector<char> taken(n, 0);
  std::vector<int> out;
  out.reserve(m);

  auto take = [&](int row) {
    out.push_back(row);
    taken[size_t(row)] = 1;
    kernels::squared_distances(points.row(size_t(row)).data(), c, 0, n, buf.data());
    for (size_t i = 0; i < n; ++i)
      mind[i] = std::min(mind[i], buf[i]);
  };

  for (int row : initial) {
    if (out.size() == m)
      break;
    if (row < 0 || size_t(row) >= n)
      throw Error(Errc::kInvalidArgument, "farthest_point_sample: bad start row");
    if (!taken[size_t(row)])
      take(row);
  }
  if (out.empty())
    take(0);

  while (out.size() < m) {
    // Largest min-distance; ties to the lower row.  Coincident points have
    // distance 0 but are still distinct rows, so untaken rows always win
    // over taken ones.
    int best = -1;
    double best_d = -1;
    for (size_t i = 0; i < n; ++i)
      if (!taken[i] && mind[i] > best_d) {
        best_d = mind[i];
        best = int(i);
      }
    take(best);
  }
  return out;
}

//----------------------------------------------------------------------------

NormalEstimate
estimate_normals(const Mat& positions, size_t k)
{
  if (positions.cols != 3)
    throw Error(Errc::kInvalidArgument, "estimate_normals expects N x 3");
  if (positions.rows < 3 || k < 3)
    throw Error(Errc::kInvalidArgument, "estimate_normals requires N >= 3, k >= 3");

  KdIndex index(positions);
  NormalEstimate out;
  out.normals = Mat(positions.rows, 3);
  out.degenerate.assign(positions.rows, false);
  const size_t kk = std::min(k, positions.rows);

  for (size_t i = 0; i < positions.rows; ++i) {
    auto nbs = index.knn(positions.row(i), kk);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& nb : nbs)
      mean += Eigen::Vector3d(
        positions(size_t(nb.row), 0), positions(size_t(nb.row), 1),
        positions(size_t(nb.row), 2));
    mean /= double(nbs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbs) {
      Eigen::Vector3d d(
        positions(size_t(nb.row), 0), positions(size_t(nb.row), 1),
        positions(size_t(nb.row), 2));
      d -= mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const auto& ev = es.eigenvalues();  // ascending
    double scale = std::max(ev(2), 1e-300);
    if (ev(2) <= 0 || ev(1) <= 1e-12 * scale) {
      out.degenerate[i] = true;
      out.normals(i, 0) = 0;
      out.normals(i, 1) = 0;
      out.normals(i, 2) = 1;
      continue;
    }
    Eigen::Vector3d nrm = es.eigenvectors().col(0).normalized();
    for (int d = 0; d < 3; ++d)
      out.normals(i, size_t(d)) = nrm(d);
  }
  return out;
}

}  // namespace spc
