#include "smile/tensor.hpp"

#include <cmath>

namespace smile::ad {

namespace {

std::atomic<std::uint64_t> g_degenerate_cosine{0};

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw ConfigError("operands live on different tapes");
    }
  }
  return tape;
}

void maybe_edge(std::vector<Tape::Edge>& edges, const Tensor& t,
                std::function<Mat(const Mat&)> vjp) {
  if (t.on_tape()) edges.push_back({t.node_id(), std::move(vjp)});
}

Tensor emit(Tape* tape, Mat value, std::vector<Tape::Edge> edges) {
  if (tape == nullptr || edges.empty()) return Tensor::constant(std::move(value));
  return tape->intern(std::move(value), std::move(edges));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " do not match");
}

Mat stable_softmax_rows(const Mat& x) {
  Mat shifted = x.colwise() - x.rowwise().maxCoeff();
  Mat e = shifted.array().exp().matrix();
  Mat sums = e.rowwise().sum();
  return Mat(sums.col(0).cwiseInverse().asDiagonal() * e);
}

}  // namespace

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != this) throw ConfigError("backward: loss does not live on this tape");
  if (loss.v_.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + loss.shape_str());
  if (backward_spent_)
    throw ConfigError("backward: tape already consumed; run a new forward first");

  for (auto& n : nodes_) {
    n.grad_set = false;
    n.grad.resize(0, 0);
  }

  auto& root = nodes_[static_cast<std::size_t>(loss.node_)];
  root.grad = Mat::Ones(1, 1);
  root.grad_set = true;

  for (int id = loss.node_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_set) continue;
    for (const Edge& e : n.edges) {
      Mat contribution = e.vjp(n.grad);
      Node& p = nodes_[static_cast<std::size_t>(e.parent)];
      if (!p.grad_set) {
        p.grad = std::move(contribution);
        p.grad_set = true;
      } else {
        p.grad += contribution;
      }
    }
  }

  // Leaves the loss never touched still expose a well-formed zero gradient.
  for (int id : leaves_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_set) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.grad_set = true;
    }
  }

  backward_spent_ = true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree for shapes " + a.shape_str() +
                     " and " + b.shape_str());
  Mat out = a.value() * b.value();
  Tape* tape = common_tape({&a, &b});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [bv = b.value()](const Mat& g) -> Mat { return g * bv.transpose(); });
  maybe_edge(edges, b, [av = a.value()](const Mat& g) -> Mat { return av.transpose() * g; });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor transpose(const Tensor& a) {
  Mat out = a.value().transpose();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return g.transpose(); });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Mat out = a.value() + b.value();
  Tape* tape = common_tape({&a, &b});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return g; });
  maybe_edge(edges, b, [](const Mat& g) -> Mat { return g; });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Mat out = a.value() - b.value();
  Tape* tape = common_tape({&a, &b});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return g; });
  maybe_edge(edges, b, [](const Mat& g) -> Mat { return -g; });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Mat out = a.value().cwiseProduct(b.value());
  Tape* tape = common_tape({&a, &b});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [bv = b.value()](const Mat& g) -> Mat { return g.cwiseProduct(bv); });
  maybe_edge(edges, b, [av = a.value()](const Mat& g) -> Mat { return g.cwiseProduct(av); });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  Mat out = a.value().cwiseQuotient(b.value());
  Tape* tape = common_tape({&a, &b});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [bv = b.value()](const Mat& g) -> Mat { return g.cwiseQuotient(bv); });
  maybe_edge(edges, b, [av = a.value(), bv = b.value()](const Mat& g) -> Mat {
    return -(g.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
  });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor neg(const Tensor& a) {
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return -g; });
  return emit(a.tape(), -a.value(), std::move(edges));
}

Tensor scale(const Tensor& a, double s) {
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [s](const Mat& g) -> Mat { return g * s; });
  return emit(a.tape(), a.value() * s, std::move(edges));
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return g; });
  return emit(a.tape(), (a.value().array() + s).matrix(), std::move(edges));
}

Tensor tanh(const Tensor& a) {
  Mat out = a.value().array().tanh().matrix();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [out](const Mat& g) -> Mat {
    return g.cwiseProduct((1.0 - out.array().square()).matrix());
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor exp(const Tensor& a) {
  Mat out = a.value().array().exp().matrix();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [out](const Mat& g) -> Mat { return g.cwiseProduct(out); });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor log(const Tensor& a) {
  Mat out = a.value().array().log().matrix();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [av = a.value()](const Mat& g) -> Mat { return g.cwiseQuotient(av); });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor sqrt(const Tensor& a) {
  Mat out = a.value().array().sqrt().matrix();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [out](const Mat& g) -> Mat {
    return g.cwiseQuotient(Mat(2.0 * out));
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor square(const Tensor& a) {
  Mat out = a.value().array().square().matrix();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [av = a.value()](const Mat& g) -> Mat {
    return 2.0 * g.cwiseProduct(av);
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor clamp_min(const Tensor& a, double lo) {
  Mat out = a.value().cwiseMax(lo);
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [av = a.value(), lo](const Mat& g) -> Mat {
    return (av.array() > lo).select(g, Mat::Zero(g.rows(), g.cols()));
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor sum(const Tensor& a) {
  Mat out = Mat::Constant(1, 1, a.value().sum());
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [r = a.rows(), c = a.cols()](const Mat& g) -> Mat {
    return Mat::Constant(r, c, g(0, 0));
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor row_sum(const Tensor& a) {
  Mat out = a.value().rowwise().sum();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [c = a.cols()](const Mat& g) -> Mat {
    return g * Mat::Ones(1, c);
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor col_sum(const Tensor& a) {
  Mat out = a.value().colwise().sum();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [r = a.rows()](const Mat& g) -> Mat {
    return Mat::Ones(r, 1) * g;
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor col_mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.rows());
  Mat out = a.value().colwise().sum() * inv;
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [r = a.rows(), inv](const Mat& g) -> Mat {
    return Mat::Ones(r, 1) * (g * inv);
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor diagonal(const Tensor& a) {
  if (a.rows() != a.cols())
    throw ShapeError("diagonal: expected a square matrix, got " + a.shape_str());
  Mat out = a.value().diagonal();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [n = a.rows()](const Mat& g) -> Mat {
    Mat full = Mat::Zero(n, n);
    full.diagonal() = g.col(0);
    return full;
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor col(const Tensor& a, Eigen::Index j) {
  if (j < 0 || j >= a.cols())
    throw ShapeError("col: index " + std::to_string(j) + " out of range for shape " +
                     a.shape_str());
  Mat out = a.value().col(j);
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [r = a.rows(), c = a.cols(), j](const Mat& g) -> Mat {
    Mat full = Mat::Zero(r, c);
    full.col(j) = g.col(0);
    return full;
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor hcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("hcat: empty input");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("hcat: row counts differ (" + parts.front().shape_str() + " vs " +
                       p.shape_str() + ")");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Tape* tape = nullptr;
  std::vector<Tape::Edge> edges;
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    if (p.on_tape()) {
      if (tape == nullptr)
        tape = p.tape();
      else if (tape != p.tape())
        throw ConfigError("hcat: operands live on different tapes");
      maybe_edge(edges, p, [at, w = p.cols()](const Mat& g) -> Mat {
        return g.middleCols(at, w);
      });
    }
    at += p.cols();
  }
  return emit(tape, std::move(out), std::move(edges));
}

Tensor reshape(const Tensor& a, Eigen::Index r, Eigen::Index c) {
  if (r * c != a.size())
    throw ShapeError("reshape: cannot view " + a.shape_str() + " as " + std::to_string(r) +
                     "x" + std::to_string(c));
  Mat out(r, c);
  // Row-major storage: a flat copy preserves element order.
  std::copy(a.value().data(), a.value().data() + a.size(), out.data());
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [ar = a.rows(), ac = a.cols()](const Mat& g) -> Mat {
    Mat back(ar, ac);
    std::copy(g.data(), g.data() + g.size(), back.data());
    return back;
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor badd_row(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("badd_row: shapes " + a.shape_str() + " and " + r.shape_str() +
                     " are not row-broadcastable");
  Mat out = a.value().rowwise() + r.value().row(0);
  Tape* tape = common_tape({&a, &r});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return g; });
  maybe_edge(edges, r, [](const Mat& g) -> Mat { return Mat(g.colwise().sum()); });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor bsub_row(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("bsub_row: shapes " + a.shape_str() + " and " + r.shape_str() +
                     " are not row-broadcastable");
  Mat out = a.value().rowwise() - r.value().row(0);
  Tape* tape = common_tape({&a, &r});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [](const Mat& g) -> Mat { return g; });
  maybe_edge(edges, r, [](const Mat& g) -> Mat { return Mat(-g.colwise().sum()); });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor bdiv_row(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("bdiv_row: shapes " + a.shape_str() + " and " + r.shape_str() +
                     " are not row-broadcastable");
  Mat out = a.value() * r.value().row(0).cwiseInverse().asDiagonal();
  Tape* tape = common_tape({&a, &r});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [rv = r.value()](const Mat& g) -> Mat {
    return g * rv.row(0).cwiseInverse().asDiagonal();
  });
  maybe_edge(edges, r, [av = a.value(), rv = r.value()](const Mat& g) -> Mat {
    Mat num = -(g.cwiseProduct(av).colwise().sum());
    return num.cwiseQuotient(rv.row(0).cwiseProduct(rv.row(0)));
  });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor bmul_col(const Tensor& a, const Tensor& c) {
  if (c.cols() != 1 || c.rows() != a.rows())
    throw ShapeError("bmul_col: shapes " + a.shape_str() + " and " + c.shape_str() +
                     " are not column-broadcastable");
  Mat out = c.value().col(0).asDiagonal() * a.value();
  Tape* tape = common_tape({&a, &c});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [cv = c.value()](const Mat& g) -> Mat {
    return cv.col(0).asDiagonal() * g;
  });
  maybe_edge(edges, c, [av = a.value()](const Mat& g) -> Mat {
    return g.cwiseProduct(av).rowwise().sum();
  });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor bdiv_col(const Tensor& a, const Tensor& c) {
  if (c.cols() != 1 || c.rows() != a.rows())
    throw ShapeError("bdiv_col: shapes " + a.shape_str() + " and " + c.shape_str() +
                     " are not column-broadcastable");
  Mat out = c.value().col(0).cwiseInverse().asDiagonal() * a.value();
  Tape* tape = common_tape({&a, &c});
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [cv = c.value()](const Mat& g) -> Mat {
    return cv.col(0).cwiseInverse().asDiagonal() * g;
  });
  maybe_edge(edges, c, [av = a.value(), cv = c.value()](const Mat& g) -> Mat {
    Mat num = -(g.cwiseProduct(av).rowwise().sum());
    return num.cwiseQuotient(cv.col(0).cwiseProduct(cv.col(0)));
  });
  return emit(tape, std::move(out), std::move(edges));
}

Tensor softmax_rows(const Tensor& a) {
  if (!a.value().allFinite())
    throw NumericError("softmax_rows: input contains non-finite entries");
  Mat out = stable_softmax_rows(a.value());
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [out](const Mat& g) -> Mat {
    Mat dot = g.cwiseProduct(out).rowwise().sum();  // B x 1
    return out.cwiseProduct(Mat(g.colwise() - dot.col(0)));
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor logsumexp_rows(const Tensor& a) {
  if (!a.value().allFinite())
    throw NumericError("logsumexp_rows: input contains non-finite entries");
  Mat m = a.value().rowwise().maxCoeff();
  Mat shifted = a.value().colwise() - m.col(0);
  Mat e = shifted.array().exp().matrix();
  Mat out = m + e.rowwise().sum().array().log().matrix();
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, a, [soft = stable_softmax_rows(a.value())](const Mat& g) -> Mat {
    return g.col(0).asDiagonal() * soft;
  });
  return emit(a.tape(), std::move(out), std::move(edges));
}

Tensor softmax(const Tensor& x) {
  if (x.rows() != 1 && x.cols() != 1)
    throw ShapeError("softmax: expected a vector, got " + x.shape_str());
  if (x.value().hasNaN()) throw NumericError("softmax: NaN input");
  const bool column = x.cols() == 1;
  Tensor flat = column ? reshape(x, 1, x.rows()) : x;
  Tensor s = softmax_rows(flat);
  return column ? reshape(s, x.rows(), 1) : s;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  if (ids.empty()) throw ShapeError("gather_rows: empty index list");
  for (int id : ids)
    if (id < 0 || id >= table.rows())
      throw ConfigError("gather_rows: row index " + std::to_string(id) +
                        " out of range for table " + table.shape_str());
  Mat out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, table, [ids, r = table.rows(), c = table.cols()](const Mat& g) -> Mat {
    Mat back = Mat::Zero(r, c);
    for (std::size_t i = 0; i < ids.size(); ++i)
      back.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    return back;
  });
  return emit(table.tape(), std::move(out), std::move(edges));
}

Tensor bag_mean_rows(const Tensor& table, const std::vector<std::vector<int>>& bags) {
  if (bags.empty()) throw ShapeError("bag_mean_rows: empty bag list");
  Mat out = Mat::Zero(static_cast<Eigen::Index>(bags.size()), table.cols());
  for (std::size_t b = 0; b < bags.size(); ++b) {
    if (bags[b].empty())
      throw ConfigError("bag_mean_rows: bag " + std::to_string(b) + " is empty");
    for (int id : bags[b]) {
      if (id < 0 || id >= table.rows())
        throw ConfigError("bag_mean_rows: row index " + std::to_string(id) +
                          " out of range for table " + table.shape_str());
      out.row(static_cast<Eigen::Index>(b)) += table.value().row(id);
    }
    out.row(static_cast<Eigen::Index>(b)) /= static_cast<double>(bags[b].size());
  }
  std::vector<Tape::Edge> edges;
  maybe_edge(edges, table, [bags, r = table.rows(), c = table.cols()](const Mat& g) -> Mat {
    Mat back = Mat::Zero(r, c);
    for (std::size_t b = 0; b < bags.size(); ++b) {
      const double w = 1.0 / static_cast<double>(bags[b].size());
      for (int id : bags[b]) back.row(id) += w * g.row(static_cast<Eigen::Index>(b));
    }
    return back;
  });
  return emit(table.tape(), std::move(out), std::move(edges));
}

Tensor column_standardize(const Tensor& z, double eps) {
  if (z.rows() < 2)
    throw ConfigError("column_standardize: batch of " + std::to_string(z.rows()) +
                      " is too small (need >= 2 rows)");
  Tensor mu = col_mean(z);
  Tensor centered = bsub_row(z, mu);
  Tensor var = col_mean(square(centered));
  Tensor sd = clamp_min(sqrt(var), eps);
  return bdiv_row(centered, sd);
}

Tensor l2_normalize_rows(const Tensor& z, double eps) {
  Tensor norms = clamp_min(sqrt(row_sum(square(z))), eps);
  return bdiv_col(z, norms);
}

Tensor cosine_sim(const Tensor& a, const Tensor& b, double eps) {
  check_same_shape("cosine_sim", a, b);
  if (a.rows() != 1 && a.cols() != 1)
    throw ShapeError("cosine_sim: expected vectors, got " + a.shape_str());
  if (a.value().norm() == 0.0 || b.value().norm() == 0.0)
    g_degenerate_cosine.fetch_add(1, std::memory_order_relaxed);
  Tensor dot = sum(mul(a, b));
  Tensor denom_a = clamp_min(sqrt(sum(square(a))), eps);
  Tensor denom_b = clamp_min(sqrt(sum(square(b))), eps);
  return div(dot, mul(denom_a, denom_b));
}

std::uint64_t degenerate_cosine_count() {
  return g_degenerate_cosine.load(std::memory_order_relaxed);
}

void reset_degenerate_cosine_count() {
  g_degenerate_cosine.store(0, std::memory_order_relaxed);
}

double finite_difference_check(const ScalarFn& f, const std::vector<Mat>& theta, double h) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(theta.size());
  for (const Mat& m : theta) leaves.push_back(tape.leaf(m));
  Tensor loss = f(tape, leaves);
  if (loss.size() != 1)
    throw ShapeError("finite_difference_check: f must return a scalar, got " +
                     loss.shape_str());
  if (!std::isfinite(loss.scalar_value()))
    throw NumericError("finite_difference_check: f is non-finite at theta");
  tape.backward(loss);
  std::vector<Mat> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& l : leaves) analytic.push_back(tape.grad(l));

  // Probe points run as constants, so only values are computed.
  auto eval_at = [&](const std::vector<Mat>& point) -> double {
    Tape probe;
    std::vector<Tensor> consts;
    consts.reserve(point.size());
    for (const Mat& m : point) consts.push_back(Tensor::constant(m));
    double v = f(probe, consts).scalar_value();
    if (!std::isfinite(v))
      throw NumericError("finite_difference_check: f is non-finite at a probe point");
    return v;
  };

  double max_rel = 0.0;
  std::vector<Mat> probe = theta;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (Eigen::Index i = 0; i < probe[p].size(); ++i) {
      double* slot = probe[p].data() + i;
      const double saved = *slot;
      *slot = saved + h;
      const double up = eval_at(probe);
      *slot = saved - h;
      const double down = eval_at(probe);
      *slot = saved;
      const double central = (up - down) / (2.0 * h);
      const double rel = std::abs(analytic[p].data()[i] - central) /
                         std::max(1e-8, std::abs(central));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace smile::ad
