#include "adv/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace adv {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// out[oc] += w[oc][ic] (*) x[ic], stride 1, zero padding k/2.
void conv2d_forward(const Tensor& x, const Tensor& w, Tensor& out) {
  const int ci = static_cast<int>(x.extent(0));
  const int h = static_cast<int>(x.extent(1));
  const int wd = static_cast<int>(x.extent(2));
  const int co = static_cast<int>(w.extent(0));
  const int k = static_cast<int>(w.extent(2));
  const int pad = k / 2;
  const double* xd = x.data();
  const double* wdta = w.data();
  double* od = out.data();
  for (int oc = 0; oc < co; ++oc) {
    double* oplane = od + static_cast<std::size_t>(oc) * h * wd;
    for (int ic = 0; ic < ci; ++ic) {
      const double* xplane = xd + static_cast<std::size_t>(ic) * h * wd;
      const double* wk = wdta + ((static_cast<std::size_t>(oc) * ci + ic) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const double wv = wk[ky * k + kx];
          const int ylo = dy < 0 ? -dy : 0;
          const int yhi = dy > 0 ? h - dy : h;
          const int xlo = dx < 0 ? -dx : 0;
          const int xhi = dx > 0 ? wd - dx : wd;
          for (int y = ylo; y < yhi; ++y) {
            double* orow = oplane + static_cast<std::size_t>(y) * wd;
            const double* srow = xplane + static_cast<std::size_t>(y + dy) * wd + dx;
            for (int xx = xlo; xx < xhi; ++xx) orow[xx] += wv * srow[xx];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Tensor& w, const Tensor& gout, Tensor& gx) {
  const int ci = static_cast<int>(gx.extent(0));
  const int h = static_cast<int>(gx.extent(1));
  const int wd = static_cast<int>(gx.extent(2));
  const int co = static_cast<int>(w.extent(0));
  const int k = static_cast<int>(w.extent(2));
  const int pad = k / 2;
  const double* god = gout.data();
  const double* wdta = w.data();
  double* gxd = gx.data();
  for (int ic = 0; ic < ci; ++ic) {
    double* gplane = gxd + static_cast<std::size_t>(ic) * h * wd;
    for (int oc = 0; oc < co; ++oc) {
      const double* goplane = god + static_cast<std::size_t>(oc) * h * wd;
      const double* wk = wdta + ((static_cast<std::size_t>(oc) * ci + ic) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const double wv = wk[ky * k + kx];
          // gx[y][x] += wv * gout[y - dy][x - dx]
          const int ylo = dy > 0 ? dy : 0;
          const int yhi = dy < 0 ? h + dy : h;
          const int xlo = dx > 0 ? dx : 0;
          const int xhi = dx < 0 ? wd + dx : wd;
          for (int y = ylo; y < yhi; ++y) {
            double* grow = gplane + static_cast<std::size_t>(y) * wd;
            const double* srow = goplane + static_cast<std::size_t>(y - dy) * wd - dx;
            for (int xx = xlo; xx < xhi; ++xx) grow[xx] += wv * srow[xx];
          }
        }
      }
    }
  }
}

void conv2d_backward_weights(const Tensor& x, const Tensor& gout, Tensor& gw) {
  const int ci = static_cast<int>(x.extent(0));
  const int h = static_cast<int>(x.extent(1));
  const int wd = static_cast<int>(x.extent(2));
  const int co = static_cast<int>(gw.extent(0));
  const int k = static_cast<int>(gw.extent(2));
  const int pad = k / 2;
  const double* xd = x.data();
  const double* god = gout.data();
  double* gwd = gw.data();
  for (int oc = 0; oc < co; ++oc) {
    const double* goplane = god + static_cast<std::size_t>(oc) * h * wd;
    for (int ic = 0; ic < ci; ++ic) {
      const double* xplane = xd + static_cast<std::size_t>(ic) * h * wd;
      double* gwk = gwd + ((static_cast<std::size_t>(oc) * ci + ic) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const int ylo = dy < 0 ? -dy : 0;
          const int yhi = dy > 0 ? h - dy : h;
          const int xlo = dx < 0 ? -dx : 0;
          const int xhi = dx > 0 ? wd - dx : wd;
          double acc = 0.0;
          for (int y = ylo; y < yhi; ++y) {
            const double* grow = goplane + static_cast<std::size_t>(y) * wd;
            const double* srow = xplane + static_cast<std::size_t>(y + dy) * wd + dx;
            for (int xx = xlo; xx < xhi; ++xx) acc += grow[xx] * srow[xx];
          }
          gwk[ky * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

NodeId Tape::push(Node n, const char* op_name) {
  if (!n.value.all_finite())
    throw std::runtime_error(std::string("tape: non-finite value after ") + op_name);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("tape: node id out of range");
}

NodeId Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n), "leaf");
}

NodeId Tape::conv2d(NodeId x, NodeId w) {
  check(x);
  check(w);
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  require(xv.rank() == 3, "conv2d: input must be C x H x W, got " + xv.shape_str());
  require(wv.rank() == 4, "conv2d: weights must be Co x Ci x k x k, got " + wv.shape_str());
  require(wv.extent(2) == wv.extent(3) && wv.extent(2) % 2 == 1,
          "conv2d: kernel must be square with odd size, got " + wv.shape_str());
  require(wv.extent(1) == xv.extent(0),
          "conv2d: channel mismatch between input " + xv.shape_str() + " and weights " +
              wv.shape_str());
  Node n;
  n.op = Op::kConv2d;
  n.a = x;
  n.b = w;
  n.value = Tensor({wv.extent(0), xv.extent(1), xv.extent(2)});
  conv2d_forward(xv, wv, n.value);
  return push(std::move(n), "conv2d");
}

NodeId Tape::bias(NodeId x, NodeId b) {
  check(x);
  check(b);
  const Tensor& xv = nodes_[x].value;
  const Tensor& bv = nodes_[b].value;
  require(bv.rank() == 1, "bias: bias must be a vector, got " + bv.shape_str());
  require(xv.rank() == 2 || xv.rank() == 3,
          "bias: input must be rank 2 or 3, got " + xv.shape_str());
  const std::size_t channels = xv.rank() == 3 ? xv.extent(0) : xv.extent(1);
  require(bv.extent(0) == channels, "bias: length " + bv.shape_str() +
                                        " does not match input " + xv.shape_str());
  Node n;
  n.op = Op::kBias;
  n.a = x;
  n.b = b;
  n.value = xv;
  if (xv.rank() == 3) {
    const std::size_t plane = xv.extent(1) * xv.extent(2);
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = n.value.data() + c * plane;
      const double add = bv[c];
      for (std::size_t i = 0; i < plane; ++i) row[i] += add;
    }
  } else {
    const std::size_t rows = xv.extent(0);
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = n.value.data() + r * channels;
      for (std::size_t c = 0; c < channels; ++c) row[c] += bv[c];
    }
  }
  return push(std::move(n), "bias");
}

NodeId Tape::relu(NodeId x) {
  check(x);
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.value = nodes_[x].value;
  for (std::size_t i = 0; i < n.value.size(); ++i)
    if (n.value[i] < 0.0) n.value[i] = 0.0;
  return push(std::move(n), "relu");
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  require(av.rank() == 2 && bv.rank() == 2,
          "matmul: operands must be matrices, got " + av.shape_str() + " and " +
              bv.shape_str());
  require(av.extent(1) == bv.extent(0),
          "matmul: inner extents differ, " + av.shape_str() + " vs " + bv.shape_str());
  const std::size_t nr = av.extent(0), nk = av.extent(1), nm = bv.extent(1);
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.value = Tensor({nr, nm});
  for (std::size_t i = 0; i < nr; ++i) {
    double* orow = n.value.data() + i * nm;
    const double* arow = av.data() + i * nk;
    for (std::size_t k = 0; k < nk; ++k) {
      const double s = arow[k];
      const double* brow = bv.data() + k * nm;
      for (std::size_t j = 0; j < nm; ++j) orow[j] += s * brow[j];
    }
  }
  return push(std::move(n), "matmul");
}

NodeId Tape::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  require(same_shape(av, bv),
          "add: shape mismatch, " + av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = av;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += bv[i];
  return push(std::move(n), "add");
}

NodeId Tape::scale(NodeId a, double s) {
  check(a);
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = s;
  n.value = nodes_[a].value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= s;
  return push(std::move(n), "scale");
}

NodeId Tape::box_mean_pool(NodeId x, const Rect& roi) {
  check(x);
  const Tensor& xv = nodes_[x].value;
  require(xv.rank() == 3, "box_mean_pool: input must be C x H x W, got " + xv.shape_str());
  const int h = static_cast<int>(xv.extent(1));
  const int w = static_cast<int>(xv.extent(2));
  require(roi.x0 >= 0 && roi.y0 >= 0 && roi.x0 < roi.x1 && roi.y0 < roi.y1 &&
              roi.x1 <= w && roi.y1 <= h,
          "box_mean_pool: rectangle out of bounds for input " + xv.shape_str());
  const std::size_t channels = xv.extent(0);
  Node n;
  n.op = Op::kBoxMeanPool;
  n.a = x;
  n.roi = roi;
  n.value = Tensor({channels});
  const double inv = 1.0 / static_cast<double>(roi.area());
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (int y = roi.y0; y < roi.y1; ++y) {
      const double* row = xv.data() + (c * h + y) * w;
      for (int xx = roi.x0; xx < roi.x1; ++xx) acc += row[xx];
    }
    n.value[c] = acc * inv;
  }
  return push(std::move(n), "box_mean_pool");
}

NodeId Tape::concat_rows(std::span<const NodeId> rows) {
  require(!rows.empty(), "concat_rows: no rows");
  for (NodeId r : rows) check(r);
  const std::size_t cols = nodes_[rows[0]].value.size();
  for (NodeId r : rows)
    require(nodes_[r].value.rank() == 1 && nodes_[r].value.size() == cols,
            "concat_rows: rows must be equal-length vectors");
  Node n;
  n.op = Op::kConcatRows;
  n.rows.assign(rows.begin(), rows.end());
  n.value = Tensor({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::memcpy(n.value.data() + i * cols, nodes_[rows[i]].value.data(),
                cols * sizeof(double));
  return push(std::move(n), "concat_rows");
}

NodeId Tape::sum(NodeId a) {
  check(a);
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.value = Tensor({1});
  double acc = 0.0;
  const Tensor& av = nodes_[a].value;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  n.value[0] = acc;
  return push(std::move(n), "sum");
}

void Tape::backward(std::span<const std::pair<NodeId, Tensor>> seeds) {
  if (consumed_) throw std::runtime_error("tape: backward already ran on this record");
  consumed_ = true;
  for (Node& n : nodes_) n.grad = Tensor(n.value.shape());
  for (const auto& [id, seed] : seeds) {
    check(id);
    require(same_shape(seed, nodes_[id].value),
            "backward: seed shape " + seed.shape_str() + " does not match node " +
                nodes_[id].value.shape_str());
    if (!seed.all_finite()) throw std::runtime_error("backward: non-finite seed");
    Tensor& g = nodes_[id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }

  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad.all_finite())
      throw std::runtime_error("backward: non-finite intermediate gradient");
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kConv2d:
        conv2d_backward_input(nodes_[n.b].value, g, nodes_[n.a].grad);
        conv2d_backward_weights(nodes_[n.a].value, g, nodes_[n.b].grad);
        break;
      case Op::kBias: {
        Tensor& gx = nodes_[n.a].grad;
        Tensor& gb = nodes_[n.b].grad;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        const Tensor& xv = nodes_[n.a].value;
        if (xv.rank() == 3) {
          const std::size_t plane = xv.extent(1) * xv.extent(2);
          for (std::size_t c = 0; c < xv.extent(0); ++c) {
            double acc = 0.0;
            const double* row = g.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += row[i];
            gb[c] += acc;
          }
        } else {
          const std::size_t rows = xv.extent(0), cols = xv.extent(1);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* row = g.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gb[c] += row[c];
          }
        }
        break;
      }
      case Op::kRelu: {
        Tensor& gx = nodes_[n.a].grad;
        const Tensor& xv = nodes_[n.a].value;
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (xv[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::kMatMul: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        Tensor& ga = nodes_[n.a].grad;
        Tensor& gb = nodes_[n.b].grad;
        const std::size_t nr = av.extent(0), nk = av.extent(1), nm = bv.extent(1);
        for (std::size_t i = 0; i < nr; ++i) {
          const double* grow = g.data() + i * nm;
          double* garow = ga.data() + i * nk;
          for (std::size_t k = 0; k < nk; ++k) {
            const double* brow = bv.data() + k * nm;
            double acc = 0.0;
            for (std::size_t j = 0; j < nm; ++j) acc += grow[j] * brow[j];
            garow[k] += acc;
          }
        }
        for (std::size_t k = 0; k < nk; ++k) {
          double* gbrow = gb.data() + k * nm;
          for (std::size_t i = 0; i < nr; ++i) {
            const double s = av.data()[i * nk + k];
            const double* grow = g.data() + i * nm;
            for (std::size_t j = 0; j < nm; ++j) gbrow[j] += s * grow[j];
          }
        }
        break;
      }
      case Op::kAdd: {
        Tensor& ga = nodes_[n.a].grad;
        Tensor& gb = nodes_[n.b].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = nodes_[n.a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
        break;
      }
      case Op::kBoxMeanPool: {
        Tensor& gx = nodes_[n.a].grad;
        const int h = static_cast<int>(nodes_[n.a].value.extent(1));
        const int w = static_cast<int>(nodes_[n.a].value.extent(2));
        const double inv = 1.0 / static_cast<double>(n.roi.area());
        for (std::size_t c = 0; c < gx.extent(0); ++c) {
          const double add = g[c] * inv;
          for (int y = n.roi.y0; y < n.roi.y1; ++y) {
            double* row = gx.data() + (c * h + y) * w;
            for (int xx = n.roi.x0; xx < n.roi.x1; ++xx) row[xx] += add;
          }
        }
        break;
      }
      case Op::kConcatRows: {
        const std::size_t cols = n.value.extent(1);
        for (std::size_t i = 0; i < n.rows.size(); ++i) {
          Tensor& gr = nodes_[n.rows[i]].grad;
          const double* grow = g.data() + i * cols;
          for (std::size_t c = 0; c < cols; ++c) gr[c] += grow[c];
        }
        break;
      }
      case Op::kSum: {
        Tensor& ga = nodes_[n.a].grad;
        const double s = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s;
        break;
      }
    }
  }
}

const Tensor& Tape::grad(NodeId id) const {
  check(id);
  if (!consumed_) throw std::runtime_error("tape: grad queried before backward");
  return nodes_[id].grad;
}

Tensor grad_input(Tape& tape, NodeId output, const Tensor& coeffs, NodeId input) {
  std::pair<NodeId, Tensor> seed{output, coeffs};
  tape.backward(std::span<const std::pair<NodeId, Tensor>>(&seed, 1));
  Tensor g = tape.grad(input);
  if (!g.all_finite()) throw std::runtime_error("grad_input: non-finite gradient");
  return g;
}

Tensor finite_diff(const std::function<double(const Tensor&)>& objective,
                   const Tensor& input, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  Tensor g(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double hi = objective(probe);
    probe[i] = orig - step;
    const double lo = objective(probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b))
    throw std::invalid_argument("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = 1.0;
    if (std::fabs(a[i]) > denom) denom = std::fabs(a[i]);
    if (std::fabs(b[i]) > denom) denom = std::fabs(b[i]);
    const double err = std::fabs(a[i] - b[i]) / denom;
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace adv
