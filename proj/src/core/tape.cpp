#include "mata/core/tape.hpp"

#include <cmath>

#include "mata/core/kernels.hpp"

namespace mata::core {

namespace {
const KernelTable& kr() { return active_kernels(); }
}  // namespace

int Tape::push(std::size_t numel) {
  nodes_.push_back(Node{numel, {}});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::gbuf(int id) {
  auto& buf = grads_[static_cast<std::size_t>(id)];
  if (buf.empty()) buf.assign(nodes_[static_cast<std::size_t>(id)].numel, 0.0);
  return buf;
}

void Tape::acc(int id, const double* g, std::size_t n) {
  if (id < 0) return;
  kr().axpy(1.0, g, gbuf(id).data(), n);
}

Tensor Tape::watch(const ParamStore& store, const std::string& name) {
  Tensor t = param(store, name);
  if (!recording_) return t;
  t.node = push(t.numel());
  t.requires_grad = true;
  watched_.emplace_back(name, t.node);
  return t;
}

Tensor Tape::input(const Tensor& t) {
  Tensor out = t;
  if (!recording_) {
    out.node = -1;
    return out;
  }
  out.node = push(out.numel());
  out.requires_grad = true;
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.shape[1] != b.shape[0])
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  kr().gemm_nn(a.values.data(), b.values.data(), out.values.data(), m, k, n);
  if (!recording_ || (a.node < 0 && b.node < 0)) return out;
  const int id = push(out.numel());
  const int ia = a.node, ib = b.node;
  nodes_[id].back = [id, ia, ib, m, k, n, av = a.values, bv = b.values](Tape& t) {
    const double* g = t.grads_[id].data();
    if (ia >= 0) kr().gemm_nt(g, bv.data(), t.gbuf(ia).data(), m, n, k);
    if (ib >= 0) kr().gemm_tn(av.data(), g, t.gbuf(ib).data(), k, m, n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape[0], n = a.shape[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[j * m + i] = a.values[i * n + j];
  if (!recording_ || a.node < 0) return out;
  const int id = push(out.numel());
  const int ia = a.node;
  nodes_[id].back = [id, ia, m, n](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ia).data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape);
  kr().add(a.values.data(), b.values.data(), out.values.data(), out.numel());
  if (!recording_ || (a.node < 0 && b.node < 0)) return out;
  const int id = push(out.numel());
  const int ia = a.node, ib = b.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ia, ib, n](Tape& t) {
    const double* g = t.grads_[id].data();
    t.acc(ia, g, n);
    t.acc(ib, g, n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape);
  kr().sub(a.values.data(), b.values.data(), out.values.data(), out.numel());
  if (!recording_ || (a.node < 0 && b.node < 0)) return out;
  const int id = push(out.numel());
  const int ia = a.node, ib = b.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ia, ib, n](Tape& t) {
    const double* g = t.grads_[id].data();
    t.acc(ia, g, n);
    if (ib >= 0) kr().axpy(-1.0, g, t.gbuf(ib).data(), n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape);
  kr().mul(a.values.data(), b.values.data(), out.values.data(), out.numel());
  if (!recording_ || (a.node < 0 && b.node < 0)) return out;
  const int id = push(out.numel());
  const int ia = a.node, ib = b.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ia, ib, n, av = a.values, bv = b.values](Tape& t) {
    const double* g = t.grads_[id].data();
    if (ia >= 0) kr().mul_acc(g, bv.data(), t.gbuf(ia).data(), n);
    if (ib >= 0) kr().mul_acc(g, av.data(), t.gbuf(ib).data(), n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out(a.shape);
  kr().scale(a.values.data(), c, out.values.data(), out.numel());
  if (!recording_ || a.node < 0) return out;
  const int id = push(out.numel());
  const int ia = a.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ia, c, n](Tape& t) {
    kr().axpy(c, t.grads_[id].data(), t.gbuf(ia).data(), n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.values[i] = a.values[i] + c;
  if (!recording_ || a.node < 0) return out;
  const int id = push(out.numel());
  const int ia = a.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ia, n](Tape& t) { t.acc(ia, t.grads_[id].data(), n); };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::add_rows(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_rows");
  require_rank(b, 1, "add_rows");
  if (x.shape[1] != b.shape[0])
    throw DimensionError("add_rows: shapes differ: " + shape_str(x.shape) + " vs " +
                         shape_str(b.shape));
  const std::size_t m = x.shape[0], n = x.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    kr().add(x.values.data() + i * n, b.values.data(), out.values.data() + i * n, n);
  if (!recording_ || (x.node < 0 && b.node < 0)) return out;
  const int id = push(out.numel());
  const int ix = x.node, ib = b.node;
  nodes_[id].back = [id, ix, ib, m, n](Tape& t) {
    const double* g = t.grads_[id].data();
    t.acc(ix, g, m * n);
    if (ib >= 0) {
      double* gb = t.gbuf(ib).data();
      for (std::size_t i = 0; i < m; ++i) kr().axpy(1.0, g + i * n, gb, n);
    }
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::repeat_rows(const Tensor& v, std::size_t m) {
  const bool row_matrix = v.rank() == 2 && v.shape[0] == 1;
  if (v.rank() != 1 && !row_matrix)
    throw DimensionError("repeat_rows: expected [n] or [1xn], got " + shape_str(v.shape));
  const std::size_t n = row_matrix ? v.shape[1] : v.shape[0];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] = v.values[j];
  if (!recording_ || v.node < 0) return out;
  const int id = push(out.numel());
  const int iv = v.node;
  nodes_[id].back = [id, iv, m, n](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gv = t.gbuf(iv).data();
    for (std::size_t i = 0; i < m; ++i) kr().axpy(1.0, g + i * n, gv, n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() == 1 && b.rank() == 1 && axis == 0) {
    Tensor out({a.shape[0] + b.shape[0]});
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + a.shape[0]);
    if (!recording_ || (a.node < 0 && b.node < 0)) return out;
    const int id = push(out.numel());
    const int ia = a.node, ib = b.node;
    const std::size_t na = a.shape[0], nb = b.shape[0];
    nodes_[id].back = [id, ia, ib, na, nb](Tape& t) {
      const double* g = t.grads_[id].data();
      t.acc(ia, g, na);
      t.acc(ib, g + na, nb);
    };
    out.node = id;
    out.requires_grad = true;
    return out;
  }
  require_rank(a, 2, "concat");
  require_rank(b, 2, "concat");
  if (axis == 0) {
    if (a.shape[1] != b.shape[1])
      throw DimensionError("concat axis 0: shapes differ: " + shape_str(a.shape) +
                           " vs " + shape_str(b.shape));
    const std::size_t ma = a.shape[0], mb = b.shape[0], n = a.shape[1];
    Tensor out({ma + mb, n});
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + ma * n);
    if (!recording_ || (a.node < 0 && b.node < 0)) return out;
    const int id = push(out.numel());
    const int ia = a.node, ib = b.node;
    nodes_[id].back = [id, ia, ib, ma, mb, n](Tape& t) {
      const double* g = t.grads_[id].data();
      t.acc(ia, g, ma * n);
      t.acc(ib, g + ma * n, mb * n);
    };
    out.node = id;
    out.requires_grad = true;
    return out;
  }
  if (axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  if (a.shape[0] != b.shape[0])
    throw DimensionError("concat axis 1: shapes differ: " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
  const std::size_t m = a.shape[0], na = a.shape[1], nb = b.shape[1];
  Tensor out({m, na + nb});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(a.values.begin() + i * na, a.values.begin() + (i + 1) * na,
              out.values.begin() + i * (na + nb));
    std::copy(b.values.begin() + i * nb, b.values.begin() + (i + 1) * nb,
              out.values.begin() + i * (na + nb) + na);
  }
  if (!recording_ || (a.node < 0 && b.node < 0)) return out;
  const int id = push(out.numel());
  const int ia = a.node, ib = b.node;
  nodes_[id].back = [id, ia, ib, m, na, nb](Tape& t) {
    const double* g = t.grads_[id].data();
    if (ia >= 0) {
      double* ga = t.gbuf(ia).data();
      for (std::size_t i = 0; i < m; ++i)
        kr().axpy(1.0, g + i * (na + nb), ga + i * na, na);
    }
    if (ib >= 0) {
      double* gb = t.gbuf(ib).data();
      for (std::size_t i = 0; i < m; ++i)
        kr().axpy(1.0, g + i * (na + nb) + na, gb + i * nb, nb);
    }
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t r0, std::size_t nrows) {
  require_rank(x, 2, "slice_rows");
  if (r0 + nrows > x.shape[0])
    throw DimensionError("slice_rows: rows [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + nrows) + ") out of " + shape_str(x.shape));
  const std::size_t n = x.shape[1];
  Tensor out({nrows, n});
  std::copy(x.values.begin() + r0 * n, x.values.begin() + (r0 + nrows) * n,
            out.values.begin());
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  nodes_[id].back = [id, ix, r0, nrows, n](Tape& t) {
    kr().axpy(1.0, t.grads_[id].data(), t.gbuf(ix).data() + r0 * n, nrows * n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::slice_cols(const Tensor& x, std::size_t c0, std::size_t ncols) {
  require_rank(x, 2, "slice_cols");
  if (c0 + ncols > x.shape[1])
    throw DimensionError("slice_cols: cols [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + ncols) + ") out of " + shape_str(x.shape));
  const std::size_t m = x.shape[0], n = x.shape[1];
  Tensor out({m, ncols});
  for (std::size_t i = 0; i < m; ++i)
    std::copy(x.values.begin() + i * n + c0, x.values.begin() + i * n + c0 + ncols,
              out.values.begin() + i * ncols);
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  nodes_[id].back = [id, ix, m, n, c0, ncols](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < m; ++i)
      kr().axpy(1.0, g + i * ncols, gx + i * n + c0, ncols);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::slice_vec(const Tensor& v, std::size_t off, std::size_t len) {
  require_rank(v, 1, "slice_vec");
  if (off + len > v.shape[0])
    throw DimensionError("slice_vec: range [" + std::to_string(off) + ", " +
                         std::to_string(off + len) + ") out of " + shape_str(v.shape));
  Tensor out({len});
  std::copy(v.values.begin() + off, v.values.begin() + off + len, out.values.begin());
  if (!recording_ || v.node < 0) return out;
  const int id = push(out.numel());
  const int iv = v.node;
  nodes_[id].back = [id, iv, off, len](Tape& t) {
    kr().axpy(1.0, t.grads_[id].data(), t.gbuf(iv).data() + off, len);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape) + " to " + shape_str(shape) +
                         " changes element count");
  Tensor out(std::move(shape), x.values);
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n](Tape& t) { t.acc(ix, t.grads_[id].data(), n); };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  Tensor out(x.shape);
  kr().relu(x.values.data(), out.values.data(), x.numel());
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n, xv = x.values](Tape& t) {
    kr().relu_grad_acc(xv.data(), t.grads_[id].data(), t.gbuf(ix).data(), n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::leaky_relu(const Tensor& x, double slope) {
  Tensor out(x.shape);
  kr().leaky_relu(x.values.data(), slope, out.values.data(), x.numel());
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n, slope, xv = x.values](Tape& t) {
    kr().leaky_relu_grad_acc(xv.data(), slope, t.grads_[id].data(), t.gbuf(ix).data(), n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::tanh(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.values[i] = std::tanh(x.values[i]);
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n, yv = out.values](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.values[i];
    if (v >= 0.0) {
      out.values[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out.values[i] = e / (1.0 + e);
    }
  }
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n, yv = out.values](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::log(const Tensor& x) {
  constexpr double kClamp = 1e-12;
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.values[i] = std::log(x.values[i] > kClamp ? x.values[i] : kClamp);
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n, xv = x.values](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < n; ++i)
      if (xv[i] > kClamp) gx[i] += g[i] / xv[i];
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::exp(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.values[i] = std::exp(x.values[i]);
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  const std::size_t n = out.numel();
  nodes_[id].back = [id, ix, n, yv = out.values](Tape& t) {
    kr().mul_acc(t.grads_[id].data(), yv.data(), t.gbuf(ix).data(), n);
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.shape[0], n = x.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.values.data() + i * n;
    double* yi = out.values.data() + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = xi[j] > mx ? xi[j] : mx;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      s += yi[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) yi[j] *= inv;
  }
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  nodes_[id].back = [id, ix, m, n, yv = out.values](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* yi = yv.data() + i * n;
      const double* gi = g + i * n;
      const double dotgy = kr().dot(gi, yi, n);
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += yi[j] * (gi[j] - dotgy);
    }
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::log_softmax_rows(const Tensor& x) {
  require_rank(x, 2, "log_softmax_rows");
  const std::size_t m = x.shape[0], n = x.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.values.data() + i * n;
    double* yi = out.values.data() + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = xi[j] > mx ? xi[j] : mx;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(xi[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) yi[j] = xi[j] - lse;
  }
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  nodes_[id].back = [id, ix, m, n, yv = out.values](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* gi = g + i * n;
      const double gs = kr().sum(gi, n);
      const double* yi = yv.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gi[j] - std::exp(yi[j]) * gs;
    }
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::mean_axis(const Tensor& x, int axis) {
  require_rank(x, 2, "mean_axis");
  const std::size_t m = x.shape[0], n = x.shape[1];
  if (axis == 0) {
    Tensor out({n});
    for (std::size_t i = 0; i < m; ++i)
      kr().axpy(1.0, x.values.data() + i * n, out.values.data(), n);
    kr().scale(out.values.data(), 1.0 / static_cast<double>(m), out.values.data(), n);
    if (!recording_ || x.node < 0) return out;
    const int id = push(out.numel());
    const int ix = x.node;
    nodes_[id].back = [id, ix, m, n](Tape& t) {
      const double* g = t.grads_[id].data();
      double* gx = t.gbuf(ix).data();
      const double inv = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) kr().axpy(inv, g, gx + i * n, n);
    };
    out.node = id;
    out.requires_grad = true;
    return out;
  }
  if (axis != 1) throw DimensionError("mean_axis: axis must be 0 or 1");
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i)
    out.values[i] = kr().sum(x.values.data() + i * n, n) / static_cast<double>(n);
  if (!recording_ || x.node < 0) return out;
  const int id = push(out.numel());
  const int ix = x.node;
  nodes_[id].back = [id, ix, m, n](Tape& t) {
    const double* g = t.grads_[id].data();
    double* gx = t.gbuf(ix).data();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i] * inv;
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::sum_all(const Tensor& x) {
  Tensor out = Tensor::scalar(kr().sum(x.values.data(), x.numel()));
  if (!recording_ || x.node < 0) return out;
  const int id = push(1);
  const int ix = x.node;
  const std::size_t n = x.numel();
  nodes_[id].back = [id, ix, n](Tape& t) {
    const double g = t.grads_[id][0];
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

Tensor Tape::mean_all(const Tensor& x) {
  const std::size_t n = x.numel();
  Tensor out = Tensor::scalar(kr().sum(x.values.data(), n) / static_cast<double>(n));
  if (!recording_ || x.node < 0) return out;
  const int id = push(1);
  const int ix = x.node;
  nodes_[id].back = [id, ix, n](Tape& t) {
    const double g = t.grads_[id][0] / static_cast<double>(n);
    double* gx = t.gbuf(ix).data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  };
  out.node = id;
  out.requires_grad = true;
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size()))
    throw ContractError("backward: loss is not a node of this tape");
  if (nodes_[static_cast<std::size_t>(loss.node)].numel != 1)
    throw ContractError("backward: loss must be scalar, node has " +
                        std::to_string(nodes_[static_cast<std::size_t>(loss.node)].numel) +
                        " elements");
  grads_.assign(nodes_.size(), {});
  gbuf(loss.node)[0] = 1.0;
  for (int id = loss.node; id >= 0; --id) {
    if (grads_[static_cast<std::size_t>(id)].empty()) continue;
    auto& back = nodes_[static_cast<std::size_t>(id)].back;
    if (back) back(*this);
  }
}

ParamStore Tape::gradients(const ParamStore& params) const {
  ParamStore out;
  for (const auto& [name, tensor] : params) out[name] = Tensor::zeros(tensor.shape);
  for (const auto& [name, id] : watched_) {
    auto it = out.find(name);
    if (it == out.end()) continue;
    const auto& g = grads_.size() > static_cast<std::size_t>(id)
                        ? grads_[static_cast<std::size_t>(id)]
                        : std::vector<double>{};
    if (g.empty()) continue;
    if (g.size() != it->second.numel())
      throw ContractError("gradients: watched '" + name + "' size mismatch");
    kr().axpy(1.0, g.data(), it->second.values.data(), g.size());
  }
  return out;
}

std::vector<double> Tape::grad_of(const Tensor& t) const {
  if (t.node < 0 || t.node >= static_cast<int>(nodes_.size()))
    throw ContractError("grad_of: tensor is not a node of this tape");
  const auto& g = grads_.size() > static_cast<std::size_t>(t.node)
                      ? grads_[static_cast<std::size_t>(t.node)]
                      : std::vector<double>{};
  if (g.empty()) return std::vector<double>(t.numel(), 0.0);
  return g;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
  watched_.clear();
}

}  // namespace mata::core
