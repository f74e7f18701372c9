#include "odeinv/tape.hpp"

namespace odeinv {

std::atomic<uint64_t> TapeStats::nodes_created{0};
std::atomic<uint64_t> TapeStats::grad_allocs{0};
std::atomic<uint64_t> TapeStats::backward_sweeps{0};
std::atomic<uint64_t> TapeStats::owner_grad_allocs[kNumParamOwners] = {};

namespace {

using StridedMap = Eigen::Map<Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;

StridedMap strided_cols(Eigen::MatrixXd& m, int rows, int count, int stride, int col0) {
  return StridedMap(m.data() + static_cast<long>(col0) * rows, rows, count,
                    Eigen::OuterStride<>(static_cast<long>(stride) * rows));
}
ConstStridedMap strided_cols(const Eigen::MatrixXd& m, int rows, int count, int stride,
                             int col0) {
  return ConstStridedMap(m.data() + static_cast<long>(col0) * rows, rows, count,
                         Eigen::OuterStride<>(static_cast<long>(stride) * rows));
}

}  // namespace

int Tape::push(Node n) {
  TapeStats::nodes_created.fetch_add(1, std::memory_order_relaxed);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

int Tape::leaf(const Tensor& t, ParamOwner owner) {
  Node n;
  n.op = Op::leaf;
  n.ext = &t;
  n.requires_grad = true;
  n.owner = owner;
  return push(std::move(n));
}

int Tape::constant(const Tensor& t) {
  Node n;
  n.op = Op::constant;
  n.ext = &t;
  return push(std::move(n));
}

int Tape::constant_owned(Tensor t) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(t);
  return push(std::move(n));
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad = Tensor::zeros_like(val(id));
    n.grad_live = true;
    TapeStats::grad_allocs.fetch_add(1, std::memory_order_relaxed);
    TapeStats::owner_grad_allocs[static_cast<int>(n.owner)].fetch_add(1,
                                                                      std::memory_order_relaxed);
  }
  return n.grad;
}

void Tape::backward(int loss_id) {
  if (!val(loss_id).is_scalar()) throw NumericError("tape_gradient: loss must be a scalar node");
  TapeStats::backward_sweeps.fetch_add(1, std::memory_order_relaxed);
  grad_buf(loss_id).m(0, 0) = 1.0;
  for (int id = loss_id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.grad_live || !n.requires_grad) continue;
    backward_node(id);
  }
}

namespace {

bool needs(const Tape& t, int id) { return id >= 0 && t.node(id).requires_grad; }

}  // namespace

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::leaf:
    case Op::constant:
      return;
    case Op::add: {
      if (needs(*this, n.a)) grad_buf(n.a).m += g.m;
      if (needs(*this, n.b)) grad_buf(n.b).m += g.m;
      return;
    }
    case Op::mul: {
      if (needs(*this, n.a)) grad_buf(n.a).m.array() += g.m.array() * val(n.b).m.array();
      if (needs(*this, n.b)) grad_buf(n.b).m.array() += g.m.array() * val(n.a).m.array();
      return;
    }
    case Op::relu: {
      if (needs(*this, n.a))
        grad_buf(n.a).m.array() +=
            g.m.array() * (val(n.a).m.array() > 0.0).cast<double>();
      return;
    }
    case Op::sum: {
      if (needs(*this, n.a)) grad_buf(n.a).m.array() += g.value();
      return;
    }
    case Op::channel_linear: {
      const Tensor& x = val(n.a);
      const Tensor& w = val(n.b);
      if (needs(*this, n.a)) grad_buf(n.a).m.noalias() += w.m.transpose() * g.m;
      if (needs(*this, n.b)) grad_buf(n.b).m.noalias() += g.m * x.m.transpose();
      if (needs(*this, n.c)) grad_buf(n.c).m.col(0) += g.m.rowwise().sum();
      return;
    }
    case Op::spectral_conv: {
      const SpectralBasis& basis = *n.basis;
      const Eigen::MatrixXd& spec = n.saved[0];  // input spectra (C x B*2m)
      const Tensor& x = val(n.a);
      const Eigen::MatrixXd& rre = val(n.b).m;
      const Eigen::MatrixXd& rim = val(n.c).m;
      const int c = x.rows();
      const int b = x.batch;
      const int m = basis.modes;

      Eigen::MatrixXd dmixed(c, static_cast<long>(b) * 2 * m);
      for (int i = 0; i < b; ++i)
        dmixed.middleCols(static_cast<long>(i) * 2 * m, 2 * m).noalias() =
            g.slab(i) * basis.inv.transpose();

      const bool want_x = needs(*this, n.a);
      const bool want_r = needs(*this, n.b) || needs(*this, n.c);
      Eigen::MatrixXd dspec;
      if (want_x) dspec.setZero(c, static_cast<long>(b) * 2 * m);
      for (int k = 0; k < m; ++k) {
        auto rre_k = rre.middleCols(static_cast<long>(k) * c, c);
        auto rim_k = rim.middleCols(static_cast<long>(k) * c, c);
        auto xre = strided_cols(spec, c, b, 2 * m, k);
        auto xim = strided_cols(spec, c, b, 2 * m, m + k);
        auto dyre = strided_cols(dmixed, c, b, 2 * m, k);
        auto dyim = strided_cols(dmixed, c, b, 2 * m, m + k);
        if (want_x) {
          auto dxre = strided_cols(dspec, c, b, 2 * m, k);
          auto dxim = strided_cols(dspec, c, b, 2 * m, m + k);
          dxre.noalias() += rre_k.transpose() * dyre;
          dxre.noalias() += rim_k.transpose() * dyim;
          dxim.noalias() -= rim_k.transpose() * dyre;
          dxim.noalias() += rre_k.transpose() * dyim;
        }
        if (want_r) {
          if (needs(*this, n.b)) {
            auto drre_k = grad_buf(n.b).m.middleCols(static_cast<long>(k) * c, c);
            drre_k.noalias() += dyre * Eigen::MatrixXd(xre).transpose();
            drre_k.noalias() += dyim * Eigen::MatrixXd(xim).transpose();
          }
          if (needs(*this, n.c)) {
            auto drim_k = grad_buf(n.c).m.middleCols(static_cast<long>(k) * c, c);
            drim_k.noalias() -= dyre * Eigen::MatrixXd(xim).transpose();
            drim_k.noalias() += dyim * Eigen::MatrixXd(xre).transpose();
          }
        }
      }
      if (want_x) {
        Tensor& dx = grad_buf(n.a);
        for (int i = 0; i < b; ++i)
          dx.slab(i).noalias() +=
              dspec.middleCols(static_cast<long>(i) * 2 * m, 2 * m) * basis.fwd.transpose();
      }
      return;
    }
    case Op::batch_norm: {
      if (!needs(*this, n.a)) return;
      Tensor& dx = grad_buf(n.a);
      const int b = g.batch;
      if (!n.flag) {
        // eval mode: affine with constant scale
        const Eigen::ArrayXXd istd = (n.bn->running_var.array() + n.scalar0).rsqrt();
        for (int i = 0; i < b; ++i)
          dx.slab(i).array() += g.slab(i).array() * istd;
        return;
      }
      const Eigen::MatrixXd& xhat = n.saved[0];
      const Eigen::MatrixXd& istd = n.saved[1];
      const int c = g.rows();
      const int t = g.time;
      Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(c, t);
      Eigen::MatrixXd g2 = Eigen::MatrixXd::Zero(c, t);
      auto xhat_slab = [&](int i) {
        return xhat.middleCols(static_cast<long>(i) * t, t);
      };
      for (int i = 0; i < b; ++i) {
        g1 += g.slab(i);
        g2 += g.slab(i).cwiseProduct(xhat_slab(i));
      }
      g1 /= b;
      g2 /= b;
      for (int i = 0; i < b; ++i)
        dx.slab(i).array() +=
            istd.array() *
            (g.slab(i) - g1 - xhat_slab(i).cwiseProduct(g2)).array();
      return;
    }
    case Op::film: {
      const Tensor& h = val(n.a);
      const Tensor& alpha = val(n.b);
      const int b = h.batch;
      for (int i = 0; i < b; ++i) {
        if (needs(*this, n.a))
          grad_buf(n.a).slab(i).array() +=
              g.slab(i).array().colwise() * (1.0 + alpha.m.col(i).array());
        if (needs(*this, n.b))
          grad_buf(n.b).m.col(i) += g.slab(i).cwiseProduct(h.slab(i)).rowwise().sum();
        if (needs(*this, n.c)) grad_buf(n.c).m.col(i) += g.slab(i).rowwise().sum();
      }
      return;
    }
    case Op::attend: {
      const Tensor& q = val(n.a);
      const Tensor& k = val(n.b);
      const Tensor& v = val(n.c);
      const Eigen::MatrixXd& attn = n.saved[0];
      const int d = q.rows();
      const int b = q.batch;
      const int t = q.time;
      const double scale = 1.0 / std::sqrt(static_cast<double>(d));
      for (int i = 0; i < b; ++i) {
        auto a = attn.middleCols(static_cast<long>(i) * t, t);
        Eigen::MatrixXd da = g.slab(i).transpose() * v.slab(i);  // T x T
        if (needs(*this, n.c)) grad_buf(n.c).slab(i).noalias() += g.slab(i) * a;
        // softmax backward per query row
        Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
        Eigen::MatrixXd ds = a.array() * (da.array().colwise() - rowdot.array());
        if (needs(*this, n.a))
          grad_buf(n.a).slab(i).noalias() += k.slab(i) * (scale * ds.transpose());
        if (needs(*this, n.b)) grad_buf(n.b).slab(i).noalias() += q.slab(i) * (scale * ds);
      }
      return;
    }
    case Op::l1_loss: {
      if (!needs(*this, n.a)) return;
      const Tensor& pred = val(n.a);
      const Eigen::MatrixXd& target = n.saved[0];
      const double scale = g.value() / n.scalar0;
      Tensor& dp = grad_buf(n.a);
      if (n.time_mask.empty()) {
        dp.m.array() += scale * (pred.m - target).array().sign();
      } else {
        for (int i = 0; i < pred.batch; ++i) {
          for (int tt = 0; tt < pred.time; ++tt) {
            if (!n.time_mask[tt]) continue;
            const long col = static_cast<long>(i) * pred.time + tt;
            dp.m.col(col).array() += scale * (pred.m.col(col) - target.col(col)).array().sign();
          }
        }
      }
      return;
    }
    case Op::concat_rows: {
      const int ra = val(n.a).rows();
      if (needs(*this, n.a)) grad_buf(n.a).m += g.m.topRows(ra);
      if (needs(*this, n.b)) grad_buf(n.b).m += g.m.bottomRows(g.rows() - ra);
      return;
    }
    case Op::mean_pool_time: {
      if (!needs(*this, n.a)) return;
      Tensor& dx = grad_buf(n.a);
      const int t = dx.time;
      for (int i = 0; i < g.batch; ++i)
        dx.slab(i).colwise() += g.m.col(i) / static_cast<double>(t);
      return;
    }
  }
}

namespace {

Tape::Node make_node(Op op, int a, int b, int c, const Tape& t) {
  Tape::Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.requires_grad = (a >= 0 && t.node(a).requires_grad) ||
                    (b >= 0 && t.node(b).requires_grad) ||
                    (c >= 0 && t.node(c).requires_grad);
  return n;
}

}  // namespace

int op_add(Tape& t, int a, int b) {
  if (!t.val(a).same_shape(t.val(b))) throw NumericError("add: shape mismatch");
  Tape::Node n = make_node(Op::add, a, b, -1, t);
  n.value = t.val(a);
  n.value.m += t.val(b).m;
  return t.push(std::move(n));
}

int op_mul(Tape& t, int a, int b) {
  if (!t.val(a).same_shape(t.val(b))) throw NumericError("mul: shape mismatch");
  Tape::Node n = make_node(Op::mul, a, b, -1, t);
  n.value = t.val(a);
  n.value.m.array() *= t.val(b).m.array();
  return t.push(std::move(n));
}

int op_relu(Tape& t, int a) {
  Tape::Node n = make_node(Op::relu, a, -1, -1, t);
  n.value = kernels::relu(t.val(a));
  return t.push(std::move(n));
}

int op_sum(Tape& t, int a) {
  Tape::Node n = make_node(Op::sum, a, -1, -1, t);
  n.value = Tensor::scalar(t.val(a).m.sum());
  return t.push(std::move(n));
}

int op_channel_linear(Tape& t, int x, int w, int bias) {
  Tape::Node n = make_node(Op::channel_linear, x, w, bias, t);
  n.value = kernels::channel_linear(t.val(w).m, t.val(bias).m, t.val(x));
  return t.push(std::move(n));
}

int op_spectral_conv(Tape& t, int x, int rre, int rim, const SpectralBasis& basis) {
  Tape::Node n = make_node(Op::spectral_conv, x, rre, rim, t);
  n.basis = &basis;
  n.saved.resize(1);
  n.value = kernels::spectral_conv(basis, t.val(rre).m, t.val(rim).m, t.val(x), &n.saved[0]);
  return t.push(std::move(n));
}

int op_batch_norm(Tape& t, int x, BnState& st, bool training, double eps, double momentum) {
  Tape::Node n = make_node(Op::batch_norm, x, -1, -1, t);
  n.bn = &st;
  n.scalar0 = eps;
  n.flag = training;
  if (training) {
    n.saved.resize(2);
    n.value = kernels::batch_norm_train(t.val(x), st, eps, momentum, &n.saved[0], &n.saved[1]);
  } else {
    n.value = kernels::batch_norm_eval(t.val(x), st, eps);
  }
  return t.push(std::move(n));
}

int op_film(Tape& t, int h, int alpha, int beta) {
  Tape::Node n = make_node(Op::film, h, alpha, beta, t);
  n.value = kernels::film(t.val(h), t.val(alpha), t.val(beta));
  return t.push(std::move(n));
}

int op_attend(Tape& t, int q, int k, int v) {
  Tape::Node n = make_node(Op::attend, q, k, v, t);
  n.saved.resize(1);
  n.value = kernels::attend(t.val(q), t.val(k), t.val(v), &n.saved[0]);
  return t.push(std::move(n));
}

int op_l1(Tape& t, int pred, Eigen::MatrixXd target, std::vector<uint8_t> time_mask,
          bool sum_over_batch) {
  const Tensor& p = t.val(pred);
  long active_cols = p.time;
  if (!time_mask.empty()) {
    if (static_cast<int>(time_mask.size()) != p.time)
      throw NumericError("l1: mask length mismatch");
    active_cols = 0;
    for (uint8_t m : time_mask) active_cols += (m != 0);
    if (active_cols == 0) throw NumericError("l1: empty mask");
  }
  Tape::Node n = make_node(Op::l1_loss, pred, -1, -1, t);
  n.scalar0 = static_cast<double>(active_cols) * (sum_over_batch ? 1 : p.batch);
  n.time_mask = std::move(time_mask);
  n.value = Tensor::scalar(kernels::l1_value(p, target, n.time_mask, n.scalar0));
  n.saved.push_back(std::move(target));
  return t.push(std::move(n));
}

int op_concat_rows(Tape& t, int a, int b) {
  Tape::Node n = make_node(Op::concat_rows, a, b, -1, t);
  n.value = kernels::concat_rows(t.val(a), t.val(b));
  return t.push(std::move(n));
}

int op_mean_pool_time(Tape& t, int x) {
  Tape::Node n = make_node(Op::mean_pool_time, x, -1, -1, t);
  n.value = kernels::mean_pool_time(t.val(x));
  return t.push(std::move(n));
}

std::vector<Tensor> tape_gradient(Tape& t, int loss_id, const std::vector<int>& leaves) {
  t.backward(loss_id);
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (int id : leaves) out.push_back(t.grad_of(id));
  return out;
}

}  // namespace odeinv
