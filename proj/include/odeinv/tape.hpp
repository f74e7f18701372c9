#pragma once
#include <atomic>
#include <cstdint>
#include <vector>

#include "odeinv/kernels.hpp"
#include "odeinv/tensor.hpp"

namespace odeinv {

/// Who owns a trainable leaf. Used by the instrumentation counters that back
/// the Jacobian-free and gradient-free contracts.
enum class ParamOwner : uint8_t { none = 0, cno = 1, adm = 2, fm_grad = 3, mlp = 4 };
constexpr int kNumParamOwners = 5;

/// Global instrumentation. Tests snapshot these around a run and assert on
/// the deltas (e.g. no tape nodes during gradient-free inference, no gradient
/// buffers for surrogate weights during drift training).
struct TapeStats {
  static std::atomic<uint64_t> nodes_created;
  static std::atomic<uint64_t> grad_allocs;
  static std::atomic<uint64_t> backward_sweeps;
  static std::atomic<uint64_t> owner_grad_allocs[kNumParamOwners];

  static uint64_t owner_allocs(ParamOwner o) {
    return owner_grad_allocs[static_cast<int>(o)].load();
  }
};

enum class Op : uint8_t {
  leaf,
  constant,
  add,
  mul,
  relu,
  sum,
  channel_linear,
  spectral_conv,
  batch_norm,
  film,
  attend,
  l1_loss,
  concat_rows,
  mean_pool_time,
};

/// Record of primitive operations for reverse-mode differentiation. Nodes are
/// appended in execution order, which is a topological order; the backward
/// sweep walks them strictly in reverse. A tape is confined to one logical
/// thread per forward/backward pair.
class Tape {
 public:
  struct Node {
    Op op = Op::constant;
    int a = -1, b = -1, c = -1;
    Tensor value;                // owned result (unused when ext is set)
    const Tensor* ext = nullptr; // leaves/constants may alias caller storage
    Tensor grad;
    bool grad_live = false;
    bool requires_grad = false;
    ParamOwner owner = ParamOwner::none;
    std::vector<Eigen::MatrixXd> saved;
    std::vector<uint8_t> time_mask;       // l1_loss
    BnState* bn = nullptr;                // batch_norm
    const SpectralBasis* basis = nullptr; // spectral_conv
    double scalar0 = 0.0;                 // eps / loss denominator
    bool flag = false;                    // bn training mode
  };

  /// Trainable leaf aliasing caller-owned storage (valid for the tape's life).
  int leaf(const Tensor& t, ParamOwner owner = ParamOwner::none);
  /// Non-trainable input aliasing caller-owned storage.
  int constant(const Tensor& t);
  /// Non-trainable input owned by the tape.
  int constant_owned(Tensor t);

  const Tensor& val(int id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.value;
  }
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Gradient buffer, allocated to zeros on first touch.
  Tensor& grad_buf(int id);
  /// d(loss)/d(node); zeros if the node was never reached by the sweep.
  Tensor grad_of(int id) const {
    const Node& n = nodes_[id];
    return n.grad_live ? n.grad : Tensor::zeros_like(val(id));
  }

  /// Reverse sweep from a scalar loss node.
  void backward(int loss_id);

  int push(Node n);

 private:
  void backward_node(int id);
  std::vector<Node> nodes_;
};

// Operation builders. Each records one node whose forward value is computed
// by the shared kernel used on the evaluation path.
int op_add(Tape& t, int a, int b);
int op_mul(Tape& t, int a, int b);
int op_relu(Tape& t, int a);
int op_sum(Tape& t, int a);
int op_channel_linear(Tape& t, int x, int w, int bias);
int op_spectral_conv(Tape& t, int x, int rre, int rim, const SpectralBasis& basis);
int op_batch_norm(Tape& t, int x, BnState& st, bool training, double eps = 1e-5,
                  double momentum = 0.1);
int op_film(Tape& t, int h, int alpha, int beta);
int op_attend(Tape& t, int q, int k, int v);
/// Mean over (batch, selected timesteps) of the per-column channel L1.
/// With sum_over_batch the batch mean becomes a sum, so per-sample gradients
/// match independent single-sample losses exactly.
int op_l1(Tape& t, int pred, Eigen::MatrixXd target, std::vector<uint8_t> time_mask = {},
          bool sum_over_batch = false);
int op_concat_rows(Tape& t, int a, int b);
int op_mean_pool_time(Tape& t, int x);

/// Gradients for a set of leaves after backward(); unreached leaves get zeros.
std::vector<Tensor> tape_gradient(Tape& t, int loss_id, const std::vector<int>& leaves);

}  // namespace odeinv
