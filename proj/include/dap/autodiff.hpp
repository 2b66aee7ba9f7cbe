#pragma once

// Minimal reverse-mode autodiff over the operator set the two training
// steps need. Values are flat f64 buffers tagged with a shape; the tape is
// built eagerly (forward values computed at node creation) and replayed by
// rebuilding, which is bit-reproducible because every kernel has a fixed
// accumulation order.
//
// Gradient conventions:
//   relu'(0) = 0, d|x|/dx = sign(x) with 0 at x = 0,
//   population variance: d(var)/dx_i = 2 (x_i - mean) / D,
//   ste gate: hard indicator forward, sigmoid surrogate backward.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dap/kernels.hpp"

namespace dap {

// Broadcast pattern of a weight vector over a T,C,H,W tensor.
enum class BC { Frame, Channel, Feature, FrameChannel, FrameFeature };

// Grouped-mean reduction of a tensor down to a vector.
enum class Reduce { Frame, Channel, FrameChannel, FrameFeature, All };

struct Shape {
  enum class Kind { Tensor, Vec, Mat } kind = Kind::Vec;
  Dims4 dims{};
  int n = 0;
  int rows = 0, cols = 0;

  static Shape tensor(const Dims4& d) { return {Kind::Tensor, d, 0, 0, 0}; }
  static Shape vec(int n) { return {Kind::Vec, {}, n, 0, 0}; }
  static Shape mat(int r, int c) { return {Kind::Mat, {}, 0, r, c}; }
  static Shape scalar() { return vec(1); }

  int64_t count() const {
    switch (kind) {
      case Kind::Tensor: return dims.volume();
      case Kind::Vec: return n;
      case Kind::Mat: return int64_t(rows) * cols;
    }
    return 0;
  }
  bool is_scalar() const { return kind == Kind::Vec && n == 1; }
  bool operator==(const Shape&) const = default;
};

enum class Op {
  Const,
  Param,
  Conv3d,
  Relu,
  Abs,
  Sigmoid,
  BroadcastMul,
  GroupMean,
  VecMulTiled,
  L1Normalize,
  Variance,
  Affine,
  SoftmaxCE,
  SteGate,
  Add,
  Scale,
};

struct Node {
  Op op = Op::Const;
  Shape shape;
  int a = -1, b = -1, c = -1;
  bool requires_grad = false;
  std::vector<double> val;
  std::vector<double> grad; // empty until touched by backward

  BC bc{};
  Reduce red{};
  ConvGeom geom{};
  double scalar0 = 0.0;       // Scale factor; SteGate tau
  int label = -1;             // SoftmaxCE target class
  bool hard = true;           // SteGate forward mode
  std::vector<double> noise;  // SteGate per-element noise
  std::string name;           // Param only
};

using GradMap = std::map<std::string, std::vector<double>>;

// Named f64 parameter arrays living outside any tape, so a graph can be
// rebuilt cheaply around the current values (training steps, finite
// differences).
class ParamStore {
public:
  void add(const std::string& name, const Shape& shape,
           std::vector<double> value);
  bool contains(const std::string& name) const;
  std::vector<double>& value(const std::string& name);
  const std::vector<double>& value(const std::string& name) const;
  const Shape& shape(const std::string& name) const;
  std::vector<std::string> names() const;
  // FNV-1a over the exact byte representation of all entries, iterated in
  // name order. Used by the step-2 freeze-contract checks.
  uint64_t checksum() const;
  uint64_t checksum_of(const std::vector<std::string>& names) const;

private:
  struct Entry {
    Shape shape;
    std::vector<double> value;
  };
  std::map<std::string, Entry> entries_;
};

class Tape {
public:
  int constant(const Shape& shape, std::vector<double> value);
  int constant_scalar(double v);
  // Tracked leaf; value copied from the store.
  int param(const ParamStore& store, const std::string& name);
  // Untracked leaf reading the store (frozen parameters).
  int frozen(const ParamStore& store, const std::string& name);

  int conv3d(int x, int w, int b, const ConvGeom& geom);
  int relu(int x);
  int abs(int x);
  int sigmoid(int x);
  int broadcast_mul(int x, int v, BC pattern);
  int group_mean(int x, Reduce pattern);
  // big[i] * small[i % small.n]; identity when lengths match.
  int vec_mul_tiled(int big, int small);
  int l1_normalize(int v);
  int variance(int v);
  int affine(int x, int W, int b);
  int softmax_cross_entropy(int logits, int label);
  // Eq-style noisy threshold gate. Forward hard: 1[(x - theta + n)/tau >= 0]
  // (soft sigmoid when hard=false, used by finite-difference checks);
  // backward always sigmoid'(z)/tau toward x and the negation toward theta.
  int ste_gate(int x, int theta, double tau, std::vector<double> noise,
               bool hard = true);
  int add(int x, int y);
  int scale(int x, double factor);

  const Node& node(int id) const { return nodes_[size_t(id)]; }
  const std::vector<double>& value(int id) const {
    return nodes_[size_t(id)].val;
  }
  double scalar_value(int id) const;
  // Gradient buffer (empty vector means identically zero).
  const std::vector<double>& gradient(int id) const;
  size_t size() const { return nodes_.size(); }

  void backward(int loss);
  // Gradients of all registered params, zero-filled when unreachable.
  GradMap param_grads() const;

private:
  int push(Node n);
  std::vector<double>& grad_buf(int id);
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
  bool backward_done_ = false;
};

// Plain SGD with momentum: v = mu * v + g; p -= lr * v.
class SgdMomentum {
public:
  SgdMomentum(double lr = 0.01, double momentum = 0.9)
      : lr_(lr), momentum_(momentum) {}
  void step(ParamStore& store, const GradMap& grads);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

private:
  double lr_, momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

// --- Gradient checking -----------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass = true;
};

// Central-difference check of d(loss)/d(param) for every parameter in the
// store (or `names` when non-empty). The builder must construct the loss
// graph from the store's current values; it is re-run per perturbed
// coordinate, so it must be deterministic (pass gate noise in explicitly).
// At most max_coords coordinates per parameter are probed (seeded choice).
// Error metric: |a - n| / max(|a|, |n|), with an absolute floor of 1e-6
// below which a coordinate always passes (the FD noise floor at h = 1e-5).
// Callers are responsible for keeping probed points away from relu/abs
// kinks; the op-level property tests enforce a margin of 1e-3.
GradCheckReport grad_check(
    const std::function<int(Tape&, const ParamStore&)>& build_loss,
    ParamStore& store, double h = 1e-5, double tol = 1e-4,
    int max_coords = 64, uint64_t seed = 0,
    const std::vector<std::string>& names = {});

} // namespace dap
