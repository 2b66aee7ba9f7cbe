#include "dap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dap {

namespace {

constexpr double kL1Fallback = 1e-12;

int bc_vec_len(const Dims4& d, BC p) {
  switch (p) {
    case BC::Frame: return d.t;
    case BC::Channel: return d.c;
    case BC::Feature: return d.h * d.w;
    case BC::FrameChannel: return d.t * d.c;
    case BC::FrameFeature: return d.t * d.h * d.w;
  }
  return 0;
}

// Calls f(linear_index, vector_index) for every tensor element.
template <typename F>
void for_each_bc(const Dims4& d, BC p, F&& f) {
  const int feat = d.h * d.w;
  int64_t i = 0;
  for (int t = 0; t < d.t; ++t)
    for (int c = 0; c < d.c; ++c)
      for (int h = 0; h < d.h; ++h)
        for (int w = 0; w < d.w; ++w, ++i) {
          int vi = 0;
          switch (p) {
            case BC::Frame: vi = t; break;
            case BC::Channel: vi = c; break;
            case BC::Feature: vi = h * d.w + w; break;
            case BC::FrameChannel: vi = t * d.c + c; break;
            case BC::FrameFeature: vi = t * feat + h * d.w + w; break;
          }
          f(i, vi);
        }
}

int reduce_out_len(const Dims4& d, Reduce p) {
  switch (p) {
    case Reduce::Frame: return d.t;
    case Reduce::Channel: return d.c;
    case Reduce::FrameChannel: return d.t * d.c;
    case Reduce::FrameFeature: return d.t * d.h * d.w;
    case Reduce::All: return 1;
  }
  return 0;
}

int64_t reduce_group_size(const Dims4& d, Reduce p) {
  switch (p) {
    case Reduce::Frame: return int64_t(d.c) * d.h * d.w;
    case Reduce::Channel: return int64_t(d.t) * d.h * d.w;
    case Reduce::FrameChannel: return int64_t(d.h) * d.w;
    case Reduce::FrameFeature: return d.c;
    case Reduce::All: return d.volume();
  }
  return 0;
}

template <typename F>
void for_each_reduce(const Dims4& d, Reduce p, F&& f) {
  const int feat = d.h * d.w;
  int64_t i = 0;
  for (int t = 0; t < d.t; ++t)
    for (int c = 0; c < d.c; ++c)
      for (int h = 0; h < d.h; ++h)
        for (int w = 0; w < d.w; ++w, ++i) {
          int gi = 0;
          switch (p) {
            case Reduce::Frame: gi = t; break;
            case Reduce::Channel: gi = c; break;
            case Reduce::FrameChannel: gi = t * d.c + c; break;
            case Reduce::FrameFeature: gi = t * feat + h * d.w + w; break;
            case Reduce::All: gi = 0; break;
          }
          f(i, gi);
        }
}

double stable_sigmoid(double z) { return kern::sigmoid(z); }

} // namespace

// --- ParamStore -------------------------------------------------------------

void ParamStore::add(const std::string& name, const Shape& shape,
                     std::vector<double> value) {
  if (int64_t(value.size()) != shape.count())
    throw ConfigError("ParamStore: value length mismatch for " + name);
  if (entries_.count(name))
    throw ConfigError("ParamStore: duplicate parameter " + name);
  entries_.emplace(name, Entry{shape, std::move(value)});
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

std::vector<double>& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("ParamStore: no entry " + name);
  return it->second.value;
}

const std::vector<double>& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("ParamStore: no entry " + name);
  return it->second.value;
}

const Shape& ParamStore::shape(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("ParamStore: no entry " + name);
  return it->second.shape;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

static uint64_t fnv1a(uint64_t h, const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t ParamStore::checksum() const { return checksum_of(names()); }

uint64_t ParamStore::checksum_of(const std::vector<std::string>& names) const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& name : names) {
    h = fnv1a(h, name.data(), name.size());
    const auto& v = value(name);
    h = fnv1a(h, v.data(), v.size() * sizeof(double));
  }
  return h;
}

// --- Tape: node construction -------------------------------------------------

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::constant(const Shape& shape, std::vector<double> value) {
  if (int64_t(value.size()) != shape.count())
    throw ConfigError("constant: value length mismatch");
  Node n;
  n.op = Op::Const;
  n.shape = shape;
  n.val = std::move(value);
  return push(std::move(n));
}

int Tape::constant_scalar(double v) { return constant(Shape::scalar(), {v}); }

int Tape::param(const ParamStore& store, const std::string& name) {
  for (const auto& [pname, id] : params_)
    if (pname == name) throw ConfigError("param registered twice: " + name);
  Node n;
  n.op = Op::Param;
  n.shape = store.shape(name);
  n.val = store.value(name);
  n.name = name;
  n.requires_grad = true;
  int id = push(std::move(n));
  params_.emplace_back(name, id);
  return id;
}

int Tape::frozen(const ParamStore& store, const std::string& name) {
  return constant(store.shape(name), store.value(name));
}

int Tape::conv3d(int x, int w, int b, const ConvGeom& geom) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  const Node& nb = node(b);
  if (nx.shape.kind != Shape::Kind::Tensor)
    throw ConfigError("conv3d: input must be a tensor");
  if (nw.shape.count() != geom.weight_count() || nb.shape.count() != geom.c_out)
    throw ConfigError("conv3d: weight/bias shapes do not match geometry");
  const Dims4 yd = geom.out_dims(nx.shape.dims);
  Node n;
  n.op = Op::Conv3d;
  n.shape = Shape::tensor(yd);
  n.a = x;
  n.b = w;
  n.c = b;
  n.geom = geom;
  n.requires_grad = nx.requires_grad || nw.requires_grad || nb.requires_grad;
  n.val.assign(size_t(yd.volume()), 0.0);
  kern::conv3d_forward(nx.val.data(), nx.shape.dims, nw.val.data(),
                       nb.val.data(), geom, n.val.data(), yd);
  return push(std::move(n));
}

int Tape::relu(int x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Relu;
  n.shape = nx.shape;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  n.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i)
    n.val[i] = nx.val[i] > 0 ? nx.val[i] : 0.0;
  return push(std::move(n));
}

int Tape::abs(int x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Abs;
  n.shape = nx.shape;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  n.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i) n.val[i] = std::fabs(nx.val[i]);
  return push(std::move(n));
}

int Tape::sigmoid(int x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Sigmoid;
  n.shape = nx.shape;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  n.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i)
    n.val[i] = stable_sigmoid(nx.val[i]);
  return push(std::move(n));
}

int Tape::broadcast_mul(int x, int v, BC pattern) {
  const Node& nx = node(x);
  const Node& nv = node(v);
  if (nx.shape.kind != Shape::Kind::Tensor)
    throw ConfigError("broadcast_mul: first operand must be a tensor");
  if (nv.shape.count() != bc_vec_len(nx.shape.dims, pattern))
    throw ConfigError("broadcast_mul: vector length does not match pattern");
  Node n;
  n.op = Op::BroadcastMul;
  n.shape = nx.shape;
  n.a = x;
  n.b = v;
  n.bc = pattern;
  n.requires_grad = nx.requires_grad || nv.requires_grad;
  n.val.resize(nx.val.size());
  for_each_bc(nx.shape.dims, pattern,
              [&](int64_t i, int vi) { n.val[i] = nx.val[i] * nv.val[vi]; });
  return push(std::move(n));
}

int Tape::group_mean(int x, Reduce pattern) {
  const Node& nx = node(x);
  if (nx.shape.kind != Shape::Kind::Tensor)
    throw ConfigError("group_mean: operand must be a tensor");
  const Dims4& d = nx.shape.dims;
  Node n;
  n.op = Op::GroupMean;
  n.shape = Shape::vec(reduce_out_len(d, pattern));
  n.a = x;
  n.red = pattern;
  n.requires_grad = nx.requires_grad;
  n.val.assign(size_t(n.shape.n), 0.0);
  for_each_reduce(d, pattern,
                  [&](int64_t i, int gi) { n.val[gi] += nx.val[i]; });
  const double inv = 1.0 / double(reduce_group_size(d, pattern));
  for (double& v : n.val) v *= inv;
  return push(std::move(n));
}

int Tape::vec_mul_tiled(int big, int small) {
  const Node& nb = node(big);
  const Node& ns = node(small);
  if (nb.shape.kind != Shape::Kind::Vec || ns.shape.kind != Shape::Kind::Vec)
    throw ConfigError("vec_mul_tiled: operands must be vectors");
  if (ns.shape.n < 1 || nb.shape.n % ns.shape.n != 0)
    throw ConfigError("vec_mul_tiled: length of big not a multiple of small");
  Node n;
  n.op = Op::VecMulTiled;
  n.shape = nb.shape;
  n.a = big;
  n.b = small;
  n.requires_grad = nb.requires_grad || ns.requires_grad;
  n.val.resize(nb.val.size());
  const int m = ns.shape.n;
  for (size_t i = 0; i < nb.val.size(); ++i)
    n.val[i] = nb.val[i] * ns.val[i % m];
  return push(std::move(n));
}

int Tape::l1_normalize(int v) {
  const Node& nv = node(v);
  if (nv.shape.kind != Shape::Kind::Vec)
    throw ConfigError("l1_normalize: operand must be a vector");
  Node n;
  n.op = Op::L1Normalize;
  n.shape = nv.shape;
  n.a = v;
  n.requires_grad = nv.requires_grad;
  n.val.resize(nv.val.size());
  double s = 0.0;
  for (double x : nv.val) s += x;
  if (s < kL1Fallback) {
    // all-mass-zero fallback: the uniform vector, treated as a constant
    const double u = 1.0 / double(nv.val.size());
    for (double& x : n.val) x = u;
  } else {
    for (size_t i = 0; i < nv.val.size(); ++i) n.val[i] = nv.val[i] / s;
  }
  return push(std::move(n));
}

int Tape::variance(int v) {
  const Node& nv = node(v);
  if (nv.shape.kind != Shape::Kind::Vec)
    throw ConfigError("variance: operand must be a vector");
  const double d = double(nv.val.size());
  double mean = 0.0;
  for (double x : nv.val) mean += x;
  mean /= d;
  double var = 0.0;
  for (double x : nv.val) var += (x - mean) * (x - mean);
  var /= d;
  Node n;
  n.op = Op::Variance;
  n.shape = Shape::scalar();
  n.a = v;
  n.requires_grad = nv.requires_grad;
  n.val = {var};
  return push(std::move(n));
}

int Tape::affine(int x, int W, int b) {
  const Node& nx = node(x);
  const Node& nW = node(W);
  const Node& nb = node(b);
  if (nW.shape.kind != Shape::Kind::Mat)
    throw ConfigError("affine: W must be a matrix");
  const int rows = nW.shape.rows, cols = nW.shape.cols;
  if (nx.shape.count() != cols || nb.shape.count() != rows)
    throw ConfigError("affine: shape mismatch");
  Node n;
  n.op = Op::Affine;
  n.shape = Shape::vec(rows);
  n.a = x;
  n.b = W;
  n.c = b;
  n.requires_grad = nx.requires_grad || nW.requires_grad || nb.requires_grad;
  n.val.assign(size_t(rows), 0.0);
  kern::affine_forward(nx.val.data(), nW.val.data(), nb.val.data(), rows, cols,
                       n.val.data());
  return push(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, int label) {
  const Node& nl = node(logits);
  if (nl.shape.kind != Shape::Kind::Vec || nl.shape.n < 2)
    throw ConfigError("softmax_ce: logits must be a vector of length >= 2");
  if (label < 0 || label >= nl.shape.n)
    throw ConfigError("softmax_ce: label out of range");
  double m = nl.val[0];
  for (double v : nl.val) m = std::max(m, v);
  double lse = 0.0;
  for (double v : nl.val) lse += std::exp(v - m);
  lse = m + std::log(lse);
  Node n;
  n.op = Op::SoftmaxCE;
  n.shape = Shape::scalar();
  n.a = logits;
  n.label = label;
  n.requires_grad = nl.requires_grad;
  n.val = {lse - nl.val[size_t(label)]};
  return push(std::move(n));
}

int Tape::ste_gate(int x, int theta, double tau, std::vector<double> noise,
                   bool hard) {
  const Node& nx = node(x);
  const Node& nt = node(theta);
  if (tau <= 0) throw ConfigError("ste_gate: tau must be > 0");
  if (!nt.shape.is_scalar()) throw ConfigError("ste_gate: theta must be scalar");
  if (!noise.empty() && noise.size() != nx.val.size())
    throw ConfigError("ste_gate: noise length mismatch");
  Node n;
  n.op = Op::SteGate;
  n.shape = nx.shape;
  n.a = x;
  n.b = theta;
  n.scalar0 = tau;
  n.hard = hard;
  n.noise = std::move(noise);
  n.requires_grad = nx.requires_grad || nt.requires_grad;
  n.val.resize(nx.val.size());
  const double th = nt.val[0];
  for (size_t i = 0; i < nx.val.size(); ++i) {
    const double ni = n.noise.empty() ? 0.0 : n.noise[i];
    const double z = (nx.val[i] - th + ni) / tau;
    n.val[i] = n.hard ? (z >= 0.0 ? 1.0 : 0.0) : stable_sigmoid(z);
  }
  return push(std::move(n));
}

int Tape::add(int x, int y) {
  const Node& nx = node(x);
  const Node& ny = node(y);
  if (!(nx.shape == ny.shape)) throw ConfigError("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.shape = nx.shape;
  n.a = x;
  n.b = y;
  n.requires_grad = nx.requires_grad || ny.requires_grad;
  n.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i) n.val[i] = nx.val[i] + ny.val[i];
  return push(std::move(n));
}

int Tape::scale(int x, double factor) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Scale;
  n.shape = nx.shape;
  n.a = x;
  n.scalar0 = factor;
  n.requires_grad = nx.requires_grad;
  n.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i) n.val[i] = factor * nx.val[i];
  return push(std::move(n));
}

double Tape::scalar_value(int id) const {
  const Node& n = node(id);
  if (!n.shape.is_scalar()) throw UsageError("scalar_value: node not scalar");
  return n.val[0];
}

const std::vector<double>& Tape::gradient(int id) const {
  return nodes_[size_t(id)].grad;
}

std::vector<double>& Tape::grad_buf(int id) {
  Node& n = nodes_[size_t(id)];
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
  return n.grad;
}

// --- backward ---------------------------------------------------------------

void Tape::backward(int loss) {
  if (loss < 0 || loss >= int(nodes_.size()))
    throw UsageError("backward: bad loss node");
  if (!node(loss).shape.is_scalar())
    throw UsageError("backward: loss must be scalar");
  if (backward_done_) throw UsageError("backward: already run on this tape");
  backward_done_ = true;
  grad_buf(loss)[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[size_t(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    const std::vector<double>& g = n.grad;
    auto needs = [&](int pid) {
      return pid >= 0 && nodes_[size_t(pid)].requires_grad;
    };
    switch (n.op) {
      case Op::Const:
      case Op::Param:
        break;
      case Op::Conv3d: {
        const Node& nx = nodes_[size_t(n.a)];
        if (needs(n.a)) {
          kern::conv3d_backward_input(g.data(), n.shape.dims,
                                      nodes_[size_t(n.b)].val.data(), n.geom,
                                      grad_buf(n.a).data(), nx.shape.dims);
        }
        if (needs(n.b) || needs(n.c)) {
          kern::conv3d_backward_params(
              nx.val.data(), nx.shape.dims, g.data(), n.shape.dims, n.geom,
              grad_buf(n.b).data(), needs(n.c) ? grad_buf(n.c).data() : nullptr);
        }
        break;
      }
      case Op::Relu: {
        if (!needs(n.a)) break;
        const auto& xv = nodes_[size_t(n.a)].val;
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < g.size(); ++i)
          if (xv[i] > 0) pg[i] += g[i];
        break;
      }
      case Op::Abs: {
        if (!needs(n.a)) break;
        const auto& xv = nodes_[size_t(n.a)].val;
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > 0)
            pg[i] += g[i];
          else if (xv[i] < 0)
            pg[i] -= g[i];
        }
        break;
      }
      case Op::Sigmoid: {
        if (!needs(n.a)) break;
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < g.size(); ++i)
          pg[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
        break;
      }
      case Op::BroadcastMul: {
        const auto& xv = nodes_[size_t(n.a)].val;
        const auto& vv = nodes_[size_t(n.b)].val;
        const bool nx = needs(n.a), nv = needs(n.b);
        double* pgx = nx ? grad_buf(n.a).data() : nullptr;
        double* pgv = nv ? grad_buf(n.b).data() : nullptr;
        for_each_bc(n.shape.dims, n.bc, [&](int64_t i, int vi) {
          if (pgx) pgx[i] += g[i] * vv[vi];
          if (pgv) pgv[vi] += g[i] * xv[i];
        });
        break;
      }
      case Op::GroupMean: {
        if (!needs(n.a)) break;
        const Dims4& d = nodes_[size_t(n.a)].shape.dims;
        const double inv = 1.0 / double(reduce_group_size(d, n.red));
        auto& pg = grad_buf(n.a);
        for_each_reduce(d, n.red,
                        [&](int64_t i, int gi) { pg[i] += g[gi] * inv; });
        break;
      }
      case Op::VecMulTiled: {
        const auto& bv = nodes_[size_t(n.a)].val;
        const auto& sv = nodes_[size_t(n.b)].val;
        const int m = int(sv.size());
        if (needs(n.a)) {
          auto& pg = grad_buf(n.a);
          for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * sv[i % m];
        }
        if (needs(n.b)) {
          auto& pg = grad_buf(n.b);
          for (size_t i = 0; i < g.size(); ++i) pg[i % m] += g[i] * bv[i];
        }
        break;
      }
      case Op::L1Normalize: {
        if (!needs(n.a)) break;
        const auto& xv = nodes_[size_t(n.a)].val;
        double s = 0.0;
        for (double x : xv) s += x;
        if (s < kL1Fallback) break; // uniform fallback is constant
        double gs = 0.0;
        for (size_t i = 0; i < g.size(); ++i) gs += g[i] * n.val[i];
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < g.size(); ++i) pg[i] += (g[i] - gs) / s;
        break;
      }
      case Op::Variance: {
        if (!needs(n.a)) break;
        const auto& xv = nodes_[size_t(n.a)].val;
        const double d = double(xv.size());
        double mean = 0.0;
        for (double x : xv) mean += x;
        mean /= d;
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < xv.size(); ++i)
          pg[i] += g[0] * 2.0 * (xv[i] - mean) / d;
        break;
      }
      case Op::Affine: {
        const Node& nW = nodes_[size_t(n.b)];
        const auto& xv = nodes_[size_t(n.a)].val;
        const auto& Wv = nW.val;
        const int rows = nW.shape.rows, cols = nW.shape.cols;
        if (needs(n.a)) {
          auto& pg = grad_buf(n.a);
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              pg[size_t(c)] += g[size_t(r)] * Wv[size_t(r) * cols + c];
        }
        if (needs(n.b)) {
          auto& pg = grad_buf(n.b);
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              pg[size_t(r) * cols + c] += g[size_t(r)] * xv[size_t(c)];
        }
        if (needs(n.c)) {
          auto& pg = grad_buf(n.c);
          for (int r = 0; r < rows; ++r) pg[size_t(r)] += g[size_t(r)];
        }
        break;
      }
      case Op::SoftmaxCE: {
        if (!needs(n.a)) break;
        const auto& lv = nodes_[size_t(n.a)].val;
        double m = lv[0];
        for (double v : lv) m = std::max(m, v);
        double z = 0.0;
        for (double v : lv) z += std::exp(v - m);
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < lv.size(); ++i) {
          const double p = std::exp(lv[i] - m) / z;
          pg[i] += g[0] * (p - (int(i) == n.label ? 1.0 : 0.0));
        }
        break;
      }
      case Op::SteGate: {
        const auto& xv = nodes_[size_t(n.a)].val;
        const double th = nodes_[size_t(n.b)].val[0];
        const double tau = n.scalar0;
        const bool nx = needs(n.a), nt = needs(n.b);
        double* pgx = nx ? grad_buf(n.a).data() : nullptr;
        double dth = 0.0;
        for (size_t i = 0; i < xv.size(); ++i) {
          const double ni = n.noise.empty() ? 0.0 : n.noise[i];
          const double s = stable_sigmoid((xv[i] - th + ni) / tau);
          const double gg = g[i] * s * (1.0 - s) / tau;
          if (pgx) pgx[i] += gg;
          dth -= gg;
        }
        if (nt) grad_buf(n.b)[0] += dth;
        break;
      }
      case Op::Add: {
        if (needs(n.a)) {
          auto& pg = grad_buf(n.a);
          for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        if (needs(n.b)) {
          auto& pg = grad_buf(n.b);
          for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        break;
      }
      case Op::Scale: {
        if (!needs(n.a)) break;
        auto& pg = grad_buf(n.a);
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * n.scalar0;
        break;
      }
    }
  }
}

GradMap Tape::param_grads() const {
  GradMap out;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[size_t(id)];
    if (n.grad.empty())
      out[name] = std::vector<double>(n.val.size(), 0.0);
    else
      out[name] = n.grad;
  }
  return out;
}

// --- SGD ---------------------------------------------------------------------

void SgdMomentum::step(ParamStore& store, const GradMap& grads) {
  for (const auto& [name, g] : grads) {
    auto& p = store.value(name);
    if (p.size() != g.size())
      throw InternalError("sgd: grad size mismatch for " + name);
    auto& v = velocity_[name];
    if (v.empty()) v.assign(p.size(), 0.0);
    for (size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      p[i] -= lr_ * v[i];
    }
  }
}

// --- grad check ----------------------------------------------------------------

GradCheckReport grad_check(
    const std::function<int(Tape&, const ParamStore&)>& build_loss,
    ParamStore& store, double h, double tol, int max_coords, uint64_t seed,
    const std::vector<std::string>& names) {
  Tape tape;
  const int loss = build_loss(tape, store);
  tape.backward(loss);
  const GradMap analytic = tape.param_grads();

  auto eval = [&]() {
    Tape t;
    return t.scalar_value(build_loss(t, store));
  };

  GradCheckReport report;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& [name, ga] : analytic) {
    if (!names.empty() &&
        std::find(names.begin(), names.end(), name) == names.end())
      continue;
    auto& v = store.value(name);
    std::vector<size_t> coords(v.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (int(coords.size()) > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(size_t(max_coords));
    }
    GradCheckEntry entry;
    entry.name = name;
    entry.coords_checked = int(coords.size());
    for (size_t i : coords) {
      const double orig = v[i];
      v[i] = orig + h;
      const double fp = eval();
      v[i] = orig - h;
      const double fm = eval();
      v[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double a = ga[i];
      const double err = std::fabs(a - num);
      const double rel =
          err <= 1e-6 ? 0.0 : err / std::max(std::fabs(a), std::fabs(num));
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err < tol;
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

} // namespace dap
