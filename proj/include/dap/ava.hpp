#pragma once

// Activation variability amplification: frame/channel/feature attention
// reweighting, the per-dimension importance metrics, their variance
// aggregate, and the Hoyer sparsity measure.
//
// Importance metrics (all entries nonnegative, weights enter as |w|):
//   L_FR(t)   = |w_fr(t)| / (C*H*W) * sum_{c,h,w} |x[t,c,h,w]|
//   L_CH(t,c) = |w_ch(c)| / (H*W)   * sum_{h,w}   |x'[t,c,h,w]|
//   L_FE(t,f) = |w_fe(f)| / C       * sum_{c}     |x*[t,c,f]|
// computed respectively on the stage inputs X, X_FR, X_CH of the
// reweighting chain X_FR = relu(X (.) w_fr), X_CH = relu(X_FR (.) w_ch),
// X_FE = relu(X_CH (.) w_fe).

#include <vector>

#include "dap/autodiff.hpp"
#include "dap/tensor.hpp"

namespace dap {

// One attention-weight set per instrumented layer (f32 inference copies).
struct AvaParams {
  std::vector<float> w_fr; // length T
  std::vector<float> w_ch; // length C
  std::vector<float> w_fe; // length H*W
};

struct ImportanceProfile {
  std::vector<float> l_fr, l_ch, l_fe;                // raw, >= 0
  std::vector<float> l_fr_norm, l_ch_norm, l_fe_norm; // l1-normalized
  float var_fr = 0, var_ch = 0, var_fe = 0;
  float var_ava = 0; // var_fr + var_ch + var_fe
};

// Raw (unnormalized) importance metrics on the f32 path.
std::vector<float> compute_l_fr(const Tensor4D& x,
                                const std::vector<float>& w_fr);
std::vector<float> compute_l_ch(const Tensor4D& x_frame_weighted,
                                const std::vector<float>& w_ch);
std::vector<float> compute_l_fe(const Tensor4D& x_channel_weighted,
                                const std::vector<float>& w_fe);

// l1 normalization with the all-zero fallback to the uniform vector.
std::vector<float> l1_normalize_or_uniform(const std::vector<float>& v);

// Population variance.
float population_variance(const std::vector<float>& v);

// Full reweighting chain; returns X_FE and the importance profile with
// variances taken on the normalized vectors.
std::pair<Tensor4D, ImportanceProfile> ava_forward(const Tensor4D& x,
                                                   const AvaParams& p);

// Hoyer sparsity measure of a nonnegative vector on the simplex:
// H(x) = (sqrt(D) - ||x||_1 / ||x||_2) / (sqrt(D) - 1), in [0, 1].
// Requires D >= 2 and sum(x) = 1 within 1e-6.
double hoyer(const std::vector<double>& x);

// --- training-graph builders -------------------------------------------------

// L_f = ce - beta * var_f (beta > 0).
int ava_loss(Tape& tape, int ce, int var_f, double beta);

struct AvaGraph {
  int x_fe = -1;                         // reweighted output tensor
  int l_fr = -1, l_ch = -1, l_fe = -1;   // normalized importance vectors
  int var_sum = -1;                      // var_fr + var_ch + var_fe
};

// Builds the reweighting chain and importance metrics on a tape. The
// attention weight nodes (w_*) may be Params or frozen constants.
AvaGraph build_ava_graph(Tape& tape, int x, int w_fr, int w_ch, int w_fe);

} // namespace dap
