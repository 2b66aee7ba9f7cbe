#pragma once

// Dense 4D activation tensors (frame-major t,c,h,w layout), the flattened
// per-frame matrix view, and the reference dense operators.
//
// Layout: element (t, c, h, w) lives at ((t*C + c)*H + h)*W + w. Frame
// pruning therefore skips one contiguous block per frame.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dap/kernels.hpp"

namespace dap {

class Tensor4D {
public:
  Tensor4D() = default;
  Tensor4D(int t, int c, int h, int w, float fill = 0.0f);
  Tensor4D(const Dims4& d, std::vector<float> data);

  const Dims4& dims() const { return dims_; }
  int t() const { return dims_.t; }
  int c() const { return dims_.c; }
  int h() const { return dims_.h; }
  int w() const { return dims_.w; }
  int64_t size() const { return int64_t(data_.size()); }
  int features() const { return dims_.h * dims_.w; }

  float& at(int t, int c, int h, int w) {
    return data_[kern::idx4(dims_, t, c, h, w)];
  }
  float at(int t, int c, int h, int w) const {
    return data_[kern::idx4(dims_, t, c, h, w)];
  }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  const std::vector<float>& vec() const { return data_; }
  std::vector<float>& vec() { return data_; }

  bool all_finite() const;
  void require_finite(const char* what) const;

private:
  Dims4 dims_{};
  std::vector<float> data_;
};

// Per-frame matrix view of a Tensor4D: frame t is an (H*W) x C matrix whose
// entry (j, k) is source element (t, k, j / W, j % W), with j, k zero-based.
class FlatView {
public:
  explicit FlatView(Tensor4D& src) : src_(&src) {}

  int frames() const { return src_->t(); }
  int rows() const { return src_->features(); }
  int cols() const { return src_->c(); }

  float get(int t, int j, int k) const {
    const int w = src_->w();
    return src_->at(t, k, j / w, j % w);
  }
  void set(int t, int j, int k, float v) {
    const int w = src_->w();
    src_->at(t, k, j / w, j % w) = v;
  }

private:
  Tensor4D* src_;
};

// 3D convolution parameters plus its weights. Thin value wrapper over
// ConvGeom that owns the parameter buffers.
struct ConvSpec {
  ConvGeom geom;
  std::vector<float> weights; // [c_out][c_in][kt][kh][kw]
  std::vector<float> bias;    // [c_out]

  void validate() const;
  Dims4 out_dims(const Dims4& in) const { return geom.out_dims(in); }
};

// Reference dense cross-correlation (zero padding, bias per output channel).
// Accumulation order per output element is (kt, ci, kh, kw); see kernels.hpp.
Tensor4D conv3d_dense(const Tensor4D& input, const ConvSpec& spec);

// Per-channel mean over all T*H*W positions.
std::vector<float> avgpool3d_global(const Tensor4D& input);

// y = W x + b, W row-major [out x in].
std::vector<float> affine(const std::vector<float>& input,
                          const std::vector<float>& weights, int out_dim,
                          const std::vector<float>& bias);

// --- Serialization -------------------------------------------------------
//
// Wire format: one JSON header line ({"dims":[T,C,H,W],"dtype":"f32",
// "layout":"tchw"}) terminated by '\n', followed by T*C*H*W little-endian
// 32-bit floats.

void write_tensor(std::ostream& os, const Tensor4D& t);
Tensor4D read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor4D& t);
Tensor4D load_tensor(const std::string& path);

} // namespace dap
