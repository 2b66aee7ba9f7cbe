#include "dap/tensor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

namespace dap {

using nlohmann::json;

Tensor4D::Tensor4D(int t, int c, int h, int w, float fill)
    : dims_{t, c, h, w} {
  if (t < 1 || c < 1 || h < 1 || w < 1)
    throw ConfigError("Tensor4D: all dimensions must be >= 1");
  data_.assign(size_t(dims_.volume()), fill);
}

Tensor4D::Tensor4D(const Dims4& d, std::vector<float> data)
    : dims_(d), data_(std::move(data)) {
  if (d.t < 1 || d.c < 1 || d.h < 1 || d.w < 1)
    throw ConfigError("Tensor4D: all dimensions must be >= 1");
  if (int64_t(data_.size()) != d.volume())
    throw ConfigError("Tensor4D: data length does not match dims");
}

bool Tensor4D::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor4D::require_finite(const char* what) const {
  if (!all_finite())
    throw ValidationError(std::string(what) + ": non-finite element");
}

void ConvSpec::validate() const {
  if (geom.c_in < 1 || geom.c_out < 1)
    throw ConfigError("ConvSpec: channel counts must be >= 1");
  if (geom.kt < 1 || geom.kh < 1 || geom.kw < 1)
    throw ConfigError("ConvSpec: kernel extents must be >= 1");
  if (geom.st < 1 || geom.sh < 1 || geom.sw < 1)
    throw ConfigError("ConvSpec: strides must be >= 1");
  if (geom.pt < 0 || geom.ph < 0 || geom.pw < 0)
    throw ConfigError("ConvSpec: padding must be >= 0");
  if (int64_t(weights.size()) != geom.weight_count())
    throw ConfigError("ConvSpec: weight buffer has wrong length");
  if (int(bias.size()) != geom.c_out)
    throw ConfigError("ConvSpec: bias buffer has wrong length");
  for (float v : weights)
    if (!std::isfinite(v)) throw ValidationError("ConvSpec: non-finite weight");
  for (float v : bias)
    if (!std::isfinite(v)) throw ValidationError("ConvSpec: non-finite bias");
}

Tensor4D conv3d_dense(const Tensor4D& input, const ConvSpec& spec) {
  spec.validate();
  const Dims4 yd = spec.out_dims(input.dims());
  Tensor4D out(yd.t, yd.c, yd.h, yd.w);
  kern::conv3d_forward(input.data(), input.dims(), spec.weights.data(),
                       spec.bias.data(), spec.geom, out.data(), out.dims());
  out.require_finite("conv3d_dense output");
  return out;
}

std::vector<float> avgpool3d_global(const Tensor4D& input) {
  const Dims4 d = input.dims();
  std::vector<float> out(size_t(d.c), 0.0f);
  const int64_t plane = int64_t(d.h) * d.w;
  for (int c = 0; c < d.c; ++c) {
    float acc = 0.0f;
    for (int t = 0; t < d.t; ++t) {
      const float* p = input.data() + kern::idx4(d, t, c, 0, 0);
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    out[size_t(c)] = acc / float(int64_t(d.t) * plane);
  }
  return out;
}

std::vector<float> affine(const std::vector<float>& input,
                          const std::vector<float>& weights, int out_dim,
                          const std::vector<float>& bias) {
  const int in_dim = int(input.size());
  if (out_dim < 1 || int64_t(weights.size()) != int64_t(out_dim) * in_dim)
    throw ConfigError("affine: weight matrix shape mismatch");
  if (int(bias.size()) != out_dim)
    throw ConfigError("affine: bias length mismatch");
  std::vector<float> y(size_t(out_dim));
  kern::affine_forward(input.data(), weights.data(), bias.data(), out_dim,
                       in_dim, y.data());
  return y;
}

void write_tensor(std::ostream& os, const Tensor4D& t) {
  json hdr;
  hdr["dims"] = {t.t(), t.c(), t.h(), t.w()};
  hdr["dtype"] = "f32";
  hdr["layout"] = "tchw";
  os << hdr.dump() << '\n';
  os.write(reinterpret_cast<const char*>(t.data()),
           std::streamsize(t.size() * sizeof(float)));
}

Tensor4D read_tensor(std::istream& is) {
  std::string line;
  if (!std::getline(is, line))
    throw ValidationError("tensor read: missing header line");
  json hdr = json::parse(line, nullptr, false);
  if (hdr.is_discarded() || !hdr.contains("dims") || hdr["dims"].size() != 4)
    throw ValidationError("tensor read: bad header");
  if (hdr.value("dtype", "") != "f32" || hdr.value("layout", "") != "tchw")
    throw ValidationError("tensor read: unsupported dtype/layout");
  Dims4 d{hdr["dims"][0], hdr["dims"][1], hdr["dims"][2], hdr["dims"][3]};
  if (d.t < 1 || d.c < 1 || d.h < 1 || d.w < 1)
    throw ValidationError("tensor read: bad dims");
  std::vector<float> buf(size_t(d.volume()));
  is.read(reinterpret_cast<char*>(buf.data()),
          std::streamsize(buf.size() * sizeof(float)));
  if (!is) throw ValidationError("tensor read: truncated payload");
  return Tensor4D(d, std::move(buf));
}

void save_tensor(const std::string& path, const Tensor4D& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for write: " + path);
  write_tensor(f, t);
  if (!f) throw ValidationError("write failed: " + path);
}

Tensor4D load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open: " + path);
  return read_tensor(f);
}

} // namespace dap
