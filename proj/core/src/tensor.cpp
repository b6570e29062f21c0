#include "pseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "pseg/errors.hpp"

namespace pseg {

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& dims) {
  if (dims.empty()) throw ArgumentError("tensor rank must be >= 1");
  for (auto d : dims) {
    if (d == 0) throw ArgumentError("tensor extents must be >= 1, got " + shape_str(dims));
  }
}

// Splits a shape around `axis` into (outer, length, inner) strides.
struct AxisView {
  std::size_t outer;
  std::size_t length;
  std::size_t inner;
};

AxisView axis_view(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(x.dims()));
  }
  AxisView v{1, x.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) v.inner *= x.dim(i);
  return v;
}

}  // namespace

Tensor::Tensor(Shape dims, float fill) : dims_(std::move(dims)) {
  check_extents(dims_);
  data_.assign(shape_numel(dims_), fill);
}

Tensor::Tensor(Shape dims, std::vector<float> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  check_extents(dims_);
  if (data_.size() != shape_numel(dims_)) {
    throw ArgumentError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(dims_));
  }
}

Tensor Tensor::from(std::initializer_list<float> values) {
  return Tensor({values.size()}, std::vector<float>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) throw ArgumentError("axis out of range");
  return dims_[axis];
}

std::span<float> Tensor::row(std::size_t i) {
  const std::size_t stride = data_.size() / dims_[0];
  return std::span<float>(data_).subspan(i * stride, stride);
}

std::span<const float> Tensor::row(std::size_t i) const {
  const std::size_t stride = data_.size() / dims_[0];
  return std::span<const float>(data_).subspan(i * stride, stride);
}

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_numel(dims) != data_.size()) {
    throw ArgumentError("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
  }
  return Tensor(std::move(dims), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  return a.dims() == b.dims() &&
         (a.size() == 0 ||
          std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0);
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x, axis);
  Tensor out(x.dims());
  std::vector<double> e(v.length);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      float mx = x[base];
      for (std::size_t j = 1; j < v.length; ++j) mx = std::max(mx, x[base + j * v.inner]);
      double sum = 0.0;
      for (std::size_t j = 0; j < v.length; ++j) {
        e[j] = std::exp(static_cast<double>(x[base + j * v.inner]) - mx);
        sum += e[j];
      }
      for (std::size_t j = 0; j < v.length; ++j) {
        out[base + j * v.inner] = static_cast<float>(e[j] / sum);
      }
    }
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, std::size_t axis, float eps) {
  if (!(eps > 0.0f)) throw ArgumentError("l2_normalize: eps must be > 0");
  const AxisView v = axis_view(x, axis);
  Tensor out(x.dims());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      double ss = 0.0;
      for (std::size_t j = 0; j < v.length; ++j) {
        const double t = x[base + j * v.inner];
        ss += t * t;
      }
      const double denom = std::max(std::sqrt(ss), static_cast<double>(eps));
      for (std::size_t j = 0; j < v.length; ++j) {
        out[base + j * v.inner] = static_cast<float>(x[base + j * v.inner] / denom);
      }
    }
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ArgumentError("bilinear_resize expects (h, w) or (h, w, c), got " +
                        shape_str(x.dims()));
  }
  if (out_h == 0 || out_w == 0) throw ArgumentError("bilinear_resize: extents must be >= 1");
  const std::size_t h = x.dim(0), w = x.dim(1);
  const std::size_t c = x.rank() == 3 ? x.dim(2) : 1;
  if (h == out_h && w == out_w) return x;

  Shape out_dims = x.rank() == 3 ? Shape{out_h, out_w, c} : Shape{out_h, out_w};
  Tensor out(out_dims);
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  const auto at = [&](std::size_t r, std::size_t col, std::size_t ch) {
    return static_cast<double>(x[(r * w + col) * c + ch]);
  };
  for (std::size_t r = 0; r < out_h; ++r) {
    const Tap& y = ty[r];
    for (std::size_t col = 0; col < out_w; ++col) {
      const Tap& t = tx[col];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = std::lerp(at(y.i0, t.i0, ch), at(y.i0, t.i1, ch), t.frac);
        const double bot = std::lerp(at(y.i1, t.i0, ch), at(y.i1, t.i1, ch), t.frac);
        out[(r * out_w + col) * c + ch] = static_cast<float>(std::lerp(top, bot, y.frac));
      }
    }
  }
  return out;
}

}  // namespace pseg
