#include "pseg/nn.hpp"

#include <cmath>

#include "pseg/errors.hpp"

namespace pseg::nn {

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ArgumentError(std::string(what) + " must be rank 2, got " + shape_str(t.dims()));
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank2(x, "linear input");
  require_rank2(weight, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ArgumentError("linear: weight " + shape_str(weight.dims()) + " vs input " +
                        shape_str(x.dims()));
  }
  if (!bias.empty() && bias.size() != out) throw ArgumentError("linear: bias length mismatch");
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    const float* xr = x.data().data() + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const float* wr = weight.data().data() + o * in;
      float acc = bias.empty() ? 0.0f : bias[o];
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      y[i * out + o] = acc;
    }
  }
  return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) { return linear(a, b, Tensor()); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) throw ArgumentError("matmul: inner extents differ");
  Tensor c({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    float* cr = c.data().data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      const float* br = b.data().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t c = x.dims().back();
  if (gamma.size() != c || beta.size() != c) throw ArgumentError("layer_norm: parameter length");
  Tensor y(x.dims());
  const std::size_t rows = x.size() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data().data() + r * c;
    double mean = 0.0;
    for (std::size_t k = 0; k < c; ++k) mean += xr[k];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t k = 0; k < c; ++k) var += (xr[k] - mean) * (xr[k] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    float* yr = y.data().data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      yr[k] = static_cast<float>((xr[k] - mean) * inv) * gamma[k] + beta[k];
    }
  }
  return y;
}

void gelu_inplace(Tensor& x) {
  for (float& v : x.data()) {
    v = static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
  }
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
}

void add_inplace(Tensor& x, const Tensor& y) {
  if (x.size() != y.size()) {
    throw ArgumentError("add: size mismatch " + shape_str(x.dims()) + " vs " +
                        shape_str(y.dims()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

Tensor add(const Tensor& x, const Tensor& y) {
  Tensor out = x;
  add_inplace(out, y);
  return out;
}

}  // namespace pseg::nn
