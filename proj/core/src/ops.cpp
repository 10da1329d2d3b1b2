#include "panet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace panet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Eigen chooses packet or scalar kernels from pointer alignment, and the two
// round differently, so a product over a heap buffer could depend on where the
// allocator put it. Products run on Eigen-owned (aligned) copies only; copies
// and elementwise adds are exact on either path.
RowMatrix matrix(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void copy_to(const RowMatrix& m, double* dst) { std::copy(m.data(), m.data() + m.size(), dst); }

void add_to(const RowMatrix& m, double* dst) {
  const double* src = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += src[i];
}

void add_channel_bias(double* dst, const Tensor& b, std::size_t channels, std::size_t plane) {
  const auto bv = b.data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) dst[c * plane + p] += bv[c];
  }
}

void accumulate_row_sums(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += src[r * cols + c];
    dst[r] += acc;
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;
};

// Unfolds one image [C,H,W] into columns [C*kh*kw, out_h*out_w].
void im2col(const double* src, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* line = src + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : line[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back into an image, accumulating.
void col2im(const double* cols, const ConvGeometry& g, double* dst) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* line = dst + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

FuseMode parse_fuse_mode(std::string_view name) {
  if (name == "max") return FuseMode::kMax;
  if (name == "sum") return FuseMode::kSum;
  if (name == "product" || name == "prod") return FuseMode::kProduct;
  throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

std::string_view to_string(FuseMode mode) {
  switch (mode) {
    case FuseMode::kMax: return "max";
    case FuseMode::kSum: return "sum";
    case FuseMode::kProduct: return "product";
  }
  return "?";
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  require(x.rank() == 4 && w.rank() == 4, "conv2d: expects 4-D input and weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == cin, "conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                               std::to_string(w.dim(1)));
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel sizes must be odd");
  require(stride >= 1, "conv2d: stride must be positive");
  require(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d: kernel larger than padded input");
  require(!b.defined() || (b.rank() == 1 && b.dim(0) == cout), "conv2d: bias shape mismatch");

  ConvGeometry g{cin, h, wd, kh, kw, stride, pad, (h + 2 * pad - kh) / stride + 1,
                 (wd + 2 * pad - kw) / stride + 1};
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t patch = cin * kh * kw;

  std::vector<double> out(n * cout * plane);
  RowMatrix cols(patch, plane);
  const RowMatrix wm = matrix(w.data().data(), cout, patch);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data().data() + i * cin * h * wd, g, cols.data());
    double* dst = out.data() + i * cout * plane;
    copy_to(wm * cols, dst);
    if (b.defined()) add_channel_bias(dst, b, cout, plane);
  }

  return detail::make_result(
      {n, cout, g.out_h, g.out_w}, std::move(out), {x, w, b},
      [x, w, b, g, n, cout, plane, patch](detail::TensorImpl& self) {
        const std::size_t in_size = g.channels * g.height * g.width;
        RowMatrix cols(patch, plane);
        const RowMatrix wt = matrix(w.data().data(), cout, patch).transpose();
        for (std::size_t i = 0; i < n; ++i) {
          const double* up = self.grad.data() + i * cout * plane;
          const RowMatrix gm = matrix(up, cout, plane);
          if (w.requires_grad()) {
            im2col(x.data().data() + i * in_size, g, cols.data());
            add_to(gm * cols.transpose(), w.impl()->grad_buffer().data());
          }
          if (b.defined() && b.requires_grad()) {
            accumulate_row_sums(up, cout, plane, b.impl()->grad_buffer().data());
          }
          if (x.requires_grad()) {
            const RowMatrix dcols = wt * gm;
            col2im(dcols.data(), g, x.impl()->grad_buffer().data() + i * in_size);
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                        std::size_t pad) {
  if (stride != 2) throw ConfigError("conv_transpose2d: only stride 2 is supported");
  require(x.rank() == 4 && w.rank() == 4, "conv_transpose2d: expects 4-D input and weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  require(w.dim(0) == cin && w.dim(3) == k, "conv_transpose2d: weight shape mismatch");
  if (!((k == 2 && pad == 0) || (k == 4 && pad == 1))) {
    throw ConfigError("conv_transpose2d: kernel/pad must be 2/0 or 4/1 for exact x2 upsampling");
  }
  require(!b.defined() || (b.rank() == 1 && b.dim(0) == cout), "conv_transpose2d: bias shape mismatch");

  // The transposed conv is the adjoint of a conv from [Cout,2H,2W] to [Cin,H,W].
  ConvGeometry g{cout, 2 * h, 2 * wd, k, k, stride, pad, h, wd};
  const std::size_t plane = h * wd;
  const std::size_t patch = cout * k * k;
  const std::size_t out_plane = 4 * plane;

  std::vector<double> out(n * cout * out_plane, 0.0);
  const RowMatrix wt = matrix(w.data().data(), cin, patch).transpose();
  for (std::size_t i = 0; i < n; ++i) {
    const RowMatrix cols = wt * matrix(x.data().data() + i * cin * plane, cin, plane);
    double* dst = out.data() + i * cout * out_plane;
    col2im(cols.data(), g, dst);
    if (b.defined()) add_channel_bias(dst, b, cout, out_plane);
  }

  return detail::make_result(
      {n, cout, 2 * h, 2 * wd}, std::move(out), {x, w, b},
      [x, w, b, g, n, cin, cout, plane, patch, out_plane](detail::TensorImpl& self) {
        RowMatrix cols(patch, plane);
        const RowMatrix wm = matrix(w.data().data(), cin, patch);
        for (std::size_t i = 0; i < n; ++i) {
          const double* gout = self.grad.data() + i * cout * out_plane;
          im2col(gout, g, cols.data());
          if (x.requires_grad()) add_to(wm * cols, x.impl()->grad_buffer().data() + i * cin * plane);
          if (w.requires_grad()) {
            add_to(matrix(x.data().data() + i * cin * plane, cin, plane) * cols.transpose(),
                   w.impl()->grad_buffer().data());
          }
          if (b.defined() && b.requires_grad()) {
            accumulate_row_sums(gout, cout, out_plane, b.impl()->grad_buffer().data());
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2, "linear: expects 2-D input and weight");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  require(w.dim(1) == din, "linear: input width " + std::to_string(din) + " != weight width " +
                               std::to_string(w.dim(1)));
  require(!b.defined() || (b.rank() == 1 && b.dim(0) == dout), "linear: bias shape mismatch");

  std::vector<double> out(n * dout);
  const RowMatrix wt = matrix(w.data().data(), dout, din).transpose();
  copy_to(matrix(x.data().data(), n, din) * wt, out.data());
  if (b.defined()) {
    const auto bv = b.data();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < dout; ++j) out[r * dout + j] += bv[j];
    }
  }

  return detail::make_result({n, dout}, std::move(out), {x, w, b}, [x, w, b, n, din, dout](detail::TensorImpl& self) {
    const RowMatrix gm = matrix(self.grad.data(), n, dout);
    if (x.requires_grad()) add_to(gm * matrix(w.data().data(), dout, din), x.impl()->grad_buffer().data());
    if (w.requires_grad()) {
      add_to(gm.transpose() * matrix(x.data().data(), n, din), w.impl()->grad_buffer().data());
    }
    if (b.defined() && b.requires_grad()) {
      auto gb = b.impl()->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < dout; ++j) gb[j] += self.grad[r * dout + j];
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x}, [x](detail::TensorImpl& self) {
    auto gx = x.impl()->grad_buffer();
    const auto xv = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorImpl& self) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto g = t->impl()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return detail::make_result(x.shape(), std::move(out), {x}, [x, factor](detail::TensorImpl& self) {
    auto g = x.impl()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor mul_const(const Tensor& x, std::span<const double> weights) {
  require(weights.size() == x.size(), "mul_const: weight count mismatch");
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * w[i];
  return detail::make_result(x.shape(), std::move(out), {x}, [x, w = std::move(w)](detail::TensorImpl& self) {
    auto g = x.impl()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i] * self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  long double acc = 0.0L;
  for (double v : x.data()) acc += v;
  return detail::make_result({1}, {static_cast<double>(acc)}, {x}, [x](detail::TensorImpl& self) {
    auto g = x.impl()->grad_buffer();
    const double up = self.grad[0];
    for (double& v : g) v += up;
  });
}

Tensor elementwise_fuse(const std::vector<Tensor>& inputs, FuseMode mode) {
  require(!inputs.empty(), "elementwise_fuse: no inputs");
  const Shape& shape = inputs.front().shape();
  for (const auto& t : inputs) {
    require(t.shape() == shape, "elementwise_fuse: shape mismatch " + shape_str(t.shape()) + " vs " +
                                    shape_str(shape));
  }
  const std::size_t count = inputs.front().size();
  std::vector<double> out(inputs.front().data().begin(), inputs.front().data().end());
  std::vector<std::uint8_t> winner;
  if (mode == FuseMode::kMax) winner.assign(count, 0);
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const auto v = inputs[k].data();
    for (std::size_t i = 0; i < count; ++i) {
      switch (mode) {
        case FuseMode::kSum: out[i] += v[i]; break;
        case FuseMode::kProduct: out[i] *= v[i]; break;
        case FuseMode::kMax:
          if (v[i] > out[i]) {  // strict: ties keep the lower index
            out[i] = v[i];
            winner[i] = static_cast<std::uint8_t>(k);
          }
          break;
      }
    }
  }

  return detail::make_result(shape, std::move(out), inputs, [inputs, mode, winner = std::move(winner)](detail::TensorImpl& self) {
    const std::size_t count = self.grad.size();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!inputs[k].requires_grad()) continue;
      auto g = inputs[k].impl()->grad_buffer();
      switch (mode) {
        case FuseMode::kSum:
          for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[i];
          break;
        case FuseMode::kMax:
          for (std::size_t i = 0; i < count; ++i) {
            if (winner[i] == k) g[i] += self.grad[i];
          }
          break;
        case FuseMode::kProduct:
          for (std::size_t i = 0; i < count; ++i) {
            double others = 1.0;
            for (std::size_t j = 0; j < inputs.size(); ++j) {
              if (j != k) others *= inputs[j].data()[i];
            }
            g[i] += others * self.grad[i];
          }
          break;
      }
    }
  });
}

Tensor broadcast_channel_fuse(const Tensor& per_channel, const Tensor& shared, FuseMode mode) {
  require(per_channel.rank() >= 2 && shared.rank() == per_channel.rank(), "broadcast_channel_fuse: rank mismatch");
  require(shared.dim(0) == per_channel.dim(0) && shared.dim(1) == 1, "broadcast_channel_fuse: shared map must be [R,1,...]");
  for (std::size_t a = 2; a < shared.rank(); ++a) {
    require(shared.dim(a) == per_channel.dim(a), "broadcast_channel_fuse: spatial mismatch");
  }
  const std::size_t rows = per_channel.dim(0), channels = per_channel.dim(1);
  const std::size_t plane = per_channel.size() / (rows * channels);
  std::vector<double> out(per_channel.size());
  const auto a = per_channel.data();
  const auto s = shared.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (r * channels + c) * plane + p;
        const double u = a[i], v = s[r * plane + p];
        switch (mode) {
          case FuseMode::kSum: out[i] = u + v; break;
          case FuseMode::kProduct: out[i] = u * v; break;
          case FuseMode::kMax: out[i] = v > u ? v : u; break;
        }
      }
    }
  }
  return detail::make_result(per_channel.shape(), std::move(out), {per_channel, shared},
                             [per_channel, shared, mode, rows, channels, plane](detail::TensorImpl& self) {
    const auto a = per_channel.data();
    const auto s = shared.data();
    std::span<double> ga = per_channel.requires_grad() ? per_channel.impl()->grad_buffer() : std::span<double>{};
    std::span<double> gs = shared.requires_grad() ? shared.impl()->grad_buffer() : std::span<double>{};
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = (r * channels + c) * plane + p;
          const std::size_t j = r * plane + p;
          const double up = self.grad[i];
          double da = 0.0, ds = 0.0;
          switch (mode) {
            case FuseMode::kSum: da = up; ds = up; break;
            case FuseMode::kProduct: da = up * s[j]; ds = up * a[i]; break;
            case FuseMode::kMax: (s[j] > a[i] ? ds : da) = up; break;
          }
          if (!ga.empty()) ga[i] += da;
          if (!gs.empty()) gs[j] += ds;
        }
      }
    }
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require(x.rank() == 4, "upsample_nearest2x: expects [N,C,H,W]");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> out(planes * 4 * h * w);
  const auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        out[(p * 2 * h + y) * 2 * w + xx] = in[(p * h + y / 2) * w + xx / 2];
      }
    }
  }
  return detail::make_result({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {x},
                             [x, planes, h, w](detail::TensorImpl& self) {
    auto g = x.impl()->grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t xx = 0; xx < 2 * w; ++xx) {
          g[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
        }
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result(std::move(shape), std::move(out), {x}, [x](detail::TensorImpl& self) {
    auto g = x.impl()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor flatten(const Tensor& x) {
  require(x.rank() >= 1, "flatten: scalar input");
  const std::size_t rows = x.dim(0);
  return reshape(x, {rows, rows == 0 ? 0 : x.size() / rows});
}

Tensor concat0(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat0: no inputs");
  Shape shape = parts.front().shape();
  require(!shape.empty(), "concat0: scalar input");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.rank() == shape.size() && std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1),
            "concat0: trailing shape mismatch");
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result(std::move(shape), std::move(out), parts, [parts](detail::TensorImpl& self) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        auto g = p.impl()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
      }
      offset += p.size();
    }
  });
}

Tensor take_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require(x.rank() >= 1, "take_rows: scalar input");
  const std::size_t stride = x.dim(0) == 0 ? 0 : x.size() / x.dim(0);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t r : idx) require(r < x.dim(0), "take_rows: row out of range");
  Shape shape = x.shape();
  shape[0] = idx.size();
  std::vector<double> out(idx.size() * stride);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(x.data().begin() + idx[i] * stride, stride, out.begin() + i * stride);
  }
  return detail::make_result(std::move(shape), std::move(out), {x}, [x, idx = std::move(idx), stride](detail::TensorImpl& self) {
    auto g = x.impl()->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t k = 0; k < stride; ++k) g[idx[i] * stride + k] += self.grad[i * stride + k];
    }
  });
}

namespace detail {

BilinearTap bilinear_taps(std::size_t height, std::size_t width, double y, double x) {
  BilinearTap tap;
  const double fy = std::floor(y), fx = std::floor(x);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double ly = y - fy, lx = x - fx;
  const long ys[2] = {y0, y0 + 1};
  const long xs[2] = {x0, x0 + 1};
  const double wy[2] = {1.0 - ly, ly};
  const double wx[2] = {1.0 - lx, lx};
  for (int a = 0; a < 2; ++a) {
    if (ys[a] < 0 || ys[a] >= static_cast<long>(height)) continue;
    for (int b = 0; b < 2; ++b) {
      if (xs[b] < 0 || xs[b] >= static_cast<long>(width)) continue;
      const double wgt = wy[a] * wx[b];
      if (wgt == 0.0) continue;
      tap.index[tap.count] = static_cast<std::size_t>(ys[a]) * width + static_cast<std::size_t>(xs[b]);
      tap.weight[tap.count] = wgt;
      ++tap.count;
    }
  }
  return tap;
}

}  // namespace detail

Tensor bilinear_sample(const Tensor& map, double y, double x) {
  require(map.rank() == 3, "bilinear_sample: expects [C,H,W]");
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const auto tap = detail::bilinear_taps(h, w, y, x);
  std::vector<double> out(c, 0.0);
  const auto v = map.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (int t = 0; t < tap.count; ++t) out[ch] += tap.weight[t] * v[ch * h * w + tap.index[t]];
  }
  return detail::make_result({c}, std::move(out), {map}, [map, tap, c, h, w](detail::TensorImpl& self) {
    auto g = map.impl()->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (int t = 0; t < tap.count; ++t) g[ch * h * w + tap.index[t]] += tap.weight[t] * self.grad[ch];
    }
  });
}

}  // namespace panet
