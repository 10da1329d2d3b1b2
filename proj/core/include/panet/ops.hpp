#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

enum class FuseMode { kMax, kSum, kProduct };

FuseMode parse_fuse_mode(std::string_view name);
std::string_view to_string(FuseMode mode);

/// 2-D cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);

/// Transposed convolution used for x2 upsampling. w: [Cin,Cout,k,k]. Only stride 2 is
/// supported and (k, pad) must give an exact doubling: (2,0) or (4,1).
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                        std::size_t pad = 0);

/// x: [N,Din], w: [Dout,Din], b: [Dout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// Elementwise product with a constant (non-differentiated) weight vector.
Tensor mul_const(const Tensor& x, std::span<const double> weights);
Tensor sum(const Tensor& x);

/// Elementwise reduction of same-shape inputs. Max routes the gradient to the
/// first input attaining the maximum.
Tensor elementwise_fuse(const std::vector<Tensor>& inputs, FuseMode mode);

/// Fuses a [R,1,...] map into every channel of a [R,K,...] map.
Tensor broadcast_channel_fuse(const Tensor& per_channel, const Tensor& shared, FuseMode mode);

/// Nearest-neighbour x2 upsampling of [N,C,H,W].
Tensor upsample_nearest2x(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& x);
/// Concatenates along the leading axis.
Tensor concat0(const std::vector<Tensor>& parts);
/// Selects leading-axis rows in the given order.
Tensor take_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Bilinear lookup in a [C,H,W] map at continuous cell coordinates (cell centres at
/// integers). Neighbours outside the map count as zero.
Tensor bilinear_sample(const Tensor& map, double y, double x);

namespace detail {

/// Bilinear corner weights shared by bilinear_sample and ROIAlign.
struct BilinearTap {
  std::size_t index[4];
  double weight[4];
  int count = 0;
};

BilinearTap bilinear_taps(std::size_t height, std::size_t width, double y, double x);

}  // namespace detail

}  // namespace panet
