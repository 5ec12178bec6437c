#include <fmt/format.h>

#include "cheapconv/cost_model.hpp"
#include "cheapconv/distill.hpp"

namespace cheapconv::kernel {

namespace {

struct ConvGeometry {
    int batch, in_channels, in_h, in_w;
    int out_channels, kernel_h, kernel_w;
    int pad_h, pad_w, out_h, out_w;
    int in_per_group, out_per_group;
};

ConvGeometry check_shapes(const Tensor4& input, const Tensor4& weights, const ConvParams& p) {
    const auto& in = input.dims();
    const auto& w = weights.dims();
    if (p.stride < 1 || p.dilation < 1 || p.groups < 1) {
        throw ArchError(fmt::format("conv2d: stride {}, dilation {}, groups {} must be positive",
                                    p.stride, p.dilation, p.groups));
    }
    if (in[1] % p.groups != 0 || w[0] % p.groups != 0) {
        throw ArchError(fmt::format("conv2d: groups {} must divide input channels {} and output "
                                    "channels {}",
                                    p.groups, in[1], w[0]));
    }
    if (w[1] != in[1] / p.groups) {
        throw ArchError(fmt::format("conv2d: weights expect {} channels per group, input has "
                                    "{} / {} = {}",
                                    w[1], in[1], p.groups, in[1] / p.groups));
    }
    ConvGeometry g{};
    g.batch = in[0];
    g.in_channels = in[1];
    g.in_h = in[2];
    g.in_w = in[3];
    g.out_channels = w[0];
    g.kernel_h = w[2];
    g.kernel_w = w[3];
    g.pad_h = same_padding(g.kernel_h, p.dilation);
    g.pad_w = same_padding(g.kernel_w, p.dilation);
    g.out_h = (g.in_h + 2 * g.pad_h - p.dilation * (g.kernel_h - 1) - 1) / p.stride + 1;
    g.out_w = (g.in_w + 2 * g.pad_w - p.dilation * (g.kernel_w - 1) - 1) / p.stride + 1;
    if (g.out_h < 1 || g.out_w < 1) {
        throw ArchError(fmt::format("conv2d: {}x{} input too small for a {}x{} kernel", g.in_h,
                                    g.in_w, g.kernel_h, g.kernel_w));
    }
    g.in_per_group = g.in_channels / p.groups;
    g.out_per_group = g.out_channels / p.groups;
    return g;
}

// One output plane (sample n, output channel oc). Accumulation order is fixed:
// input channel, then kernel row, then kernel column.
void output_plane(const Tensor4& input, const Tensor4& weights, const ConvParams& p,
                  const ConvGeometry& g, int n, int oc, Tensor4& out) {
    const int first_in = (oc / g.out_per_group) * g.in_per_group;
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            double sum = 0.0;
            for (int ic = 0; ic < g.in_per_group; ++ic) {
                for (int ky = 0; ky < g.kernel_h; ++ky) {
                    const int iy = oy * p.stride - g.pad_h + ky * p.dilation;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int kx = 0; kx < g.kernel_w; ++kx) {
                        const int ix = ox * p.stride - g.pad_w + kx * p.dilation;
                        if (ix < 0 || ix >= g.in_w) continue;
                        sum += input(n, first_in + ic, iy, ix) * weights(oc, ic, ky, kx);
                    }
                }
            }
            out(n, oc, oy, ox) = sum;
        }
    }
}

}  // namespace

std::array<int, 4> conv_weight_shape(const ConvLayer& layer) {
    if (layer.groups < 1 || layer.in_channels % layer.groups != 0) {
        throw ArchError(fmt::format("groups {} do not divide {} input channels", layer.groups,
                                    layer.in_channels));
    }
    return {layer.out_channels, layer.in_channels / layer.groups, layer.kernel_h, layer.kernel_w};
}

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weights, const ConvParams& params) {
    const auto g = check_shapes(input, weights, params);
    Tensor4 out(g.batch, g.out_channels, g.out_h, g.out_w);
    const int planes = g.batch * g.out_channels;
#pragma omp parallel for schedule(static)
    for (int plane = 0; plane < planes; ++plane) {
        output_plane(input, weights, params, g, plane / g.out_channels, plane % g.out_channels,
                     out);
    }
    return out;
}

Tensor4 conv2d_forward_serial(const Tensor4& input, const Tensor4& weights,
                              const ConvParams& params) {
    const auto g = check_shapes(input, weights, params);
    Tensor4 out(g.batch, g.out_channels, g.out_h, g.out_w);
    for (int n = 0; n < g.batch; ++n) {
        for (int oc = 0; oc < g.out_channels; ++oc) {
            output_plane(input, weights, params, g, n, oc, out);
        }
    }
    return out;
}

}  // namespace cheapconv::kernel
