#include "rockseg/nn.hpp"

#include <algorithm>
#include <cmath>

#include "rockseg/errors.hpp"
#include "rockseg/parallel.hpp"
#include "rockseg/rng.hpp"

namespace rockseg::nn {

Family family_from_string(const std::string& s) {
    if (s == "segnet") return Family::SegNet;
    if (s == "unet") return Family::UNet;
    if (s == "resnet") return Family::ResNet;
    if (s == "uresnet") return Family::UResNet;
    throw ValidationError("unknown network family '" + s + "'");
}

std::string family_to_string(Family f) {
    switch (f) {
        case Family::SegNet: return "segnet";
        case Family::UNet: return "unet";
        case Family::ResNet: return "resnet";
        case Family::UResNet: return "uresnet";
    }
    return "?";
}

std::string block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::Input: return "input";
        case BlockKind::Conv: return "conv";
        case BlockKind::BatchNorm: return "batch_norm";
        case BlockKind::ReLU: return "relu";
        case BlockKind::MaxPool: return "max_pool";
        case BlockKind::TConv: return "transposed_conv";
        case BlockKind::Concat: return "concat";
        case BlockKind::Add: return "add";
    }
    return "?";
}

int NetworkSpec::width(int level) const {
    return std::max(1, static_cast<int>(std::llround(base_width * std::pow(growth, level))));
}

void NetworkSpec::validate() const {
    if (dimensionality != 2 && dimensionality != 3)
        throw ValidationError("network spec: dimensionality must be 2 or 3");
    if (depth < 1) throw ValidationError("network spec: depth must be >= 1");
    if (base_width < 1) throw ValidationError("network spec: base_width must be >= 1");
    if (growth < 1.0) throw ValidationError("network spec: growth must be >= 1");
    if (in_channels < 1) throw ValidationError("network spec: in_channels must be >= 1");
    if (n_phases < 2) throw ValidationError("network spec: n_phases must be >= 2");
}

std::int64_t Node::param_count_formula() const {
    switch (kind) {
        case BlockKind::Conv:
        case BlockKind::TConv:
            return static_cast<std::int64_t>(kernel[0]) * kernel[1] * kernel[2] *
                       in_channels * out_channels +
                   out_channels;
        case BlockKind::BatchNorm:
            return 2 * static_cast<std::int64_t>(out_channels);
        default:
            return 0;
    }
}

int BlockGraph::concat_edges() const {
    int n = 0;
    for (const auto& node : nodes) n += node.kind == BlockKind::Concat;
    return n;
}

int BlockGraph::add_edges() const {
    int n = 0;
    for (const auto& node : nodes) n += node.kind == BlockKind::Add;
    return n;
}

namespace {

struct Builder {
    BlockGraph g;
    bool is3d;

    int push(Node n) {
        g.nodes.push_back(std::move(n));
        return static_cast<int>(g.nodes.size()) - 1;
    }
    int input(int channels) {
        Node n;
        n.kind = BlockKind::Input;
        n.out_channels = channels;
        return push(n);
    }
    int conv(int in, int cin, int cout, int k, int level) {
        Node n;
        n.kind = BlockKind::Conv;
        n.inputs = {in};
        n.in_channels = cin;
        n.out_channels = cout;
        n.kernel = {(is3d && k > 1) ? k : 1, k, k};
        n.pad = {n.kernel[0] / 2, n.kernel[1] / 2, n.kernel[2] / 2};
        n.level = level;
        return push(n);
    }
    int bn(int in, int c, int level) {
        Node n;
        n.kind = BlockKind::BatchNorm;
        n.inputs = {in};
        n.in_channels = c;
        n.out_channels = c;
        n.level = level;
        return push(n);
    }
    int relu(int in, int c) {
        Node n;
        n.kind = BlockKind::ReLU;
        n.inputs = {in};
        n.in_channels = c;
        n.out_channels = c;
        return push(n);
    }
    int pool(int in, int c, int level) {
        Node n;
        n.kind = BlockKind::MaxPool;
        n.inputs = {in};
        n.in_channels = c;
        n.out_channels = c;
        n.kernel = {is3d ? 2 : 1, 2, 2};
        n.stride = n.kernel;
        n.level = level;
        return push(n);
    }
    int tconv(int in, int cin, int cout, int level) {
        Node n;
        n.kind = BlockKind::TConv;
        n.inputs = {in};
        n.in_channels = cin;
        n.out_channels = cout;
        n.kernel = {is3d ? 3 : 1, 3, 3};
        n.stride = {is3d ? 2 : 1, 2, 2};
        n.pad = {is3d ? 1 : 0, 1, 1};
        n.level = level;
        return push(n);
    }
    int concat(int a, int b, int ca, int cb) {
        Node n;
        n.kind = BlockKind::Concat;
        n.inputs = {a, b};
        n.out_channels = ca + cb;
        return push(n);
    }
    int add(int a, int b, int c) {
        Node n;
        n.kind = BlockKind::Add;
        n.inputs = {a, b};
        n.in_channels = c;
        n.out_channels = c;
        return push(n);
    }

    int cbr(int x, int cin, int cout, int level) {
        x = conv(x, cin, cout, 3, level);
        x = bn(x, cout, level);
        return relu(x, cout);
    }

    // Residual block: 1x1 projection shortcut, two convolutions on the main
    // path, add, ReLU.
    int res_block(int x, int cin, int cout, int level) {
        const int shortcut = conv(x, cin, cout, 1, level);
        int m = conv(x, cin, cout, 3, level);
        m = bn(m, cout, level);
        m = relu(m, cout);
        m = conv(m, cout, cout, 3, level);
        m = bn(m, cout, level);
        const int sum = add(m, shortcut, cout);
        return relu(sum, cout);
    }
};

} // namespace

BlockGraph build(const NetworkSpec& spec) {
    spec.validate();
    Builder b;
    b.g.spec = spec;
    b.is3d = spec.dimensionality == 3;
    const bool residual = spec.family == Family::ResNet || spec.family == Family::UResNet;
    const bool long_skips = spec.family == Family::UNet || spec.family == Family::UResNet;

    int x = b.input(spec.in_channels);
    std::vector<int> skip(spec.depth, -1);

    int c_prev = spec.in_channels;
    for (int l = 0; l < spec.depth; ++l) {
        const int c = spec.width(l);
        if (residual) {
            x = b.res_block(x, c_prev, c, l);
            x = b.res_block(x, c, c, l);
        } else {
            x = b.cbr(x, c_prev, c, l);
            x = b.cbr(x, c, c, l);
        }
        skip[l] = x;
        x = b.pool(x, c, l);
        c_prev = c;
    }

    const int c_bott = spec.width(spec.depth);
    if (residual) {
        x = b.res_block(x, c_prev, c_bott, spec.depth);
        x = b.res_block(x, c_bott, c_bott, spec.depth);
    } else {
        x = b.cbr(x, c_prev, c_bott, spec.depth);
        x = b.cbr(x, c_bott, c_bott, spec.depth);
    }
    c_prev = c_bott;

    for (int l = spec.depth - 1; l >= 0; --l) {
        const int c = spec.width(l);
        x = b.tconv(x, c_prev, c, l);
        x = b.bn(x, c, l);
        x = b.relu(x, c);
        int cin = c;
        if (long_skips) {
            x = b.concat(x, skip[l], c, c);
            cin = 2 * c;
        }
        if (residual) {
            x = b.res_block(x, cin, c, l);
            x = b.res_block(x, c, c, l);
        } else {
            x = b.cbr(x, cin, c, l);
            x = b.cbr(x, c, c, l);
        }
        c_prev = c;
    }

    b.g.output = b.conv(x, c_prev, spec.n_phases, 1, 0);
    return std::move(b.g);
}

std::int64_t count_params(const BlockGraph& graph) {
    std::int64_t total = 0;
    for (const auto& n : graph.nodes) total += n.param_count_formula();
    return total;
}

std::int64_t count_params_registry(const BlockGraph& graph) {
    if (!graph.allocated) throw ValidationError("count_params_registry: graph not allocated");
    std::int64_t total = 0;
    for (const auto& n : graph.nodes)
        total += n.weight.size() + n.bias.size() + n.gamma.size() + n.beta.size();
    return total;
}

void allocate(BlockGraph& graph, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& n : graph.nodes) {
        if (n.kind == BlockKind::Conv || n.kind == BlockKind::TConv) {
            n.weight = Tensor(n.out_channels, n.in_channels, n.kernel[0], n.kernel[1],
                              n.kernel[2]);
            n.bias = Tensor(1, n.out_channels, 1, 1, 1);
            const double fan_in =
                static_cast<double>(n.kernel[0]) * n.kernel[1] * n.kernel[2] * n.in_channels;
            const double std_dev = std::sqrt(2.0 / fan_in);
            for (auto& v : n.weight.v) v = std_dev * rng.normal();
            n.gweight = Tensor(n.out_channels, n.in_channels, n.kernel[0], n.kernel[1],
                               n.kernel[2]);
            n.gbias = Tensor(1, n.out_channels, 1, 1, 1);
        } else if (n.kind == BlockKind::BatchNorm) {
            n.gamma = Tensor(1, n.out_channels, 1, 1, 1);
            n.beta = Tensor(1, n.out_channels, 1, 1, 1);
            n.run_mean = Tensor(1, n.out_channels, 1, 1, 1);
            n.run_var = Tensor(1, n.out_channels, 1, 1, 1);
            for (auto& v : n.gamma.v) v = 1.0;
            for (auto& v : n.run_var.v) v = 1.0;
            n.ggamma = Tensor(1, n.out_channels, 1, 1, 1);
            n.gbeta = Tensor(1, n.out_channels, 1, 1, 1);
        }
    }
    graph.allocated = true;
}

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

void conv_forward(const Node& nd, const Tensor& in, Tensor& out) {
    out = Tensor(in.n, nd.out_channels, in.d, in.h, in.w);
    const auto [kd, kh, kw] = nd.kernel;
    const auto [pd, ph, pw] = nd.pad;
    parallel_for(0, static_cast<std::int64_t>(in.n) * nd.out_channels,
                 [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t job = lo; job < hi; ++job) {
            const int ni = static_cast<int>(job / nd.out_channels);
            const int oc = static_cast<int>(job % nd.out_channels);
            double* op = out.plane(ni, oc);
            const double bias = nd.bias.v[oc];
            for (std::int64_t i = 0; i < out.spatial(); ++i) op[i] = bias;
            for (int ic = 0; ic < nd.in_channels; ++ic) {
                const double* ip = in.plane(ni, ic);
                for (int kz = 0; kz < kd; ++kz)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv =
                                nd.weight.v[(((static_cast<std::int64_t>(oc) * nd.in_channels +
                                               ic) * kd + kz) * kh + ky) * kw + kx];
                            if (wv == 0.0) continue;
                            const int dz = kz - pd, dy = ky - ph, dx = kx - pw;
                            const int z0 = std::max(0, -dz), z1 = std::min(in.d, in.d - dz);
                            const int y0 = std::max(0, -dy), y1 = std::min(in.h, in.h - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(in.w, in.w - dx);
                            for (int z = z0; z < z1; ++z)
                                for (int y = y0; y < y1; ++y) {
                                    double* orow =
                                        op + (static_cast<std::int64_t>(z) * in.h + y) * in.w;
                                    const double* irow =
                                        ip + (static_cast<std::int64_t>(z + dz) * in.h + y + dy) *
                                                 in.w + dx;
                                    for (int xx = x0; xx < x1; ++xx)
                                        orow[xx] += wv * irow[xx];
                                }
                        }
            }
        }
    });
}

void conv_backward(Node& nd, const Tensor& in, const Tensor& gout, Tensor& gin) {
    const auto [kd, kh, kw] = nd.kernel;
    const auto [pd, ph, pw] = nd.pad;
    gin = Tensor(in.n, in.c, in.d, in.h, in.w);

    // Input gradient: each (n, ic) plane accumulated independently.
    parallel_for(0, static_cast<std::int64_t>(in.n) * nd.in_channels,
                 [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t job = lo; job < hi; ++job) {
            const int ni = static_cast<int>(job / nd.in_channels);
            const int ic = static_cast<int>(job % nd.in_channels);
            double* gp = gin.plane(ni, ic);
            for (int oc = 0; oc < nd.out_channels; ++oc) {
                const double* gop = gout.plane(ni, oc);
                for (int kz = 0; kz < kd; ++kz)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv =
                                nd.weight.v[(((static_cast<std::int64_t>(oc) * nd.in_channels +
                                               ic) * kd + kz) * kh + ky) * kw + kx];
                            if (wv == 0.0) continue;
                            const int dz = kz - pd, dy = ky - ph, dx = kx - pw;
                            const int z0 = std::max(0, -dz), z1 = std::min(in.d, in.d - dz);
                            const int y0 = std::max(0, -dy), y1 = std::min(in.h, in.h - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(in.w, in.w - dx);
                            for (int z = z0; z < z1; ++z)
                                for (int y = y0; y < y1; ++y) {
                                    const double* gorow =
                                        gop + (static_cast<std::int64_t>(z) * in.h + y) * in.w;
                                    double* girow =
                                        gp + (static_cast<std::int64_t>(z + dz) * in.h + y + dy) *
                                                 in.w + dx;
                                    for (int xx = x0; xx < x1; ++xx)
                                        girow[xx] += wv * gorow[xx];
                                }
                        }
            }
        }
    });

    // Weight and bias gradients: one thread owns an output channel.
    parallel_for(0, nd.out_channels, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t oc = lo; oc < hi; ++oc) {
            double gb = 0.0;
            for (int ni = 0; ni < in.n; ++ni) {
                const double* gop = gout.plane(ni, static_cast<int>(oc));
                for (std::int64_t i = 0; i < gout.spatial(); ++i) gb += gop[i];
            }
            nd.gbias.v[oc] = gb;
            for (int ic = 0; ic < nd.in_channels; ++ic)
                for (int kz = 0; kz < kd; ++kz)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int dz = kz - pd, dy = ky - ph, dx = kx - pw;
                            const int z0 = std::max(0, -dz), z1 = std::min(in.d, in.d - dz);
                            const int y0 = std::max(0, -dy), y1 = std::min(in.h, in.h - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(in.w, in.w - dx);
                            double acc = 0.0;
                            for (int ni = 0; ni < in.n; ++ni) {
                                const double* gop = gout.plane(ni, static_cast<int>(oc));
                                const double* ip = in.plane(ni, ic);
                                for (int z = z0; z < z1; ++z)
                                    for (int y = y0; y < y1; ++y) {
                                        const double* gorow =
                                            gop +
                                            (static_cast<std::int64_t>(z) * in.h + y) * in.w;
                                        const double* irow =
                                            ip + (static_cast<std::int64_t>(z + dz) * in.h + y +
                                                  dy) * in.w + dx;
                                        for (int xx = x0; xx < x1; ++xx)
                                            acc += gorow[xx] * irow[xx];
                                    }
                            }
                            nd.gweight.v[(((static_cast<std::int64_t>(oc) * nd.in_channels + ic) *
                                           kd + kz) * kh + ky) * kw + kx] = acc;
                        }
        }
    });
}

void tconv_forward(const Node& nd, const Tensor& in, Tensor& out) {
    const auto [kd, kh, kw] = nd.kernel;
    const auto [sd, sh, sw] = nd.stride;
    const auto [pd, ph, pw] = nd.pad;
    out = Tensor(in.n, nd.out_channels, in.d * sd, in.h * sh, in.w * sw);
    parallel_for(0, static_cast<std::int64_t>(in.n) * nd.out_channels,
                 [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t job = lo; job < hi; ++job) {
            const int ni = static_cast<int>(job / nd.out_channels);
            const int oc = static_cast<int>(job % nd.out_channels);
            double* op = out.plane(ni, oc);
            const double bias = nd.bias.v[oc];
            for (std::int64_t i = 0; i < out.spatial(); ++i) op[i] = bias;
            for (int ic = 0; ic < nd.in_channels; ++ic) {
                const double* ip = in.plane(ni, ic);
                for (int zi = 0; zi < in.d; ++zi)
                    for (int kz = 0; kz < kd; ++kz) {
                        const int zo = sd * zi + kz - pd;
                        if (zo < 0 || zo >= out.d) continue;
                        for (int yi = 0; yi < in.h; ++yi)
                            for (int ky = 0; ky < kh; ++ky) {
                                const int yo = sh * yi + ky - ph;
                                if (yo < 0 || yo >= out.h) continue;
                                const double* irow =
                                    ip + (static_cast<std::int64_t>(zi) * in.h + yi) * in.w;
                                double* orow =
                                    op + (static_cast<std::int64_t>(zo) * out.h + yo) * out.w;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const double wv =
                                        nd.weight.v[(((static_cast<std::int64_t>(oc) *
                                                       nd.in_channels + ic) * kd + kz) * kh + ky) *
                                                    kw + kx];
                                    if (wv == 0.0) continue;
                                    for (int xi = 0; xi < in.w; ++xi) {
                                        const int xo = sw * xi + kx - pw;
                                        if (xo < 0 || xo >= out.w) continue;
                                        orow[xo] += wv * irow[xi];
                                    }
                                }
                            }
                    }
            }
        }
    });
}

void tconv_backward(Node& nd, const Tensor& in, const Tensor& gout, Tensor& gin) {
    const auto [kd, kh, kw] = nd.kernel;
    const auto [sd, sh, sw] = nd.stride;
    const auto [pd, ph, pw] = nd.pad;
    gin = Tensor(in.n, in.c, in.d, in.h, in.w);

    parallel_for(0, static_cast<std::int64_t>(in.n) * nd.in_channels,
                 [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t job = lo; job < hi; ++job) {
            const int ni = static_cast<int>(job / nd.in_channels);
            const int ic = static_cast<int>(job % nd.in_channels);
            double* gp = gin.plane(ni, ic);
            for (int oc = 0; oc < nd.out_channels; ++oc) {
                const double* gop = gout.plane(ni, oc);
                for (int zi = 0; zi < in.d; ++zi)
                    for (int kz = 0; kz < kd; ++kz) {
                        const int zo = sd * zi + kz - pd;
                        if (zo < 0 || zo >= gout.d) continue;
                        for (int yi = 0; yi < in.h; ++yi)
                            for (int ky = 0; ky < kh; ++ky) {
                                const int yo = sh * yi + ky - ph;
                                if (yo < 0 || yo >= gout.h) continue;
                                double* girow =
                                    gp + (static_cast<std::int64_t>(zi) * in.h + yi) * in.w;
                                const double* gorow =
                                    gop + (static_cast<std::int64_t>(zo) * gout.h + yo) * gout.w;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const double wv =
                                        nd.weight.v[(((static_cast<std::int64_t>(oc) *
                                                       nd.in_channels + ic) * kd + kz) * kh + ky) *
                                                    kw + kx];
                                    if (wv == 0.0) continue;
                                    for (int xi = 0; xi < in.w; ++xi) {
                                        const int xo = sw * xi + kx - pw;
                                        if (xo < 0 || xo >= gout.w) continue;
                                        girow[xi] += wv * gorow[xo];
                                    }
                                }
                            }
                    }
            }
        }
    });

    parallel_for(0, nd.out_channels, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t oc = lo; oc < hi; ++oc) {
            double gb = 0.0;
            for (int ni = 0; ni < in.n; ++ni) {
                const double* gop = gout.plane(ni, static_cast<int>(oc));
                for (std::int64_t i = 0; i < gout.spatial(); ++i) gb += gop[i];
            }
            nd.gbias.v[oc] = gb;
            for (int ic = 0; ic < nd.in_channels; ++ic)
                for (int kz = 0; kz < kd; ++kz)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            double acc = 0.0;
                            for (int ni = 0; ni < in.n; ++ni) {
                                const double* ip = in.plane(ni, ic);
                                const double* gop = gout.plane(ni, static_cast<int>(oc));
                                for (int zi = 0; zi < in.d; ++zi) {
                                    const int zo = sd * zi + kz - pd;
                                    if (zo < 0 || zo >= gout.d) continue;
                                    for (int yi = 0; yi < in.h; ++yi) {
                                        const int yo = sh * yi + ky - ph;
                                        if (yo < 0 || yo >= gout.h) continue;
                                        const double* irow =
                                            ip +
                                            (static_cast<std::int64_t>(zi) * in.h + yi) * in.w;
                                        const double* gorow =
                                            gop + (static_cast<std::int64_t>(zo) * gout.h + yo) *
                                                      gout.w;
                                        for (int xi = 0; xi < in.w; ++xi) {
                                            const int xo = sw * xi + kx - pw;
                                            if (xo < 0 || xo >= gout.w) continue;
                                            acc += irow[xi] * gorow[xo];
                                        }
                                    }
                                }
                            }
                            nd.gweight.v[(((static_cast<std::int64_t>(oc) * nd.in_channels + ic) *
                                           kd + kz) * kh + ky) * kw + kx] = acc;
                        }
        }
    });
}

} // namespace

Tensor forward(BlockGraph& graph, const Tensor& input, bool training, Activations* cache) {
    if (!graph.allocated) throw ValidationError("forward: graph parameters not allocated");
    if (input.c != graph.spec.in_channels)
        throw ShapeError("forward: input has " + std::to_string(input.c) +
                         " channels, spec expects " + std::to_string(graph.spec.in_channels));
    if (graph.spec.dimensionality == 2 && input.d != 1)
        throw ShapeError("forward: 2D network expects depth-1 input");

    Activations local;
    Activations& act = cache ? *cache : local;
    act.value.assign(graph.nodes.size(), Tensor());
    act.aux.assign(graph.nodes.size(), Tensor());

    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        Node& nd = graph.nodes[i];
        Tensor& out = act.value[i];
        switch (nd.kind) {
            case BlockKind::Input:
                out = input;
                break;
            case BlockKind::Conv:
                conv_forward(nd, act.value[nd.inputs[0]], out);
                break;
            case BlockKind::TConv:
                tconv_forward(nd, act.value[nd.inputs[0]], out);
                break;
            case BlockKind::ReLU: {
                const Tensor& in = act.value[nd.inputs[0]];
                out = in;
                for (auto& v : out.v) v = v > 0 ? v : 0.0;
                break;
            }
            case BlockKind::MaxPool: {
                const Tensor& in = act.value[nd.inputs[0]];
                const auto [sd, sh, sw] = nd.stride;
                if (in.d % sd || in.h % sh || in.w % sw)
                    throw ShapeError("forward: spatial shape (" + std::to_string(in.d) + "," +
                                     std::to_string(in.h) + "," + std::to_string(in.w) +
                                     ") not divisible by 2 at encoder level " +
                                     std::to_string(nd.level));
                out = Tensor(in.n, in.c, in.d / sd, in.h / sh, in.w / sw);
                Tensor& arg = act.aux[i];
                arg = Tensor(in.n, in.c, out.d, out.h, out.w);
                for (int ni = 0; ni < in.n; ++ni)
                    for (int ci = 0; ci < in.c; ++ci) {
                        const double* ip = in.plane(ni, ci);
                        double* op = out.plane(ni, ci);
                        double* ap = arg.plane(ni, ci);
                        for (int z = 0; z < out.d; ++z)
                            for (int y = 0; y < out.h; ++y)
                                for (int x = 0; x < out.w; ++x) {
                                    double best = -1e308;
                                    std::int64_t besti = -1;
                                    for (int dz = 0; dz < sd; ++dz)
                                        for (int dy = 0; dy < sh; ++dy)
                                            for (int dx = 0; dx < sw; ++dx) {
                                                const std::int64_t idx =
                                                    (static_cast<std::int64_t>(z * sd + dz) *
                                                         in.h + y * sh + dy) * in.w +
                                                    x * sw + dx;
                                                if (ip[idx] > best) {
                                                    best = ip[idx];
                                                    besti = idx;
                                                }
                                            }
                                    const std::int64_t o =
                                        (static_cast<std::int64_t>(z) * out.h + y) * out.w + x;
                                    op[o] = best;
                                    ap[o] = static_cast<double>(besti);
                                }
                    }
                break;
            }
            case BlockKind::BatchNorm: {
                const Tensor& in = act.value[nd.inputs[0]];
                out = Tensor(in.n, in.c, in.d, in.h, in.w);
                Tensor& xhat = act.aux[i];
                xhat = Tensor(in.n, in.c, in.d, in.h, in.w);
                const std::int64_t per_chan = static_cast<std::int64_t>(in.n) * in.spatial();
                for (int ci = 0; ci < in.c; ++ci) {
                    double mean, var;
                    if (training) {
                        double s = 0;
                        for (int ni = 0; ni < in.n; ++ni) {
                            const double* ip = in.plane(ni, ci);
                            for (std::int64_t k = 0; k < in.spatial(); ++k) s += ip[k];
                        }
                        mean = s / per_chan;
                        double s2 = 0;
                        for (int ni = 0; ni < in.n; ++ni) {
                            const double* ip = in.plane(ni, ci);
                            for (std::int64_t k = 0; k < in.spatial(); ++k)
                                s2 += (ip[k] - mean) * (ip[k] - mean);
                        }
                        var = s2 / per_chan;
                        nd.run_mean.v[ci] =
                            (1 - kBnMomentum) * nd.run_mean.v[ci] + kBnMomentum * mean;
                        nd.run_var.v[ci] =
                            (1 - kBnMomentum) * nd.run_var.v[ci] + kBnMomentum * var;
                    } else {
                        mean = nd.run_mean.v[ci];
                        var = nd.run_var.v[ci];
                    }
                    const double inv = 1.0 / std::sqrt(var + kBnEps);
                    const double g = nd.gamma.v[ci], be = nd.beta.v[ci];
                    for (int ni = 0; ni < in.n; ++ni) {
                        const double* ip = in.plane(ni, ci);
                        double* xp = xhat.plane(ni, ci);
                        double* op = out.plane(ni, ci);
                        for (std::int64_t k = 0; k < in.spatial(); ++k) {
                            xp[k] = (ip[k] - mean) * inv;
                            op[k] = g * xp[k] + be;
                        }
                    }
                }
                break;
            }
            case BlockKind::Concat: {
                const Tensor& a = act.value[nd.inputs[0]];
                const Tensor& bb = act.value[nd.inputs[1]];
                if (a.n != bb.n || a.d != bb.d || a.h != bb.h || a.w != bb.w)
                    throw ShapeError("concat: incompatible shapes");
                out = Tensor(a.n, a.c + bb.c, a.d, a.h, a.w);
                for (int ni = 0; ni < a.n; ++ni) {
                    for (int ci = 0; ci < a.c; ++ci)
                        std::copy(a.plane(ni, ci), a.plane(ni, ci) + a.spatial(),
                                  out.plane(ni, ci));
                    for (int ci = 0; ci < bb.c; ++ci)
                        std::copy(bb.plane(ni, ci), bb.plane(ni, ci) + bb.spatial(),
                                  out.plane(ni, a.c + ci));
                }
                break;
            }
            case BlockKind::Add: {
                const Tensor& a = act.value[nd.inputs[0]];
                const Tensor& bb = act.value[nd.inputs[1]];
                if (a.shape() != bb.shape()) throw ShapeError("add: incompatible shapes");
                out = a;
                for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] += bb.v[k];
                break;
            }
        }
    }
    return act.value[graph.output];
}

BackwardResult backward(BlockGraph& graph, const Tensor& input, const LabelBatch& truth,
                        const ClassWeights& weights, Activations& cache) {
    const Tensor logits = forward(graph, input, true, &cache);
    if (logits.n != truth.n || logits.d != truth.d || logits.h != truth.h ||
        logits.w != truth.w)
        throw ShapeError("backward: truth shape does not match logits");
    if (static_cast<int>(weights.w.size()) != logits.c)
        throw ShapeError("backward: weight vector length != n_phases");

    // Loss and output gradient: XE = -(1/N) sum w[t] log softmax[t].
    BackwardResult res;
    const std::int64_t nvox = static_cast<std::int64_t>(truth.n) * truth.d * truth.h * truth.w;
    std::vector<Tensor> grad(graph.nodes.size());
    Tensor& gout = grad[graph.output];
    gout = Tensor(logits.n, logits.c, logits.d, logits.h, logits.w);

    const double log_floor = std::log(kXeProbFloor);
    double loss = 0.0;
    const std::int64_t spatial = logits.spatial();
    for (int ni = 0; ni < logits.n; ++ni)
        for (std::int64_t k = 0; k < spatial; ++k) {
            double m = -1e308;
            for (int ci = 0; ci < logits.c; ++ci)
                m = std::max(m, logits.plane(ni, ci)[k]);
            double z = 0;
            for (int ci = 0; ci < logits.c; ++ci)
                z += std::exp(logits.plane(ni, ci)[k] - m);
            const int t = truth.labels[ni * spatial + k];
            const double wt = weights.w[t];
            const double logp = logits.plane(ni, t)[k] - m - std::log(z);
            if (logp < log_floor) {
                ++res.clamped_voxels;
                loss += -wt * log_floor;
            } else {
                loss += -wt * logp;
            }
            for (int ci = 0; ci < logits.c; ++ci) {
                const double p = std::exp(logits.plane(ni, ci)[k] - m) / z;
                gout.plane(ni, ci)[k] = wt * (p - (ci == t ? 1.0 : 0.0)) / nvox;
            }
        }
    res.loss = loss / static_cast<double>(nvox);

    for (int i = static_cast<int>(graph.nodes.size()) - 1; i >= 0; --i) {
        Node& nd = graph.nodes[i];
        if (grad[i].v.empty() && nd.kind != BlockKind::Input) continue; // unused branch
        switch (nd.kind) {
            case BlockKind::Input:
                break;
            case BlockKind::Conv: {
                Tensor gin;
                conv_backward(nd, cache.value[nd.inputs[0]], grad[i], gin);
                Tensor& dst = grad[nd.inputs[0]];
                if (dst.v.empty()) dst = std::move(gin);
                else
                    for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += gin.v[k];
                break;
            }
            case BlockKind::TConv: {
                Tensor gin;
                tconv_backward(nd, cache.value[nd.inputs[0]], grad[i], gin);
                Tensor& dst = grad[nd.inputs[0]];
                if (dst.v.empty()) dst = std::move(gin);
                else
                    for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += gin.v[k];
                break;
            }
            case BlockKind::ReLU: {
                const Tensor& in = cache.value[nd.inputs[0]];
                Tensor gin = grad[i];
                for (std::size_t k = 0; k < gin.v.size(); ++k)
                    if (in.v[k] <= 0.0) gin.v[k] = 0.0;
                Tensor& dst = grad[nd.inputs[0]];
                if (dst.v.empty()) dst = std::move(gin);
                else
                    for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += gin.v[k];
                break;
            }
            case BlockKind::MaxPool: {
                const Tensor& in = cache.value[nd.inputs[0]];
                const Tensor& arg = cache.aux[i];
                Tensor gin(in.n, in.c, in.d, in.h, in.w);
                const Tensor& go = grad[i];
                for (int ni = 0; ni < in.n; ++ni)
                    for (int ci = 0; ci < in.c; ++ci) {
                        const double* gp = go.plane(ni, ci);
                        const double* ap = arg.plane(ni, ci);
                        double* gi = gin.plane(ni, ci);
                        for (std::int64_t k = 0; k < go.spatial(); ++k)
                            gi[static_cast<std::int64_t>(ap[k])] += gp[k];
                    }
                Tensor& dst = grad[nd.inputs[0]];
                if (dst.v.empty()) dst = std::move(gin);
                else
                    for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += gin.v[k];
                break;
            }
            case BlockKind::BatchNorm: {
                const Tensor& in = cache.value[nd.inputs[0]];
                const Tensor& xhat = cache.aux[i];
                const Tensor& go = grad[i];
                Tensor gin(in.n, in.c, in.d, in.h, in.w);
                const std::int64_t per_chan =
                    static_cast<std::int64_t>(in.n) * in.spatial();
                for (int ci = 0; ci < in.c; ++ci) {
                    // Recompute batch statistics (training-mode backward).
                    double s = 0;
                    for (int ni = 0; ni < in.n; ++ni) {
                        const double* ip = in.plane(ni, ci);
                        for (std::int64_t k = 0; k < in.spatial(); ++k) s += ip[k];
                    }
                    const double mean = s / per_chan;
                    double s2 = 0;
                    for (int ni = 0; ni < in.n; ++ni) {
                        const double* ip = in.plane(ni, ci);
                        for (std::int64_t k = 0; k < in.spatial(); ++k)
                            s2 += (ip[k] - mean) * (ip[k] - mean);
                    }
                    const double var = s2 / per_chan;
                    const double inv = 1.0 / std::sqrt(var + kBnEps);

                    double gg = 0, gb = 0, gxhat_sum = 0, gxhat_dot = 0;
                    for (int ni = 0; ni < in.n; ++ni) {
                        const double* gp = go.plane(ni, ci);
                        const double* xp = xhat.plane(ni, ci);
                        for (std::int64_t k = 0; k < in.spatial(); ++k) {
                            gg += gp[k] * xp[k];
                            gb += gp[k];
                        }
                    }
                    nd.ggamma.v[ci] = gg;
                    nd.gbeta.v[ci] = gb;
                    const double gamma = nd.gamma.v[ci];
                    gxhat_sum = gb * gamma;
                    gxhat_dot = gg * gamma;
                    for (int ni = 0; ni < in.n; ++ni) {
                        const double* gp = go.plane(ni, ci);
                        const double* xp = xhat.plane(ni, ci);
                        double* gi = gin.plane(ni, ci);
                        for (std::int64_t k = 0; k < in.spatial(); ++k) {
                            const double gxh = gp[k] * gamma;
                            gi[k] = inv * (gxh - gxhat_sum / per_chan -
                                           xp[k] * gxhat_dot / per_chan);
                        }
                    }
                }
                Tensor& dst = grad[nd.inputs[0]];
                if (dst.v.empty()) dst = std::move(gin);
                else
                    for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += gin.v[k];
                break;
            }
            case BlockKind::Concat: {
                const Tensor& a = cache.value[nd.inputs[0]];
                const Tensor& bb = cache.value[nd.inputs[1]];
                const Tensor& go = grad[i];
                Tensor ga(a.n, a.c, a.d, a.h, a.w), gb(bb.n, bb.c, bb.d, bb.h, bb.w);
                for (int ni = 0; ni < a.n; ++ni) {
                    for (int ci = 0; ci < a.c; ++ci)
                        std::copy(go.plane(ni, ci), go.plane(ni, ci) + a.spatial(),
                                  ga.plane(ni, ci));
                    for (int ci = 0; ci < bb.c; ++ci)
                        std::copy(go.plane(ni, a.c + ci), go.plane(ni, a.c + ci) + bb.spatial(),
                                  gb.plane(ni, ci));
                }
                for (int which = 0; which < 2; ++which) {
                    Tensor& src = which == 0 ? ga : gb;
                    Tensor& dst = grad[nd.inputs[which]];
                    if (dst.v.empty()) dst = std::move(src);
                    else
                        for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += src.v[k];
                }
                break;
            }
            case BlockKind::Add: {
                for (int which = 0; which < 2; ++which) {
                    Tensor& dst = grad[nd.inputs[which]];
                    if (dst.v.empty()) dst = grad[i];
                    else
                        for (std::size_t k = 0; k < dst.v.size(); ++k)
                            dst.v[k] += grad[i].v[k];
                }
                break;
            }
        }
        grad[i] = Tensor();
    }
    return res;
}

} // namespace rockseg::nn
