#include "objdisc/net3d.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "objdisc/errors.hpp"
#include "objdisc/rng.hpp"

namespace objdisc {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    values.assign(n, 0.0);
}

double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
double leaky_grad(double pre) { return pre > 0.0 ? 1.0 : kLeakySlope; }

// Glorot-uniform values, rounded through float so checkpoints round-trip
// bit-exactly.
void glorot_fill(Tensor& t, int fan_in, int fan_out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.values)
        v = static_cast<double>(static_cast<float>((2.0 * next_uniform(rng) - 1.0) * a));
}

namespace {

int conv_out_or_throw(int in, int k, int stride, const char* layer) {
    if (k < 1 || stride < 1)
        throw config_error(std::string(layer) + ": kernel and stride must be positive");
    if (in < k) {
        std::ostringstream msg;
        msg << layer << ": input side " << in << " is smaller than kernel " << k;
        throw config_error(msg.str());
    }
    return (in - k) / stride + 1;
}

void check_finite(const std::vector<double>& v, const char* where) {
    for (double x : v)
        if (!std::isfinite(x)) throw model_error(std::string("non-finite values in ") + where);
}

void expect_shape(const Tensor& t, const std::vector<int>& shape, const char* layer) {
    if (t.shape != shape) throw config_error(std::string(layer) + ": parameter shape mismatch");
}

// out[oc,o] = b[oc] + sum_ic,k w[oc,ic,k] * in[ic, o*stride + k], cubic dims.
void conv3d_forward(const Tensor& in, const Tensor& w, const Tensor& b, int stride, Tensor& out) {
    const int ci = in.shape[0], S = in.shape[1];
    const int co = out.shape[0], O = out.shape[1];
    const int K = w.shape[2];
    for (int oc = 0; oc < co; ++oc)
        for (int oz = 0; oz < O; ++oz)
            for (int oy = 0; oy < O; ++oy)
                for (int ox = 0; ox < O; ++ox) {
                    double acc = b.values[oc];
                    for (int ic = 0; ic < ci; ++ic)
                        for (int kz = 0; kz < K; ++kz)
                            for (int ky = 0; ky < K; ++ky) {
                                const double* wrow =
                                    &w.values[(((static_cast<std::size_t>(oc) * ci + ic) * K + kz) * K + ky) * K];
                                const double* irow =
                                    &in.values[((static_cast<std::size_t>(ic) * S + oz * stride + kz) * S + oy * stride + ky) * S + ox * stride];
                                for (int kx = 0; kx < K; ++kx) acc += wrow[kx] * irow[kx];
                            }
                    out.values[((static_cast<std::size_t>(oc) * O + oz) * O + oy) * O + ox] = acc;
                }
}

// Adjoint of conv3d_forward; d_in may be null when the input needs no grad.
void conv3d_backward(const Tensor& in, const Tensor& w, int stride, const Tensor& d_out,
                     Tensor& d_w, Tensor& d_b, Tensor* d_in) {
    const int ci = in.shape[0], S = in.shape[1];
    const int co = d_out.shape[0], O = d_out.shape[1];
    const int K = w.shape[2];
    for (int oc = 0; oc < co; ++oc)
        for (int oz = 0; oz < O; ++oz)
            for (int oy = 0; oy < O; ++oy)
                for (int ox = 0; ox < O; ++ox) {
                    const double g =
                        d_out.values[((static_cast<std::size_t>(oc) * O + oz) * O + oy) * O + ox];
                    if (g == 0.0) continue;
                    d_b.values[oc] += g;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int kz = 0; kz < K; ++kz)
                            for (int ky = 0; ky < K; ++ky) {
                                const std::size_t wbase =
                                    (((static_cast<std::size_t>(oc) * ci + ic) * K + kz) * K + ky) * K;
                                const std::size_t ibase =
                                    ((static_cast<std::size_t>(ic) * S + oz * stride + kz) * S + oy * stride + ky) * S + ox * stride;
                                for (int kx = 0; kx < K; ++kx) {
                                    d_w.values[wbase + kx] += g * in.values[ibase + kx];
                                    if (d_in) d_in->values[ibase + kx] += g * w.values[wbase + kx];
                                }
                            }
                }
}

}  // namespace

int NetConfig::conv1_out() const { return conv_out_or_throw(side, conv1_kernel, conv1_stride, "conv1"); }
int NetConfig::conv2_out() const {
    return conv_out_or_throw(conv1_out(), conv2_kernel, conv2_stride, "conv2");
}
int NetConfig::pool_out() const {
    const int s2 = conv2_out();
    if (pool < 1) throw config_error("maxpool: pool size must be positive");
    if (s2 < pool) {
        std::ostringstream msg;
        msg << "maxpool: input side " << s2 << " is smaller than pool " << pool;
        throw config_error(msg.str());
    }
    return s2 / pool;
}
void NetConfig::validate() const {
    if (side < 1) throw config_error("input: side must be positive");
    if (conv1_channels < 1 || conv2_channels < 1)
        throw config_error("conv: channel counts must be positive");
    if (fc1 < 1) throw config_error("fc1: width must be positive");
    if (embed_dim < 1) throw config_error("projection: embed_dim must be positive");
    (void)pool_out();  // walks the whole chain, throws on the first bad layer
}

NetworkParams init_params(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    NetworkParams p;
    p.config = config;
    const int k1 = config.conv1_kernel, k2 = config.conv2_kernel;
    p.conv1_w = Tensor({config.conv1_channels, 1, k1, k1, k1});
    p.conv1_b = Tensor({config.conv1_channels});
    p.conv2_w = Tensor({config.conv2_channels, config.conv1_channels, k2, k2, k2});
    p.conv2_b = Tensor({config.conv2_channels});
    p.fc1_w = Tensor({config.fc1, config.flat()});
    p.fc1_b = Tensor({config.fc1});
    p.proj_w = Tensor({config.embed_dim, config.fc1});

    std::mt19937_64 rng(seed);
    glorot_fill(p.conv1_w, k1 * k1 * k1, config.conv1_channels * k1 * k1 * k1, rng);
    glorot_fill(p.conv2_w, config.conv1_channels * k2 * k2 * k2,
                config.conv2_channels * k2 * k2 * k2, rng);
    glorot_fill(p.fc1_w, config.flat(), config.fc1, rng);
    glorot_fill(p.proj_w, config.fc1, config.embed_dim, rng);
    return p;
}

Gradients zero_gradients(const NetworkParams& params) {
    Gradients g;
    const auto src = tensor_list(params);
    const auto dst = tensor_list(g);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = Tensor(src[i]->shape);
    return g;
}

std::vector<double> forward_embed(const NetworkParams& p, const OccupancyGrid& grid,
                                  ForwardTrace* trace) {
    const NetConfig& cfg = p.config;
    cfg.validate();
    if (grid.side != cfg.side) {
        std::ostringstream msg;
        msg << "input: grid side " << grid.side << " does not match configured side " << cfg.side;
        throw config_error(msg.str());
    }
    const int s1 = cfg.conv1_out(), s2 = cfg.conv2_out(), sp = cfg.pool_out();
    const int k1 = cfg.conv1_kernel, k2 = cfg.conv2_kernel;
    expect_shape(p.conv1_w, {cfg.conv1_channels, 1, k1, k1, k1}, "conv1");
    expect_shape(p.conv1_b, {cfg.conv1_channels}, "conv1");
    expect_shape(p.conv2_w, {cfg.conv2_channels, cfg.conv1_channels, k2, k2, k2}, "conv2");
    expect_shape(p.conv2_b, {cfg.conv2_channels}, "conv2");
    expect_shape(p.fc1_w, {cfg.fc1, cfg.flat()}, "fc1");
    expect_shape(p.fc1_b, {cfg.fc1}, "fc1");
    expect_shape(p.proj_w, {cfg.embed_dim, cfg.fc1}, "projection");

    ForwardTrace t;
    t.input = Tensor({1, cfg.side, cfg.side, cfg.side});
    for (std::size_t i = 0; i < grid.values.size(); ++i)
        t.input.values[i] = static_cast<double>(grid.values[i]);

    t.conv1_pre = Tensor({cfg.conv1_channels, s1, s1, s1});
    conv3d_forward(t.input, p.conv1_w, p.conv1_b, cfg.conv1_stride, t.conv1_pre);
    t.act1 = t.conv1_pre;
    for (double& v : t.act1.values) v = leaky(v);

    t.conv2_pre = Tensor({cfg.conv2_channels, s2, s2, s2});
    conv3d_forward(t.act1, p.conv2_w, p.conv2_b, cfg.conv2_stride, t.conv2_pre);
    t.act2 = t.conv2_pre;
    for (double& v : t.act2.values) v = leaky(v);

    t.pooled = Tensor({cfg.conv2_channels, sp, sp, sp});
    t.pool_argmax.assign(t.pooled.numel(), -1);
    std::size_t out_idx = 0;
    for (int c = 0; c < cfg.conv2_channels; ++c)
        for (int pz = 0; pz < sp; ++pz)
            for (int py = 0; py < sp; ++py)
                for (int px = 0; px < sp; ++px, ++out_idx) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_idx = -1;
                    for (int dz = 0; dz < cfg.pool; ++dz)
                        for (int dy = 0; dy < cfg.pool; ++dy)
                            for (int dx = 0; dx < cfg.pool; ++dx) {
                                const int z = pz * cfg.pool + dz, y = py * cfg.pool + dy,
                                          x = px * cfg.pool + dx;
                                const std::size_t idx =
                                    ((static_cast<std::size_t>(c) * s2 + z) * s2 + y) * s2 + x;
                                if (t.act2.values[idx] > best) {  // first max wins ties
                                    best = t.act2.values[idx];
                                    best_idx = static_cast<int>(idx);
                                }
                            }
                    t.pooled.values[out_idx] = best;
                    t.pool_argmax[out_idx] = best_idx;
                }

    t.fc1_pre = Tensor({cfg.fc1});
    for (int i = 0; i < cfg.fc1; ++i) {
        double acc = p.fc1_b.values[i];
        const double* wrow = &p.fc1_w.values[static_cast<std::size_t>(i) * cfg.flat()];
        for (int j = 0; j < cfg.flat(); ++j) acc += wrow[j] * t.pooled.values[j];
        t.fc1_pre.values[i] = acc;
    }
    t.fc1_act = t.fc1_pre;
    for (double& v : t.fc1_act.values) v = leaky(v);

    t.embedding.assign(cfg.embed_dim, 0.0);
    for (int i = 0; i < cfg.embed_dim; ++i) {
        double acc = 0.0;
        const double* wrow = &p.proj_w.values[static_cast<std::size_t>(i) * cfg.fc1];
        for (int j = 0; j < cfg.fc1; ++j) acc += wrow[j] * t.fc1_act.values[j];
        t.embedding[i] = acc;
    }

    check_finite(t.conv1_pre.values, "conv1 activations");
    check_finite(t.conv2_pre.values, "conv2 activations");
    check_finite(t.fc1_pre.values, "fc1 activations");
    check_finite(t.embedding, "embedding");

    std::vector<double> e = t.embedding;
    if (trace) {
        t.valid = true;
        *trace = std::move(t);
    }
    return e;
}

namespace {

// shared backward path below the fc1 activation: fc1 -> pool -> conv2 -> conv1
void backward_tail(const NetworkParams& p, const ForwardTrace& t,
                   const std::vector<double>& d_fc1_act, Gradients& g) {
    const NetConfig& cfg = p.config;
    const int flat = cfg.flat();
    std::vector<double> d_flat(flat, 0.0);
    for (int i = 0; i < cfg.fc1; ++i) {
        const double d_pre = d_fc1_act[i] * leaky_grad(t.fc1_pre.values[i]);
        g.fc1_b.values[i] += d_pre;
        const double* wrow = &p.fc1_w.values[static_cast<std::size_t>(i) * flat];
        double* grow = &g.fc1_w.values[static_cast<std::size_t>(i) * flat];
        for (int j = 0; j < flat; ++j) {
            grow[j] += d_pre * t.pooled.values[j];
            d_flat[j] += d_pre * wrow[j];
        }
    }

    // maxpool routes to the argmax cell only
    Tensor d_act2(t.act2.shape);
    for (std::size_t cell = 0; cell < t.pool_argmax.size(); ++cell)
        d_act2.values[t.pool_argmax[cell]] += d_flat[cell];

    // conv2 + activation
    Tensor d_conv2_pre(t.conv2_pre.shape);
    for (std::size_t i = 0; i < d_act2.numel(); ++i)
        d_conv2_pre.values[i] = d_act2.values[i] * leaky_grad(t.conv2_pre.values[i]);
    Tensor d_act1(t.act1.shape);
    conv3d_backward(t.act1, p.conv2_w, cfg.conv2_stride, d_conv2_pre, g.conv2_w, g.conv2_b,
                    &d_act1);

    // conv1 + activation (input needs no gradient)
    Tensor d_conv1_pre(t.conv1_pre.shape);
    for (std::size_t i = 0; i < d_act1.numel(); ++i)
        d_conv1_pre.values[i] = d_act1.values[i] * leaky_grad(t.conv1_pre.values[i]);
    conv3d_backward(t.input, p.conv1_w, cfg.conv1_stride, d_conv1_pre, g.conv1_w, g.conv1_b,
                    nullptr);
}

}  // namespace

Gradients backward(const NetworkParams& p, const ForwardTrace& t,
                   const std::vector<double>& upstream) {
    if (!t.valid) throw model_error("backward called without a cached forward trace");
    const NetConfig& cfg = p.config;
    if (static_cast<int>(upstream.size()) != cfg.embed_dim)
        throw config_error("projection: upstream gradient size mismatch");

    Gradients g = zero_gradients(p);

    // projection (no bias)
    std::vector<double> d_fc1_act(cfg.fc1, 0.0);
    for (int i = 0; i < cfg.embed_dim; ++i) {
        const double u = upstream[i];
        const double* wrow = &p.proj_w.values[static_cast<std::size_t>(i) * cfg.fc1];
        double* grow = &g.proj_w.values[static_cast<std::size_t>(i) * cfg.fc1];
        for (int j = 0; j < cfg.fc1; ++j) {
            grow[j] += u * t.fc1_act.values[j];
            d_fc1_act[j] += u * wrow[j];
        }
    }
    backward_tail(p, t, d_fc1_act, g);

    for (const Tensor* gt : tensor_list(g)) check_finite(gt->values, "gradients");
    return g;
}

Gradients backward_from_fc1(const NetworkParams& p, const ForwardTrace& t,
                            const std::vector<double>& d_fc1_act) {
    if (!t.valid) throw model_error("backward called without a cached forward trace");
    if (static_cast<int>(d_fc1_act.size()) != p.config.fc1)
        throw config_error("fc1: upstream gradient size mismatch");
    Gradients g = zero_gradients(p);  // the projection gradient stays zero
    backward_tail(p, t, d_fc1_act, g);
    for (const Tensor* gt : tensor_list(g)) check_finite(gt->values, "gradients");
    return g;
}

void accumulate(Gradients& into, const Gradients& g, double scale) {
    const auto dst = tensor_list(into);
    const auto src = tensor_list(g);
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i]->shape != src[i]->shape)
            throw model_error(std::string("accumulate: gradient shape mismatch for ") + kParamNames[i]);
        for (std::size_t j = 0; j < dst[i]->values.size(); ++j)
            dst[i]->values[j] += scale * src[i]->values[j];
    }
}

void sgd_step(NetworkParams& params, const Gradients& grads, double learning_rate, double momentum,
              Gradients& velocity) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("sgd_step: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
    const auto theta = tensor_list(params);
    const auto g = tensor_list(grads);
    const auto v = tensor_list(velocity);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i]->shape != g[i]->shape || theta[i]->shape != v[i]->shape)
            throw model_error(std::string("sgd_step: shape mismatch for ") + kParamNames[i]);
        for (std::size_t j = 0; j < theta[i]->values.size(); ++j) {
            v[i]->values[j] = momentum * v[i]->values[j] - learning_rate * g[i]->values[j];
            theta[i]->values[j] += v[i]->values[j];
        }
    }
}

const std::array<const char*, 7> kParamNames = {"conv1_w", "conv1_b", "conv2_w", "conv2_b",
                                                "fc1_w",   "fc1_b",   "proj_w"};

std::array<Tensor*, 7> tensor_list(NetworkParams& p) {
    return {&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b, &p.fc1_w, &p.fc1_b, &p.proj_w};
}
std::array<const Tensor*, 7> tensor_list(const NetworkParams& p) {
    return {&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b, &p.fc1_w, &p.fc1_b, &p.proj_w};
}
std::array<Tensor*, 7> tensor_list(Gradients& g) {
    return {&g.conv1_w, &g.conv1_b, &g.conv2_w, &g.conv2_b, &g.fc1_w, &g.fc1_b, &g.proj_w};
}
std::array<const Tensor*, 7> tensor_list(const Gradients& g) {
    return {&g.conv1_w, &g.conv1_b, &g.conv2_w, &g.conv2_b, &g.fc1_w, &g.fc1_b, &g.proj_w};
}

namespace {

constexpr char kMagic[8] = {'O', 'D', 'C', 'H', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw model_error("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::uint32_t> config_words(const NetConfig& c) {
    return {static_cast<std::uint32_t>(c.side),
            static_cast<std::uint32_t>(c.conv1_channels),
            static_cast<std::uint32_t>(c.conv1_kernel),
            static_cast<std::uint32_t>(c.conv1_stride),
            static_cast<std::uint32_t>(c.conv2_channels),
            static_cast<std::uint32_t>(c.conv2_kernel),
            static_cast<std::uint32_t>(c.conv2_stride),
            static_cast<std::uint32_t>(c.pool),
            static_cast<std::uint32_t>(c.fc1),
            static_cast<std::uint32_t>(c.embed_dim)};
}

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for write: " + path);
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    for (std::uint32_t w : config_words(params.config)) write_u32(out, w);

    const auto tensors = tensor_list(params);
    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::string name = kParamNames[i];
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(tensors[i]->shape.size()));
        for (int d : tensors[i]->shape) write_u32(out, static_cast<std::uint32_t>(d));
    }
    for (const Tensor* t : tensors)
        for (double v : t->values) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_u32(out, bits);
        }
    if (!out) throw data_error("write failed: " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw model_error("not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(in, path);
    if (version != kVersion) {
        std::ostringstream msg;
        msg << "unsupported checkpoint version " << version << ": " << path;
        throw model_error(msg.str());
    }

    NetConfig cfg;
    int* fields[10] = {&cfg.side,           &cfg.conv1_channels, &cfg.conv1_kernel,
                       &cfg.conv1_stride,   &cfg.conv2_channels, &cfg.conv2_kernel,
                       &cfg.conv2_stride,   &cfg.pool,           &cfg.fc1,
                       &cfg.embed_dim};
    for (int* f : fields) *f = static_cast<int>(read_u32(in, path));
    cfg.validate();

    NetworkParams expected = init_params(cfg, 0);
    expected.config = cfg;
    const auto tensors = tensor_list(expected);

    const std::uint32_t count = read_u32(in, path);
    if (count != tensors.size()) throw model_error("shape manifest count mismatch: " + path);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw model_error("truncated checkpoint: " + path);
        const std::uint32_t ndim = read_u32(in, path);
        std::vector<int> dims(ndim);
        for (auto& d : dims) d = static_cast<int>(read_u32(in, path));
        if (name != kParamNames[i] || dims != tensors[i]->shape)
            throw model_error(std::string("shape manifest mismatch for ") + kParamNames[i] + ": " + path);
    }
    for (Tensor* t : tensors)
        for (double& v : t->values) {
            const std::uint32_t bits = read_u32(in, path);
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
    return expected;
}

}  // namespace objdisc
