#ifndef OBJDISC_NET3D_HPP
#define OBJDISC_NET3D_HPP

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "objdisc/voxelgrid.hpp"

namespace objdisc {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    std::size_t numel() const { return values.size(); }
};

// Architecture hyperparameters. Defaults follow the VoxNet layout:
// 32^3 input -> conv 32@5^3 stride 2 -> conv 32@3^3 -> maxpool 2^3 -> fc 128
// -> linear projection to the embedding.
struct NetConfig {
    int side = 32;
    int conv1_channels = 32;
    int conv1_kernel = 5;
    int conv1_stride = 2;
    int conv2_channels = 32;
    int conv2_kernel = 3;
    int conv2_stride = 1;
    int pool = 2;
    int fc1 = 128;
    int embed_dim = 64;

    // Spatial sizes after each stage; throws config_error naming the first
    // layer whose input no longer fits.
    int conv1_out() const;
    int conv2_out() const;
    int pool_out() const;
    int flat() const { return conv2_channels * pool_out() * pool_out() * pool_out(); }
    void validate() const;
    bool operator==(const NetConfig&) const = default;
};

struct NetworkParams {
    NetConfig config;
    Tensor conv1_w, conv1_b;  // [c1,1,k,k,k], [c1]
    Tensor conv2_w, conv2_b;  // [c2,c1,k,k,k], [c2]
    Tensor fc1_w, fc1_b;      // [fc1, flat], [fc1]
    Tensor proj_w;            // [embed_dim, fc1], no bias
};

struct Gradients {
    Tensor conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, proj_w;
};

// Seeded Glorot-uniform weights (rounded to float precision so checkpoints
// round-trip bit-exactly), zero biases.
NetworkParams init_params(const NetConfig& config, std::uint64_t seed);

Gradients zero_gradients(const NetworkParams& params);

// Cached activations of one forward pass, consumed by backward().
struct ForwardTrace {
    bool valid = false;
    Tensor input;                   // [1, side, side, side]
    Tensor conv1_pre, act1;         // [c1, s1, s1, s1]
    Tensor conv2_pre, act2;         // [c2, s2, s2, s2]
    Tensor pooled;                  // [c2, sp, sp, sp]
    std::vector<int> pool_argmax;   // flat index into act2 per pooled cell
    Tensor fc1_pre, fc1_act;        // [fc1]
    std::vector<double> embedding;  // [embed_dim]
};

// conv1 -> leakyReLU(0.1) -> conv2 -> leakyReLU -> maxpool -> flatten -> fc1
// -> leakyReLU -> projection. Pass a trace to keep activations for backward.
std::vector<double> forward_embed(const NetworkParams& params, const OccupancyGrid& grid,
                                  ForwardTrace* trace = nullptr);

// Gradients of dot(embedding, upstream) with respect to every parameter.
Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                   const std::vector<double>& upstream);

// Backward pass entered at the fc1 activation instead of the embedding, for
// heads stacked on the fc1 features. The projection gradient stays zero.
Gradients backward_from_fc1(const NetworkParams& params, const ForwardTrace& trace,
                            const std::vector<double>& d_fc1_act);

void accumulate(Gradients& into, const Gradients& g, double scale = 1.0);

// v <- momentum*v - lr*g; theta <- theta + v.
void sgd_step(NetworkParams& params, const Gradients& grads, double learning_rate, double momentum,
              Gradients& velocity);

// Uniform access to the seven parameter tensors, in checkpoint order.
extern const std::array<const char*, 7> kParamNames;
std::array<Tensor*, 7> tensor_list(NetworkParams& p);
std::array<const Tensor*, 7> tensor_list(const NetworkParams& p);
std::array<Tensor*, 7> tensor_list(Gradients& g);
std::array<const Tensor*, 7> tensor_list(const Gradients& g);

// Binary checkpoint: magic, version, architecture, shape manifest, then
// float32 little-endian values in manifest order.
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

constexpr double kLeakySlope = 0.1;

double leaky(double x);
double leaky_grad(double pre);

// Glorot-uniform fill from the given engine, values rounded through float.
void glorot_fill(Tensor& t, int fan_in, int fan_out, std::mt19937_64& rng);

}  // namespace objdisc

#endif
