#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rockseg/metrics.hpp"
#include "rockseg/volume.hpp"

namespace rockseg::nn {

// Dense 5D tensor (batch, channels, depth, height, width); 2D networks run
// with d = 1 throughout.
struct Tensor {
    int n = 0, c = 0, d = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int d_, int h_, int w_)
        : n(n_), c(c_), d(d_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * d_ * h_ * w_, 0.0) {}

    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
    std::int64_t spatial() const { return static_cast<std::int64_t>(d) * h * w; }
    double* plane(int ni, int ci) {
        return v.data() + (static_cast<std::int64_t>(ni) * c + ci) * spatial();
    }
    const double* plane(int ni, int ci) const {
        return v.data() + (static_cast<std::int64_t>(ni) * c + ci) * spatial();
    }
    std::array<int, 5> shape() const { return {n, c, d, h, w}; }
};

enum class Family { SegNet, UNet, ResNet, UResNet };

Family family_from_string(const std::string& s);
std::string family_to_string(Family f);

struct NetworkSpec {
    Family family = Family::UNet;
    int dimensionality = 2; // 2 or 3
    int depth = 3;          // encoder levels (downsamplings)
    int base_width = 8;     // filters at the first level
    double growth = 2.0;    // width multiplier per level
    int in_channels = 1;
    int n_phases = 6;

    int width(int level) const; // base_width * growth^level, rounded
    void validate() const;
};

enum class BlockKind { Input, Conv, BatchNorm, ReLU, MaxPool, TConv, Concat, Add };

std::string block_kind_name(BlockKind k);

// One node of the block graph. Conv/TConv carry kernel extents per axis;
// parameters are allocated lazily so paper-scale graphs can be counted
// without instantiating hundreds of millions of weights.
struct Node {
    BlockKind kind = BlockKind::Input;
    std::vector<int> inputs;
    int in_channels = 0, out_channels = 0;
    std::array<int, 3> kernel = {1, 1, 1}; // (kd, kh, kw)
    std::array<int, 3> stride = {1, 1, 1};
    std::array<int, 3> pad = {0, 0, 0};
    int level = -1; // encoder/decoder level, for error messages

    Tensor weight, bias;                    // conv / tconv
    Tensor gamma, beta, run_mean, run_var;  // batch norm
    Tensor gweight, gbias, ggamma, gbeta;   // grads

    std::int64_t param_count_formula() const;
};

struct BlockGraph {
    NetworkSpec spec;
    std::vector<Node> nodes;
    int output = -1;
    bool allocated = false;

    int concat_edges() const;
    int add_edges() const;
};

// Builds the family topology. Shape consistency for a given input is
// checked by forward(); build itself validates the spec only.
BlockGraph build(const NetworkSpec& spec);

// Closed-form parameter count from the node descriptors.
std::int64_t count_params(const BlockGraph& graph);
// Sum of allocated parameter tensor sizes; requires allocate().
std::int64_t count_params_registry(const BlockGraph& graph);

// He-normal initialization, deterministic for a fixed seed.
void allocate(BlockGraph& graph, std::uint64_t seed);

struct Activations {
    std::vector<Tensor> value; // per node
    std::vector<Tensor> aux; // pool argmax indices, batchnorm x-hat
};

// training=true uses batch statistics and updates running stats.
Tensor forward(BlockGraph& graph, const Tensor& input, bool training,
               Activations* cache = nullptr);

struct LabelBatch {
    int n = 0, d = 0, h = 0, w = 0;
    std::vector<std::uint8_t> labels;
};

struct BackwardResult {
    double loss = 0.0;
    std::int64_t clamped_voxels = 0;
};

// Weighted softmax cross entropy loss and a full backward pass; parameter
// gradients land in the node grad tensors (overwritten, not accumulated).
BackwardResult backward(BlockGraph& graph, const Tensor& input, const LabelBatch& truth,
                        const ClassWeights& weights, Activations& cache);

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Tensor> m, v; // parallel to the parameter registry
};

void adam_step(BlockGraph& graph, AdamState& state, double lr);

struct Sample {
    Tensor image;                     // (1, in_channels, d, h, w)
    std::vector<std::uint8_t> labels; // d*h*w
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    int batch = 8;
    WeightMode weight_mode = WeightMode::Unweighted;
    std::int64_t max_steps = 2000;
    std::uint64_t seed = 1;
    int val_interval = 100;
    int patience = 5;
    double min_delta = 1e-3;
};

struct ValPoint {
    std::int64_t step = 0;
    double overall_accuracy = 0.0;
    PhaseReport report;
};

struct TrainResult {
    std::vector<std::pair<std::int64_t, double>> loss_curve;
    std::vector<ValPoint> val_curve;
    double best_val_accuracy = 0.0;
    std::int64_t steps_run = 0;
    bool stopped_early = false;
    ClassWeights weights_used;
};

TrainResult train(BlockGraph& graph, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg);

// Voxelwise evaluation of the graph over a sample set.
ConfusionMatrix evaluate(BlockGraph& graph, const std::vector<Sample>& samples);

// Argmax segmentation of one sample.
std::vector<std::uint8_t> predict_labels(BlockGraph& graph, const Sample& sample);

// Flat little-endian doubles in registry order + JSON manifest at
// path + ".json" describing the graph.
void save_model(const BlockGraph& graph, const std::string& path);
BlockGraph load_model(const std::string& path);

NetworkSpec spec_from_json_file(const std::string& path);
std::string graph_summary_json(const BlockGraph& graph);

} // namespace rockseg::nn
