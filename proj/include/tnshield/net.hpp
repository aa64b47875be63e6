#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnshield/errors.hpp"

namespace tnshield {

enum class Activation { ReLU, Tanh };

/// Feed-forward network with sigmoid output heads. Weights are plain dense
/// matrices stored row-major (rows = layer outputs); the model is immutable
/// during inference and attacks, training owns the only mutable copy.
struct Model {
    std::vector<int> layer_sizes;  // [d, h_1, ..., h_k, c]
    Activation activation = Activation::ReLU;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> weights;  // per layer, (out x in) row-major
    std::vector<std::vector<double>> biases;   // per layer, length out

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
};

/// One forward pass with everything the backward passes need.
struct ForwardTrace {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;  // pre-activations per layer; back() = logits
    std::vector<std::vector<double>> act;  // hidden activations per layer (excludes output)
    std::vector<double> outputs;           // sigmoid(logits)

    const std::vector<double>& logits() const { return pre.back(); }
};

struct WeightGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    void add_scaled(const WeightGrads& other, double scale);
};

WeightGrads zero_grads(const Model& model);

/// Glorot-uniform weights (+- sqrt(6/(fan_in+fan_out))), zero biases,
/// reproducible from the seed.
Model init_model(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed);

ForwardTrace forward(const Model& model, const std::vector<double>& x);

/// Exact reverse-mode gradient of <upstream, logits> w.r.t. weights/biases.
WeightGrads grad_weights(const Model& model, const ForwardTrace& trace,
                         const std::vector<double>& upstream);

/// Exact reverse-mode gradient of <upstream, logits> w.r.t. the input.
std::vector<double> grad_input(const Model& model, const ForwardTrace& trace,
                               const std::vector<double>& upstream);

double sigmoid(double z);

// Self-describing text format, version "tnorm-shield-model-v1"; decimals are
// written with full round-trip precision so reloading is bit-exact.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);
std::string model_to_string(const Model& model);
Model model_from_string(const std::string& text);

}  // namespace tnshield
