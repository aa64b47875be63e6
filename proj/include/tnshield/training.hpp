#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tnshield/compiler.hpp"
#include "tnshield/net.hpp"

namespace tnshield {

enum class Label : std::uint8_t { Known0 = 0, Known1 = 1, Unknown = 2 };
enum class Split { Train, Validation, Test };

struct Dataset {
    std::vector<std::vector<double>> samples;     // each length d
    std::vector<std::vector<Label>> labels;       // each length c
    std::vector<std::string> class_names;         // column names for CSV io
    Split split = Split::Train;

    std::size_t size() const { return samples.size(); }
    int dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().size()); }
    int class_count() const { return static_cast<int>(class_names.size()); }
};

// CSV with header x0..x{d-1} followed by one column per class; label cells
// are 0, 1 or '?' for unknown.
void save_dataset_csv(const Dataset& data, const std::string& path);
Dataset load_dataset_csv(const std::string& path, Split split);

/// Constraint-weight grid for cross-validation tooling.
inline constexpr std::array<double, 8> kLambdaGrid{1e-2, 1e-1, 1.0, 3.0, 5.0, 8.0, 10.0, 1e2};

struct TrainConfig {
    double lambda = 0.0;            // weight of the constraint term; 0 = unconstrained
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    WeightSet weight_set = WeightSet::Train;
};

struct EpochRecord {
    int epoch = 0;
    double suploss = 0.0;     // epoch mean of the masked supervised loss
    double closs = 0.0;       // epoch mean of the weighted constraint loss
    double val_f1 = 0.0;      // macro F1 on the validation split
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    int best_epoch = -1;  // maximizes validation macro F1, earliest wins ties
};

/// Mean binary cross-entropy over the Known label entries only; 0 when the
/// row is fully unknown. Outputs are clamped to [1e-7, 1-1e-7] before logs.
double supervised_loss(const std::vector<double>& outputs, const std::vector<Label>& label_row);

struct BatchLoss {
    double total = 0.0;     // mean suploss + lambda * mean constraint loss
    double suploss = 0.0;
    double closs = 0.0;
    WeightGrads grads;      // d total / d weights
};

/// Objective of one minibatch: the masked supervised loss plus the
/// lambda-weighted constraint loss, the latter evaluated on every sample in
/// the batch. Gradients are exact reverse-mode.
BatchLoss total_batch_loss(const Model& model, const Dataset& data,
                           const std::vector<int>& batch_indices,
                           const CompiledKnowledge& knowledge, const TrainConfig& config);

struct TrainResult {
    Model model;  // snapshot at the best epoch
    TrainHistory history;
};

TrainResult train(const Model& model, const Dataset& train_set, const Dataset& val_set,
                  const CompiledKnowledge& knowledge, const TrainConfig& config);

/// Discards labels to simulate semi-supervision: (100-percent_labeled)% of the
/// samples become fully unknown; within each remaining labeled sample,
/// percent_partial% of the entries become unknown, dropping equal fractions
/// of positive and negative labels (rounded down per polarity).
Dataset make_semisupervised(const Dataset& dataset, double percent_labeled,
                            double percent_partial, std::uint64_t seed);

void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace tnshield
