#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tnshield/attack.hpp"
#include "tnshield/compiler.hpp"
#include "tnshield/defense.hpp"
#include "tnshield/net.hpp"
#include "tnshield/training.hpp"

namespace tnshield {

struct ToyComponent {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 4> cov{1.0, 0.0, 0.0, 1.0};  // row-major 2x2, positive definite
    int count = 1;                                  // training samples per component
    std::vector<std::string> positive_classes;
};

struct ToyConfig {
    std::vector<std::string> class_names;
    std::vector<ToyComponent> components;
    double val_fraction = 0.5;    // per-component validation count = count * fraction
    double test_fraction = 0.5;
    double unlabeled_fraction = 0.0;  // share of training samples losing all labels
    double partial_fraction = 0.0;    // share of label entries dropped per labeled sample
    bool clip_box = true;             // clamp samples into [0,1]^2
    std::uint64_t seed = 0;
};

/// Two nested Gaussian families in [0,1]^2 mirroring the 4-class cat/animal/
/// motorbike/vehicle layout: specific clusters sit inside their umbrella
/// class regions, the two families are separated.
ToyConfig default_toy_config();

struct ToySplits {
    Dataset train;
    Dataset validation;
    Dataset test;
};

ToySplits gen_toy(const ToyConfig& config);

/// Macro-averaged F1 at the given decision threshold, 0/0 := 0 per class.
double macro_f1(const Model& model, const Dataset& dataset, double threshold = 0.5);

/// Accuracy of the argmax over the main-class outputs; every sample must have
/// exactly one positive main class.
double acc_main(const Model& model, const Dataset& dataset, const std::vector<int>& main_classes);

struct EvalReport {
    double epsilon = 0.0;
    double macro_f1 = 0.0;
    double acc_main = 0.0;  // quality without rejection at this epsilon
    double quality_with_rejection = 0.0;
    double reject_rate_clean = 0.0;
    double reject_rate_adversarial = 0.0;
    double mean_measure_clean = 0.0;
    double mean_measure_adversarial = 0.0;
    double pairing = std::numeric_limits<double>::quiet_NaN();
};

/// Rejection-aware quality: at epsilon 0 a rejected sample counts as wrong;
/// at epsilon > 0 a sample counts as correct iff it is rejected or the
/// winning main class is still one of its positives.
EvalReport classification_quality(const Model& model, const RejectionRule& rule,
                                  const Dataset& clean, const Dataset& adversarial,
                                  double epsilon);

struct SweepOptions {
    const Model* surrogate = nullptr;      // set for black-box transfer sweeps
    const Dataset* train_set = nullptr;    // enables the pairing column
    PairingConfig pairing;
};

/// One report per epsilon (ascending, starting at 0; the 0 row scores clean
/// data). Each epsilon > 0 attacks every test sample with the template
/// config, sharing the rule and knowledge.
std::vector<EvalReport> sweep(const Model& model, const RejectionRule& rule,
                              const CompiledKnowledge& knowledge, const Dataset& test_set,
                              const std::vector<double>& epsilons,
                              const AttackConfig& attack_template,
                              const SweepOptions& options = {});

/// Builds the attacked copy of a dataset plus per-sample attack results.
struct AttackRun {
    Dataset adversarial;
    std::vector<AttackResult> results;
};
AttackRun attack_dataset(const Model& model, const Model* surrogate, const Dataset& data,
                         const CompiledKnowledge& knowledge, const AttackConfig& config,
                         const RejectionRule* rule = nullptr);

void save_sweep_csv(const std::vector<EvalReport>& reports, const std::string& path);

}  // namespace tnshield
