#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnshield/compiler.hpp"
#include "tnshield/net.hpp"
#include "tnshield/training.hpp"

namespace tnshield {

/// Threshold rule: reject a sample iff its test-weighted constraint loss
/// strictly exceeds tau.
struct RejectionRule {
    double tau = 0.0;
    double target_clean_reject_rate = 0.10;
    CompiledKnowledgePtr bound;
    std::string knowledge_hash;  // hash of the knowledge file the rule was built from
};

struct PairingConfig {
    int num_samples = 1000;
    double margin_fraction = 0.25;  // bounding-box expansion per dimension
    std::uint64_t seed = 0;
};

/// Single-sample constraint loss with test weights (the lower the better);
/// lies in [0, gamma_test].
double knowledge_measure(const Model& model, const std::vector<double>& x,
                         const CompiledKnowledge& knowledge);

/// Fits tau as the (1 - target_rate) empirical quantile of the knowledge
/// measure over the validation samples, with linear interpolation between
/// order statistics; floored at 1e-12 so tau stays positive.
RejectionRule calibrate_tau(const Model& model, const Dataset& validation,
                            const CompiledKnowledgePtr& knowledge, double target_rate = 0.10);

struct RejectDecision {
    bool reject = false;
    double measure = 0.0;
};

RejectDecision should_reject(const RejectionRule& rule, const Model& model,
                             const std::vector<double>& x);

/// Pairing gap: |mean constraint loss over a uniform sample of the expanded
/// training bounding box - mean over the training data|. Near zero means the
/// constraints cannot separate off-distribution points from the data.
double pairing_score(const Model& model, const Dataset& train_set,
                     const CompiledKnowledge& knowledge, const PairingConfig& config);

struct SingleLabelView {
    int main_class = -1;  // global output index of the winning main class
    bool reject = false;
    std::vector<double> outputs;
};

/// Restricts the visible prediction to the main classes (argmax, ties to the
/// lowest index); the reject flag still evaluates the constraints over all
/// classes, auxiliary outputs included.
SingleLabelView single_label_view(const Model& model, const RejectionRule& rule,
                                  const std::vector<double>& x);

void save_rule(const RejectionRule& rule, const std::string& path);
/// Loads tau/target/hash; the compiled knowledge must be re-attached by the caller.
RejectionRule load_rule(const std::string& path, CompiledKnowledgePtr knowledge);

/// FNV-1a hash of a file's bytes, hex-encoded; identifies the knowledge file
/// a rule was calibrated against.
std::string file_hash(const std::string& path);

}  // namespace tnshield
