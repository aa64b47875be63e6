#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "tnshield/compiler.hpp"
#include "tnshield/defense.hpp"
#include "tnshield/net.hpp"

namespace tnshield {

struct AttackConfig {
    double epsilon = 0.5;             // L2 budget
    double kappa = 2.0;               // logit clamp; may be infinity
    double alpha = 0.0;               // constraint term weight; 0 = black-box objective
    int iterations = 50;
    std::optional<double> step_size;  // default 2.5 * epsilon / iterations
    bool box01 = false;               // clip iterates to [0,1]^d
    std::vector<int> restrict_to;     // optional class scope (empty = all classes)
    bool single_label_mode = false;   // keep p fixed for mutually exclusive positives
    bool record_iterates = false;     // keep every iterate's coordinates in the result
    std::uint64_t seed = 0;

    double effective_step() const {
        return step_size ? *step_size : 2.5 * epsilon / iterations;
    }
};

/// Ground-truth positive/negative class index sets of the attacked sample.
struct ClassPartition {
    std::vector<int> positives;
    std::vector<int> negatives;
};

struct AttackTraceEntry {
    int iteration = 0;
    double objective = 0.0;
    double constraint_loss = 0.0;
    int p = -1;  // -1 = no active positive (saturated or exhausted)
    int n = -1;
    double l2 = 0.0;  // distance from the clean sample
};

struct AttackResult {
    std::vector<double> x_star;  // best-objective iterate
    std::vector<AttackTraceEntry> trace;
    std::vector<std::vector<double>> iterates;  // filled when record_iterates is set
    bool prediction_changed = false;
    std::optional<bool> rejection_evaded;  // set when a rule was supplied
    double final_l2 = 0.0;
    double best_objective = 0.0;
    double final_measure = 0.0;  // knowledge measure of x_star on the evaluated model
};

struct PnSelection {
    std::optional<int> p;
    std::optional<int> n;
};

/// p = weakest positive (argmin logit over positives), n = strongest negative
/// (argmax over negatives), skipping exhausted classes; ties pick the lowest
/// index, empty candidate sets yield no selection.
PnSelection select_pn(const std::vector<double>& logits, const ClassPartition& partition,
                      double kappa, const std::set<int>& exhausted_p,
                      const std::set<int>& exhausted_n);

/// max(l_p, -kappa) - min(l_n, kappa) + alpha * constraint_loss. A missing p
/// (n) contributes its clamp bound -kappa (kappa); with kappa = infinity a
/// missing term contributes 0.
double attack_objective(const std::vector<double>& logits, std::optional<int> p,
                        std::optional<int> n, double kappa, double alpha,
                        double constraint_loss_value);

/// Projects candidate onto the L2 ball of radius epsilon around origin, then
/// clips to [0,1] when box is enabled (so the result may end up inside the
/// ball).
std::vector<double> project_l2(const std::vector<double>& origin,
                               const std::vector<double>& candidate, double epsilon, bool box01);

/// Projected-gradient attack minimizing the clamped logit margin plus the
/// alpha-weighted constraint loss. p and n are re-selected whenever their
/// logits saturate past +-kappa; saturated terms stay at their clamp bound
/// and the attack stops early once both sides are exhausted. Returns the
/// iterate with the lowest recorded objective.
AttackResult mka(const Model& model, const std::vector<double>& x,
                 const ClassPartition& partition, const CompiledKnowledge& knowledge,
                 const AttackConfig& config, const RejectionRule* rule = nullptr);

/// Optimizes against the surrogate, then re-evaluates success flags, the
/// prediction change and the knowledge measure on the target model.
AttackResult transfer_attack(const Model& surrogate, const Model& target,
                             const std::vector<double>& x, const ClassPartition& partition,
                             const CompiledKnowledge& knowledge, const AttackConfig& config,
                             const RejectionRule* rule = nullptr);

}  // namespace tnshield
