#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tnshield/knowledge.hpp"

namespace tnshield {

enum class WeightSet { Train, Test };

/// Differentiable polynomial lowered from a formula under the product T-norm:
///   t(P_i) = f_i,  t(not a) = 1 - t(a),  t(a and b) = t(a) * t(b),
///   t(a or b) = 1 - (1 - t(a))(1 - t(b)),  t(a => b) = 1 - t(a)(1 - t(b)).
/// Stored as a flat evaluation tape; no algebraic simplification is applied,
/// so compilation is structurally deterministic.
class ConstraintProgram {
public:
    enum class Op { Output, OneMinus, Product };
    struct Step {
        Op op;
        int a = -1;  // Output: class index; otherwise: source slot
        int b = -1;  // Product only: second source slot
    };

    static ConstraintProgram compile(const Formula& formula,
                                     const std::map<std::string, int>& index_of, int class_count);
    static ConstraintProgram compile(const WeightedFormula& source,
                                     const std::map<std::string, int>& index_of, int class_count);

    /// Truth degree in [0,1]; outputs are clamped to [0,1] before evaluation.
    double truth_degree(const std::vector<double>& outputs) const;

    /// 1 - truth_degree; zero iff the formula is fully satisfied.
    double loss(const std::vector<double>& outputs) const;

    /// Accumulates scale * d(loss)/d(outputs) into grad (reverse mode, exact).
    void accumulate_loss_grad(const std::vector<double>& outputs, double scale,
                              std::vector<double>& grad) const;

    /// Lisp-style rendering of the polynomial, with class names as leaves.
    std::string s_expression(const std::vector<std::string>& class_names) const;

    const std::vector<Step>& steps() const { return steps_; }
    int class_count() const { return class_count_; }
    const WeightedFormula& source() const { return source_; }

private:
    std::vector<Step> steps_;
    int class_count_ = 0;
    WeightedFormula source_;

    void check_dims(const std::vector<double>& outputs) const;
    void forward(const std::vector<double>& outputs, std::vector<double>& slots) const;
};

double formula_loss(const ConstraintProgram& program, const std::vector<double>& outputs);
double truth_degree(const ConstraintProgram& program, const std::vector<double>& outputs);

struct ConstraintLossReport {
    double total = 0.0;                                // mean over samples of sum_h mu_h * loss_h
    std::vector<std::pair<int, double>> per_formula;   // (h, batch-mean weighted loss)
    std::optional<std::vector<double>> per_sample;     // per-sample weighted totals
};

/// Knowledge compiled against a fixed output layout. Immutable after
/// construction; evaluation and gradients are pure.
class CompiledKnowledge {
public:
    explicit CompiledKnowledge(const BoundKnowledge& bound);

    const std::vector<ConstraintProgram>& programs() const { return programs_; }
    const BoundKnowledge& bound() const { return bound_; }
    int class_count() const { return bound_.class_count; }
    const std::vector<std::string>& class_names() const { return bound_.class_names; }

    double gamma(WeightSet ws) const;
    double weight(std::size_t h, WeightSet ws) const;

    /// Weighted single-sample constraint loss sum_h mu_h * (1 - phi_h).
    double sample_loss(const std::vector<double>& outputs, WeightSet ws) const;

    /// Exact reverse-mode gradient of sample_loss w.r.t. the output vector.
    std::vector<double> grad_outputs(const std::vector<double>& outputs, WeightSet ws) const;

private:
    BoundKnowledge bound_;
    std::vector<ConstraintProgram> programs_;
};

using CompiledKnowledgePtr = std::shared_ptr<const CompiledKnowledge>;

inline CompiledKnowledgePtr compile_knowledge(const BoundKnowledge& bound) {
    return std::make_shared<const CompiledKnowledge>(bound);
}

/// Batch-averaged weighted constraint loss over output vectors:
/// total = (1/|Z|) sum_j sum_h mu_h * loss_h(f(x_j)).
ConstraintLossReport constraint_loss(const CompiledKnowledge& knowledge, WeightSet ws,
                                     const std::vector<std::vector<double>>& batch,
                                     bool keep_per_sample = false);

std::vector<double> grad_outputs(const CompiledKnowledge& knowledge, WeightSet ws,
                                 const std::vector<double>& outputs);

}  // namespace tnshield
