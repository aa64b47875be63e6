#include "tnshield/compiler.hpp"

#include <algorithm>
#include <cmath>

namespace tnshield {

namespace {

int emit(const Formula& f, const std::map<std::string, int>& index_of,
         std::vector<ConstraintProgram::Step>& steps) {
    using Op = ConstraintProgram::Op;
    auto push = [&](ConstraintProgram::Step s) {
        steps.push_back(s);
        return static_cast<int>(steps.size()) - 1;
    };
    switch (f.kind()) {
        case Formula::Kind::Pred: {
            auto it = index_of.find(f.name());
            if (it == index_of.end())
                throw UnboundPredicateError("unbound predicate(s): " + f.name());
            return push({Op::Output, it->second, -1});
        }
        case Formula::Kind::Not: {
            int a = emit(*f.left(), index_of, steps);
            return push({Op::OneMinus, a, -1});
        }
        case Formula::Kind::And: {
            int a = emit(*f.left(), index_of, steps);
            int b = emit(*f.right(), index_of, steps);
            return push({Op::Product, a, b});
        }
        case Formula::Kind::Or: {
            // 1 - (1 - a)(1 - b)
            int a = emit(*f.left(), index_of, steps);
            int na = push({Op::OneMinus, a, -1});
            int b = emit(*f.right(), index_of, steps);
            int nb = push({Op::OneMinus, b, -1});
            int prod = push({Op::Product, na, nb});
            return push({Op::OneMinus, prod, -1});
        }
        case Formula::Kind::Implies: {
            // 1 - a(1 - b)
            int a = emit(*f.left(), index_of, steps);
            int b = emit(*f.right(), index_of, steps);
            int nb = push({Op::OneMinus, b, -1});
            int prod = push({Op::Product, a, nb});
            return push({Op::OneMinus, prod, -1});
        }
    }
    throw Error("unreachable formula kind");
}

inline double clamp_unit(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

ConstraintProgram ConstraintProgram::compile(const Formula& formula,
                                             const std::map<std::string, int>& index_of,
                                             int class_count) {
    ConstraintProgram p;
    p.class_count_ = class_count;
    emit(formula, index_of, p.steps_);
    return p;
}

ConstraintProgram ConstraintProgram::compile(const WeightedFormula& source,
                                             const std::map<std::string, int>& index_of,
                                             int class_count) {
    ConstraintProgram p = compile(*source.formula, index_of, class_count);
    p.source_ = source;
    return p;
}

void ConstraintProgram::check_dims(const std::vector<double>& outputs) const {
    if (static_cast<int>(outputs.size()) != class_count_)
        throw DimensionMismatchError("output vector has length " + std::to_string(outputs.size()) +
                                     ", expected " + std::to_string(class_count_));
}

void ConstraintProgram::forward(const std::vector<double>& outputs,
                                std::vector<double>& slots) const {
    slots.resize(steps_.size());
    for (std::size_t i = 0; i < steps_.size(); ++i) {
        const Step& s = steps_[i];
        switch (s.op) {
            case Op::Output: slots[i] = clamp_unit(outputs[s.a]); break;
            case Op::OneMinus: slots[i] = 1.0 - slots[s.a]; break;
            case Op::Product: slots[i] = slots[s.a] * slots[s.b]; break;
        }
    }
}

double ConstraintProgram::truth_degree(const std::vector<double>& outputs) const {
    check_dims(outputs);
    std::vector<double> slots;
    forward(outputs, slots);
    return slots.back();
}

double ConstraintProgram::loss(const std::vector<double>& outputs) const {
    return 1.0 - truth_degree(outputs);
}

void ConstraintProgram::accumulate_loss_grad(const std::vector<double>& outputs, double scale,
                                             std::vector<double>& grad) const {
    check_dims(outputs);
    if (static_cast<int>(grad.size()) != class_count_)
        throw DimensionMismatchError("gradient accumulator has wrong length");
    std::vector<double> slots;
    forward(outputs, slots);

    // loss = 1 - phi, so the adjoint of the root slot is -scale.
    std::vector<double> adj(steps_.size(), 0.0);
    adj.back() = -scale;
    for (std::size_t i = steps_.size(); i-- > 0;) {
        const Step& s = steps_[i];
        const double a = adj[i];
        if (a == 0.0) continue;
        switch (s.op) {
            case Op::Output: grad[s.a] += a; break;
            case Op::OneMinus: adj[s.a] -= a; break;
            case Op::Product:
                adj[s.a] += a * slots[s.b];
                adj[s.b] += a * slots[s.a];
                break;
        }
    }
}

std::string ConstraintProgram::s_expression(const std::vector<std::string>& class_names) const {
    std::vector<std::string> parts(steps_.size());
    for (std::size_t i = 0; i < steps_.size(); ++i) {
        const Step& s = steps_[i];
        switch (s.op) {
            case Op::Output:
                parts[i] = s.a < static_cast<int>(class_names.size()) ? class_names[s.a]
                                                                      : "f" + std::to_string(s.a);
                break;
            case Op::OneMinus: parts[i] = "(1- " + parts[s.a] + ")"; break;
            case Op::Product: parts[i] = "(* " + parts[s.a] + " " + parts[s.b] + ")"; break;
        }
    }
    return parts.back();
}

double truth_degree(const ConstraintProgram& program, const std::vector<double>& outputs) {
    return program.truth_degree(outputs);
}

double formula_loss(const ConstraintProgram& program, const std::vector<double>& outputs) {
    return program.loss(outputs);
}

CompiledKnowledge::CompiledKnowledge(const BoundKnowledge& bound) : bound_(bound) {
    programs_.reserve(bound.base.size());
    for (const auto& wf : bound.base.formulas())
        programs_.push_back(ConstraintProgram::compile(wf, bound.index_of, bound.class_count));
}

double CompiledKnowledge::gamma(WeightSet ws) const {
    return ws == WeightSet::Train ? bound_.base.gamma_train() : bound_.base.gamma_test();
}

double CompiledKnowledge::weight(std::size_t h, WeightSet ws) const {
    const WeightedFormula& wf = programs_[h].source();
    return ws == WeightSet::Train ? wf.weight_train : wf.weight_test;
}

double CompiledKnowledge::sample_loss(const std::vector<double>& outputs, WeightSet ws) const {
    double total = 0.0;
    for (std::size_t h = 0; h < programs_.size(); ++h)
        total += weight(h, ws) * programs_[h].loss(outputs);
    return total;
}

std::vector<double> CompiledKnowledge::grad_outputs(const std::vector<double>& outputs,
                                                    WeightSet ws) const {
    std::vector<double> grad(bound_.class_count, 0.0);
    for (std::size_t h = 0; h < programs_.size(); ++h)
        programs_[h].accumulate_loss_grad(outputs, weight(h, ws), grad);
    return grad;
}

ConstraintLossReport constraint_loss(const CompiledKnowledge& knowledge, WeightSet ws,
                                     const std::vector<std::vector<double>>& batch,
                                     bool keep_per_sample) {
    if (batch.empty()) throw EmptyBatchError("constraint loss over an empty batch");
    const std::size_t ell = knowledge.programs().size();
    std::vector<double> formula_sums(ell, 0.0);
    std::vector<double> per_sample;
    if (keep_per_sample) per_sample.reserve(batch.size());

    double total_sum = 0.0;
    for (const auto& outputs : batch) {
        double sample = 0.0;
        for (std::size_t h = 0; h < ell; ++h) {
            const double wl = knowledge.weight(h, ws) * knowledge.programs()[h].loss(outputs);
            formula_sums[h] += wl;
            sample += wl;
        }
        total_sum += sample;
        if (keep_per_sample) per_sample.push_back(sample);
    }

    ConstraintLossReport report;
    const double inv = 1.0 / static_cast<double>(batch.size());
    report.total = total_sum * inv;
    report.per_formula.reserve(ell);
    for (std::size_t h = 0; h < ell; ++h)
        report.per_formula.emplace_back(static_cast<int>(h), formula_sums[h] * inv);
    if (keep_per_sample) report.per_sample = std::move(per_sample);
    return report;
}

std::vector<double> grad_outputs(const CompiledKnowledge& knowledge, WeightSet ws,
                                 const std::vector<double>& outputs) {
    return knowledge.grad_outputs(outputs, ws);
}

}  // namespace tnshield
