#include "tnshield/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tnshield {

namespace {

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

int argmax_scope(const std::vector<double>& values, const std::vector<int>& scope) {
    if (scope.empty()) {
        return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
    }
    int best = scope.front();
    for (int i : scope)
        if (values[i] > values[best]) best = i;
    return best;
}

void validate(const std::vector<double>& x, const ClassPartition& partition,
              const AttackConfig& config, int class_count) {
    if (config.epsilon <= 0.0) throw BadConfigError("epsilon must be positive");
    if (config.iterations < 1) throw BadConfigError("iterations must be >= 1");
    if (partition.positives.empty() || partition.negatives.empty())
        throw InvalidPartitionError("both positive and negative class sets must be non-empty");
    std::set<int> pos(partition.positives.begin(), partition.positives.end());
    for (int i : partition.negatives)
        if (pos.count(i)) throw InvalidPartitionError("class " + std::to_string(i) +
                                                      " is both positive and negative");
    const std::set<int> scope(config.restrict_to.begin(), config.restrict_to.end());
    for (int i : partition.positives) {
        if (i < 0 || i >= class_count) throw InvalidPartitionError("class index out of range");
        if (!scope.empty() && !scope.count(i))
            throw InvalidPartitionError("positive class outside restrict_to");
    }
    for (int i : partition.negatives) {
        if (i < 0 || i >= class_count) throw InvalidPartitionError("class index out of range");
        if (!scope.empty() && !scope.count(i))
            throw InvalidPartitionError("negative class outside restrict_to");
    }
    if (config.box01)
        for (double v : x)
            if (v < 0.0 || v > 1.0)
                throw BadConfigError("input violates the [0,1] box constraint");
}

}  // namespace

PnSelection select_pn(const std::vector<double>& logits, const ClassPartition& partition,
                      double /*kappa*/, const std::set<int>& exhausted_p,
                      const std::set<int>& exhausted_n) {
    PnSelection sel;
    for (int i : partition.positives) {
        if (exhausted_p.count(i)) continue;
        if (!sel.p || logits[i] < logits[*sel.p]) sel.p = i;
    }
    for (int i : partition.negatives) {
        if (exhausted_n.count(i)) continue;
        if (!sel.n || logits[i] > logits[*sel.n]) sel.n = i;
    }
    return sel;
}

double attack_objective(const std::vector<double>& logits, std::optional<int> p,
                        std::optional<int> n, double kappa, double alpha,
                        double constraint_loss_value) {
    const bool unbounded = std::isinf(kappa);
    const double term_p = p ? std::max(logits[*p], -kappa) : (unbounded ? 0.0 : -kappa);
    const double term_n = n ? std::min(logits[*n], kappa) : (unbounded ? 0.0 : kappa);
    return term_p - term_n + alpha * constraint_loss_value;
}

std::vector<double> project_l2(const std::vector<double>& origin,
                               const std::vector<double>& candidate, double epsilon, bool box01) {
    if (origin.size() != candidate.size())
        throw DimensionMismatchError("projection endpoints differ in dimension");
    std::vector<double> out = candidate;
    const double norm = l2_distance(candidate, origin);
    if (norm > epsilon) {
        const double scale = epsilon / norm;
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = origin[i] + scale * (candidate[i] - origin[i]);
    }
    if (box01)
        for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

AttackResult mka(const Model& model, const std::vector<double>& x,
                 const ClassPartition& partition, const CompiledKnowledge& knowledge,
                 const AttackConfig& config, const RejectionRule* rule) {
    validate(x, partition, config, knowledge.class_count());

    const double kappa = config.kappa;
    const double step = config.effective_step();
    std::set<int> exhausted_p, exhausted_n;

    std::vector<double> current = x;
    std::optional<int> p, n;
    bool p_selected = false;

    AttackResult result;
    result.best_objective = std::numeric_limits<double>::infinity();

    const int before = argmax_scope(forward(model, x).outputs, config.restrict_to);

    for (int it = 0; it <= config.iterations; ++it) {
        const ForwardTrace trace = forward(model, current);
        const auto& logits = trace.logits();

        // Dynamic p/n update: saturated classes retire, the weakest positive /
        // strongest negative among the remaining ones takes over.
        if (!p_selected) {
            const PnSelection sel = select_pn(logits, partition, kappa, exhausted_p, exhausted_n);
            p = sel.p;
            n = sel.n;
            p_selected = true;
        }
        if (!config.single_label_mode) {
            while (p && logits[*p] < -kappa) {
                exhausted_p.insert(*p);
                p = select_pn(logits, partition, kappa, exhausted_p, exhausted_n).p;
            }
        }
        while (n && logits[*n] > kappa) {
            exhausted_n.insert(*n);
            n = select_pn(logits, partition, kappa, exhausted_p, exhausted_n).n;
        }

        const double closs = knowledge.sample_loss(trace.outputs, WeightSet::Test);
        const double objective = attack_objective(logits, p, n, kappa, config.alpha, closs);

        AttackTraceEntry entry;
        entry.iteration = it;
        entry.objective = objective;
        entry.constraint_loss = closs;
        entry.p = p ? *p : -1;
        entry.n = n ? *n : -1;
        entry.l2 = l2_distance(current, x);
        result.trace.push_back(entry);
        if (config.record_iterates) result.iterates.push_back(current);

        if (objective < result.best_objective) {
            result.best_objective = objective;
            result.x_star = current;
        }

        if (it == config.iterations) break;
        if (!p && !n) break;  // fully saturated

        // Gradient of the objective w.r.t. the logits; clamped terms have zero
        // subgradient.
        std::vector<double> upstream(logits.size(), 0.0);
        if (p && logits[*p] > -kappa) upstream[*p] += 1.0;
        if (n && logits[*n] < kappa) upstream[*n] -= 1.0;
        if (config.alpha != 0.0) {
            const std::vector<double> dcloss =
                knowledge.grad_outputs(trace.outputs, WeightSet::Test);
            for (std::size_t i = 0; i < upstream.size(); ++i) {
                const double o = trace.outputs[i];
                upstream[i] += config.alpha * dcloss[i] * o * (1.0 - o);
            }
        }
        const std::vector<double> g = grad_input(model, trace, upstream);
        double gnorm = 0.0;
        for (double v : g) gnorm += v * v;
        gnorm = std::sqrt(gnorm);
        if (gnorm < 1e-30) {
            // Flat objective: nothing to descend, keep the iterate.
            continue;
        }
        std::vector<double> candidate(current.size());
        for (std::size_t i = 0; i < current.size(); ++i)
            candidate[i] = current[i] - step * g[i] / gnorm;
        current = project_l2(x, candidate, config.epsilon, config.box01);
    }

    result.final_l2 = l2_distance(result.x_star, x);
    const ForwardTrace final_trace = forward(model, result.x_star);
    result.prediction_changed =
        argmax_scope(final_trace.outputs, config.restrict_to) != before;
    result.final_measure = knowledge.sample_loss(final_trace.outputs, WeightSet::Test);
    if (rule) result.rejection_evaded = !(result.final_measure > rule->tau);
    return result;
}

AttackResult transfer_attack(const Model& surrogate, const Model& target,
                             const std::vector<double>& x, const ClassPartition& partition,
                             const CompiledKnowledge& knowledge, const AttackConfig& config,
                             const RejectionRule* rule) {
    if (surrogate.input_dim() != target.input_dim() ||
        surrogate.output_dim() != target.output_dim())
        throw DimensionMismatchError("surrogate and target must share input and class layout");

    AttackResult result = mka(surrogate, x, partition, knowledge, config, nullptr);

    const int before = argmax_scope(forward(target, x).outputs, config.restrict_to);
    const ForwardTrace final_trace = forward(target, result.x_star);
    result.prediction_changed = argmax_scope(final_trace.outputs, config.restrict_to) != before;
    result.final_measure = knowledge.sample_loss(final_trace.outputs, WeightSet::Test);
    if (rule) result.rejection_evaded = !(result.final_measure > rule->tau);
    return result;
}

}  // namespace tnshield
