#include "tnshield/defense.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace tnshield {

double knowledge_measure(const Model& model, const std::vector<double>& x,
                         const CompiledKnowledge& knowledge) {
    const ForwardTrace trace = forward(model, x);
    return knowledge.sample_loss(trace.outputs, WeightSet::Test);
}

namespace {

// Linearly interpolated empirical quantile over the order statistics.
double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values.front();
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace

RejectionRule calibrate_tau(const Model& model, const Dataset& validation,
                            const CompiledKnowledgePtr& knowledge, double target_rate) {
    if (validation.size() == 0) throw EmptySetError("calibration set is empty");
    if (target_rate < 0.0 || target_rate >= 1.0)
        throw BadConfigError("target reject rate must lie in [0, 1)");

    std::vector<double> measures;
    measures.reserve(validation.size());
    for (const auto& x : validation.samples)
        measures.push_back(knowledge_measure(model, x, *knowledge));

    RejectionRule rule;
    rule.tau = std::max(quantile(std::move(measures), 1.0 - target_rate), 1e-12);
    rule.target_clean_reject_rate = target_rate;
    rule.bound = knowledge;
    return rule;
}

RejectDecision should_reject(const RejectionRule& rule, const Model& model,
                             const std::vector<double>& x) {
    RejectDecision d;
    d.measure = knowledge_measure(model, x, *rule.bound);
    d.reject = d.measure > rule.tau;
    return d;
}

double pairing_score(const Model& model, const Dataset& train_set,
                     const CompiledKnowledge& knowledge, const PairingConfig& config) {
    if (train_set.size() == 0) throw EmptySetError("pairing needs a non-empty training set");
    if (config.num_samples < 1) throw BadConfigError("pairing needs num_samples >= 1");

    const int d = train_set.dim();
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (const auto& x : train_set.samples)
        for (int i = 0; i < d; ++i) {
            lo[i] = std::min(lo[i], x[i]);
            hi[i] = std::max(hi[i], x[i]);
        }
    for (int i = 0; i < d; ++i) {
        const double margin = config.margin_fraction * (hi[i] - lo[i]);
        lo[i] -= margin;
        hi[i] += margin;
    }

    std::mt19937_64 rng(config.seed);
    double uniform_sum = 0.0;
    std::vector<double> x(d);
    for (int s = 0; s < config.num_samples; ++s) {
        for (int i = 0; i < d; ++i) {
            std::uniform_real_distribution<double> dist(lo[i], hi[i]);
            x[i] = dist(rng);
        }
        uniform_sum += knowledge_measure(model, x, knowledge);
    }
    const double uniform_mean = uniform_sum / config.num_samples;

    double train_sum = 0.0;
    for (const auto& sample : train_set.samples)
        train_sum += knowledge_measure(model, sample, knowledge);
    const double train_mean = train_sum / static_cast<double>(train_set.size());

    return std::abs(uniform_mean - train_mean);
}

SingleLabelView single_label_view(const Model& model, const RejectionRule& rule,
                                  const std::vector<double>& x) {
    const auto& main = rule.bound->bound().main_classes;
    if (main.empty()) throw NoMainClassesError("no main classes bound");

    SingleLabelView view;
    const ForwardTrace trace = forward(model, x);
    view.outputs = trace.outputs;
    view.main_class = main.front();
    for (int idx : main)
        if (view.outputs[idx] > view.outputs[view.main_class]) view.main_class = idx;
    view.reject = rule.bound->sample_loss(view.outputs, WeightSet::Test) > rule.tau;
    return view;
}

void save_rule(const RejectionRule& rule, const std::string& path) {
    nlohmann::json j{{"tau", rule.tau},
                     {"target_clean_reject_rate", rule.target_clean_reject_rate},
                     {"knowledge_hash", rule.knowledge_hash}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write rule file " + path);
    out << j.dump(2) << "\n";
}

RejectionRule load_rule(const std::string& path, CompiledKnowledgePtr knowledge) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rule file " + path);
    nlohmann::json j;
    in >> j;
    RejectionRule rule;
    rule.tau = j.at("tau").get<double>();
    rule.target_clean_reject_rate = j.at("target_clean_reject_rate").get<double>();
    rule.knowledge_hash = j.value("knowledge_hash", "");
    rule.bound = std::move(knowledge);
    return rule;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

}  // namespace tnshield
