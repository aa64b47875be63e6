#include "tnshield/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

namespace tnshield {

ToyConfig default_toy_config() {
    ToyConfig cfg;
    cfg.class_names = {"CAT", "ANIMAL", "MOTORBIKE", "VEHICLE"};
    // Specific classes nest inside their umbrella class; the animal family
    // lives on the left of the box, the vehicle family on the right. The
    // clusters overlap enough that supervision alone underfits and the
    // constraint term has something to contribute.
    cfg.components = {
        {{0.28, 0.64}, {0.009, 0.002, 0.002, 0.009}, 200, {"CAT", "ANIMAL"}},
        {{0.33, 0.38}, {0.011, -0.002, -0.002, 0.011}, 200, {"ANIMAL"}},
        {{0.72, 0.64}, {0.009, -0.002, -0.002, 0.009}, 200, {"MOTORBIKE", "VEHICLE"}},
        {{0.67, 0.38}, {0.011, 0.002, 0.002, 0.011}, 200, {"VEHICLE"}},
    };
    cfg.val_fraction = 0.5;
    cfg.test_fraction = 0.5;
    cfg.seed = 1;
    return cfg;
}

namespace {

struct Cholesky2 {
    double l00, l10, l11;
};

Cholesky2 cholesky(const std::array<double, 4>& cov) {
    const double a = cov[0], b = cov[1], bt = cov[2], c = cov[3];
    if (std::abs(b - bt) > 1e-12) throw BadConfigError("covariance must be symmetric");
    if (a <= 0.0) throw BadConfigError("covariance must be positive definite");
    const double l00 = std::sqrt(a);
    const double l10 = b / l00;
    const double rest = c - l10 * l10;
    if (rest <= 0.0) throw BadConfigError("covariance must be positive definite");
    return {l00, l10, std::sqrt(rest)};
}

void draw_component(const ToyComponent& comp, int count, const ToyConfig& cfg,
                    const std::vector<std::string>& class_names, std::mt19937_64& rng,
                    Dataset& out) {
    const Cholesky2 L = cholesky(comp.cov);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Label> row(class_names.size(), Label::Known0);
    for (const auto& name : comp.positive_classes) {
        auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end()) throw BadConfigError("component labels unknown class " + name);
        row[it - class_names.begin()] = Label::Known1;
    }
    for (int i = 0; i < count; ++i) {
        const double z0 = normal(rng);
        const double z1 = normal(rng);
        double x0 = comp.mean[0] + L.l00 * z0;
        double x1 = comp.mean[1] + L.l10 * z0 + L.l11 * z1;
        if (cfg.clip_box) {
            x0 = std::clamp(x0, 0.0, 1.0);
            x1 = std::clamp(x1, 0.0, 1.0);
        }
        out.samples.push_back({x0, x1});
        out.labels.push_back(row);
    }
}

}  // namespace

ToySplits gen_toy(const ToyConfig& config) {
    if (config.class_names.empty() || config.components.empty())
        throw BadConfigError("toy config needs classes and components");
    for (const auto& comp : config.components)
        if (comp.count < 1) throw BadConfigError("component counts must be >= 1");
    if (config.unlabeled_fraction < 0.0 || config.unlabeled_fraction > 1.0 ||
        config.partial_fraction < 0.0 || config.partial_fraction > 1.0)
        throw BadConfigError("fractions must lie in [0,1]");

    ToySplits splits;
    splits.train.split = Split::Train;
    splits.validation.split = Split::Validation;
    splits.test.split = Split::Test;
    splits.train.class_names = splits.validation.class_names = splits.test.class_names =
        config.class_names;

    std::mt19937_64 rng(config.seed);
    for (const auto& comp : config.components)
        draw_component(comp, comp.count, config, config.class_names, rng, splits.train);
    for (const auto& comp : config.components) {
        const int n = std::max(1, static_cast<int>(std::llround(comp.count * config.val_fraction)));
        draw_component(comp, n, config, config.class_names, rng, splits.validation);
    }
    for (const auto& comp : config.components) {
        const int n = std::max(1, static_cast<int>(std::llround(comp.count * config.test_fraction)));
        draw_component(comp, n, config, config.class_names, rng, splits.test);
    }

    if (config.unlabeled_fraction > 0.0 || config.partial_fraction > 0.0)
        splits.train = make_semisupervised(splits.train, 100.0 * (1.0 - config.unlabeled_fraction),
                                           100.0 * config.partial_fraction, config.seed + 1);
    return splits;
}

namespace {

void require_known(const Dataset& dataset) {
    for (const auto& row : dataset.labels)
        for (auto l : row)
            if (l == Label::Unknown)
                throw Error("evaluation requires fully labeled data");
}

int winner_in_scope(const std::vector<double>& outputs, const std::vector<int>& scope) {
    int best = scope.front();
    for (int i : scope)
        if (outputs[i] > outputs[best]) best = i;
    return best;
}

std::vector<int> all_classes(int c) {
    std::vector<int> v(c);
    for (int i = 0; i < c; ++i) v[i] = i;
    return v;
}

}  // namespace

double macro_f1(const Model& model, const Dataset& dataset, double threshold) {
    if (dataset.size() == 0) throw EmptySetError("macro F1 over an empty dataset");
    require_known(dataset);
    const int c = dataset.class_count();
    std::vector<long> tp(c, 0), fp(c, 0), fn(c, 0);
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        const ForwardTrace trace = forward(model, dataset.samples[r]);
        for (int i = 0; i < c; ++i) {
            const bool pred = trace.outputs[i] > threshold;
            const bool truth = dataset.labels[r][i] == Label::Known1;
            if (pred && truth) ++tp[i];
            else if (pred && !truth) ++fp[i];
            else if (!pred && truth) ++fn[i];
        }
    }
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
        const double denom = 2.0 * tp[i] + fp[i] + fn[i];
        sum += denom == 0.0 ? 0.0 : 2.0 * tp[i] / denom;
    }
    return sum / c;
}

double acc_main(const Model& model, const Dataset& dataset, const std::vector<int>& main_classes) {
    if (dataset.size() == 0) throw EmptySetError("accuracy over an empty dataset");
    if (main_classes.empty()) throw NoMainClassesError("no main classes given");
    long correct = 0;
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        int positive = -1;
        for (int i : main_classes) {
            if (dataset.labels[r][i] == Label::Known1) {
                if (positive >= 0)
                    throw NotSingleLabelError("sample " + std::to_string(r) +
                                              " has multiple positive main classes");
                positive = i;
            }
        }
        if (positive < 0)
            throw NotSingleLabelError("sample " + std::to_string(r) +
                                      " has no positive main class");
        const ForwardTrace trace = forward(model, dataset.samples[r]);
        if (winner_in_scope(trace.outputs, main_classes) == positive) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

EvalReport classification_quality(const Model& model, const RejectionRule& rule,
                                  const Dataset& clean, const Dataset& adversarial,
                                  double epsilon) {
    if (clean.size() != adversarial.size() || clean.dim() != adversarial.dim())
        throw MisalignedError("clean and adversarial datasets must be row-aligned");
    if (clean.size() == 0) throw EmptySetError("quality over an empty dataset");
    require_known(clean);

    const auto& bound = rule.bound->bound();
    std::vector<int> scope = bound.main_classes.empty() ? all_classes(bound.class_count)
                                                        : bound.main_classes;

    const Dataset& scored = epsilon == 0.0 ? clean : adversarial;
    long correct_with = 0, correct_without = 0, rejected_clean = 0, rejected_adv = 0;
    double measure_clean = 0.0, measure_adv = 0.0;

    for (std::size_t r = 0; r < clean.size(); ++r) {
        const RejectDecision clean_dec = should_reject(rule, model, clean.samples[r]);
        measure_clean += clean_dec.measure;
        if (clean_dec.reject) ++rejected_clean;

        const RejectDecision dec =
            epsilon == 0.0 ? clean_dec : should_reject(rule, model, adversarial.samples[r]);
        if (epsilon != 0.0) {
            measure_adv += dec.measure;
            if (dec.reject) ++rejected_adv;
        }

        const ForwardTrace trace = forward(model, scored.samples[r]);
        const int winner = winner_in_scope(trace.outputs, scope);
        const bool classified_ok = clean.labels[r][winner] == Label::Known1;
        if (classified_ok) ++correct_without;

        // Rejected clean samples land in the unknown class (wrong); rejected
        // adversarial samples count as detected (correct).
        const bool ok = epsilon == 0.0 ? (!dec.reject && classified_ok)
                                       : (dec.reject || classified_ok);
        if (ok) ++correct_with;
    }

    EvalReport rep;
    rep.epsilon = epsilon;
    Dataset eval_ds = clean;  // adversarial samples keep the clean ground truth
    if (epsilon != 0.0) eval_ds.samples = adversarial.samples;
    rep.macro_f1 = macro_f1(model, eval_ds);
    rep.acc_main = static_cast<double>(correct_without) / clean.size();
    rep.quality_with_rejection = static_cast<double>(correct_with) / clean.size();
    rep.reject_rate_clean = static_cast<double>(rejected_clean) / clean.size();
    rep.reject_rate_adversarial =
        epsilon == 0.0 ? 0.0 : static_cast<double>(rejected_adv) / clean.size();
    rep.mean_measure_clean = measure_clean / clean.size();
    rep.mean_measure_adversarial = epsilon == 0.0 ? rep.mean_measure_clean
                                                  : measure_adv / clean.size();
    return rep;
}

AttackRun attack_dataset(const Model& model, const Model* surrogate, const Dataset& data,
                         const CompiledKnowledge& knowledge, const AttackConfig& config,
                         const RejectionRule* rule) {
    require_known(data);
    AttackRun run;
    run.adversarial = data;
    run.results.reserve(data.size());
    for (std::size_t r = 0; r < data.size(); ++r) {
        ClassPartition partition;
        const std::set<int> scope(config.restrict_to.begin(), config.restrict_to.end());
        for (int i = 0; i < data.class_count(); ++i) {
            if (!scope.empty() && !scope.count(i)) continue;
            if (data.labels[r][i] == Label::Known1) partition.positives.push_back(i);
            else if (data.labels[r][i] == Label::Known0) partition.negatives.push_back(i);
        }
        AttackResult res = surrogate
                               ? transfer_attack(*surrogate, model, data.samples[r], partition,
                                                 knowledge, config, rule)
                               : mka(model, data.samples[r], partition, knowledge, config, rule);
        run.adversarial.samples[r] = res.x_star;
        run.results.push_back(std::move(res));
    }
    return run;
}

std::vector<EvalReport> sweep(const Model& model, const RejectionRule& rule,
                              const CompiledKnowledge& knowledge, const Dataset& test_set,
                              const std::vector<double>& epsilons,
                              const AttackConfig& attack_template, const SweepOptions& options) {
    if (epsilons.empty() || epsilons.front() != 0.0 ||
        !std::is_sorted(epsilons.begin(), epsilons.end()))
        throw BadConfigError("epsilons must be ascending and start at 0");

    double pairing = std::numeric_limits<double>::quiet_NaN();
    if (options.train_set)
        pairing = pairing_score(model, *options.train_set, knowledge, options.pairing);

    std::vector<EvalReport> reports;
    for (double eps : epsilons) {
        EvalReport rep;
        if (eps == 0.0) {
            rep = classification_quality(model, rule, test_set, test_set, 0.0);
        } else {
            AttackConfig cfg = attack_template;
            cfg.epsilon = eps;
            const AttackRun run = attack_dataset(model, options.surrogate, test_set, knowledge,
                                                 cfg, &rule);
            rep = classification_quality(model, rule, test_set, run.adversarial, eps);
        }
        rep.pairing = pairing;
        reports.push_back(rep);
    }
    return reports;
}

void save_sweep_csv(const std::vector<EvalReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sweep csv " + path);
    out << "epsilon,macro_f1,acc_main,quality_with_rejection,reject_rate_clean,"
           "reject_rate_adversarial,mean_measure_clean,mean_measure_adversarial,pairing\n";
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.epsilon, r.macro_f1, r.acc_main, r.quality_with_rejection,
                      r.reject_rate_clean, r.reject_rate_adversarial, r.mean_measure_clean,
                      r.mean_measure_adversarial, r.pairing);
        out << buf;
    }
}

}  // namespace tnshield
