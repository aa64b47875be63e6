#include "tnshield/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tnshield/harness.hpp"

namespace tnshield {

namespace {
constexpr double kProbFloor = 1e-7;

double clamp_prob(double p) {
    return p < kProbFloor ? kProbFloor : (p > 1.0 - kProbFloor ? 1.0 - kProbFloor : p);
}
}  // namespace

double supervised_loss(const std::vector<double>& outputs, const std::vector<Label>& label_row) {
    if (outputs.size() != label_row.size())
        throw DimensionMismatchError("outputs and label row differ in length");
    double sum = 0.0;
    int known = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (label_row[i] == Label::Unknown) continue;
        const double p = clamp_prob(outputs[i]);
        sum += label_row[i] == Label::Known1 ? -std::log(p) : -std::log(1.0 - p);
        ++known;
    }
    return known == 0 ? 0.0 : sum / known;
}

namespace {

// d suploss / d output, matching supervised_loss exactly (zero inside the
// clamped regions, so finite differences of the composed loss agree).
void suploss_grad_outputs(const std::vector<double>& outputs, const std::vector<Label>& label_row,
                          std::vector<double>& grad) {
    int known = 0;
    for (auto l : label_row)
        if (l != Label::Unknown) ++known;
    grad.assign(outputs.size(), 0.0);
    if (known == 0) return;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (label_row[i] == Label::Unknown) continue;
        const double o = outputs[i];
        if (o <= kProbFloor || o >= 1.0 - kProbFloor) continue;
        grad[i] = (label_row[i] == Label::Known1 ? -1.0 / o : 1.0 / (1.0 - o)) / known;
    }
}

}  // namespace

BatchLoss total_batch_loss(const Model& model, const Dataset& data,
                           const std::vector<int>& batch_indices,
                           const CompiledKnowledge& knowledge, const TrainConfig& config) {
    if (batch_indices.empty()) throw EmptyBatchError("empty training batch");

    BatchLoss out;
    out.grads = zero_grads(model);
    const double inv_b = 1.0 / static_cast<double>(batch_indices.size());
    std::vector<double> dsup, upstream;

    for (int idx : batch_indices) {
        const ForwardTrace trace = forward(model, data.samples[idx]);
        out.suploss += supervised_loss(trace.outputs, data.labels[idx]);

        suploss_grad_outputs(trace.outputs, data.labels[idx], dsup);
        out.closs += knowledge.sample_loss(trace.outputs, config.weight_set);
        std::vector<double> dcloss;
        if (config.lambda != 0.0)
            dcloss = knowledge.grad_outputs(trace.outputs, config.weight_set);

        upstream.assign(trace.outputs.size(), 0.0);
        for (std::size_t i = 0; i < trace.outputs.size(); ++i) {
            const double o = trace.outputs[i];
            const double dsig = o * (1.0 - o);
            double d = dsup[i];
            if (config.lambda != 0.0) d += config.lambda * dcloss[i];
            upstream[i] = inv_b * d * dsig;
        }
        out.grads.add_scaled(grad_weights(model, trace, upstream), 1.0);
    }
    out.suploss *= inv_b;
    out.closs *= inv_b;
    out.total = out.suploss + config.lambda * out.closs;
    return out;
}

namespace {

struct Adam {
    WeightGrads m, v;
    long t = 0;

    explicit Adam(const Model& model) : m(zero_grads(model)), v(zero_grads(model)) {}

    void step(Model& model, const WeightGrads& g, const TrainConfig& cfg) {
        ++t;
        const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, t);
        const double corr2 = 1.0 - std::pow(b2, t);
        for (std::size_t l = 0; l < model.layer_count(); ++l) {
            auto update = [&](std::vector<double>& param, std::vector<double>& ml,
                              std::vector<double>& vl, const std::vector<double>& gl) {
                for (std::size_t i = 0; i < param.size(); ++i) {
                    ml[i] = b1 * ml[i] + (1.0 - b1) * gl[i];
                    vl[i] = b2 * vl[i] + (1.0 - b2) * gl[i] * gl[i];
                    const double mhat = ml[i] / corr1;
                    const double vhat = vl[i] / corr2;
                    param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                }
            };
            update(model.weights[l], m.weights[l], v.weights[l], g.weights[l]);
            update(model.biases[l], m.biases[l], v.biases[l], g.biases[l]);
        }
    }
};

}  // namespace

TrainResult train(const Model& model, const Dataset& train_set, const Dataset& val_set,
                  const CompiledKnowledge& knowledge, const TrainConfig& config) {
    TrainResult result{model, {}};
    if (config.epochs <= 0) return result;
    if (train_set.size() == 0) throw EmptyBatchError("empty training set");

    Model current = model;
    Adam adam(current);
    std::mt19937_64 rng(config.seed);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best_f1 = -1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);

        double sup_sum = 0.0, closs_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            BatchLoss loss = total_batch_loss(current, train_set, batch, knowledge, config);
            adam.step(current, loss.grads, config);
            sup_sum += loss.suploss * batch.size();
            closs_sum += loss.closs * batch.size();
            seen += batch.size();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.suploss = sup_sum / seen;
        rec.closs = closs_sum / seen;
        rec.val_f1 = macro_f1(current, val_set);
        result.history.records.push_back(rec);

        if (rec.val_f1 > best_f1) {  // strict: earliest epoch wins ties
            best_f1 = rec.val_f1;
            result.history.best_epoch = epoch;
            result.model = current;
        }
    }
    return result;
}

Dataset make_semisupervised(const Dataset& dataset, double percent_labeled,
                            double percent_partial, std::uint64_t seed) {
    if (percent_labeled < 0.0 || percent_labeled > 100.0 || percent_partial < 0.0 ||
        percent_partial > 100.0)
        throw BadPercentError("percentages must lie in [0, 100]");

    Dataset out = dataset;
    std::mt19937_64 rng(seed);

    const std::size_t n = out.size();
    const auto n_labeled =
        static_cast<std::size_t>(std::llround(n * percent_labeled / 100.0));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t k = n_labeled; k < n; ++k)
        std::fill(out.labels[order[k]].begin(), out.labels[order[k]].end(), Label::Unknown);

    if (percent_partial > 0.0) {
        for (std::size_t k = 0; k < n_labeled; ++k) {
            auto& row = out.labels[order[k]];
            std::vector<int> pos, neg;
            for (int i = 0; i < static_cast<int>(row.size()); ++i) {
                if (row[i] == Label::Known1) pos.push_back(i);
                else if (row[i] == Label::Known0) neg.push_back(i);
            }
            auto drop = [&](std::vector<int>& idx) {
                const auto count =
                    static_cast<std::size_t>(idx.size() * percent_partial / 100.0);
                std::shuffle(idx.begin(), idx.end(), rng);
                for (std::size_t i = 0; i < count; ++i) row[idx[i]] = Label::Unknown;
            };
            drop(pos);
            drop(neg);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV io
// ---------------------------------------------------------------------------

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}
}  // namespace

void save_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset " + path);
    const int d = data.dim();
    for (int i = 0; i < d; ++i) out << (i ? "," : "") << "x" << i;
    for (const auto& name : data.class_names) out << "," << name;
    out << "\n";
    char buf[32];
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (int i = 0; i < d; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.samples[r][i]);
            out << (i ? "," : "") << buf;
        }
        for (auto l : data.labels[r])
            out << "," << (l == Label::Unknown ? "?" : (l == Label::Known1 ? "1" : "0"));
        out << "\n";
    }
}

Dataset load_dataset_csv(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty dataset file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_csv_line(line);
    int d = 0;
    while (d < static_cast<int>(header.size()) && header[d] == "x" + std::to_string(d)) ++d;
    if (d == 0) throw IoError("dataset header must start with feature columns x0..");

    Dataset data;
    data.split = split;
    data.class_names.assign(header.begin() + d, header.end());

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw IoError("row " + std::to_string(lineno) + " has " +
                          std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(header.size()));
        std::vector<double> x(d);
        for (int i = 0; i < d; ++i) x[i] = std::stod(cells[i]);
        std::vector<Label> row;
        row.reserve(header.size() - d);
        for (std::size_t i = d; i < cells.size(); ++i) {
            if (cells[i] == "?") row.push_back(Label::Unknown);
            else if (cells[i] == "1") row.push_back(Label::Known1);
            else if (cells[i] == "0") row.push_back(Label::Known0);
            else
                throw IoError("bad label cell '" + cells[i] + "' at row " +
                              std::to_string(lineno));
        }
        data.samples.push_back(std::move(x));
        data.labels.push_back(std::move(row));
    }
    return data;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history " + path);
    out << "epoch,suploss,closs,val_f1\n";
    char buf[128];
    for (const auto& r : history.records) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.epoch, r.suploss, r.closs,
                      r.val_f1);
        out << buf;
    }
}

}  // namespace tnshield
