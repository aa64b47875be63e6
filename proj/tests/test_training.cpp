#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "tnshield/harness.hpp"
#include "tnshield/training.hpp"

using namespace tnshield;

namespace {

const char* kToyKnowledge =
    "forall x: CAT(x) => ANIMAL(x)\n"
    "forall x: MOTORBIKE(x) => VEHICLE(x)\n"
    "forall x: VEHICLE(x) => not ANIMAL(x)\n"
    "forall x: CAT(x) or ANIMAL(x) or MOTORBIKE(x) or VEHICLE(x)\n";

CompiledKnowledgePtr toy_compiled() {
    KnowledgeBase kb = parse_knowledge_file(kToyKnowledge);
    return compile_knowledge(bind_predicates(kb, {"CAT", "ANIMAL", "MOTORBIKE", "VEHICLE"}, 4));
}

Dataset tiny_dataset(int n, std::uint64_t seed) {
    Dataset d;
    d.class_names = {"CAT", "ANIMAL", "MOTORBIKE", "VEHICLE"};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        d.samples.push_back({unit(rng), unit(rng)});
        if (i % 2 == 0)
            d.labels.push_back({Label::Known1, Label::Known1, Label::Known0, Label::Known0});
        else
            d.labels.push_back({Label::Known0, Label::Known0, Label::Known1, Label::Known1});
    }
    return d;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("supervised_loss masks unknown entries") {
    SUBCASE("single known positive at 0.5 is -ln(0.5)") {
        const std::vector<double> outputs{0.5, 0.9, 0.1};
        const std::vector<Label> row{Label::Known1, Label::Unknown, Label::Unknown};
        CHECK(supervised_loss(outputs, row) == doctest::Approx(0.6931471805599453));
    }
    SUBCASE("all unknown gives zero") {
        CHECK(supervised_loss({0.2, 0.9}, {Label::Unknown, Label::Unknown}) == 0.0);
    }
    SUBCASE("perfect crisp match is tiny after clamping") {
        CHECK(supervised_loss({1.0, 0.0}, {Label::Known1, Label::Known0}) <= 1e-6);
    }
    SUBCASE("mean over known entries only") {
        const double expected = (-std::log(0.8) - std::log(1.0 - 0.3)) / 2.0;
        CHECK(supervised_loss({0.8, 0.3, 0.99},
                              {Label::Known1, Label::Known0, Label::Unknown}) ==
              doctest::Approx(expected));
    }
    CHECK_THROWS_AS(supervised_loss({0.5}, {Label::Known1, Label::Known0}),
                    DimensionMismatchError);
}

TEST_CASE("masking: hypothetical values of unknown entries never matter") {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> unit(0.01, 0.99);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> outputs(5), outputs2(5);
        std::vector<Label> row(5);
        for (int j = 0; j < 5; ++j) {
            outputs[j] = unit(rng);
            const int r = static_cast<int>(rng() % 3);
            row[j] = r == 0 ? Label::Known0 : (r == 1 ? Label::Known1 : Label::Unknown);
            outputs2[j] = row[j] == Label::Unknown ? unit(rng) : outputs[j];
        }
        CHECK(supervised_loss(outputs, row) == supervised_loss(outputs2, row));
    }
}

TEST_CASE("total_batch_loss decomposes as suploss + lambda * closs") {
    auto ck = toy_compiled();
    const Dataset data = tiny_dataset(12, 5);
    const Model model = init_model({2, 8, 4}, Activation::ReLU, 3);
    std::vector<int> batch(data.size());
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<int>(i);

    TrainConfig zero;
    zero.lambda = 0.0;
    TrainConfig lam;
    lam.lambda = 2.5;

    const BatchLoss l0 = total_batch_loss(model, data, batch, *ck, zero);
    const BatchLoss l1 = total_batch_loss(model, data, batch, *ck, lam);

    // lambda = 0 equals the mean supervised loss exactly
    CHECK(l0.total == l0.suploss);

    // decomposition against an independently computed constraint loss
    std::vector<std::vector<double>> outputs;
    for (int idx : batch) outputs.push_back(forward(model, data.samples[idx]).outputs);
    const auto rep = constraint_loss(*ck, WeightSet::Train, outputs);
    CHECK(std::abs((l1.total - l0.total) - lam.lambda * rep.total) <= 1e-9);

    CHECK_THROWS_AS(total_batch_loss(model, data, {}, *ck, zero), EmptyBatchError);
}

TEST_CASE("total with satisfied knowledge equals the supervised part") {
    KnowledgeBase kb = parse_knowledge_file("A(x) => B(x)\n");
    auto ck = compile_knowledge(bind_predicates(kb, {"A", "B"}, 2));
    Dataset d;
    d.class_names = {"A", "B"};
    d.samples = {{0.1, 0.2}};
    d.labels = {{Label::Known0, Label::Known1}};
    // saturated logits drive the implication loss a(1-b) far below 1e-9
    Model model = init_model({2, 2}, Activation::Tanh, 1);
    model.weights[0] = {0.0, 0.0, 0.0, 0.0};
    model.biases[0] = {-30.0, 30.0};
    TrainConfig cfg;
    cfg.lambda = 1.0;
    const BatchLoss l = total_batch_loss(model, d, {0}, *ck, cfg);
    CHECK(l.closs <= 1e-12);
    CHECK(std::abs(l.total - l.suploss) <= 1e-9);
}

TEST_CASE("total_batch_loss gradient agrees with finite differences") {
    auto ck = toy_compiled();
    const Dataset data = tiny_dataset(6, 21);
    std::vector<int> batch{0, 1, 2, 3, 4, 5};
    TrainConfig cfg;
    cfg.lambda = 1.7;

    std::mt19937_64 rng(77);
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 4; ++trial) {
        const Model model = init_model({2, 6, 4}, trial % 2 ? Activation::Tanh : Activation::ReLU,
                                       rng());
        const BatchLoss base = total_batch_loss(model, data, batch, *ck, cfg);
        for (int probe = 0; probe < 30; ++probe) {
            const std::size_t l = rng() % model.layer_count();
            const bool bias = rng() % 4 == 0;
            const std::size_t k = rng() % (bias ? model.biases[l].size() : model.weights[l].size());
            Model plus = model, minus = model;
            (bias ? plus.biases[l][k] : plus.weights[l][k]) += h;
            (bias ? minus.biases[l][k] : minus.weights[l][k]) -= h;
            const double fd = (total_batch_loss(plus, data, batch, *ck, cfg).total -
                               total_batch_loss(minus, data, batch, *ck, cfg).total) /
                              (2.0 * h);
            const double exact = bias ? base.grads.biases[l][k] : base.grads.weights[l][k];
            CHECK(rel_err(exact, fd) <= 1e-4);
            ++checked;
        }
    }
    CHECK(checked >= 100);
}

TEST_CASE("train: zero epochs returns the initial model and empty history") {
    auto ck = toy_compiled();
    const Dataset data = tiny_dataset(8, 2);
    const Model model = init_model({2, 4, 4}, Activation::ReLU, 9);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult res = train(model, data, data, *ck, cfg);
    CHECK(res.history.records.empty());
    CHECK(res.history.best_epoch == -1);
    CHECK(res.model.weights == model.weights);
}

TEST_CASE("train is deterministic given the seed") {
    auto ck = toy_compiled();
    const Dataset data = tiny_dataset(32, 6);
    const Model model = init_model({2, 8, 4}, Activation::ReLU, 4);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.lambda = 1.0;
    cfg.seed = 123;

    const TrainResult a = train(model, data, data, *ck, cfg);
    const TrainResult b = train(model, data, data, *ck, cfg);
    REQUIRE(a.history.records.size() == b.history.records.size());
    for (std::size_t i = 0; i < a.history.records.size(); ++i) {
        CHECK(a.history.records[i].suploss == b.history.records[i].suploss);
        CHECK(a.history.records[i].closs == b.history.records[i].closs);
        CHECK(a.history.records[i].val_f1 == b.history.records[i].val_f1);
    }
    CHECK(a.model.weights == b.model.weights);
    CHECK(a.history.best_epoch == b.history.best_epoch);
}

TEST_CASE("train with lambda > 0 reduces the constraint loss on the toy problem") {
    ToyConfig toy = default_toy_config();
    for (auto& comp : toy.components) comp.count = 40;
    toy.unlabeled_fraction = 0.5;
    const ToySplits splits = gen_toy(toy);
    auto ck = toy_compiled();

    const Model model = init_model({2, 16, 4}, Activation::ReLU, 12);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 32;
    cfg.learning_rate = 5e-3;
    cfg.lambda = 3.0;
    cfg.seed = 7;

    const TrainResult res = train(model, splits.train, splits.validation, *ck, cfg);
    REQUIRE(res.history.records.size() == 40);
    CHECK(res.history.records.back().closs < res.history.records.front().closs);
    CHECK(res.history.best_epoch >= 0);

    // best epoch maximizes validation F1, earliest wins ties
    double best = -1.0;
    int expected = -1;
    for (const auto& r : res.history.records)
        if (r.val_f1 > best) {
            best = r.val_f1;
            expected = r.epoch;
        }
    CHECK(res.history.best_epoch == expected);
}

TEST_CASE("make_semisupervised") {
    Dataset data = tiny_dataset(100, 10);

    SUBCASE("identity at full labels") {
        const Dataset out = make_semisupervised(data, 100.0, 0.0, 1);
        CHECK(out.labels == data.labels);
    }
    SUBCASE("all unknown at zero percent labeled") {
        const Dataset out = make_semisupervised(data, 0.0, 0.0, 1);
        for (const auto& row : out.labels)
            for (auto l : row) CHECK(l == Label::Unknown);
    }
    SUBCASE("exactly 30 of 100 samples stay labeled") {
        const Dataset out = make_semisupervised(data, 30.0, 0.0, 1);
        int labeled = 0;
        for (const auto& row : out.labels) {
            bool any = false;
            for (auto l : row) any = any || l != Label::Unknown;
            labeled += any;
        }
        CHECK(labeled == 30);
    }
    SUBCASE("partial labels drop equal polarity fractions, floored") {
        const Dataset out = make_semisupervised(data, 100.0, 50.0, 3);
        for (const auto& row : out.labels) {
            int pos = 0, neg = 0;
            for (auto l : row) {
                pos += l == Label::Known1;
                neg += l == Label::Known0;
            }
            // each row starts with 2 positives and 2 negatives; 50% drops one of each
            CHECK(pos == 1);
            CHECK(neg == 1);
        }
    }
    SUBCASE("bad percents throw") {
        CHECK_THROWS_AS(make_semisupervised(data, -1.0, 0.0, 1), BadPercentError);
        CHECK_THROWS_AS(make_semisupervised(data, 0.0, 101.0, 1), BadPercentError);
    }
    SUBCASE("seeded and deterministic") {
        const Dataset a = make_semisupervised(data, 40.0, 30.0, 9);
        const Dataset b = make_semisupervised(data, 40.0, 30.0, 9);
        CHECK(a.labels == b.labels);
    }
}

TEST_CASE("dataset CSV round-trip") {
    Dataset data = tiny_dataset(5, 1);
    data.labels[2][1] = Label::Unknown;
    const std::string path = "/tmp/tnshield_dataset_roundtrip.csv";
    save_dataset_csv(data, path);
    const Dataset loaded = load_dataset_csv(path, Split::Train);
    CHECK(loaded.class_names == data.class_names);
    CHECK(loaded.samples == data.samples);
    CHECK(loaded.labels == data.labels);
    std::remove(path.c_str());
}
