// Command-line front end: compile knowledge, generate toy data, train,
// calibrate the rejection rule, attack, sweep and evaluate.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "tnshield/attack.hpp"
#include "tnshield/config.hpp"
#include "tnshield/defense.hpp"
#include "tnshield/harness.hpp"
#include "tnshield/knowledge.hpp"
#include "tnshield/net.hpp"
#include "tnshield/training.hpp"

using namespace tnshield;

namespace {

std::vector<std::string> read_class_names(const std::string& spec) {
    // either a file with one name per line or an inline comma list
    std::ifstream in(spec);
    if (!in) {
        std::vector<std::string> names;
        std::istringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) names.push_back(item);
        return names;
    }
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string word;
        if (ss >> word) names.push_back(word);
    }
    return names;
}

BoundKnowledge bind_with_main(const KnowledgeBase& kb, const std::vector<std::string>& names,
                              const std::string& main_spec) {
    if (main_spec.empty()) return bind_predicates(kb, names, static_cast<int>(names.size()));
    char* end = nullptr;
    const long count = std::strtol(main_spec.c_str(), &end, 10);
    if (end && *end == '\0') return bind_predicates(kb, names, static_cast<int>(count));
    std::vector<std::string> main_names;
    std::istringstream ss(main_spec);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) main_names.push_back(item);
    return bind_predicates(kb, names, main_names);
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config cfg = path.empty() ? Config{} : Config::load(path);
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw BadConfigError("--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

ToyConfig toy_from_config(const Config& cfg) {
    ToyConfig toy = default_toy_config();
    if (cfg.has("toy.classes")) {
        toy.class_names = cfg.get_list("toy.classes");
        toy.components.clear();
        for (int i = 0;; ++i) {
            const std::string prefix = "toy.component." + std::to_string(i) + ".";
            if (!cfg.has(prefix + "mean")) break;
            ToyComponent comp;
            const auto mean = cfg.get_doubles(prefix + "mean");
            const auto cov = cfg.get_doubles(prefix + "cov");
            if (mean.size() != 2 || cov.size() != 4)
                throw BadConfigError("component " + std::to_string(i) +
                                     " needs mean of 2 and cov of 4 values");
            comp.mean = {mean[0], mean[1]};
            comp.cov = {cov[0], cov[1], cov[2], cov[3]};
            comp.count = static_cast<int>(cfg.get_int(prefix + "count", 100));
            comp.positive_classes = cfg.get_list(prefix + "labels");
            toy.components.push_back(comp);
        }
    }
    toy.val_fraction = cfg.get_double("toy.val_fraction", toy.val_fraction);
    toy.test_fraction = cfg.get_double("toy.test_fraction", toy.test_fraction);
    toy.unlabeled_fraction = cfg.get_double("toy.unlabeled_fraction", toy.unlabeled_fraction);
    toy.partial_fraction = cfg.get_double("toy.partial_fraction", toy.partial_fraction);
    toy.clip_box = cfg.get_bool("toy.clip_box", toy.clip_box);
    toy.seed = static_cast<std::uint64_t>(cfg.get_int("toy.seed", 1));
    return toy;
}

TrainConfig train_from_config(const Config& cfg) {
    TrainConfig tc;
    tc.lambda = cfg.get_double("train.lambda", 0.0);
    tc.epochs = static_cast<int>(cfg.get_int("train.epochs", 100));
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 64));
    tc.learning_rate = cfg.get_double("train.learning_rate", 1e-5);
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
    return tc;
}

AttackConfig attack_from_config(const Config& cfg) {
    AttackConfig ac;
    ac.epsilon = cfg.get_double("attack.epsilon", 0.3);
    const std::string kappa = cfg.get_string("attack.kappa", "2");
    ac.kappa = kappa == "inf" ? std::numeric_limits<double>::infinity() : std::stod(kappa);
    ac.alpha = cfg.get_double("attack.alpha", 0.0);
    ac.iterations = static_cast<int>(cfg.get_int("attack.iterations", 50));
    if (cfg.has("attack.step_size")) ac.step_size = cfg.get_double("attack.step_size");
    ac.box01 = cfg.get_bool("attack.box01", false);
    ac.single_label_mode = cfg.get_bool("attack.single_label_mode", false);
    ac.seed = static_cast<std::uint64_t>(cfg.get_int("attack.seed", 0));
    return ac;
}

CompiledKnowledgePtr compile_for_dataset(const std::string& knowledge_path,
                                         const std::vector<std::string>& class_names,
                                         const std::string& main_spec) {
    const KnowledgeBase kb = parse_knowledge_path(knowledge_path);
    return compile_knowledge(bind_with_main(kb, class_names, main_spec));
}

std::vector<int> main_scope(const CompiledKnowledge& ck) {
    return ck.bound().main_classes.empty()
               ? std::vector<int>{}
               : ck.bound().main_classes;
}

int run_compile(const std::string& knowledge_path, const std::string& classes_spec,
                const std::string& out_path) {
    const KnowledgeBase kb = parse_knowledge_path(knowledge_path);
    std::vector<std::string> names =
        classes_spec.empty() ? kb.predicate_names() : read_class_names(classes_spec);
    const BoundKnowledge bound = bind_predicates(kb, names, static_cast<int>(names.size()));
    const CompiledKnowledge ck(bound);

    std::ostringstream out;
    out << "# knowledge: " << knowledge_path << "\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "# formulas: %zu  gamma_train: %.17g  gamma_test: %.17g\n",
                  kb.size(), kb.gamma_train(), kb.gamma_test());
    out << buf;
    for (std::size_t h = 0; h < ck.programs().size(); ++h) {
        const auto& wf = ck.programs()[h].source();
        std::snprintf(buf, sizeof(buf), "%zu w=%.17g,%.17g line=%d ", h, wf.weight_train,
                      wf.weight_test, wf.source_line);
        out << buf << ck.programs()[h].s_expression(names) << "\n";
    }
    if (out_path.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream f(out_path);
        if (!f) throw IoError("cannot write " + out_path);
        f << out.str();
    }
    return 0;
}

void write_trace_jsonl(const std::vector<AttackResult>& results, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write trace file " + path);
    for (std::size_t sample = 0; sample < results.size(); ++sample) {
        for (const auto& e : results[sample].trace) {
            nlohmann::json j{{"sample", sample},        {"iteration", e.iteration},
                             {"objective", e.objective}, {"constraint_loss", e.constraint_loss},
                             {"p", e.p},                {"n", e.n},
                             {"l2", e.l2}};
            out << j.dump() << "\n";
        }
    }
}

nlohmann::json report_to_json(const EvalReport& r) {
    return {{"epsilon", r.epsilon},
            {"macro_f1", r.macro_f1},
            {"acc_main", r.acc_main},
            {"quality_with_rejection", r.quality_with_rejection},
            {"reject_rate_clean", r.reject_rate_clean},
            {"reject_rate_adversarial", r.reject_rate_adversarial},
            {"mean_measure_clean", r.mean_measure_clean},
            {"mean_measure_adversarial", r.mean_measure_adversarial},
            {"pairing", std::isnan(r.pairing) ? nlohmann::json() : nlohmann::json(r.pairing)}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-constrained multi-label training, rejection and attacks"};
    app.require_subcommand(1);

    std::string knowledge_path, classes_spec, config_path, out_path, main_spec;
    std::string model_path, surrogate_path, rule_path, data_path, val_path, train_path;
    std::string adv_out, trace_out, history_out, model_out, rule_out, out_prefix, adv_path;
    std::vector<std::string> overrides;
    double target_rate = 0.10;
    double eval_epsilon = 0.0;

    auto* c_compile = app.add_subcommand("compile", "dump compiled constraint polynomials");
    c_compile->add_option("--knowledge", knowledge_path, "knowledge file")->required();
    c_compile->add_option("--classes", classes_spec, "class list file or comma list");
    c_compile->add_option("-o,--out", out_path, "output file (default stdout)");

    auto* c_toygen = app.add_subcommand("toygen", "generate the toy datasets");
    c_toygen->add_option("--config", config_path, "config file with a [toy] section");
    c_toygen->add_option("--set", overrides, "override config keys (section.key=value)");
    c_toygen->add_option("--out-prefix", out_prefix, "prefix for *_train/val/test.csv")
        ->required();

    auto* c_train = app.add_subcommand("train", "train a constrained classifier");
    c_train->add_option("--config", config_path, "config file with a [train] section");
    c_train->add_option("--set", overrides, "override config keys");
    c_train->add_option("--train", train_path, "training CSV")->required();
    c_train->add_option("--val", val_path, "validation CSV")->required();
    c_train->add_option("--knowledge", knowledge_path, "knowledge file")->required();
    c_train->add_option("--main", main_spec, "main classes: count or comma list");
    c_train->add_option("--model-out", model_out, "where to store the model")->required();
    c_train->add_option("--history-out", history_out, "training history CSV");

    auto* c_calibrate = app.add_subcommand("calibrate", "fit the rejection threshold");
    c_calibrate->add_option("--model", model_path, "model file")->required();
    c_calibrate->add_option("--val", val_path, "calibration CSV")->required();
    c_calibrate->add_option("--knowledge", knowledge_path, "knowledge file")->required();
    c_calibrate->add_option("--main", main_spec, "main classes: count or comma list");
    c_calibrate->add_option("--target", target_rate, "target clean reject rate");
    c_calibrate->add_option("--rule-out", rule_out, "rule output file")->required();

    auto* c_attack = app.add_subcommand("attack", "attack every sample of a dataset");
    c_attack->add_option("--config", config_path, "config file with an [attack] section");
    c_attack->add_option("--set", overrides, "override config keys");
    c_attack->add_option("--model", model_path, "target model")->required();
    c_attack->add_option("--surrogate", surrogate_path, "surrogate model (transfer attack)");
    c_attack->add_option("--rule", rule_path, "rejection rule for evasion flags");
    c_attack->add_option("--data", data_path, "dataset CSV")->required();
    c_attack->add_option("--knowledge", knowledge_path, "knowledge file")->required();
    c_attack->add_option("--main", main_spec, "main classes: count or comma list");
    c_attack->add_option("--adv-out", adv_out, "adversarial dataset CSV")->required();
    c_attack->add_option("--trace-out", trace_out, "per-iteration trace JSONL");

    auto* c_sweep = app.add_subcommand("sweep", "quality reports over an epsilon grid");
    c_sweep->add_option("--config", config_path, "config with [attack] and [sweep] sections")
        ->required();
    c_sweep->add_option("--set", overrides, "override config keys");
    c_sweep->add_option("--model", model_path, "target model")->required();
    c_sweep->add_option("--surrogate", surrogate_path, "surrogate model (transfer attacks)");
    c_sweep->add_option("--rule", rule_path, "rejection rule file")->required();
    c_sweep->add_option("--data", data_path, "test CSV")->required();
    c_sweep->add_option("--train", train_path, "training CSV (enables the pairing column)");
    c_sweep->add_option("--knowledge", knowledge_path, "knowledge file")->required();
    c_sweep->add_option("--main", main_spec, "main classes: count or comma list");
    c_sweep->add_option("--out", out_path, "sweep CSV output")->required();

    auto* c_eval = app.add_subcommand("eval", "evaluate a model, optionally with rejection");
    c_eval->add_option("--model", model_path, "model file")->required();
    c_eval->add_option("--rule", rule_path, "rejection rule file");
    c_eval->add_option("--data", data_path, "clean dataset CSV")->required();
    c_eval->add_option("--adv", adv_path, "row-aligned adversarial CSV");
    c_eval->add_option("--epsilon", eval_epsilon, "epsilon the adversarial data was made with");
    c_eval->add_option("--knowledge", knowledge_path, "knowledge file")->required();
    c_eval->add_option("--main", main_spec, "main classes: count or comma list");
    c_eval->add_option("--train", train_path, "training CSV (enables the pairing score)");
    c_eval->add_option("--out", out_path, "JSON report output (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_compile->parsed()) return run_compile(knowledge_path, classes_spec, out_path);

        if (c_toygen->parsed()) {
            const Config cfg = load_config(config_path, overrides);
            const ToySplits splits = gen_toy(toy_from_config(cfg));
            save_dataset_csv(splits.train, out_prefix + "_train.csv");
            save_dataset_csv(splits.validation, out_prefix + "_val.csv");
            save_dataset_csv(splits.test, out_prefix + "_test.csv");
            std::cout << "wrote " << splits.train.size() << "/" << splits.validation.size()
                      << "/" << splits.test.size() << " samples to " << out_prefix
                      << "_{train,val,test}.csv\n";
            return 0;
        }

        if (c_train->parsed()) {
            const Config cfg = load_config(config_path, overrides);
            Dataset train_set = load_dataset_csv(train_path, Split::Train);
            Dataset val_set = load_dataset_csv(val_path, Split::Validation);
            if (main_spec.empty() && cfg.has("train.main_count"))
                main_spec = cfg.get_string("train.main_count");
            auto ck = compile_for_dataset(knowledge_path, train_set.class_names, main_spec);

            // train.hidden lists the hidden layer widths; input and output
            // sizes come from the dataset
            std::vector<int> layers{train_set.dim()};
            const auto hidden = cfg.has("train.hidden") ? cfg.get_doubles("train.hidden")
                                                        : std::vector<double>{16.0};
            for (double v : hidden) layers.push_back(static_cast<int>(v));
            layers.push_back(train_set.class_count());
            const Activation act =
                cfg.get_string("train.activation", "relu") == "tanh" ? Activation::Tanh
                                                                     : Activation::ReLU;
            const Model initial = init_model(
                layers, act, static_cast<std::uint64_t>(cfg.get_int("train.init_seed", 12)));

            const TrainConfig tc = train_from_config(cfg);
            const TrainResult result = train(initial, train_set, val_set, *ck, tc);
            save_model(result.model, model_out);
            if (!history_out.empty()) save_history_csv(result.history, history_out);
            std::cout << "best epoch " << result.history.best_epoch << ", validation F1 "
                      << (result.history.best_epoch >= 0
                              ? result.history.records[result.history.best_epoch].val_f1
                              : 0.0)
                      << "\n";
            return 0;
        }

        if (c_calibrate->parsed()) {
            const Model model = load_model(model_path);
            const Dataset val_set = load_dataset_csv(val_path, Split::Validation);
            auto ck = compile_for_dataset(knowledge_path, val_set.class_names, main_spec);
            RejectionRule rule = calibrate_tau(model, val_set, ck, target_rate);
            rule.knowledge_hash = file_hash(knowledge_path);
            save_rule(rule, rule_out);
            std::cout << "tau " << rule.tau << " at target " << target_rate << "\n";
            return 0;
        }

        if (c_attack->parsed()) {
            const Config cfg = load_config(config_path, overrides);
            const Model model = load_model(model_path);
            const Dataset data = load_dataset_csv(data_path, Split::Test);
            auto ck = compile_for_dataset(knowledge_path, data.class_names, main_spec);
            AttackConfig ac = attack_from_config(cfg);
            if (ac.restrict_to.empty()) ac.restrict_to = main_scope(*ck);

            std::optional<Model> surrogate;
            if (!surrogate_path.empty()) surrogate = load_model(surrogate_path);
            std::optional<RejectionRule> rule;
            if (!rule_path.empty()) rule = load_rule(rule_path, ck);

            const AttackRun run =
                attack_dataset(model, surrogate ? &*surrogate : nullptr, data, *ck, ac,
                               rule ? &*rule : nullptr);
            save_dataset_csv(run.adversarial, adv_out);
            if (!trace_out.empty()) write_trace_jsonl(run.results, trace_out);

            int changed = 0, evaded = 0;
            for (const auto& r : run.results) {
                changed += r.prediction_changed;
                evaded += r.rejection_evaded.value_or(false);
            }
            std::cout << "attacked " << run.results.size() << " samples: " << changed
                      << " predictions changed";
            if (rule) std::cout << ", " << evaded << " evade rejection";
            std::cout << "\n";
            return 0;
        }

        if (c_sweep->parsed()) {
            const Config cfg = load_config(config_path, overrides);
            const Model model = load_model(model_path);
            const Dataset test_set = load_dataset_csv(data_path, Split::Test);
            auto ck = compile_for_dataset(knowledge_path, test_set.class_names, main_spec);
            AttackConfig ac = attack_from_config(cfg);
            if (ac.restrict_to.empty()) ac.restrict_to = main_scope(*ck);
            const RejectionRule rule = load_rule(rule_path, ck);

            std::optional<Model> surrogate;
            if (!surrogate_path.empty()) surrogate = load_model(surrogate_path);
            std::optional<Dataset> train_set;
            if (!train_path.empty()) train_set = load_dataset_csv(train_path, Split::Train);

            SweepOptions opts;
            if (surrogate) opts.surrogate = &*surrogate;
            if (train_set) opts.train_set = &*train_set;
            opts.pairing.num_samples =
                static_cast<int>(cfg.get_int("defense.pairing_samples", 1000));
            opts.pairing.margin_fraction = cfg.get_double("defense.pairing_margin", 0.25);
            opts.pairing.seed =
                static_cast<std::uint64_t>(cfg.get_int("defense.pairing_seed", 0));

            const auto epsilons = cfg.get_doubles("sweep.epsilons");
            const auto reports = sweep(model, rule, *ck, test_set, epsilons, ac, opts);
            save_sweep_csv(reports, out_path);
            std::cout << "wrote " << reports.size() << " rows to " << out_path << "\n";
            return 0;
        }

        if (c_eval->parsed()) {
            const Model model = load_model(model_path);
            const Dataset clean = load_dataset_csv(data_path, Split::Test);
            auto ck = compile_for_dataset(knowledge_path, clean.class_names, main_spec);

            RejectionRule rule;
            if (!rule_path.empty()) {
                rule = load_rule(rule_path, ck);
            } else {
                rule.tau = std::numeric_limits<double>::max();  // rejection disabled
                rule.bound = ck;
            }
            Dataset adv = clean;
            if (!adv_path.empty()) {
                adv = load_dataset_csv(adv_path, Split::Test);
                if (eval_epsilon <= 0.0)
                    throw BadConfigError("--adv needs the matching --epsilon > 0");
            }
            EvalReport rep = classification_quality(model, rule, clean, adv,
                                                    adv_path.empty() ? 0.0 : eval_epsilon);
            if (!train_path.empty()) {
                const Dataset train_set = load_dataset_csv(train_path, Split::Train);
                rep.pairing = pairing_score(model, train_set, *ck, PairingConfig{});
            }
            const nlohmann::json j = report_to_json(rep);
            if (out_path.empty()) {
                std::cout << j.dump(2) << "\n";
            } else {
                std::ofstream f(out_path);
                if (!f) throw IoError("cannot write " + out_path);
                f << j.dump(2) << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
