#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tnshield/attack.hpp"
#include "tnshield/compiler.hpp"
#include "tnshield/defense.hpp"
#include "tnshield/harness.hpp"
#include "tnshield/knowledge.hpp"
#include "tnshield/net.hpp"
#include "tnshield/training.hpp"

namespace py = pybind11;
using namespace tnshield;

namespace {

Dataset make_dataset(const std::vector<std::vector<double>>& samples,
                     const std::vector<std::vector<int>>& labels,
                     const std::vector<std::string>& class_names) {
    Dataset d;
    d.samples = samples;
    d.class_names = class_names;
    d.labels.reserve(labels.size());
    for (const auto& row : labels) {
        std::vector<Label> lr;
        lr.reserve(row.size());
        for (int v : row) {
            if (v != 0 && v != 1 && v != 2)
                throw BadConfigError("labels must be 0 (negative), 1 (positive) or 2 (unknown)");
            lr.push_back(static_cast<Label>(v));
        }
        d.labels.push_back(std::move(lr));
    }
    return d;
}

std::vector<std::vector<int>> labels_as_ints(const Dataset& d) {
    std::vector<std::vector<int>> out;
    out.reserve(d.labels.size());
    for (const auto& row : d.labels) {
        std::vector<int> r;
        r.reserve(row.size());
        for (auto l : row) r.push_back(static_cast<int>(l));
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "knowledge-constrained multi-label classification, rejection and attacks";

    py::register_exception<Error>(m, "TnshieldError");

    // ---------------- knowledge ----------------
    py::class_<Formula, std::shared_ptr<Formula>>(m, "Formula")
        .def("__str__", [](const Formula& f) { return to_string(f); })
        .def("__repr__",
             [](const Formula& f) { return "Formula(\"" + to_string(f) + "\")"; })
        .def("predicates", [](const Formula& f) { return predicate_names(f); });

    py::enum_<MutualExclusionEncoding>(m, "MutualExclusionEncoding")
        .value("TruthTable", MutualExclusionEncoding::TruthTable)
        .value("Pairwise", MutualExclusionEncoding::Pairwise);

    py::class_<WeightedFormula>(m, "WeightedFormula")
        .def_property_readonly(
            "formula",
            [](const WeightedFormula& wf) { return std::const_pointer_cast<Formula>(wf.formula); })
        .def_readonly("weight_train", &WeightedFormula::weight_train)
        .def_readonly("weight_test", &WeightedFormula::weight_test)
        .def_readonly("source_line", &WeightedFormula::source_line);

    py::class_<KnowledgeBase>(m, "KnowledgeBase")
        .def("__len__", &KnowledgeBase::size)
        .def_property_readonly("gamma_train", &KnowledgeBase::gamma_train)
        .def_property_readonly("gamma_test", &KnowledgeBase::gamma_test)
        .def("formulas", &KnowledgeBase::formulas)
        .def("predicate_names", &KnowledgeBase::predicate_names);

    py::class_<BoundKnowledge>(m, "BoundKnowledge")
        .def_readonly("class_names", &BoundKnowledge::class_names)
        .def_readonly("class_count", &BoundKnowledge::class_count)
        .def_readonly("main_classes", &BoundKnowledge::main_classes)
        .def_readonly("auxiliary_classes", &BoundKnowledge::auxiliary_classes);

    m.def(
        "parse_formula",
        [](const std::string& text) { return std::const_pointer_cast<Formula>(parse_formula(text)); },
        py::arg("text"));
    m.def("parse_knowledge_file", &parse_knowledge_file, py::arg("text"));
    m.def("parse_knowledge_path", &parse_knowledge_path, py::arg("path"));
    m.def(
        "expand_mutual_exclusion",
        [](const std::vector<std::string>& classes, MutualExclusionEncoding enc) {
            std::vector<std::shared_ptr<Formula>> out;
            for (auto& f : expand_mutual_exclusion(classes, enc))
                out.push_back(std::const_pointer_cast<Formula>(f));
            return out;
        },
        py::arg("classes"), py::arg("encoding"));
    m.def("boolean_eval", &boolean_eval, py::arg("formula"), py::arg("assignment"));
    m.def(
        "bind_predicates",
        [](const KnowledgeBase& kb, const std::vector<std::string>& names, int main_count) {
            return bind_predicates(kb, names, main_count);
        },
        py::arg("base"), py::arg("class_names"), py::arg("main_count"));
    m.def(
        "bind_predicates_named",
        [](const KnowledgeBase& kb, const std::vector<std::string>& names,
           const std::vector<std::string>& main_names) {
            return bind_predicates(kb, names, main_names);
        },
        py::arg("base"), py::arg("class_names"), py::arg("main_names"));

    // ---------------- compiler ----------------
    py::enum_<WeightSet>(m, "WeightSet")
        .value("Train", WeightSet::Train)
        .value("Test", WeightSet::Test);

    py::class_<ConstraintLossReport>(m, "ConstraintLossReport")
        .def_readonly("total", &ConstraintLossReport::total)
        .def_readonly("per_formula", &ConstraintLossReport::per_formula)
        .def_readonly("per_sample", &ConstraintLossReport::per_sample);

    py::class_<CompiledKnowledge, std::shared_ptr<CompiledKnowledge>>(m, "CompiledKnowledge")
        .def(py::init<const BoundKnowledge&>())
        .def_property_readonly("class_names", &CompiledKnowledge::class_names)
        .def_property_readonly("class_count", &CompiledKnowledge::class_count)
        .def("gamma", &CompiledKnowledge::gamma, py::arg("weight_set"))
        .def("sample_loss", &CompiledKnowledge::sample_loss, py::arg("outputs"),
             py::arg("weight_set"))
        .def("grad_outputs", &CompiledKnowledge::grad_outputs, py::arg("outputs"),
             py::arg("weight_set"))
        .def("truth_degrees",
             [](const CompiledKnowledge& ck, const std::vector<double>& outputs) {
                 std::vector<double> out;
                 for (const auto& p : ck.programs()) out.push_back(p.truth_degree(outputs));
                 return out;
             })
        .def("s_expressions", [](const CompiledKnowledge& ck) {
            std::vector<std::string> out;
            for (const auto& p : ck.programs()) out.push_back(p.s_expression(ck.class_names()));
            return out;
        });

    m.def(
        "compile_knowledge",
        [](const BoundKnowledge& bound) { return std::make_shared<CompiledKnowledge>(bound); },
        py::arg("bound"));
    m.def("constraint_loss", &constraint_loss, py::arg("knowledge"), py::arg("weight_set"),
          py::arg("batch"), py::arg("keep_per_sample") = false);

    // ---------------- net ----------------
    py::enum_<Activation>(m, "Activation")
        .value("ReLU", Activation::ReLU)
        .value("Tanh", Activation::Tanh);

    py::class_<ForwardTrace>(m, "ForwardTrace")
        .def_property_readonly("logits",
                               [](const ForwardTrace& t) { return t.logits(); })
        .def_readonly("outputs", &ForwardTrace::outputs);

    py::class_<Model>(m, "Model")
        .def_readonly("layer_sizes", &Model::layer_sizes)
        .def_readonly("seed", &Model::seed)
        .def("save", [](const Model& m_, const std::string& path) { save_model(m_, path); },
             py::arg("path"))
        .def("__repr__", [](const Model& m_) {
            std::string s = "Model([";
            for (std::size_t i = 0; i < m_.layer_sizes.size(); ++i)
                s += (i ? "," : "") + std::to_string(m_.layer_sizes[i]);
            return s + "])";
        });

    m.def("init_model", &init_model, py::arg("layer_sizes"), py::arg("activation"),
          py::arg("seed"));
    m.def("forward", &forward, py::arg("model"), py::arg("x"));
    m.def("load_model", &load_model, py::arg("path"));

    // ---------------- training ----------------
    py::enum_<Split>(m, "Split")
        .value("Train", Split::Train)
        .value("Validation", Split::Validation)
        .value("Test", Split::Test);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&make_dataset), py::arg("samples"), py::arg("labels"),
             py::arg("class_names"))
        .def("__len__", &Dataset::size)
        .def_readonly("samples", &Dataset::samples)
        .def_readonly("class_names", &Dataset::class_names)
        .def_property_readonly("labels", &labels_as_ints)
        .def("save_csv",
             [](const Dataset& d, const std::string& path) { save_dataset_csv(d, path); },
             py::arg("path"));

    m.def("load_dataset_csv", &load_dataset_csv, py::arg("path"),
          py::arg("split") = Split::Train);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lambda_", &TrainConfig::lambda)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<EpochRecord>(m, "EpochRecord")
        .def_readonly("epoch", &EpochRecord::epoch)
        .def_readonly("suploss", &EpochRecord::suploss)
        .def_readonly("closs", &EpochRecord::closs)
        .def_readonly("val_f1", &EpochRecord::val_f1);

    py::class_<TrainHistory>(m, "TrainHistory")
        .def_readonly("records", &TrainHistory::records)
        .def_readonly("best_epoch", &TrainHistory::best_epoch);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("model", &TrainResult::model)
        .def_readonly("history", &TrainResult::history);

    m.def("supervised_loss",
          [](const std::vector<double>& outputs, const std::vector<int>& labels) {
              std::vector<Label> row;
              for (int v : labels) row.push_back(static_cast<Label>(v));
              return supervised_loss(outputs, row);
          },
          py::arg("outputs"), py::arg("label_row"));
    m.def(
        "train",
        [](const Model& model, const Dataset& tr, const Dataset& val,
           const std::shared_ptr<CompiledKnowledge>& ck, const TrainConfig& cfg) {
            return train(model, tr, val, *ck, cfg);
        },
        py::arg("model"), py::arg("train_set"), py::arg("val_set"), py::arg("knowledge"),
        py::arg("config"));
    m.def("make_semisupervised", &make_semisupervised, py::arg("dataset"),
          py::arg("percent_labeled"), py::arg("percent_partial"), py::arg("seed"));

    // ---------------- defense ----------------
    py::class_<RejectionRule>(m, "RejectionRule")
        .def_readonly("tau", &RejectionRule::tau)
        .def_readonly("target_clean_reject_rate", &RejectionRule::target_clean_reject_rate);

    py::class_<PairingConfig>(m, "PairingConfig")
        .def(py::init<>())
        .def_readwrite("num_samples", &PairingConfig::num_samples)
        .def_readwrite("margin_fraction", &PairingConfig::margin_fraction)
        .def_readwrite("seed", &PairingConfig::seed);

    py::class_<SingleLabelView>(m, "SingleLabelView")
        .def_readonly("main_class", &SingleLabelView::main_class)
        .def_readonly("reject", &SingleLabelView::reject)
        .def_readonly("outputs", &SingleLabelView::outputs);

    m.def(
        "knowledge_measure",
        [](const Model& model, const std::vector<double>& x, const std::shared_ptr<CompiledKnowledge>& ck) {
            return knowledge_measure(model, x, *ck);
        },
        py::arg("model"), py::arg("x"), py::arg("knowledge"));
    m.def(
        "calibrate_tau",
        [](const Model& model, const Dataset& validation,
           const std::shared_ptr<CompiledKnowledge>& ck, double target_rate) {
            return calibrate_tau(model, validation, ck, target_rate);
        },
        py::arg("model"), py::arg("validation"), py::arg("knowledge"),
        py::arg("target_rate") = 0.10);
    m.def(
        "should_reject",
        [](const RejectionRule& rule, const Model& model, const std::vector<double>& x) {
            const RejectDecision d = should_reject(rule, model, x);
            return py::make_tuple(d.reject, d.measure);
        },
        py::arg("rule"), py::arg("model"), py::arg("x"));
    m.def(
        "pairing_score",
        [](const Model& model, const Dataset& train_set, const std::shared_ptr<CompiledKnowledge>& ck,
           const PairingConfig& cfg) { return pairing_score(model, train_set, *ck, cfg); },
        py::arg("model"), py::arg("train_set"), py::arg("knowledge"), py::arg("config"));
    m.def("single_label_view", &single_label_view, py::arg("model"), py::arg("rule"),
          py::arg("x"));
    m.def("save_rule", &save_rule, py::arg("rule"), py::arg("path"));
    m.def(
        "load_rule",
        [](const std::string& path, const std::shared_ptr<CompiledKnowledge>& ck) {
            return load_rule(path, ck);
        },
        py::arg("path"), py::arg("knowledge"));

    // ---------------- attack ----------------
    py::class_<AttackConfig>(m, "AttackConfig")
        .def(py::init<>())
        .def_readwrite("epsilon", &AttackConfig::epsilon)
        .def_readwrite("kappa", &AttackConfig::kappa)
        .def_readwrite("alpha", &AttackConfig::alpha)
        .def_readwrite("iterations", &AttackConfig::iterations)
        .def_readwrite("step_size", &AttackConfig::step_size)
        .def_readwrite("box01", &AttackConfig::box01)
        .def_readwrite("restrict_to", &AttackConfig::restrict_to)
        .def_readwrite("single_label_mode", &AttackConfig::single_label_mode)
        .def_readwrite("record_iterates", &AttackConfig::record_iterates)
        .def_readwrite("seed", &AttackConfig::seed);

    py::class_<ClassPartition>(m, "ClassPartition")
        .def(py::init([](std::vector<int> pos, std::vector<int> neg) {
                 return ClassPartition{std::move(pos), std::move(neg)};
             }),
             py::arg("positives"), py::arg("negatives"))
        .def_readonly("positives", &ClassPartition::positives)
        .def_readonly("negatives", &ClassPartition::negatives);

    py::class_<AttackTraceEntry>(m, "AttackTraceEntry")
        .def_readonly("iteration", &AttackTraceEntry::iteration)
        .def_readonly("objective", &AttackTraceEntry::objective)
        .def_readonly("constraint_loss", &AttackTraceEntry::constraint_loss)
        .def_readonly("p", &AttackTraceEntry::p)
        .def_readonly("n", &AttackTraceEntry::n)
        .def_readonly("l2", &AttackTraceEntry::l2);

    py::class_<AttackResult>(m, "AttackResult")
        .def_readonly("x_star", &AttackResult::x_star)
        .def_readonly("trace", &AttackResult::trace)
        .def_readonly("iterates", &AttackResult::iterates)
        .def_readonly("prediction_changed", &AttackResult::prediction_changed)
        .def_readonly("rejection_evaded", &AttackResult::rejection_evaded)
        .def_readonly("final_l2", &AttackResult::final_l2)
        .def_readonly("best_objective", &AttackResult::best_objective)
        .def_readonly("final_measure", &AttackResult::final_measure);

    m.def(
        "select_pn",
        [](const std::vector<double>& logits, const ClassPartition& part, double kappa,
           const std::set<int>& ep, const std::set<int>& en) {
            const PnSelection s = select_pn(logits, part, kappa, ep, en);
            return py::make_tuple(s.p, s.n);
        },
        py::arg("logits"), py::arg("partition"), py::arg("kappa"),
        py::arg("exhausted_p") = std::set<int>{}, py::arg("exhausted_n") = std::set<int>{});
    m.def("attack_objective", &attack_objective, py::arg("logits"), py::arg("p"), py::arg("n"),
          py::arg("kappa"), py::arg("alpha"), py::arg("constraint_loss_value"));
    m.def("project_l2", &project_l2, py::arg("origin"), py::arg("candidate"),
          py::arg("epsilon"), py::arg("box01") = false);
    m.def(
        "mka",
        [](const Model& model, const std::vector<double>& x, const ClassPartition& part,
           const std::shared_ptr<CompiledKnowledge>& ck, const AttackConfig& cfg,
           const RejectionRule* rule) { return mka(model, x, part, *ck, cfg, rule); },
        py::arg("model"), py::arg("x"), py::arg("partition"), py::arg("knowledge"),
        py::arg("config"), py::arg("rule") = nullptr);
    m.def(
        "transfer_attack",
        [](const Model& surrogate, const Model& target, const std::vector<double>& x,
           const ClassPartition& part, const std::shared_ptr<CompiledKnowledge>& ck, const AttackConfig& cfg,
           const RejectionRule* rule) {
            return transfer_attack(surrogate, target, x, part, *ck, cfg, rule);
        },
        py::arg("surrogate"), py::arg("target"), py::arg("x"), py::arg("partition"),
        py::arg("knowledge"), py::arg("config"), py::arg("rule") = nullptr);

    // ---------------- harness ----------------
    py::class_<ToyComponent>(m, "ToyComponent")
        .def(py::init<>())
        .def_readwrite("mean", &ToyComponent::mean)
        .def_readwrite("cov", &ToyComponent::cov)
        .def_readwrite("count", &ToyComponent::count)
        .def_readwrite("positive_classes", &ToyComponent::positive_classes);

    py::class_<ToyConfig>(m, "ToyConfig")
        .def(py::init<>())
        .def_readwrite("class_names", &ToyConfig::class_names)
        .def_readwrite("components", &ToyConfig::components)
        .def_readwrite("val_fraction", &ToyConfig::val_fraction)
        .def_readwrite("test_fraction", &ToyConfig::test_fraction)
        .def_readwrite("unlabeled_fraction", &ToyConfig::unlabeled_fraction)
        .def_readwrite("partial_fraction", &ToyConfig::partial_fraction)
        .def_readwrite("clip_box", &ToyConfig::clip_box)
        .def_readwrite("seed", &ToyConfig::seed);

    py::class_<ToySplits>(m, "ToySplits")
        .def_readonly("train", &ToySplits::train)
        .def_readonly("validation", &ToySplits::validation)
        .def_readonly("test", &ToySplits::test);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("epsilon", &EvalReport::epsilon)
        .def_readonly("macro_f1", &EvalReport::macro_f1)
        .def_readonly("acc_main", &EvalReport::acc_main)
        .def_readonly("quality_with_rejection", &EvalReport::quality_with_rejection)
        .def_readonly("reject_rate_clean", &EvalReport::reject_rate_clean)
        .def_readonly("reject_rate_adversarial", &EvalReport::reject_rate_adversarial)
        .def_readonly("mean_measure_clean", &EvalReport::mean_measure_clean)
        .def_readonly("mean_measure_adversarial", &EvalReport::mean_measure_adversarial)
        .def_readonly("pairing", &EvalReport::pairing);

    m.def("default_toy_config", &default_toy_config);
    m.def("gen_toy", &gen_toy, py::arg("config"));
    m.def("macro_f1", &macro_f1, py::arg("model"), py::arg("dataset"),
          py::arg("threshold") = 0.5);
    m.def("acc_main", &acc_main, py::arg("model"), py::arg("dataset"),
          py::arg("main_classes"));
    m.def("classification_quality", &classification_quality, py::arg("model"), py::arg("rule"),
          py::arg("clean"), py::arg("adversarial"), py::arg("epsilon"));
    m.def(
        "attack_dataset",
        [](const Model& model, const Model* surrogate, const Dataset& data,
           const std::shared_ptr<CompiledKnowledge>& ck, const AttackConfig& cfg, const RejectionRule* rule) {
            return attack_dataset(model, surrogate, data, *ck, cfg, rule);
        },
        py::arg("model"), py::arg("surrogate"), py::arg("data"), py::arg("knowledge"),
        py::arg("config"), py::arg("rule") = nullptr);

    py::class_<AttackRun>(m, "AttackRun")
        .def_readonly("adversarial", &AttackRun::adversarial)
        .def_readonly("results", &AttackRun::results);
}
