#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tnshield/errors.hpp"

namespace tnshield {

/// AST of a monadic first-order sentence over class predicates. The universal
/// quantifier over the single variable is implicit on every top-level formula.
class Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

class Formula {
public:
    enum class Kind { Pred, Not, And, Or, Implies };

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }  // Pred only
    const FormulaPtr& left() const { return left_; }   // Not uses left
    const FormulaPtr& right() const { return right_; }

    static FormulaPtr pred(std::string name);
    static FormulaPtr negation(FormulaPtr child);
    static FormulaPtr conjunction(FormulaPtr l, FormulaPtr r);
    static FormulaPtr disjunction(FormulaPtr l, FormulaPtr r);
    static FormulaPtr implication(FormulaPtr premise, FormulaPtr conclusion);

private:
    Kind kind_;
    std::string name_;
    FormulaPtr left_, right_;
    Formula(Kind k, std::string n, FormulaPtr l, FormulaPtr r)
        : kind_(k), name_(std::move(n)), left_(std::move(l)), right_(std::move(r)) {}
};

bool structurally_equal(const Formula& a, const Formula& b);

/// Renders a formula in the knowledge-file grammar ("forall x: ..." omitted).
/// Re-parsing the result yields a structurally identical AST.
std::string to_string(const Formula& f);

/// Collects the distinct predicate names, ordered by first occurrence.
std::vector<std::string> predicate_names(const Formula& f);

/// Classical two-valued semantics with material implication. Test oracle for
/// the T-norm compilation.
bool boolean_eval(const Formula& f, const std::map<std::string, bool>& assignment);

struct WeightedFormula {
    FormulaPtr formula;
    double weight_train = 1.0;  // importance at training time
    double weight_test = 1.0;   // importance when measuring fulfillment
    int source_line = 0;
};

class KnowledgeBase {
public:
    explicit KnowledgeBase(std::vector<WeightedFormula> formulas);

    const std::vector<WeightedFormula>& formulas() const { return formulas_; }
    std::size_t size() const { return formulas_.size(); }

    // Recomputed sums of the per-formula weights, never cached.
    double gamma_train() const;
    double gamma_test() const;

    /// Distinct predicate names over all formulas, ordered by first occurrence.
    std::vector<std::string> predicate_names() const;

private:
    std::vector<WeightedFormula> formulas_;
};

enum class MutualExclusionEncoding { TruthTable, Pairwise };

/// TruthTable: single disjunction of the exactly-one-true configurations.
/// Pairwise: disjunction of all classes plus one implication per class that
/// forbids the others.
std::vector<FormulaPtr> expand_mutual_exclusion(const std::vector<std::string>& classes,
                                                MutualExclusionEncoding encoding);

/// Parses one formula; accepts an optional leading "forall x:" prefix.
/// Precedence not > and > or > "=>", with "=>" right-associative.
FormulaPtr parse_formula(const std::string& text);

/// Parses a line-oriented knowledge file. '#' starts a comment, blank lines
/// are skipped, "w=<train>[,<test>] :" prefixes set per-formula weights and
/// "@mutual_excl_encoding truthtable|pairwise" switches the macro encoding
/// for subsequent lines (default pairwise).
KnowledgeBase parse_knowledge_file(const std::string& text);
KnowledgeBase parse_knowledge_path(const std::string& path);

/// Knowledge bound to the output layout of a classifier: every predicate is
/// assigned the index of a class name, and the classes are partitioned into
/// user-visible main classes and internal auxiliary classes.
struct BoundKnowledge {
    KnowledgeBase base;
    std::vector<std::string> class_names;    // position defines the output index
    std::map<std::string, int> index_of;     // predicate name -> output index
    int class_count = 0;
    std::vector<int> main_classes;           // ordered, disjoint from auxiliary
    std::vector<int> auxiliary_classes;
};

BoundKnowledge bind_predicates(const KnowledgeBase& base,
                               const std::vector<std::string>& class_names,
                               int main_count);
BoundKnowledge bind_predicates(const KnowledgeBase& base,
                               const std::vector<std::string>& class_names,
                               const std::vector<std::string>& main_names);

}  // namespace tnshield
