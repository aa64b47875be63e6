#include <doctest.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tnshield/knowledge.hpp"

using namespace tnshield;

namespace {

FormulaPtr P(const char* name) { return Formula::pred(name); }

const char* kToyKnowledge =
    "forall x: CAT(x) => ANIMAL(x)\n"
    "forall x: MOTORBIKE(x) => VEHICLE(x)\n"
    "forall x: VEHICLE(x) => not ANIMAL(x)\n"
    "forall x: CAT(x) or ANIMAL(x) or MOTORBIKE(x) or VEHICLE(x)\n";

// Random formula generator for the round-trip property.
FormulaPtr random_formula(std::mt19937_64& rng, int depth) {
    static const std::vector<std::string> names = {"A", "B", "C", "D", "E", "F"};
    std::uniform_int_distribution<int> kind(0, depth <= 0 ? 0 : 4);
    switch (kind(rng)) {
        case 0: {
            std::uniform_int_distribution<std::size_t> pick(0, names.size() - 1);
            return Formula::pred(names[pick(rng)]);
        }
        case 1: return Formula::negation(random_formula(rng, depth - 1));
        case 2:
            return Formula::conjunction(random_formula(rng, depth - 1),
                                        random_formula(rng, depth - 1));
        case 3:
            return Formula::disjunction(random_formula(rng, depth - 1),
                                        random_formula(rng, depth - 1));
        default:
            return Formula::implication(random_formula(rng, depth - 1),
                                        random_formula(rng, depth - 1));
    }
}

}  // namespace

TEST_CASE("parse_formula builds the expected ASTs") {
    auto f = parse_formula("forall x: CAT(x) => ANIMAL(x)");
    CHECK(structurally_equal(*f, *Formula::implication(P("CAT"), P("ANIMAL"))));

    auto g = parse_formula("not A(x)");
    CHECK(structurally_equal(*g, *Formula::negation(P("A"))));

    // precedence: not > and > or > "=>"
    auto h = parse_formula("A(x) and B(x) or C(x) => D(x)");
    auto expected = Formula::implication(
        Formula::disjunction(Formula::conjunction(P("A"), P("B")), P("C")), P("D"));
    CHECK(structurally_equal(*h, *expected));

    // "=>" is right-associative
    auto i = parse_formula("A(x) => B(x) => C(x)");
    CHECK(structurally_equal(
        *i, *Formula::implication(P("A"), Formula::implication(P("B"), P("C")))));

    // parentheses override precedence
    auto j = parse_formula("A(x) and (B(x) or C(x))");
    CHECK(structurally_equal(
        *j, *Formula::conjunction(P("A"), Formula::disjunction(P("B"), P("C")))));
}

TEST_CASE("parse_formula reports errors with position") {
    CHECK_THROWS_AS(parse_formula("A(x) =>"), SyntaxError);
    CHECK_THROWS_AS(parse_formula("A(x) B(x)"), SyntaxError);
    CHECK_THROWS_AS(parse_formula("A(x) %"), UnknownTokenError);
    CHECK_THROWS_AS(parse_formula("forall x: A(y)"), SyntaxError);  // variable mismatch
    CHECK_THROWS_AS(parse_formula("A(x) and"), SyntaxError);
    try {
        parse_formula("A(x) and and B(x)");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line == 1);
        CHECK(e.column > 1);
    }
}

TEST_CASE("parse_knowledge_file on the four toy formulas") {
    KnowledgeBase kb = parse_knowledge_file(kToyKnowledge);
    REQUIRE(kb.size() == 4);
    CHECK(kb.gamma_train() == doctest::Approx(4.0));
    CHECK(kb.gamma_test() == doctest::Approx(4.0));
    CHECK(kb.formulas()[0].source_line == 1);
    CHECK(kb.formulas()[3].source_line == 4);
    CHECK(kb.predicate_names() ==
          std::vector<std::string>{"CAT", "ANIMAL", "MOTORBIKE", "VEHICLE"});
}

TEST_CASE("parse_knowledge_file handles comments, blanks and weights") {
    KnowledgeBase kb = parse_knowledge_file(
        "# header comment\n"
        "\n"
        "w=2.5 : A(x) => B(x)   # trailing comment\n"
        "w=3,0.5 : B(x)\n");
    REQUIRE(kb.size() == 2);
    CHECK(kb.formulas()[0].weight_train == doctest::Approx(2.5));
    CHECK(kb.formulas()[0].weight_test == doctest::Approx(2.5));
    CHECK(kb.formulas()[1].weight_train == doctest::Approx(3.0));
    CHECK(kb.formulas()[1].weight_test == doctest::Approx(0.5));
    CHECK(kb.gamma_train() == doctest::Approx(5.5));
    CHECK(kb.gamma_test() == doctest::Approx(3.0));
}

TEST_CASE("parse_knowledge_file error paths") {
    CHECK_THROWS_AS(parse_knowledge_file(""), EmptyKnowledgeError);
    CHECK_THROWS_AS(parse_knowledge_file("# only a comment\n\n"), EmptyKnowledgeError);
    CHECK_THROWS_AS(parse_knowledge_file("w=1 : w=2 : A(x)\n"), DuplicateDirectiveError);
    CHECK_THROWS_AS(parse_knowledge_file("w=0 : A(x)\n"), SyntaxError);
    CHECK_THROWS_AS(parse_knowledge_file("@mutual_excl_encoding sometimes\nA(x)\n"), SyntaxError);
    try {
        parse_knowledge_file("A(x)\nB(x) => => C(x)\n");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("mutual exclusion line expands with the line weight") {
    KnowledgeBase kb = parse_knowledge_file("w=10 : forall x: mutual_excl(A,B) \n");
    // pairwise default: disjunction + one implication per class
    REQUIRE(kb.size() == 3);
    for (const auto& wf : kb.formulas()) {
        CHECK(wf.weight_train == doctest::Approx(10.0));
        CHECK(wf.source_line == 1);
    }
    CHECK(to_string(*kb.formulas()[0].formula) == "A(x) or B(x)");
    CHECK(to_string(*kb.formulas()[1].formula) == "A(x) => not B(x)");

    KnowledgeBase tt = parse_knowledge_file(
        "@mutual_excl_encoding truthtable\n"
        "mutual_excl(A,B)\n");
    REQUIRE(tt.size() == 1);
    CHECK(to_string(*tt.formulas()[0].formula) == "A(x) and not B(x) or B(x) and not A(x)");
}

TEST_CASE("expand_mutual_exclusion shapes and errors") {
    auto tt = expand_mutual_exclusion({"A", "B"}, MutualExclusionEncoding::TruthTable);
    REQUIRE(tt.size() == 1);
    auto expected = Formula::disjunction(
        Formula::conjunction(P("A"), Formula::negation(P("B"))),
        Formula::conjunction(P("B"), Formula::negation(P("A"))));
    CHECK(structurally_equal(*tt[0], *expected));

    auto pw = expand_mutual_exclusion({"A", "B", "C"}, MutualExclusionEncoding::Pairwise);
    CHECK(pw.size() == 4);

    CHECK_THROWS_AS(expand_mutual_exclusion({"A", "A"}, MutualExclusionEncoding::TruthTable),
                    DuplicateClassError);
    CHECK_THROWS_AS(expand_mutual_exclusion({"A", "A"}, MutualExclusionEncoding::Pairwise),
                    DuplicateClassError);
    CHECK_THROWS_AS(expand_mutual_exclusion({"A"}, MutualExclusionEncoding::TruthTable),
                    ArityError);
}

TEST_CASE("expansion soundness: encodings mean exactly-one for n <= 4") {
    static const std::vector<std::string> pool = {"A", "B", "C", "D"};
    for (int n = 2; n <= 4; ++n) {
        std::vector<std::string> classes(pool.begin(), pool.begin() + n);
        auto tt = expand_mutual_exclusion(classes, MutualExclusionEncoding::TruthTable);
        auto pw = expand_mutual_exclusion(classes, MutualExclusionEncoding::Pairwise);
        for (int mask = 0; mask < (1 << n); ++mask) {
            std::map<std::string, bool> assignment;
            int ones = 0;
            for (int i = 0; i < n; ++i) {
                const bool v = (mask >> i) & 1;
                assignment[classes[i]] = v;
                ones += v;
            }
            const bool exactly_one = ones == 1;
            CHECK(boolean_eval(*tt[0], assignment) == exactly_one);
            bool all = true;
            for (const auto& f : pw) all = all && boolean_eval(*f, assignment);
            CHECK(all == exactly_one);
        }
    }
}

TEST_CASE("boolean_eval implements material implication") {
    auto imp = Formula::implication(P("CAT"), P("ANIMAL"));
    CHECK(boolean_eval(*imp, {{"CAT", true}, {"ANIMAL", false}}) == false);
    CHECK(boolean_eval(*imp, {{"CAT", false}, {"ANIMAL", false}}) == true);
    CHECK(boolean_eval(*imp, {{"CAT", true}, {"ANIMAL", true}}) == true);

    KnowledgeBase kb = parse_knowledge_file(kToyKnowledge);
    std::map<std::string, bool> all_false{
        {"CAT", false}, {"ANIMAL", false}, {"MOTORBIKE", false}, {"VEHICLE", false}};
    CHECK(boolean_eval(*kb.formulas()[3].formula, all_false) == false);

    CHECK_THROWS_AS(boolean_eval(*imp, {{"CAT", true}}), MissingAssignmentError);
}

TEST_CASE("bind_predicates maps names to indices") {
    KnowledgeBase kb = parse_knowledge_file(kToyKnowledge);
    const std::vector<std::string> names{"CAT", "ANIMAL", "MOTORBIKE", "VEHICLE"};
    BoundKnowledge bound = bind_predicates(kb, names, 4);
    CHECK(bound.class_count == 4);
    CHECK(bound.index_of.at("VEHICLE") == 3);
    CHECK(bound.main_classes == std::vector<int>{0, 1, 2, 3});
    CHECK(bound.auxiliary_classes.empty());

    BoundKnowledge two = bind_predicates(kb, names, std::vector<std::string>{"CAT", "MOTORBIKE"});
    CHECK(two.main_classes == std::vector<int>{0, 2});
    CHECK(two.auxiliary_classes == std::vector<int>{1, 3});

    KnowledgeBase zebra = parse_knowledge_file("ZEBRA(x) => ANIMAL(x)\n");
    CHECK_THROWS_AS(bind_predicates(zebra, {"ANIMAL"}, 1), UnboundPredicateError);
    try {
        bind_predicates(zebra, {"ANIMAL"}, 1);
    } catch (const UnboundPredicateError& e) {
        CHECK(std::string(e.what()).find("ZEBRA") != std::string::npos);
    }
}

TEST_CASE("binding totality: every leaf resolves to a valid index") {
    KnowledgeBase kb = parse_knowledge_file(kToyKnowledge);
    BoundKnowledge bound =
        bind_predicates(kb, {"CAT", "ANIMAL", "MOTORBIKE", "VEHICLE"}, 4);
    for (const auto& wf : kb.formulas())
        for (const auto& name : predicate_names(*wf.formula)) {
            REQUIRE(bound.index_of.count(name) == 1);
            CHECK(bound.index_of.at(name) < bound.class_count);
            CHECK(bound.index_of.at(name) >= 0);
        }
}

TEST_CASE("shipped animals knowledge binds against the 33-class layout") {
    KnowledgeBase kb = parse_knowledge_path(TNSHIELD_SOURCE_DIR "/knowledge/animals.kb");
    CHECK(kb.size() == 18);  // 16 rules + mutual exclusion + attribute disjunction
    CHECK(kb.gamma_train() == doctest::Approx(27.0));

    std::vector<std::string> names;
    {
        std::ifstream in(TNSHIELD_SOURCE_DIR "/knowledge/animals.classes");
        REQUIRE(in.good());
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::istringstream ss(line);
            std::string word;
            if (ss >> word) names.push_back(word);
        }
    }
    REQUIRE(names.size() == 33);
    BoundKnowledge bound = bind_predicates(kb, names, 7);
    CHECK(bound.class_count == 33);
    CHECK(bound.main_classes.size() == 7);
    CHECK(bound.auxiliary_classes.size() == 26);
}

TEST_CASE("round-trip: pretty-print then re-parse is structurally identical") {
    std::mt19937_64 rng(20240811);
    for (int i = 0; i < 1000; ++i) {
        FormulaPtr f = random_formula(rng, 6);
        FormulaPtr g = parse_formula(to_string(*f));
        CHECK(structurally_equal(*f, *g));
    }
}
