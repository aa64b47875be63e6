#include "tnshield/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tnshield {

FormulaPtr Formula::pred(std::string name) {
    return FormulaPtr(new Formula(Kind::Pred, std::move(name), nullptr, nullptr));
}
FormulaPtr Formula::negation(FormulaPtr child) {
    return FormulaPtr(new Formula(Kind::Not, {}, std::move(child), nullptr));
}
FormulaPtr Formula::conjunction(FormulaPtr l, FormulaPtr r) {
    return FormulaPtr(new Formula(Kind::And, {}, std::move(l), std::move(r)));
}
FormulaPtr Formula::disjunction(FormulaPtr l, FormulaPtr r) {
    return FormulaPtr(new Formula(Kind::Or, {}, std::move(l), std::move(r)));
}
FormulaPtr Formula::implication(FormulaPtr premise, FormulaPtr conclusion) {
    return FormulaPtr(new Formula(Kind::Implies, {}, std::move(premise), std::move(conclusion)));
}

bool structurally_equal(const Formula& a, const Formula& b) {
    if (a.kind() != b.kind()) return false;
    switch (a.kind()) {
        case Formula::Kind::Pred:
            return a.name() == b.name();
        case Formula::Kind::Not:
            return structurally_equal(*a.left(), *b.left());
        default:
            return structurally_equal(*a.left(), *b.left()) &&
                   structurally_equal(*a.right(), *b.right());
    }
}

namespace {

int precedence(Formula::Kind k) {
    switch (k) {
        case Formula::Kind::Implies: return 0;
        case Formula::Kind::Or: return 1;
        case Formula::Kind::And: return 2;
        case Formula::Kind::Not: return 3;
        case Formula::Kind::Pred: return 4;
    }
    return 4;
}

void render(const Formula& f, int min_prec, std::string& out) {
    const bool parens = precedence(f.kind()) < min_prec;
    if (parens) out += '(';
    switch (f.kind()) {
        case Formula::Kind::Pred:
            out += f.name();
            out += "(x)";
            break;
        case Formula::Kind::Not:
            out += "not ";
            render(*f.left(), 3, out);
            break;
        case Formula::Kind::And:
            render(*f.left(), 2, out);
            out += " and ";
            render(*f.right(), 3, out);
            break;
        case Formula::Kind::Or:
            render(*f.left(), 1, out);
            out += " or ";
            render(*f.right(), 2, out);
            break;
        case Formula::Kind::Implies:
            render(*f.left(), 1, out);
            out += " => ";
            render(*f.right(), 0, out);
            break;
    }
    if (parens) out += ')';
}

void collect_names(const Formula& f, std::vector<std::string>& out, std::set<std::string>& seen) {
    if (f.kind() == Formula::Kind::Pred) {
        if (seen.insert(f.name()).second) out.push_back(f.name());
        return;
    }
    collect_names(*f.left(), out, seen);
    if (f.right()) collect_names(*f.right(), out, seen);
}

}  // namespace

std::string to_string(const Formula& f) {
    std::string out;
    render(f, 0, out);
    return out;
}

std::vector<std::string> predicate_names(const Formula& f) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    collect_names(f, out, seen);
    return out;
}

bool boolean_eval(const Formula& f, const std::map<std::string, bool>& assignment) {
    switch (f.kind()) {
        case Formula::Kind::Pred: {
            auto it = assignment.find(f.name());
            if (it == assignment.end())
                throw MissingAssignmentError("no truth value for predicate " + f.name());
            return it->second;
        }
        case Formula::Kind::Not:
            return !boolean_eval(*f.left(), assignment);
        case Formula::Kind::And:
            return boolean_eval(*f.left(), assignment) && boolean_eval(*f.right(), assignment);
        case Formula::Kind::Or:
            return boolean_eval(*f.left(), assignment) || boolean_eval(*f.right(), assignment);
        case Formula::Kind::Implies:
            return !boolean_eval(*f.left(), assignment) || boolean_eval(*f.right(), assignment);
    }
    throw Error("unreachable formula kind");
}

KnowledgeBase::KnowledgeBase(std::vector<WeightedFormula> formulas)
    : formulas_(std::move(formulas)) {
    if (formulas_.empty()) throw EmptyKnowledgeError("knowledge base must contain at least one formula");
    for (const auto& wf : formulas_) {
        if (!(wf.weight_train > 0.0) || !(wf.weight_test > 0.0))
            throw Error("formula weights must be strictly positive");
    }
}

double KnowledgeBase::gamma_train() const {
    double g = 0.0;
    for (const auto& wf : formulas_) g += wf.weight_train;
    return g;
}

double KnowledgeBase::gamma_test() const {
    double g = 0.0;
    for (const auto& wf : formulas_) g += wf.weight_test;
    return g;
}

std::vector<std::string> KnowledgeBase::predicate_names() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& wf : formulas_) collect_names(*wf.formula, out, seen);
    return out;
}

std::vector<FormulaPtr> expand_mutual_exclusion(const std::vector<std::string>& classes,
                                                MutualExclusionEncoding encoding) {
    if (classes.size() < 2)
        throw ArityError("mutual_excl needs at least 2 classes, got " +
                         std::to_string(classes.size()));
    std::set<std::string> seen;
    for (const auto& c : classes)
        if (!seen.insert(c).second) throw DuplicateClassError("repeated class " + c);

    const std::size_t n = classes.size();
    auto only_i = [&](std::size_t i) {
        // p_i and not p_j for all j != i, folded left to right
        FormulaPtr acc = Formula::pred(classes[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            acc = Formula::conjunction(acc, Formula::negation(Formula::pred(classes[j])));
        }
        return acc;
    };
    auto any_of_all = [&]() {
        FormulaPtr acc = Formula::pred(classes[0]);
        for (std::size_t i = 1; i < n; ++i)
            acc = Formula::disjunction(acc, Formula::pred(classes[i]));
        return acc;
    };

    std::vector<FormulaPtr> out;
    if (encoding == MutualExclusionEncoding::TruthTable) {
        FormulaPtr acc = only_i(0);
        for (std::size_t i = 1; i < n; ++i) acc = Formula::disjunction(acc, only_i(i));
        out.push_back(acc);
    } else {
        out.push_back(any_of_all());
        for (std::size_t i = 0; i < n; ++i) {
            FormulaPtr rest;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                FormulaPtr neg = Formula::negation(Formula::pred(classes[j]));
                rest = rest ? Formula::conjunction(rest, neg) : neg;
            }
            out.push_back(Formula::implication(Formula::pred(classes[i]), rest));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Recursive-descent parser for the knowledge grammar.
// ---------------------------------------------------------------------------

namespace {

struct Token {
    enum class Kind { Ident, Number, LParen, RParen, Comma, Colon, Arrow, Equals, End };
    Kind kind;
    std::string text;
    double number = 0.0;
    int line = 0;
    int column = 0;
};

class Lexer {
public:
    Lexer(const std::string& text, int line) : text_(text), line_(line) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            const int col = static_cast<int>(pos_) + 1;
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
                continue;
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::size_t start = pos_;
                while (pos_ < text_.size() &&
                       (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                    ++pos_;
                out.push_back({Token::Kind::Ident, text_.substr(start, pos_ - start), 0.0, line_, col});
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                ((c == '+' || c == '-') && pos_ + 1 < text_.size() &&
                 (std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) || text_[pos_ + 1] == '.'))) {
                const char* begin = text_.c_str() + pos_;
                char* end = nullptr;
                double v = std::strtod(begin, &end);
                if (end == begin) throw SyntaxError("malformed number", line_, col);
                pos_ += static_cast<std::size_t>(end - begin);
                out.push_back({Token::Kind::Number,
                               std::string(begin, static_cast<std::size_t>(end - begin)), v,
                               line_, col});
                continue;
            }
            switch (c) {
                case '(': out.push_back({Token::Kind::LParen, "(", 0.0, line_, col}); ++pos_; continue;
                case ')': out.push_back({Token::Kind::RParen, ")", 0.0, line_, col}); ++pos_; continue;
                case ',': out.push_back({Token::Kind::Comma, ",", 0.0, line_, col}); ++pos_; continue;
                case ':': out.push_back({Token::Kind::Colon, ":", 0.0, line_, col}); ++pos_; continue;
                case '=':
                    if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
                        out.push_back({Token::Kind::Arrow, "=>", 0.0, line_, col});
                        pos_ += 2;
                    } else {
                        out.push_back({Token::Kind::Equals, "=", 0.0, line_, col});
                        ++pos_;
                    }
                    continue;
                default:
                    throw UnknownTokenError(std::string(1, c), line_, col);
            }
        }
        out.push_back({Token::Kind::End, "", 0.0, line_, static_cast<int>(text_.size()) + 1});
        return out;
    }

private:
    const std::string& text_;
    int line_;
    std::size_t pos_ = 0;
};

bool is_keyword(const std::string& s) {
    return s == "forall" || s == "not" || s == "and" || s == "or" || s == "mutual_excl";
}

class Parser {
public:
    Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    const Token& peek() const { return tokens_[pos_]; }
    const Token& advance() { return tokens_[pos_++]; }
    bool at_end() const { return peek().kind == Token::Kind::End; }

    bool match_ident(const std::string& word) {
        if (peek().kind == Token::Kind::Ident && peek().text == word) {
            ++pos_;
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        const Token& t = peek();
        throw SyntaxError(msg + (t.text.empty() ? "" : " near '" + t.text + "'"), t.line, t.column);
    }

    void expect(Token::Kind k, const std::string& what) {
        if (peek().kind != k) fail("expected " + what);
        ++pos_;
    }

    // formula := disj [ "=>" formula ]
    FormulaPtr parse_formula_expr() {
        FormulaPtr lhs = parse_disj();
        if (peek().kind == Token::Kind::Arrow) {
            advance();
            return Formula::implication(std::move(lhs), parse_formula_expr());
        }
        return lhs;
    }

    FormulaPtr parse_disj() {
        FormulaPtr acc = parse_conj();
        while (match_ident("or")) acc = Formula::disjunction(std::move(acc), parse_conj());
        return acc;
    }

    FormulaPtr parse_conj() {
        FormulaPtr acc = parse_neg();
        while (match_ident("and")) acc = Formula::conjunction(std::move(acc), parse_neg());
        return acc;
    }

    FormulaPtr parse_neg() {
        if (match_ident("not")) return Formula::negation(parse_neg());
        return parse_atom();
    }

    FormulaPtr parse_atom() {
        if (peek().kind == Token::Kind::LParen) {
            advance();
            FormulaPtr inner = parse_formula_expr();
            expect(Token::Kind::RParen, "')'");
            return inner;
        }
        if (peek().kind != Token::Kind::Ident || is_keyword(peek().text))
            fail("expected predicate");
        std::string name = advance().text;
        expect(Token::Kind::LParen, "'(' after predicate name");
        if (peek().kind != Token::Kind::Ident) fail("expected variable");
        check_variable(advance().text);
        expect(Token::Kind::RParen, "')'");
        return Formula::pred(std::move(name));
    }

    void declare_variable(const std::string& v) { variable_ = v; }

    void check_variable(const std::string& v) {
        if (variable_.empty()) {
            variable_ = v;
            return;
        }
        if (v != variable_) {
            const Token& t = tokens_[pos_ - 1];
            throw SyntaxError("variable '" + v + "' does not match '" + variable_ + "'", t.line,
                              t.column);
        }
    }

private:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::string variable_;
};

struct ParsedLine {
    bool has_weights = false;
    double weight_train = 1.0;
    double weight_test = 1.0;
    std::vector<FormulaPtr> formulas;  // >1 when a macro expands
};

bool looks_like_weights(const Parser& p) {
    return p.peek().kind == Token::Kind::Ident && p.peek().text == "w";
}

ParsedLine parse_sentence_line(const std::string& line, int lineno,
                               MutualExclusionEncoding encoding) {
    Parser p(Lexer(line, lineno).run());
    ParsedLine out;

    if (looks_like_weights(p)) {
        p.advance();
        p.expect(Token::Kind::Equals, "'=' after w");
        if (p.peek().kind != Token::Kind::Number) p.fail("expected weight value");
        out.weight_train = out.weight_test = p.advance().number;
        if (p.peek().kind == Token::Kind::Comma) {
            p.advance();
            if (p.peek().kind != Token::Kind::Number) p.fail("expected test weight value");
            out.weight_test = p.advance().number;
        }
        p.expect(Token::Kind::Colon, "':' after weights");
        out.has_weights = true;
        if (looks_like_weights(p))
            throw DuplicateDirectiveError("line " + std::to_string(lineno) +
                                          ": two weight annotations on one formula");
        if (out.weight_train <= 0.0 || out.weight_test <= 0.0)
            throw SyntaxError("zero-weight formula; drop the line instead", lineno, 1);
    }

    if (p.match_ident("forall")) {
        if (p.peek().kind != Token::Kind::Ident) p.fail("expected variable after forall");
        p.declare_variable(p.advance().text);
        p.expect(Token::Kind::Colon, "':' after forall variable");
    }

    if (p.match_ident("mutual_excl")) {
        p.expect(Token::Kind::LParen, "'(' after mutual_excl");
        std::vector<std::string> classes;
        while (true) {
            if (p.peek().kind != Token::Kind::Ident || is_keyword(p.peek().text))
                p.fail("expected class name");
            classes.push_back(p.advance().text);
            if (p.peek().kind == Token::Kind::Comma) {
                p.advance();
                continue;
            }
            break;
        }
        p.expect(Token::Kind::RParen, "')'");
        out.formulas = expand_mutual_exclusion(classes, encoding);
    } else {
        out.formulas.push_back(p.parse_formula_expr());
    }
    if (!p.at_end()) p.fail("unexpected trailing input");
    return out;
}

std::string strip_comment(const std::string& line) {
    auto pos = line.find('#');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

FormulaPtr parse_formula(const std::string& text) {
    ParsedLine parsed = parse_sentence_line(text, 1, MutualExclusionEncoding::Pairwise);
    if (parsed.formulas.size() != 1)
        throw SyntaxError("expected a single formula", 1, 1);
    return parsed.formulas.front();
}

KnowledgeBase parse_knowledge_file(const std::string& text) {
    std::vector<WeightedFormula> formulas;
    MutualExclusionEncoding encoding = MutualExclusionEncoding::Pairwise;

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_comment(raw);
        if (is_blank(line)) continue;

        auto first = line.find_first_not_of(" \t\r");
        if (line[first] == '@') {
            std::istringstream dir(line.substr(first + 1));
            std::string key, value;
            dir >> key >> value;
            if (key != "mutual_excl_encoding")
                throw SyntaxError("unknown directive @" + key, lineno, static_cast<int>(first) + 1);
            if (value == "truthtable")
                encoding = MutualExclusionEncoding::TruthTable;
            else if (value == "pairwise")
                encoding = MutualExclusionEncoding::Pairwise;
            else
                throw SyntaxError("bad encoding '" + value + "' (truthtable|pairwise)", lineno,
                                  static_cast<int>(first) + 1);
            continue;
        }

        ParsedLine parsed = parse_sentence_line(line, lineno, encoding);
        for (auto& f : parsed.formulas)
            formulas.push_back({std::move(f), parsed.weight_train, parsed.weight_test, lineno});
    }
    if (formulas.empty()) throw EmptyKnowledgeError("knowledge file contains no formulas");
    return KnowledgeBase(std::move(formulas));
}

KnowledgeBase parse_knowledge_path(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open knowledge file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_knowledge_file(buf.str());
}

namespace {

BoundKnowledge bind_common(const KnowledgeBase& base, const std::vector<std::string>& class_names) {
    BoundKnowledge bound{base, class_names, {}, static_cast<int>(class_names.size()), {}, {}};
    for (int i = 0; i < bound.class_count; ++i) {
        if (!bound.index_of.emplace(class_names[i], i).second)
            throw DuplicateClassError("class name " + class_names[i] + " listed twice");
    }
    std::vector<std::string> missing;
    for (const auto& name : base.predicate_names())
        if (!bound.index_of.count(name)) missing.push_back(name);
    if (!missing.empty()) {
        std::string msg = "unbound predicate(s):";
        for (const auto& m : missing) msg += " " + m;
        throw UnboundPredicateError(msg);
    }
    return bound;
}

}  // namespace

BoundKnowledge bind_predicates(const KnowledgeBase& base,
                               const std::vector<std::string>& class_names, int main_count) {
    if (main_count < 0 || main_count > static_cast<int>(class_names.size()))
        throw Error("main class count out of range");
    BoundKnowledge bound = bind_common(base, class_names);
    for (int i = 0; i < bound.class_count; ++i)
        (i < main_count ? bound.main_classes : bound.auxiliary_classes).push_back(i);
    return bound;
}

BoundKnowledge bind_predicates(const KnowledgeBase& base,
                               const std::vector<std::string>& class_names,
                               const std::vector<std::string>& main_names) {
    BoundKnowledge bound = bind_common(base, class_names);
    std::set<int> main_set;
    for (const auto& name : main_names) {
        auto it = bound.index_of.find(name);
        if (it == bound.index_of.end()) throw Error("unknown main class " + name);
        if (!main_set.insert(it->second).second)
            throw DuplicateClassError("main class " + name + " listed twice");
        bound.main_classes.push_back(it->second);
    }
    for (int i = 0; i < bound.class_count; ++i)
        if (!main_set.count(i)) bound.auxiliary_classes.push_back(i);
    return bound;
}

}  // namespace tnshield
