#pragma once

// Versioned text artifact for trained mood models.
//
//   emma-model 1
//   category <name>
//   schema <n_users> <user>... <n_genders> <gender>...
//   axes | personalized
//   model ... end          (one per axis / deviation regressor)
//   baselines <n> (<user> <v> <a>)... global <v> <a>   (personalized only)
//   end-model
//
// Strings are JSON-quoted, doubles use the shortest round-trip form, so a
// write/read cycle reproduces the model bit for bit.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "emma/errors.hpp"
#include "emma/learning/mood_model.hpp"
#include "emma/records.hpp"

namespace emma {

inline constexpr std::string_view kModelFormat = "emma-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

class TokenWriter {
public:
    explicit TokenWriter(std::ostream& out) : out_(out) {}

    TokenWriter& word(std::string_view w) {
        sep();
        out_ << w;
        return *this;
    }
    TokenWriter& str(const std::string& s) {
        sep();
        out_ << Json(s).dump();
        return *this;
    }
    TokenWriter& num(double x) { return word(format_double(x)); }
    TokenWriter& count(std::uint64_t n) { return word(std::to_string(n)); }
    TokenWriter& line() {
        out_ << '\n';
        fresh_ = true;
        return *this;
    }

private:
    void sep() {
        if (!fresh_) out_ << ' ';
        fresh_ = false;
    }
    std::ostream& out_;
    bool fresh_ = true;
};

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string word() {
        skip_space();
        std::string w;
        int c = in_.peek();
        if (c == EOF) fail("unexpected end of model file");
        if (c == '"') {
            // Quoted string: copy through the closing quote, honoring escapes.
            w.push_back(static_cast<char>(in_.get()));
            bool escaped = false;
            while ((c = in_.get()) != EOF) {
                w.push_back(static_cast<char>(c));
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    return w;
                }
            }
            fail("unterminated string");
        }
        while ((c = in_.peek()) != EOF && !std::isspace(c)) {
            w.push_back(static_cast<char>(in_.get()));
        }
        return w;
    }

    void expect(std::string_view keyword) {
        const std::string w = word();
        if (w != keyword) fail("expected '" + std::string(keyword) + "', found '" + w + "'");
    }

    std::string str() {
        const std::string w = word();
        if (w.empty() || w.front() != '"') fail("expected a quoted string, found '" + w + "'");
        try {
            return Json::parse(w).get<std::string>();
        } catch (const Json::exception&) {
            fail("malformed string " + w);
        }
    }

    double num() {
        const std::string w = word();
        try {
            return parse_double(w);
        } catch (const DomainError&) {
            fail("expected a number, found '" + w + "'");
        }
    }

    std::uint64_t count() {
        const std::string w = word();
        std::uint64_t value = 0;
        const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), value);
        if (ec != std::errc{} || ptr != w.data() + w.size()) fail("expected a count, found '" + w + "'");
        return value;
    }

    std::size_t line() const { return line_; }

    [[noreturn]] void fail(const std::string& message) const { throw ParseError(line_, message); }

private:
    void skip_space() {
        int c;
        while ((c = in_.peek()) != EOF && std::isspace(c)) {
            if (in_.get() == '\n') ++line_;
        }
    }
    std::istream& in_;
    std::size_t line_ = 1;
};

inline void write_model_body(TokenWriter& w, const Model& m) {
    w.word("model").word(to_string(m.kind)).word(m.task == Task::classification ? "classification" : "regression");
    w.count(m.n_classes).count(m.n_features).line();
    const auto& p = m.params;
    w.word("params").count(p.n_estimators);
    if (p.max_depth) {
        w.count(*p.max_depth);
    } else {
        w.word("inf");
    }
    w.count(p.min_leaf).num(p.learning_rate).num(p.max_samples).count(p.bootstrap ? 1 : 0);
    w.count(static_cast<std::uint64_t>(p.feature_subset)).count(p.seed).line();
    w.word("trees").count(m.trees.size()).line();
    for (const auto& t : m.trees) {
        w.word("tree").count(t.n_classes).count(t.nodes.size()).line();
        for (const auto& n : t.nodes) {
            w.word("n").word(std::to_string(n.feature)).num(n.threshold);
            w.word(std::to_string(n.left)).word(std::to_string(n.right)).num(n.value);
            w.count(n.class_counts.size());
            for (const double c : n.class_counts) w.num(c);
            w.line();
        }
    }
    w.word("weights").count(m.estimator_weights.size());
    for (const double x : m.estimator_weights) w.num(x);
    w.line();
    w.word("linear").num(m.intercept).count(m.coefficients.size());
    for (const double x : m.coefficients) w.num(x);
    w.line();
    w.word("constant").num(m.constant).line();
    w.word("end").line();
}

inline std::int32_t read_index(TokenReader& r) {
    const std::string w = r.word();
    std::int32_t value = 0;
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), value);
    if (ec != std::errc{} || ptr != w.data() + w.size()) r.fail("expected a node index, found '" + w + "'");
    return value;
}

inline Model read_model_body(TokenReader& r) {
    Model m;
    r.expect("model");
    const std::string kind = r.word();
    const auto parsed = parse_model_kind(kind);
    if (!parsed) r.fail("unknown model kind '" + kind + "'");
    m.kind = *parsed;
    const std::string task = r.word();
    if (task == "classification") {
        m.task = Task::classification;
    } else if (task == "regression") {
        m.task = Task::regression;
    } else {
        r.fail("unknown task '" + task + "'");
    }
    m.n_classes = r.count();
    m.n_features = r.count();
    r.expect("params");
    auto& p = m.params;
    p.n_estimators = r.count();
    const std::string depth = r.word();
    if (depth == "inf") {
        p.max_depth.reset();
    } else {
        std::istringstream s(depth);
        TokenReader sub(s);
        p.max_depth = sub.count();
    }
    p.min_leaf = r.count();
    p.learning_rate = r.num();
    p.max_samples = r.num();
    p.bootstrap = r.count() != 0;
    const auto subset = r.count();
    if (subset > static_cast<std::uint64_t>(FeatureSubset::sqrt)) r.fail("unknown feature subset rule");
    p.feature_subset = static_cast<FeatureSubset>(subset);
    p.seed = r.count();
    r.expect("trees");
    const auto n_trees = r.count();
    for (std::uint64_t t = 0; t < n_trees; ++t) {
        Tree tree;
        tree.task = m.task;
        r.expect("tree");
        tree.n_classes = r.count();
        const auto n_nodes = r.count();
        for (std::uint64_t i = 0; i < n_nodes; ++i) {
            TreeNode node;
            r.expect("n");
            node.feature = read_index(r);
            node.threshold = r.num();
            node.left = read_index(r);
            node.right = read_index(r);
            node.value = r.num();
            const auto n_counts = r.count();
            for (std::uint64_t c = 0; c < n_counts; ++c) node.class_counts.push_back(r.num());
            if (!node.is_leaf() && (node.feature >= static_cast<std::int32_t>(m.n_features) || node.left < 0 ||
                                    node.right < 0 || static_cast<std::uint64_t>(node.left) >= n_nodes ||
                                    static_cast<std::uint64_t>(node.right) >= n_nodes)) {
                r.fail("node " + std::to_string(i) + " references out-of-range children or features");
            }
            tree.nodes.push_back(std::move(node));
        }
        if (tree.nodes.empty()) r.fail("tree without nodes");
        m.trees.push_back(std::move(tree));
    }
    r.expect("weights");
    const auto n_weights = r.count();
    for (std::uint64_t i = 0; i < n_weights; ++i) m.estimator_weights.push_back(r.num());
    r.expect("linear");
    m.intercept = r.num();
    const auto n_coef = r.count();
    for (std::uint64_t i = 0; i < n_coef; ++i) m.coefficients.push_back(r.num());
    r.expect("constant");
    m.constant = r.num();
    r.expect("end");
    return m;
}

} // namespace detail

inline void write_model(std::ostream& out, const MoodModel& model) {
    detail::TokenWriter w(out);
    w.word(kModelFormat).count(kModelFormatVersion).line();
    w.word("category").str(model.category).line();
    w.word("schema").count(model.schema.users.size());
    for (const auto& u : model.schema.users) w.str(u);
    w.count(model.schema.genders.size());
    for (const auto& g : model.schema.genders) w.str(g);
    w.line();
    if (const auto* p = std::get_if<PersonalizedModel>(&model.impl)) {
        w.word("personalized").line();
        detail::write_model_body(w, p->valence_deviation);
        detail::write_model_body(w, p->arousal_deviation);
        w.word("baselines").count(p->baselines.size()).line();
        for (const auto& [user, base] : p->baselines) {
            w.str(user).num(base.valence).num(base.arousal).line();
        }
        w.word("global").num(p->global.valence).num(p->global.arousal).line();
    } else {
        const auto& axes = std::get<AxisModels>(model.impl);
        w.word("axes").line();
        detail::write_model_body(w, axes.valence);
        detail::write_model_body(w, axes.arousal);
    }
    w.word("end-model").line();
}

inline MoodModel read_model(std::istream& in) {
    detail::TokenReader r(in);
    if (r.word() != kModelFormat) {
        r.fail("not an emma model file");
    }
    const auto version = r.count();
    if (version != kModelFormatVersion) {
        r.fail("unsupported model format version " + std::to_string(version));
    }
    MoodModel model;
    r.expect("category");
    model.category = r.str();
    r.expect("schema");
    const auto n_users = r.count();
    for (std::uint64_t i = 0; i < n_users; ++i) model.schema.users.push_back(r.str());
    const auto n_genders = r.count();
    for (std::uint64_t i = 0; i < n_genders; ++i) model.schema.genders.push_back(r.str());
    const std::string shape = r.word();
    if (shape == "personalized") {
        PersonalizedModel p;
        p.valence_deviation = detail::read_model_body(r);
        p.arousal_deviation = detail::read_model_body(r);
        r.expect("baselines");
        const auto n = r.count();
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string user = r.str();
            const double v = r.num();
            const double a = r.num();
            p.baselines[std::move(user)] = {v, a};
        }
        r.expect("global");
        p.global.valence = r.num();
        p.global.arousal = r.num();
        model.impl = std::move(p);
    } else if (shape == "axes") {
        AxisModels axes;
        axes.valence = detail::read_model_body(r);
        axes.arousal = detail::read_model_body(r);
        model.impl = std::move(axes);
    } else {
        r.fail("unknown model shape '" + shape + "'");
    }
    r.expect("end-model");
    if (model.valence_model().n_features != model.schema.width() ||
        model.arousal_model().n_features != model.schema.width()) {
        r.fail("model feature count does not match its schema");
    }
    return model;
}

inline std::string model_to_string(const MoodModel& model) {
    std::ostringstream out;
    write_model(out, model);
    return out.str();
}

inline MoodModel model_from_string(const std::string& text) {
    std::istringstream in(text);
    return read_model(in);
}

} // namespace emma
