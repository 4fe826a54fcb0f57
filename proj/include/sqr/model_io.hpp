#pragma once

#include <fstream>
#include <string>
#include <variant>

#include <json.hpp>

#include "sqr/baselines.hpp"
#include "sqr/expr.hpp"
#include "sqr/parser.hpp"

namespace sqr {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A fitted symbolic model: expression plus the feature-name sidecar.
struct ExpressionModel {
    Expr expr;
    std::vector<std::string> feature_names;
    double tau = 0.5;

    int parsimony_score(const ComplexityTable& table = {}) const {
        return parsimony(expr, table);
    }

    std::vector<double> predict(const Matrix& X) const {
        if (max_feature_index(expr) >= static_cast<int>(X.cols()))
            throw ModelError("ExpressionModel::predict: arity mismatch");
        return evaluate(expr, X);
    }
};

using Model = std::variant<ExpressionModel, LinearQuantileModel, QuantileTreeModel>;

inline std::vector<double> predict(const Model& model, const Matrix& X) {
    return std::visit([&](const auto& m) { return m.predict(X); }, model);
}

/// Parsimony of a fitted model; -1 for models without one.
inline int model_parsimony(const Model& model) {
    if (const auto* e = std::get_if<ExpressionModel>(&model)) return e->parsimony_score();
    if (const auto* l = std::get_if<LinearQuantileModel>(&model)) return l->parsimony();
    return std::get<QuantileTreeModel>(model).parsimony();
}

// ---------------------------------------------------------------------------
// JSON (de)serialization.

namespace detail {

inline nlohmann::ordered_json tree_to_json(const std::vector<QdtNode>& nodes, int i) {
    nlohmann::ordered_json j;
    const QdtNode& n = nodes[i];
    if (n.leaf) {
        j["value"] = n.value;
    } else {
        j["feature"] = n.feature;
        j["threshold"] = n.threshold;
        j["left"] = tree_to_json(nodes, n.left);
        j["right"] = tree_to_json(nodes, n.right);
    }
    return j;
}

inline int tree_from_json(const nlohmann::json& j, std::vector<QdtNode>& nodes) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (j.contains("value")) {
        nodes[id].leaf = true;
        nodes[id].value = j.at("value").get<double>();
    } else {
        nodes[id].leaf = false;
        nodes[id].feature = j.at("feature").get<int>();
        nodes[id].threshold = j.at("threshold").get<double>();
        nodes[id].left = tree_from_json(j.at("left"), nodes);
        nodes[id].right = tree_from_json(j.at("right"), nodes);
    }
    return id;
}

} // namespace detail

inline nlohmann::ordered_json model_to_json(const Model& model) {
    nlohmann::ordered_json j;
    if (const auto* e = std::get_if<ExpressionModel>(&model)) {
        j["type"] = "expression";
        j["tau"] = e->tau;
        j["features"] = e->feature_names;
        j["expression"] = format(e->expr, &e->feature_names);
        j["complexity"] = e->parsimony_score();
    } else if (const auto* l = std::get_if<LinearQuantileModel>(&model)) {
        j["type"] = "linear_quantile";
        j["tau"] = l->tau;
        j["intercept"] = l->intercept;
        j["coefficients"] = l->coefficients;
        j["rank_deficient"] = l->rank_deficient;
    } else {
        const auto& t = std::get<QuantileTreeModel>(model);
        j["type"] = "quantile_tree";
        j["tau"] = t.tau;
        j["min_samples_leaf"] = t.min_samples_leaf;
        j["arity"] = t.arity;
        j["tree"] = detail::tree_to_json(t.nodes, 0);
    }
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "expression") {
        ExpressionModel m;
        m.tau = j.value("tau", 0.5);
        m.feature_names = j.at("features").get<std::vector<std::string>>();
        NameMap names;
        for (std::size_t i = 0; i < m.feature_names.size(); ++i)
            names[m.feature_names[i]] = static_cast<int>(i);
        m.expr = parse(j.at("expression").get<std::string>(), &names);
        return m;
    }
    if (type == "linear_quantile") {
        LinearQuantileModel m;
        m.tau = j.value("tau", 0.5);
        m.intercept = j.at("intercept").get<double>();
        m.coefficients = j.at("coefficients").get<std::vector<double>>();
        m.rank_deficient = j.value("rank_deficient", false);
        return m;
    }
    if (type == "quantile_tree") {
        QuantileTreeModel m;
        m.tau = j.value("tau", 0.5);
        m.min_samples_leaf = j.value("min_samples_leaf", 1);
        m.arity = j.at("arity").get<std::size_t>();
        detail::tree_from_json(j.at("tree"), m.nodes);
        return m;
    }
    throw ModelError("unknown model type: " + type);
}

inline void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot write model file: " + path);
    out << model_to_json(model).dump(2) << '\n';
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("malformed model file " + path + ": " + e.what());
    } catch (const ParseError& e) {
        throw ModelError("malformed expression in " + path + ": " + e.what());
    }
}

} // namespace sqr
