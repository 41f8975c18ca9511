#pragma once

// Turns a CSV table plus column roles into a GlmDataset: response column,
// protected columns (optionally prefixed by an intercept), open columns,
// derived interaction columns (products of two base columns), admissibility
// rules between open columns, and focus points given as per-column values.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ficlab/csv.hpp"
#include "ficlab/glmfit.hpp"
#include "ficlab/limitcore.hpp"

namespace ficlab {

struct Interaction {
    std::string name; // new open column
    std::string a, b; // factor columns (base CSV columns)
};

// Models containing `dependent` must also contain `required`.
struct MaskRule {
    std::string dependent;
    std::string required;
};

struct DatasetSpec {
    Family family = Family::linear;
    std::string response;
    std::vector<std::string> protected_cols; // beyond the intercept
    std::vector<std::string> open_cols;
    bool intercept = true;
    std::vector<Interaction> interactions; // appended after open_cols
    std::vector<MaskRule> rules;
    std::map<std::string, double> gamma0; // by open column name, default 0
};

struct LoadedDataset {
    GlmDataset data;
    std::vector<std::string> x_names; // includes "(intercept)" when present
    std::vector<std::string> z_names; // open_cols then interaction names
    std::vector<std::pair<int, int>> rule_indices; // (dependent, required) in z order
};

inline LoadedDataset assemble_dataset(const CsvTable& csv, const DatasetSpec& spec) {
    LoadedDataset out;
    out.data.family = spec.family;
    const int n = csv.rows();
    if (n == 0) throw IoError("dataset has no rows");
    out.data.y = csv.col(spec.response);

    const int p = static_cast<int>(spec.protected_cols.size()) + (spec.intercept ? 1 : 0);
    out.data.X.resize(n, p);
    int xi = 0;
    if (spec.intercept) {
        out.data.X.col(0).setOnes();
        out.x_names.push_back("(intercept)");
        xi = 1;
    }
    for (const auto& name : spec.protected_cols) {
        out.data.X.col(xi++) = csv.col(name);
        out.x_names.push_back(name);
    }

    const int q = static_cast<int>(spec.open_cols.size() + spec.interactions.size());
    if (q < 1) throw std::invalid_argument("dataset spec: no open columns");
    if (q > 20) throw std::invalid_argument("dataset spec: more than 20 open columns");
    out.data.Z.resize(n, q);
    int zi = 0;
    for (const auto& name : spec.open_cols) {
        out.data.Z.col(zi++) = csv.col(name);
        out.z_names.push_back(name);
    }
    for (const auto& ia : spec.interactions) {
        out.data.Z.col(zi++) = csv.col(ia.a).cwiseProduct(csv.col(ia.b));
        out.z_names.push_back(ia.name);
    }

    out.data.gamma0 = Vec::Zero(q);
    for (const auto& [name, value] : spec.gamma0) {
        int j = -1;
        for (int k = 0; k < q; ++k)
            if (out.z_names[k] == name) j = k;
        if (j < 0) throw std::invalid_argument("gamma0: unknown open column '" + name + "'");
        out.data.gamma0[j] = value;
    }

    for (const auto& rule : spec.rules) {
        int dep = -1, req = -1;
        for (int k = 0; k < q; ++k) {
            if (out.z_names[k] == rule.dependent) dep = k;
            if (out.z_names[k] == rule.required) req = k;
        }
        if (dep < 0 || req < 0)
            throw std::invalid_argument("mask rule references unknown open column ('" +
                                        rule.dependent + "' needs '" + rule.required + "')");
        out.rule_indices.emplace_back(dep, req);
    }

    out.data.validate();
    return out;
}

inline bool mask_admissible(const SubmodelMask& S,
                            const std::vector<std::pair<int, int>>& rules) {
    for (const auto& [dep, req] : rules)
        if (S.contains(dep) && !S.contains(req)) return false;
    return true;
}

inline std::vector<SubmodelMask> admissible_masks(int q,
                                                  const std::vector<std::pair<int, int>>& rules) {
    std::vector<SubmodelMask> out;
    for (const auto& S : all_masks(q))
        if (mask_admissible(S, rules)) out.push_back(S);
    return out;
}

// Focus point from per-column values: protected and open entries are looked
// up by name; interaction entries are the products of their factors. The
// intercept entry is 1.
inline FocusSpec make_focus(const LoadedDataset& ds, const DatasetSpec& spec, FocusKind kind,
                            const std::map<std::string, double>& at, double y0 = 0.0) {
    FocusSpec focus;
    focus.kind = kind;
    focus.y0 = y0;
    auto value_of = [&](const std::string& name) {
        auto it = at.find(name);
        if (it == at.end())
            throw std::invalid_argument("focus point: no value given for column '" + name + "'");
        return it->second;
    };
    focus.x0.resize(ds.x_names.size());
    int k = 0;
    if (spec.intercept) focus.x0[k++] = 1.0;
    for (const auto& name : spec.protected_cols) focus.x0[k++] = value_of(name);
    focus.z0.resize(ds.z_names.size());
    k = 0;
    for (const auto& name : spec.open_cols) focus.z0[k++] = value_of(name);
    for (const auto& ia : spec.interactions) focus.z0[k++] = value_of(ia.a) * value_of(ia.b);
    return focus;
}

} // namespace ficlab
