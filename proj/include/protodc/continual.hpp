// Copyright 2026 The protodc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "protodc/errors.hpp"
#include "protodc/losses.hpp"

namespace protodc {

/// Matrix of metric values a_j^k: performance on dataset j after training
/// through dataset k, recorded for all j <= k, for each of the four error
/// metrics. Cells are filled exactly once.
class ContinualLog {
public:
    explicit ContinualLog(int num_datasets = 0) { reset(num_datasets); }

    void reset(int num_datasets) {
        t_ = num_datasets;
        cells_.assign(static_cast<size_t>(t_ * t_), {});
        filled_.assign(static_cast<size_t>(t_ * t_), false);
    }

    int num_datasets() const { return t_; }

    void set(int j, int k, const DepthErrorMetrics& m) {
        check_index(j, k);
        const size_t idx = flat(j, k);
        if (filled_[idx])
            throw ContractError("ContinualLog: cell (" + std::to_string(j) + "," +
                                std::to_string(k) + ") already filled");
        cells_[idx] = m;
        filled_[idx] = true;
    }

    const DepthErrorMetrics& get(int j, int k) const {
        check_index(j, k);
        if (!filled_[flat(j, k)])
            throw ContractError("ContinualLog: cell (" + std::to_string(j) + "," +
                                std::to_string(k) + ") not filled");
        return cells_[flat(j, k)];
    }

    double value(int j, int k, int metric) const { return get(j, k).by_index(metric); }

    bool complete() const {
        for (int k = 0; k < t_; ++k)
            for (int j = 0; j <= k; ++j)
                if (!filled_[flat(j, k)]) return false;
        return t_ > 0;
    }

    nlohmann::json to_json() const {
        nlohmann::json out;
        out["num_datasets"] = t_;
        for (int m = 0; m < 4; ++m) {
            nlohmann::json rows = nlohmann::json::array();
            for (int k = 0; k < t_; ++k) {
                nlohmann::json row = nlohmann::json::array();
                for (int j = 0; j <= k; ++j) row.push_back(value(j, k, m));
                rows.push_back(row);
            }
            out["a"][DepthErrorMetrics::name(m)] = rows;
        }
        return out;
    }

    static ContinualLog from_json(const nlohmann::json& j) {
        ContinualLog log(j.at("num_datasets").get<int>());
        for (int k = 0; k < log.t_; ++k)
            for (int jj = 0; jj <= k; ++jj) {
                DepthErrorMetrics m;
                m.mae = j.at("a").at("MAE").at(k).at(jj).get<double>();
                m.rmse = j.at("a").at("RMSE").at(k).at(jj).get<double>();
                m.imae = j.at("a").at("iMAE").at(k).at(jj).get<double>();
                m.irmse = j.at("a").at("iRMSE").at(k).at(jj).get<double>();
                log.set(jj, k, m);
            }
        return log;
    }

private:
    void check_index(int j, int k) const {
        if (j < 0 || k < 0 || k >= t_ || j > k)
            throw ContractError("ContinualLog: index (" + std::to_string(j) + "," +
                                std::to_string(k) + ") outside the lower triangle");
    }
    size_t flat(int j, int k) const { return static_cast<size_t>(j) * t_ + k; }

    int t_ = 0;
    std::vector<DepthErrorMetrics> cells_;
    std::vector<bool> filled_;
};

/// Scale-invariant mean degradation on previous datasets, in percent:
/// (2 / (T(T-1))) * sum_k sum_{j<k} (a_j^k - a_j^j) / a_j^j * 100.
inline double average_forgetting(const ContinualLog& log, int metric) {
    const int t = log.num_datasets();
    if (t < 2) throw ContractError("average_forgetting: needs at least 2 datasets");
    if (!log.complete()) throw ContractError("average_forgetting: incomplete log");
    double acc = 0;
    for (int k = 0; k < t; ++k)
        for (int j = 0; j < k; ++j) {
            const double base = log.value(j, j, metric);
            if (base == 0.0)
                throw NumericError("average_forgetting: a_j^j is zero for dataset " +
                                   std::to_string(j));
            acc += (log.value(j, k, metric) - base) / base;
        }
    return 100.0 * 2.0 * acc / (static_cast<double>(t) * (t - 1));
}

/// Mean performance on all seen datasets:
/// (2 / (T(T+1))) * sum_k sum_{j<=k} a_j^k.
inline double average_performance(const ContinualLog& log, int metric) {
    const int t = log.num_datasets();
    if (t < 1) throw ContractError("average_performance: empty log");
    if (!log.complete()) throw ContractError("average_performance: incomplete log");
    double acc = 0;
    for (int k = 0; k < t; ++k)
        for (int j = 0; j <= k; ++j) acc += log.value(j, k, metric);
    return 2.0 * acc / (static_cast<double>(t) * (t + 1));
}

/// Stability-plasticity trade-off: the harmonic mean of final performance
/// on all datasets (S) and first-exposure performance (P).
inline double spto(const ContinualLog& log, int metric) {
    const int t = log.num_datasets();
    if (t < 1) throw ContractError("spto: empty log");
    if (!log.complete()) throw ContractError("spto: incomplete log");
    double stab = 0, plast = 0;
    for (int k = 0; k < t; ++k) {
        stab += log.value(k, t - 1, metric);
        plast += log.value(k, k, metric);
    }
    if (stab + plast == 0.0) throw NumericError("spto: S + P is zero");
    return 2.0 * stab * plast / (stab + plast);
}

}  // namespace protodc
