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

#include <catch2/catch_amalgamated.hpp>

#include "protodc/continual.hpp"
#include "protodc/rng.hpp"

using namespace protodc;

namespace {

DepthErrorMetrics uniform_metrics(double v) { return {v, v, v, v}; }

ContinualLog random_log(int t, Rng& rng) {
    ContinualLog log(t);
    for (int k = 0; k < t; ++k)
        for (int j = 0; j <= k; ++j) {
            DepthErrorMetrics m;
            m.mae = rng.uniform(1.0f, 50.0f);
            m.rmse = rng.uniform(1.0f, 80.0f);
            m.imae = rng.uniform(0.1f, 5.0f);
            m.irmse = rng.uniform(0.1f, 8.0f);
            log.set(j, k, m);
        }
    return log;
}

// Independent spreadsheet-style recomputation of the three formulas.
double oracle_forgetting(const ContinualLog& log, int m) {
    const int t = log.num_datasets();
    double sum = 0;
    int terms = 0;
    for (int k = 0; k < t; ++k)
        for (int j = 0; j < k; ++j) {
            sum += (log.value(j, k, m) - log.value(j, j, m)) / log.value(j, j, m);
            ++terms;
        }
    (void)terms;
    return 100.0 * sum * 2.0 / (t * (t - 1.0));
}

double oracle_performance(const ContinualLog& log, int m) {
    const int t = log.num_datasets();
    double sum = 0;
    for (int k = 0; k < t; ++k)
        for (int j = 0; j <= k; ++j) sum += log.value(j, k, m);
    return sum * 2.0 / (t * (t + 1.0));
}

double oracle_spto(const ContinualLog& log, int m) {
    const int t = log.num_datasets();
    double s = 0, p = 0;
    for (int k = 0; k < t; ++k) {
        s += log.value(k, t - 1, m);
        p += log.value(k, k, m);
    }
    return 2 * s * p / (s + p);
}

}  // namespace

TEST_CASE("log enforces the lower triangle and single fill") {
    ContinualLog log(3);
    log.set(0, 0, uniform_metrics(1));
    CHECK_THROWS_AS(log.set(0, 0, uniform_metrics(2)), ContractError);
    CHECK_THROWS_AS(log.set(2, 1, uniform_metrics(1)), ContractError);
    CHECK_THROWS_AS(log.get(1, 1), ContractError);
    CHECK_FALSE(log.complete());
    log.set(1, 1, uniform_metrics(2));
    log.set(0, 1, uniform_metrics(3));
    log.set(0, 2, uniform_metrics(4));
    log.set(1, 2, uniform_metrics(5));
    log.set(2, 2, uniform_metrics(6));
    CHECK(log.complete());
}

TEST_CASE("no degradation means zero forgetting") {
    ContinualLog log(3);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j <= k; ++j) log.set(j, k, uniform_metrics(7.5));
    for (int m = 0; m < 4; ++m) CHECK(average_forgetting(log, m) == 0.0);
}

TEST_CASE("forgetting worked example: 10 to 12 is twenty percent") {
    ContinualLog log(2);
    log.set(0, 0, uniform_metrics(10));
    log.set(0, 1, uniform_metrics(12));
    log.set(1, 1, uniform_metrics(20));
    CHECK(average_forgetting(log, 0) == Catch::Approx(20.0).margin(1e-12));

    // Improvement yields negative forgetting.
    ContinualLog better(2);
    better.set(0, 0, uniform_metrics(10));
    better.set(0, 1, uniform_metrics(8));
    better.set(1, 1, uniform_metrics(20));
    CHECK(average_forgetting(better, 0) == Catch::Approx(-20.0).margin(1e-12));
}

TEST_CASE("forgetting rejects zero baselines") {
    ContinualLog log(2);
    log.set(0, 0, uniform_metrics(0));
    log.set(0, 1, uniform_metrics(1));
    log.set(1, 1, uniform_metrics(1));
    CHECK_THROWS_AS(average_forgetting(log, 0), NumericError);
}

TEST_CASE("average performance worked examples") {
    ContinualLog log(2);
    log.set(0, 0, uniform_metrics(10));
    log.set(0, 1, uniform_metrics(12));
    log.set(1, 1, uniform_metrics(20));
    CHECK(average_performance(log, 0) == Catch::Approx(14.0).margin(1e-12));

    ContinualLog flat(3);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j <= k; ++j) flat.set(j, k, uniform_metrics(3.25));
    CHECK(average_performance(flat, 2) == Catch::Approx(3.25).margin(1e-12));

    ContinualLog single(1);
    single.set(0, 0, uniform_metrics(42));
    CHECK(average_performance(single, 0) == Catch::Approx(42.0).margin(1e-12));
}

TEST_CASE("spto worked examples and harmonic bound") {
    ContinualLog log(2);
    log.set(0, 0, uniform_metrics(10));
    log.set(0, 1, uniform_metrics(12));
    log.set(1, 1, uniform_metrics(20));
    // S = 12 + 20 = 32, P = 10 + 20 = 30, SPTO = 1920 / 62.
    CHECK(spto(log, 0) == Catch::Approx(1920.0 / 62.0).margin(1e-12));

    ContinualLog eq(2);
    eq.set(0, 0, uniform_metrics(4));
    eq.set(0, 1, uniform_metrics(4));
    eq.set(1, 1, uniform_metrics(4));
    CHECK(spto(eq, 0) == Catch::Approx(8.0).margin(1e-12));  // S == P == 8

    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        auto rl = random_log(4, rng);
        for (int m = 0; m < 4; ++m) {
            double s = 0, p = 0;
            for (int k = 0; k < 4; ++k) {
                s += rl.value(k, 3, m);
                p += rl.value(k, k, m);
            }
            const double v = spto(rl, m);
            CHECK(v >= std::min(s, p) - 1e-9);
            CHECK(v <= std::max(s, p) + 1e-9);
        }
    }
}

TEST_CASE("formulas match independent recomputation on randomized logs") {
    Rng rng(31415);
    for (int trial = 0; trial < 5; ++trial) {
        const int t = 2 + static_cast<int>(rng.below(4));
        auto log = random_log(t, rng);
        for (int m = 0; m < 4; ++m) {
            CHECK(average_forgetting(log, m) ==
                  Catch::Approx(oracle_forgetting(log, m)).margin(1e-9));
            CHECK(average_performance(log, m) ==
                  Catch::Approx(oracle_performance(log, m)).margin(1e-9));
            CHECK(spto(log, m) == Catch::Approx(oracle_spto(log, m)).margin(1e-9));
        }
    }
}

TEST_CASE("log json round trip") {
    Rng rng(12);
    auto log = random_log(3, rng);
    auto j = log.to_json();
    auto back = ContinualLog::from_json(j);
    for (int m = 0; m < 4; ++m)
        for (int k = 0; k < 3; ++k)
            for (int jj = 0; jj <= k; ++jj)
                CHECK(back.value(jj, k, m) == log.value(jj, k, m));
}
