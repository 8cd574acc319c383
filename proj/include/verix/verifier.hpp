#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "verix/bounds.hpp"
#include "verix/model.hpp"
#include "verix/perturbation.hpp"

namespace verix {

enum class Verdict { unsat, sat, unknown };

std::string_view to_string(Verdict verdict);

/// Can the features in `free` move within their epsilon box and push
/// logit `target` strictly above logit `predicted`?
struct Query {
    std::vector<double> base;
    std::vector<std::size_t> free;
    std::size_t predicted = 0;
    std::size_t target = 0;
};

struct Outcome {
    Verdict verdict = Verdict::unknown;
    /// Full input vector; present iff verdict is SAT.
    std::optional<std::vector<double>> witness;
    std::size_t nodes_expanded = 0;
};

struct OracleStats {
    std::size_t checkvalid_calls = 0;
    std::size_t solve_calls = 0;
    std::size_t unknown_verdicts = 0;
    std::size_t nodes_expanded = 0;
    std::vector<std::size_t> solve_calls_per_class;
};

/// Delta-complete branch and bound over the query box. UNSAT means every
/// node was pruned by a sound bound; UNKNOWN means the width floor or the
/// node budget was hit without finding a counterexample.
Outcome solve(const Network& network, const Query& query, const PerturbationSpec& spec);

/// Every class except the predicted one, by descending logit, ties by index.
std::vector<std::size_t> confidence_ranking(const Logits& logits);

/// Classes other than the predicted one in ascending index order.
std::vector<std::size_t> index_ranking(const Logits& logits);

/// Prediction-invariance oracle for a fixed network and input. Each call
/// decides whether perturbing `subset` by epsilon can change the decision.
/// Single-output networks are treated as regressors with tolerance delta.
class ValidityChecker {
public:
    ValidityChecker(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                    bool use_confidence_ranking = true);

    bool operator()(std::span<const std::size_t> subset);

    const OracleStats& stats() const { return stats_; }
    const Logits& logits() const { return logits_; }
    const std::vector<std::size_t>& class_order() const { return order_; }

private:
    bool check_classification(std::span<const std::size_t> subset);
    bool check_regression(std::span<const std::size_t> subset);

    const Network& network_;
    std::vector<double> x_;
    PerturbationSpec spec_;
    Logits logits_;
    std::vector<std::size_t> order_;
    OracleStats stats_;
};

bool check_valid(const Network& network, std::span<const double> x, std::span<const std::size_t> subset,
                 const PerturbationSpec& spec, OracleStats& stats, bool use_confidence_ranking = true);

/// Requires a single-output network; true iff |f(x') - f(x)| <= delta over the subset box.
bool check_valid_regression(const Network& network, std::span<const double> x, std::span<const std::size_t> subset,
                            const PerturbationSpec& spec, OracleStats& stats);

} // namespace verix
