#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "verix/model.hpp"
#include "verix/perturbation.hpp"
#include "verix/traversal.hpp"
#include "verix/verifier.hpp"

namespace verix {

/// Decides whether a feature subset is irrelevant (perturbing it cannot
/// change the decision). Production code wraps ValidityChecker; tests inject mocks.
using ValidityOracle = std::function<bool(std::span<const std::size_t>)>;

enum class SearchMethod { sequential, binary, quickxplain };

std::string_view to_string(SearchMethod method);
SearchMethod parse_search_method(std::string_view name);

struct SearchHooks {
    /// Called with the full irrelevant set every time it grows.
    std::function<void(std::span<const std::size_t>)> on_irrelevant_grow;
};

struct SearchOutcome {
    std::vector<std::size_t> explanation;
    std::vector<std::size_t> irrelevant;
    std::size_t oracle_calls = 0;
};

/// Splits an ordered set into its first ceil(k/2) and last floor(k/2) elements.
std::pair<std::span<const std::size_t>, std::span<const std::size_t>> split_halves(std::span<const std::size_t> items);

SearchOutcome sequential_search(std::span<const std::size_t> order, const ValidityOracle& oracle,
                                const SearchHooks& hooks = {});

/// Recursive halving that accepts whole batches of consecutive irrelevant
/// features. Returns the same partition as sequential_search for any
/// deterministic subset-monotone oracle.
SearchOutcome binary_search(std::span<const std::size_t> order, const ValidityOracle& oracle,
                            const SearchHooks& hooks = {});

/// QuickXplain-style divide and conquer. With `singleton_shortcuts` a failing
/// half of size one goes straight into the explanation instead of being re-checked.
SearchOutcome quickxplain_search(std::span<const std::size_t> order, const ValidityOracle& oracle,
                                 const SearchHooks& hooks = {}, bool singleton_shortcuts = true);

SearchOutcome run_search(SearchMethod method, std::span<const std::size_t> order, const ValidityOracle& oracle,
                         const SearchHooks& hooks = {});

struct ExplanationResult {
    std::vector<std::size_t> explanation; ///< A, ascending
    std::vector<std::size_t> irrelevant;  ///< B, ascending
    bool robust = false;
    std::size_t predicted = 0;
    OracleStats stats;
    Traversal traversal;
    PerturbationSpec spec;
    SearchMethod search = SearchMethod::binary;
    bool confidence_ranking = true;
    double wall_time_ms = 0.0;
};

/// Checks the full feature set first and returns a robust result when it
/// validates; otherwise runs `search` over the traversal order.
ExplanationResult explain(const Network& network, std::span<const double> x, const Traversal& traversal,
                          const PerturbationSpec& spec, SearchMethod search, bool confidence_ranking = true,
                          const SearchHooks& hooks = {});

ExplanationResult explain_sequential(const Network& network, std::span<const double> x, const Traversal& traversal,
                                     const PerturbationSpec& spec, bool confidence_ranking = true);
ExplanationResult explain_binary(const Network& network, std::span<const double> x, const Traversal& traversal,
                                 const PerturbationSpec& spec, bool confidence_ranking = true);
ExplanationResult explain_quickxplain(const Network& network, std::span<const double> x, const Traversal& traversal,
                                      const PerturbationSpec& spec, bool confidence_ranking = true);

struct ValidationReport {
    bool sound = false;     ///< irrelevant set validates
    bool optimal = false;   ///< no explanation feature can be moved to the irrelevant set
    bool partition = false; ///< A and B partition all features
    std::vector<std::size_t> removable; ///< explanation features that failed the optimality check

    bool passed() const { return sound && optimal && partition; }
};

ValidationReport validate_explanation(const Network& network, std::span<const double> x,
                                      const ExplanationResult& result, const PerturbationSpec& spec);

/// Explanation document; `order_method` echoes the traversal's method tag.
std::string explanation_json(const ExplanationResult& result);

/// ASCII PGM (P2), 255 for explanation pixels and 0 elsewhere.
void write_pgm_mask(std::ostream& out, std::span<const std::size_t> explanation, std::size_t width,
                    std::size_t height);

} // namespace verix
