#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verix/bounds.hpp"
#include "verix/model.hpp"
#include "verix/perturbation.hpp"

namespace verix {

/// Order in which features are tested for irrelevance. Likely-irrelevant
/// features come first for every method.
struct Traversal {
    std::vector<std::size_t> order;
    std::vector<double> scores;
    std::string method;
};

enum class OrderMethod { heuristic_deletion, heuristic_reversal, bound_ibp, bound_crown, index };
enum class HeuristicMode { deletion, reversal };

std::string_view to_string(OrderMethod method);
OrderMethod parse_order_method(std::string_view name);

/// Permutation sorting `scores` descending, ties by ascending index.
std::vector<std::size_t> argsort_descending(std::span<const double> scores);
/// Permutation sorting `scores` ascending, ties by ascending index.
std::vector<std::size_t> argsort_ascending(std::span<const double> scores);

/// Per-feature epsilon lower bounds of the predicted class. Features are
/// fanned out across OpenMP threads.
std::vector<double> epsilon_bounds(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                                   BoundMethod method);

/// Single-threaded reference for epsilon_bounds.
std::vector<double> epsilon_bounds_reference(const Network& network, std::span<const double> x,
                                             const PerturbationSpec& spec, BoundMethod method);

Traversal traversal_order_boundprop(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                                    BoundMethod method);

/// Sensitivity |y_c(x) - y_c(x with x_i deleted or reversed)|, least sensitive first.
Traversal traversal_order_heuristic(const Network& network, std::span<const double> x, HeuristicMode mode);

Traversal traversal_order_index(std::size_t m);

Traversal compute_traversal(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                            OrderMethod method);

} // namespace verix
