#include "verix/traversal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace verix {

namespace {

std::vector<std::size_t> identity(std::size_t m) {
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

void check_input(const Network& network, std::span<const double> x) {
    // infer performs the dimension and finiteness checks
    (void)infer(network, x);
}

} // namespace

std::string_view to_string(OrderMethod method) {
    switch (method) {
    case OrderMethod::heuristic_deletion:
        return "heuristic-deletion";
    case OrderMethod::heuristic_reversal:
        return "heuristic-reversal";
    case OrderMethod::bound_ibp:
        return "bound-ibp";
    case OrderMethod::bound_crown:
        return "bound-crown";
    case OrderMethod::index:
        break;
    }
    return "index";
}

OrderMethod parse_order_method(std::string_view name) {
    for (OrderMethod m : {OrderMethod::heuristic_deletion, OrderMethod::heuristic_reversal, OrderMethod::bound_ibp,
                          OrderMethod::bound_crown, OrderMethod::index})
        if (to_string(m) == name)
            return m;
    throw Error("unknown order method '" + std::string(name) + "'");
}

std::vector<std::size_t> argsort_descending(std::span<const double> scores) {
    auto order = identity(scores.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::vector<std::size_t> argsort_ascending(std::span<const double> scores) {
    auto order = identity(scores.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    return order;
}

std::vector<double> epsilon_bounds(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                                   BoundMethod method) {
    check_input(network, x);
    spec.validate();
    const auto m = static_cast<long long>(network.input_dim);
    std::vector<double> scores(network.input_dim);
#pragma omp parallel for schedule(dynamic, 4)
    for (long long i = 0; i < m; ++i)
        scores[static_cast<std::size_t>(i)] =
            epsilon_lower_bound(network, x, static_cast<std::size_t>(i), spec, method);
    return scores;
}

std::vector<double> epsilon_bounds_reference(const Network& network, std::span<const double> x,
                                             const PerturbationSpec& spec, BoundMethod method) {
    check_input(network, x);
    spec.validate();
    std::vector<double> scores(network.input_dim);
    for (std::size_t i = 0; i < network.input_dim; ++i)
        scores[i] = epsilon_lower_bound(network, x, i, spec, method);
    return scores;
}

Traversal traversal_order_boundprop(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                                    BoundMethod method) {
    Traversal t;
    t.scores = epsilon_bounds(network, x, spec, method);
    t.order = argsort_descending(t.scores);
    t.method = method == BoundMethod::ibp ? "bound-ibp" : "bound-crown";
    return t;
}

Traversal traversal_order_heuristic(const Network& network, std::span<const double> x, HeuristicMode mode) {
    const Logits base = infer(network, x);
    const auto c = static_cast<Eigen::Index>(base.predicted);
    Eigen::VectorXd probe = to_vector(x);

    Traversal t;
    t.scores.resize(network.input_dim);
    for (std::size_t i = 0; i < network.input_dim; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double original = probe[k];
        probe[k] = mode == HeuristicMode::deletion ? 0.0 : 1.0 - original;
        t.scores[i] = std::abs(base.values[c] - forward(network, probe)[c]);
        probe[k] = original;
    }
    t.order = argsort_ascending(t.scores);
    t.method = mode == HeuristicMode::deletion ? "heuristic-deletion" : "heuristic-reversal";
    return t;
}

Traversal traversal_order_index(std::size_t m) {
    if (m == 0)
        throw Error("index traversal needs at least one feature");
    return {identity(m), std::vector<double>(m, 0.0), "index"};
}

Traversal compute_traversal(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                            OrderMethod method) {
    switch (method) {
    case OrderMethod::heuristic_deletion:
        return traversal_order_heuristic(network, x, HeuristicMode::deletion);
    case OrderMethod::heuristic_reversal:
        return traversal_order_heuristic(network, x, HeuristicMode::reversal);
    case OrderMethod::bound_ibp:
        return traversal_order_boundprop(network, x, spec, BoundMethod::ibp);
    case OrderMethod::bound_crown:
        return traversal_order_boundprop(network, x, spec, BoundMethod::crown);
    case OrderMethod::index:
        break;
    }
    check_input(network, x);
    return traversal_order_index(network.input_dim);
}

} // namespace verix
