#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "support.hpp"
#include "verix/parallel.hpp"
#include "verix/traversal.hpp"

using namespace verix;
using verix::testing::dense;
using verix::testing::make_network;

namespace {

bool is_permutation_of_range(const std::vector<std::size_t>& order, std::size_t m) {
    if (order.size() != m)
        return false;
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < m; ++i)
        if (sorted[i] != i)
            return false;
    return true;
}

} // namespace

TEST_CASE("bound ordering puts the less influential feature first") {
    const Network net = make_network(2, {dense({{1, 0.1}, {0, 0}}, {0, 0})});
    const std::vector<double> x = {0.5, 0.5};
    for (BoundMethod m : {BoundMethod::ibp, BoundMethod::crown}) {
        const Traversal t = traversal_order_boundprop(net, x, PerturbationSpec::with_epsilon(0.1), m);
        CHECK(t.scores[0] == doctest::Approx(0.45));
        CHECK(t.scores[1] == doctest::Approx(0.54));
        CHECK(t.order == std::vector<std::size_t>{1, 0});
    }
}

TEST_CASE("a feature with zero outgoing weights ranks first under bounds") {
    const Network net = make_network(3, {dense({{1, 0, 2}, {1, 0, 1}}, {0, 0}), Layer::relu(),
                                         dense({{1, 1}, {0.5, -1}}, {0, 0})});
    const std::vector<double> x = {0.3, 0.9, 0.4};
    const auto y = infer(net, x);
    const Traversal t = traversal_order_boundprop(net, x, PerturbationSpec::with_epsilon(0.2), BoundMethod::crown);
    CHECK(t.order.front() == 1);
    CHECK(t.scores[1] == doctest::Approx(y.values[static_cast<Eigen::Index>(y.predicted)]));
}

TEST_CASE("zero epsilon gives equal scores and the identity order") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + trial % 8;
        const Network net = verix::testing::random_network(rng, m, {6, 4}, 3);
        const auto x = verix::testing::uniform_point(rng, verix::testing::random_box(rng, m, 0.0));
        const double yc = infer(net, x).values.maxCoeff();
        for (BoundMethod b : {BoundMethod::ibp, BoundMethod::crown}) {
            const Traversal t = traversal_order_boundprop(net, x, PerturbationSpec::with_epsilon(0.0), b);
            CHECK(t.order == traversal_order_index(m).order);
            for (double s : t.scores)
                CHECK(s == doctest::Approx(yc).epsilon(1e-12));
        }
    }
}

TEST_CASE("heuristic sensitivities") {
    const Network net = make_network(2, {dense({{1, 3}}, {0})});
    const std::vector<double> x = {0.2, 0.4};

    SUBCASE("deletion example") {
        const Traversal t = traversal_order_heuristic(net, x, HeuristicMode::deletion);
        CHECK(t.scores[0] == doctest::Approx(0.2));
        CHECK(t.scores[1] == doctest::Approx(1.2));
        CHECK(t.order == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("reversal replaces x_i with 1 - x_i") {
        const std::vector<double> r = {0.25, 0.5};
        const Traversal t = traversal_order_heuristic(net, r, HeuristicMode::reversal);
        CHECK(t.scores[0] == 0.5);
        CHECK(t.scores[1] == 0.0);
        CHECK(t.order == std::vector<std::size_t>{1, 0});
    }
    SUBCASE("a zero feature is insensitive to deletion") {
        const std::vector<double> z = {0.7, 0.0};
        const Traversal t = traversal_order_heuristic(net, z, HeuristicMode::deletion);
        CHECK(t.scores[1] == 0.0);
        CHECK(t.order.front() == 1);
    }
    SUBCASE("a zero-weight feature ranks first") {
        const Network w = make_network(3, {dense({{1, 0, 2}, {0, 0, 1}}, {0, 0})});
        const std::vector<double> p = {0.5, 0.8, 0.1};
        const Traversal t = traversal_order_heuristic(w, p, HeuristicMode::deletion);
        CHECK(t.scores[1] == 0.0);
        CHECK(t.order.front() == 1);
    }
}

TEST_CASE("index traversal") {
    CHECK(traversal_order_index(3).order == std::vector<std::size_t>{0, 1, 2});
    CHECK(traversal_order_index(1).order == std::vector<std::size_t>{0});
    const Traversal t = traversal_order_index(4);
    CHECK(t.method == "index");
    CHECK(std::all_of(t.scores.begin(), t.scores.end(), [](double s) { return s == 0.0; }));
    CHECK_THROWS_AS(traversal_order_index(0), Error);
}

TEST_CASE("order method names round-trip") {
    for (OrderMethod m : {OrderMethod::heuristic_deletion, OrderMethod::heuristic_reversal, OrderMethod::bound_ibp,
                          OrderMethod::bound_crown, OrderMethod::index})
        CHECK(parse_order_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_order_method("bound-lp"), Error);
}

TEST_CASE("argsort tie-break is by ascending index") {
    const std::vector<double> s = {1.0, 3.0, 1.0, 3.0, 2.0};
    CHECK(argsort_descending(s) == std::vector<std::size_t>{1, 3, 4, 0, 2});
    CHECK(argsort_ascending(s) == std::vector<std::size_t>{0, 2, 4, 1, 3});
}

TEST_CASE("equal-score features keep index order after input permutation") {
    // Features 0, 2 and 3 enter symmetrically; swapping their values in x must
    // not change the order because their scores stay equal.
    const Network net = make_network(4, {dense({{1, 0.5, 1, 1}, {0, 1, 0, 0}}, {0, 0})});
    std::vector<double> x = {0.6, 0.3, 0.6, 0.6};
    const auto spec = PerturbationSpec::with_epsilon(0.1);
    const Traversal a = traversal_order_boundprop(net, x, spec, BoundMethod::crown);
    std::swap(x[0], x[3]);
    const Traversal b = traversal_order_boundprop(net, x, spec, BoundMethod::crown);
    CHECK(a.order == b.order);
    CHECK(a.scores[0] == a.scores[2]);
    CHECK(a.scores[2] == a.scores[3]);
}

TEST_CASE("every method yields a permutation on random networks") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t m = 1 + trial % 12;
        const Network net = verix::testing::random_network(rng, m, {8, 6}, 4, true);
        const auto x = verix::testing::uniform_point(rng, verix::testing::random_box(rng, m, 0.0));
        for (OrderMethod method : {OrderMethod::heuristic_deletion, OrderMethod::heuristic_reversal,
                                   OrderMethod::bound_ibp, OrderMethod::bound_crown, OrderMethod::index}) {
            const Traversal t = compute_traversal(net, x, PerturbationSpec::with_epsilon(0.1), method);
            CHECK(is_permutation_of_range(t.order, m));
            CHECK(t.scores.size() == m);
            CHECK(t.method == to_string(method));
        }
    }
}

TEST_CASE("parallel epsilon bounds match the serial reference exactly") {
    std::mt19937_64 rng(47);
    for (int threads : {1, 2, 4}) {
        set_num_threads(threads);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t m = 16 + trial;
            const Network net = verix::testing::random_network(rng, m, {10, 10}, 5, true);
            const auto x = verix::testing::uniform_point(rng, verix::testing::random_box(rng, m, 0.0));
            const auto spec = PerturbationSpec::with_epsilon(0.05);
            for (BoundMethod b : {BoundMethod::ibp, BoundMethod::crown})
                CHECK(epsilon_bounds(net, x, spec, b) == epsilon_bounds_reference(net, x, spec, b));
        }
    }
    set_num_threads(max_threads());
}

TEST_CASE("scores do not depend on the order features are computed in") {
    std::mt19937_64 rng(53);
    const Network net = verix::testing::random_network(rng, 10, {8}, 3, true);
    const auto x = verix::testing::uniform_point(rng, verix::testing::random_box(rng, 10, 0.0));
    const auto spec = PerturbationSpec::with_epsilon(0.1);
    const auto all = epsilon_bounds_reference(net, x, spec, BoundMethod::crown);
    for (std::size_t i = 10; i-- > 0;)
        CHECK(epsilon_lower_bound(net, x, i, spec, BoundMethod::crown) == all[i]);
}
