#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "verix/explain.hpp"

using namespace verix;
using verix::testing::dense;
using verix::testing::make_network;

namespace {

std::vector<std::size_t> iota(std::size_t m) {
    std::vector<std::size_t> v(m);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

ValidityOracle constant(bool value) {
    return [value](std::span<const std::size_t>) { return value; };
}

// Valid iff the subset avoids every feature flagged in `relevant`.
ValidityOracle avoids(std::vector<bool> relevant) {
    return [relevant = std::move(relevant)](std::span<const std::size_t> subset) {
        return std::none_of(subset.begin(), subset.end(), [&](std::size_t i) { return relevant[i]; });
    };
}

// Valid iff the weights of the subset sum to at most `budget`. Downward closed,
// so it is subset-monotone, but the minimal explanations depend on the order.
ValidityOracle knapsack(std::vector<double> weights, double budget) {
    return [weights = std::move(weights), budget](std::span<const std::size_t> subset) {
        double total = 0.0;
        for (std::size_t i : subset)
            total += weights[i];
        return total <= budget;
    };
}

std::vector<std::size_t> join_sets(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::vector<std::size_t> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Worst-case binary call counts from the halving recurrence.
std::size_t binary_worst(std::size_t m) {
    if (m == 1)
        return 1;
    if (m == 2)
        return 2;
    const std::size_t half = m / 2;
    if (m % 2 == 0)
        return 2 * binary_worst(half) + 1;
    return binary_worst(half + 1) + binary_worst(half) + 1;
}

std::size_t floor_log2(std::size_t m) {
    std::size_t r = 0;
    while (m >>= 1)
        ++r;
    return r;
}

Network three_class_identity() {
    return make_network(2, {dense({{1, 0}, {0, 1}, {0, 0}}, {0, 0, 0})});
}

} // namespace

TEST_CASE("split gives the larger half first") {
    const auto v = iota(5);
    const auto [a, b] = split_halves(v);
    CHECK(std::vector<std::size_t>(a.begin(), a.end()) == std::vector<std::size_t>{0, 1, 2});
    CHECK(std::vector<std::size_t>(b.begin(), b.end()) == std::vector<std::size_t>{3, 4});
    const auto one = iota(1);
    CHECK(split_halves(one).first.size() == 1);
    CHECK(split_halves(one).second.empty());
}

TEST_CASE("sequential mock-oracle examples") {
    const auto order = iota(4);
    const SearchOutcome yes = sequential_search(order, constant(true));
    CHECK(yes.explanation.empty());
    CHECK(yes.irrelevant == order);
    CHECK(yes.oracle_calls == 4);
    const SearchOutcome no = sequential_search(order, constant(false));
    CHECK(no.explanation == order);
    CHECK(no.irrelevant.empty());
    CHECK(no.oracle_calls == 4);
}

TEST_CASE("binary mock-oracle examples") {
    CHECK(binary_search(iota(4), constant(true)).oracle_calls == 2);
    const SearchOutcome no = binary_search(iota(4), constant(false));
    CHECK(sorted(no.explanation) == iota(4));
    CHECK(no.oracle_calls == 5);
    CHECK(binary_search(iota(3), constant(false)).oracle_calls == 4);
    CHECK(binary_search(iota(2), constant(false)).oracle_calls == 2);
    CHECK(binary_search(iota(1), constant(false)).oracle_calls == 1);
}

TEST_CASE("quickxplain mock-oracle examples") {
    CHECK(quickxplain_search(iota(8), constant(true)).oracle_calls == 4);
    const SearchOutcome no = quickxplain_search(iota(4), constant(false));
    CHECK(sorted(no.explanation) == iota(4));
    CHECK(no.oracle_calls == 6);
    CHECK(quickxplain_search(iota(1), constant(true)).oracle_calls == 1);
    CHECK(quickxplain_search(iota(1), constant(false)).oracle_calls == 1);
}

TEST_CASE("call counts follow the complexity bounds for m up to 64") {
    for (std::size_t m = 1; m <= 64; ++m) {
        CAPTURE(m);
        const auto order = iota(m);
        CHECK(sequential_search(order, constant(true)).oracle_calls == m);
        CHECK(sequential_search(order, constant(false)).oracle_calls == m);
        CHECK(binary_search(order, constant(true)).oracle_calls == (m >= 2 ? 2u : 1u));
        CHECK(binary_search(order, constant(false)).oracle_calls == binary_worst(m));
        CHECK(quickxplain_search(order, constant(true)).oracle_calls == floor_log2(m) + 1);
        if (m >= 2)
            CHECK(quickxplain_search(order, constant(false)).oracle_calls == 2 * (m - 1));
    }
}

TEST_CASE("worst-case binary counts satisfy the halving recurrences") {
    std::vector<std::size_t> k(65);
    for (std::size_t m = 1; m <= 64; ++m)
        k[m] = binary_search(iota(m), constant(false)).oracle_calls;
    for (std::size_t m = 2; 2 * m <= 64; ++m)
        CHECK(k[2 * m] == 2 * k[m] + 1);
    for (std::size_t m = 1; 2 * m + 1 <= 64; ++m)
        CHECK(k[2 * m + 1] == k[m + 1] + k[m] + 1);
}

TEST_CASE("deep inputs do not exhaust the stack") {
    const auto order = iota(4096);
    std::vector<bool> relevant(4096, false);
    for (std::size_t i = 0; i < 4096; i += 7)
        relevant[i] = true;
    const auto oracle = avoids(relevant);
    const SearchOutcome b = binary_search(order, oracle);
    const SearchOutcome q = quickxplain_search(order, oracle);
    CHECK(b.explanation.size() == 586);
    CHECK(q.explanation.size() == 586);
}

TEST_CASE("exhaustive relevance patterns: exact explanations and shortcut savings") {
    for (std::size_t m = 1; m <= 12; ++m) {
        const auto order = iota(m);
        for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
            std::vector<bool> relevant(m);
            std::vector<std::size_t> expected;
            for (std::size_t i = 0; i < m; ++i) {
                relevant[i] = (mask >> i) & 1u;
                if (relevant[i])
                    expected.push_back(i);
            }
            const auto oracle = avoids(relevant);
            const SearchOutcome s = sequential_search(order, oracle);
            const SearchOutcome b = binary_search(order, oracle);
            const SearchOutcome q = quickxplain_search(order, oracle);
            const SearchOutcome plain = quickxplain_search(order, oracle, {}, false);
            CHECK(sorted(s.explanation) == expected);
            CHECK(sorted(b.explanation) == expected);
            CHECK(sorted(q.explanation) == expected);
            CHECK(sorted(plain.explanation) == expected);
            CHECK(q.oracle_calls <= plain.oracle_calls);
            CHECK(b.oracle_calls <= binary_worst(m));
        }
    }
}

TEST_CASE("subset-monotone oracles give subset-minimal explanations") {
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> w(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 1 + trial % 12;
        std::vector<double> weights(m);
        for (double& v : weights)
            v = w(rng);
        const auto oracle = knapsack(weights, w(rng) * static_cast<double>(m) * 0.5);
        std::vector<std::size_t> order = iota(m);
        std::shuffle(order.begin(), order.end(), rng);

        const SearchOutcome s = sequential_search(order, oracle);
        const SearchOutcome b = binary_search(order, oracle);
        const SearchOutcome q = quickxplain_search(order, oracle);
        CHECK(b.explanation == s.explanation);
        CHECK(sorted(b.irrelevant) == sorted(s.irrelevant));

        for (const SearchOutcome* out : {&s, &b, &q}) {
            CHECK(sorted(join_sets(out->explanation, out->irrelevant)) == iota(m));
            CHECK(oracle(out->irrelevant));
            for (std::size_t i : out->explanation) {
                auto grown = out->irrelevant;
                grown.push_back(i);
                CHECK_FALSE(oracle(grown));
            }
        }
    }
}

TEST_CASE("the irrelevant set only grows") {
    std::mt19937_64 rng(61);
    for (SearchMethod method : {SearchMethod::sequential, SearchMethod::binary, SearchMethod::quickxplain}) {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t m = 2 + trial % 20;
            std::vector<bool> relevant(m);
            for (std::size_t i = 0; i < m; ++i)
                relevant[i] = rng() % 3 == 0;
            std::set<std::size_t> seen;
            bool monotone = true;
            SearchHooks hooks;
            hooks.on_irrelevant_grow = [&](std::span<const std::size_t> b) {
                const std::set<std::size_t> now(b.begin(), b.end());
                monotone = monotone && now.size() > seen.size() &&
                           std::includes(now.begin(), now.end(), seen.begin(), seen.end());
                seen = now;
            };
            const SearchOutcome out = run_search(method, iota(m), avoids(relevant), hooks);
            CHECK(monotone);
            CHECK(seen == std::set<std::size_t>(out.irrelevant.begin(), out.irrelevant.end()));
        }
    }
}

TEST_CASE("search method names round-trip") {
    for (SearchMethod m : {SearchMethod::sequential, SearchMethod::binary, SearchMethod::quickxplain})
        CHECK(parse_search_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_search_method("dichotomic"), Error);
}

TEST_CASE("identity-logit explanation") {
    const Network net = three_class_identity();
    const std::vector<double> x = {0.9, 0.1};

    SUBCASE("at epsilon 0.2 the whole input is robust") {
        const auto spec = PerturbationSpec::with_epsilon(0.2);
        const ExplanationResult r = explain_sequential(net, x, traversal_order_index(2), spec);
        CHECK(r.robust);
        CHECK(r.explanation.empty());
        CHECK(r.irrelevant == std::vector<std::size_t>{0, 1});
        CHECK(validate_explanation(net, x, r, spec).passed());
    }
    SUBCASE("at epsilon 0.5 the dominant feature is the explanation") {
        const auto spec = PerturbationSpec::with_epsilon(0.5);
        const Traversal t = compute_traversal(net, x, spec, OrderMethod::bound_crown);
        CHECK(t.order == std::vector<std::size_t>{1, 0});
        for (SearchMethod m : {SearchMethod::sequential, SearchMethod::binary, SearchMethod::quickxplain}) {
            const ExplanationResult r = explain(net, x, t, spec, m);
            CHECK_FALSE(r.robust);
            CHECK(r.explanation == std::vector<std::size_t>{0});
            CHECK(r.irrelevant == std::vector<std::size_t>{1});
            CHECK(validate_explanation(net, x, r, spec).passed());
        }
    }
}

TEST_CASE("explain rejects a traversal that is not a permutation") {
    const Network net = three_class_identity();
    const std::vector<double> x = {0.9, 0.1};
    Traversal bad = traversal_order_index(2);
    bad.order = {0, 0};
    CHECK_THROWS_AS(explain_binary(net, x, bad, PerturbationSpec::with_epsilon(0.5)), Error);
    bad.order = {0};
    CHECK_THROWS_AS(explain_binary(net, x, bad, PerturbationSpec::with_epsilon(0.5)), Error);
}

TEST_CASE("binary and sequential agree on random networks") {
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> eps(0.05, 0.6);
    int compared = 0;
    int nontrivial = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 3 + trial % 4;
        const Network net = verix::testing::random_network(rng, m, {6}, 3);
        const auto x = verix::testing::uniform_point(rng, verix::testing::random_box(rng, m, 0.0));
        const auto spec = PerturbationSpec::with_epsilon(eps(rng));
        Traversal t = traversal_order_index(m);
        std::shuffle(t.order.begin(), t.order.end(), rng);

        const ExplanationResult s = explain_sequential(net, x, t, spec);
        const ExplanationResult b = explain_binary(net, x, t, spec);
        const ExplanationResult q = explain_quickxplain(net, x, t, spec);
        if (s.stats.unknown_verdicts || b.stats.unknown_verdicts || q.stats.unknown_verdicts)
            continue;
        ++compared;
        if (!s.robust && !s.irrelevant.empty() && !s.explanation.empty())
            ++nontrivial;
        CHECK(b.explanation == s.explanation);
        CHECK(b.irrelevant == s.irrelevant);
        for (const ExplanationResult* r : {&s, &b, &q}) {
            const ValidationReport report = validate_explanation(net, x, *r, spec);
            CHECK(report.passed());
        }
    }
    CHECK(compared >= 35);
    CHECK(nontrivial >= 5);
}

TEST_CASE("validate_explanation flags a constructed violation") {
    const Network net = three_class_identity();
    const std::vector<double> x = {0.9, 0.1};
    const auto spec = PerturbationSpec::with_epsilon(0.5);
    ExplanationResult r = explain_binary(net, x, traversal_order_index(2), spec);
    REQUIRE(validate_explanation(net, x, r, spec).passed());

    ExplanationResult moved = r;
    moved.irrelevant = {0, 1};
    moved.explanation.clear();
    const ValidationReport bad = validate_explanation(net, x, moved, spec);
    CHECK_FALSE(bad.sound);
    CHECK_FALSE(bad.passed());

    ExplanationResult padded = r;
    padded.explanation = {0, 1};
    padded.irrelevant.clear();
    const ValidationReport loose = validate_explanation(net, x, padded, spec);
    CHECK(loose.sound);
    CHECK_FALSE(loose.optimal);
    // each feature alone can be perturbed
    CHECK(loose.removable == std::vector<std::size_t>{0, 1});

    ExplanationResult overlap = r;
    overlap.explanation.push_back(1);
    CHECK_FALSE(validate_explanation(net, x, overlap, spec).partition);
}

TEST_CASE("explanation JSON carries the result and the perturbation settings") {
    const Network net = three_class_identity();
    const std::vector<double> x = {0.9, 0.1};
    const auto spec = PerturbationSpec::with_epsilon(0.5);
    const ExplanationResult r = explain_quickxplain(net, x, traversal_order_index(2), spec, false);
    const auto doc = nlohmann::json::parse(explanation_json(r));
    // index order accepts feature 0 first, which leaves feature 1 relevant
    CHECK(doc["explanation"] == nlohmann::json::array({1}));
    CHECK(doc["irrelevant"] == nlohmann::json::array({0}));
    CHECK(doc["robust"] == false);
    CHECK(doc["epsilon"] == 0.5);
    CHECK(doc["norm"] == "linf");
    CHECK(doc["order_method"] == "index");
    CHECK(doc["search"] == "quickxplain");
    CHECK(doc["confidence_ranking"] == false);
    CHECK(doc["oracle_calls"] == r.stats.checkvalid_calls);
    CHECK(doc["solve_calls"] == r.stats.solve_calls);
    CHECK(doc["max_nodes"] == spec.max_nodes);
    CHECK(doc.contains("wall_time_ms"));
}

TEST_CASE("PGM mask marks explanation pixels") {
    std::ostringstream out;
    const std::size_t expl[] = {0, 4};
    write_pgm_mask(out, expl, 3, 2);
    CHECK(out.str() == "P2\n3 2\n255\n255 0 0\n0 255 0\n");
    const std::size_t outside[] = {6};
    std::ostringstream sink;
    CHECK_THROWS_AS(write_pgm_mask(sink, outside, 3, 2), Error);
}
