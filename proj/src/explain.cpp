#include "verix/explain.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

#include <json.hpp>

namespace verix {

namespace {

using Features = std::vector<std::size_t>;

Features join(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    Features out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

// Shared bookkeeping: counts oracle calls and reports irrelevant-set growth.
class Driver {
public:
    Driver(const ValidityOracle& oracle, const SearchHooks& hooks) : oracle_(oracle), hooks_(hooks) {}

    bool check(std::span<const std::size_t> base, std::span<const std::size_t> extra) {
        ++calls_;
        const Features subset = join(base, extra);
        return oracle_(subset);
    }

    void grew(std::span<const std::size_t> irrelevant) const {
        if (hooks_.on_irrelevant_grow)
            hooks_.on_irrelevant_grow(irrelevant);
    }

    std::size_t calls() const { return calls_; }

private:
    const ValidityOracle& oracle_;
    const SearchHooks& hooks_;
    std::size_t calls_ = 0;
};

class BinaryDriver : Driver {
public:
    using Driver::Driver;

    SearchOutcome run(std::span<const std::size_t> order) {
        if (!order.empty())
            visit(order);
        return {std::move(a_), std::move(b_), calls()};
    }

private:
    void visit(std::span<const std::size_t> theta) {
        if (theta.size() == 1) {
            if (check(b_, theta))
                accept(theta);
            else
                reject(theta);
            return;
        }
        const auto [phi, psi] = split_halves(theta);
        if (check(b_, phi)) {
            accept(phi);
            if (check(b_, psi))
                accept(psi);
            else if (psi.size() == 1)
                reject(psi);
            else
                visit(psi);
        } else {
            if (phi.size() == 1)
                reject(phi);
            else
                visit(phi);
            visit(psi);
        }
    }

    void accept(std::span<const std::size_t> s) {
        b_.insert(b_.end(), s.begin(), s.end());
        grew(b_);
    }
    void reject(std::span<const std::size_t> s) { a_.insert(a_.end(), s.begin(), s.end()); }

    Features a_;
    Features b_;
};

class QuickXplainDriver : Driver {
public:
    QuickXplainDriver(const ValidityOracle& oracle, const SearchHooks& hooks, bool shortcuts)
        : Driver(oracle, hooks), shortcuts_(shortcuts) {}

    SearchOutcome run(std::span<const std::size_t> order) {
        if (order.empty())
            return {};
        auto [a, b] = qxp({}, {}, order);
        return {std::move(a), std::move(b), calls()};
    }

private:
    // Returns (explanation features found in theta, irrelevant set after theta).
    // alpha, the explanation accumulated so far, never enters an oracle query;
    // it is threaded through to mirror the partition (alpha, beta, theta).
    std::pair<Features, Features> qxp(const Features& alpha, const Features& beta, std::span<const std::size_t> theta) {
        if (theta.size() == 1) {
            if (check(beta, theta)) {
                Features grown = join(beta, theta);
                grew(grown);
                return {{}, std::move(grown)};
            }
            return {Features(theta.begin(), theta.end()), beta};
        }
        const auto [phi, psi] = split_halves(theta);
        if (check(beta, phi)) {
            Features grown = join(beta, phi);
            grew(grown);
            return qxp(alpha, grown, psi);
        }
        if (check(beta, psi)) {
            Features grown = join(beta, psi);
            grew(grown);
            return qxp(alpha, grown, phi);
        }

        Features phi_expl;
        Features beta1;
        if (shortcuts_ && phi.size() == 1) {
            phi_expl.assign(phi.begin(), phi.end());
            beta1 = beta;
        } else {
            std::tie(phi_expl, beta1) = qxp(join(alpha, psi), beta, phi);
        }

        Features psi_expl;
        Features beta2;
        if (shortcuts_ && psi.size() == 1) {
            psi_expl.assign(psi.begin(), psi.end());
            beta2 = std::move(beta1);
        } else {
            std::tie(psi_expl, beta2) = qxp(join(alpha, phi_expl), beta1, psi);
        }
        return {join(phi_expl, psi_expl), std::move(beta2)};
    }

    bool shortcuts_;
};

Features sorted(Features v) {
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

std::string_view to_string(SearchMethod method) {
    switch (method) {
    case SearchMethod::sequential:
        return "sequential";
    case SearchMethod::binary:
        return "binary";
    case SearchMethod::quickxplain:
        break;
    }
    return "quickxplain";
}

SearchMethod parse_search_method(std::string_view name) {
    for (SearchMethod m : {SearchMethod::sequential, SearchMethod::binary, SearchMethod::quickxplain})
        if (to_string(m) == name)
            return m;
    throw Error("unknown search method '" + std::string(name) + "'");
}

std::pair<std::span<const std::size_t>, std::span<const std::size_t>> split_halves(std::span<const std::size_t> items) {
    const std::size_t first = (items.size() + 1) / 2;
    return {items.first(first), items.subspan(first)};
}

SearchOutcome sequential_search(std::span<const std::size_t> order, const ValidityOracle& oracle,
                                const SearchHooks& hooks) {
    Driver driver(oracle, hooks);
    SearchOutcome out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (driver.check(out.irrelevant, order.subspan(i, 1))) {
            out.irrelevant.push_back(order[i]);
            driver.grew(out.irrelevant);
        } else {
            out.explanation.push_back(order[i]);
        }
    }
    out.oracle_calls = driver.calls();
    return out;
}

SearchOutcome binary_search(std::span<const std::size_t> order, const ValidityOracle& oracle,
                            const SearchHooks& hooks) {
    return BinaryDriver(oracle, hooks).run(order);
}

SearchOutcome quickxplain_search(std::span<const std::size_t> order, const ValidityOracle& oracle,
                                 const SearchHooks& hooks, bool singleton_shortcuts) {
    return QuickXplainDriver(oracle, hooks, singleton_shortcuts).run(order);
}

SearchOutcome run_search(SearchMethod method, std::span<const std::size_t> order, const ValidityOracle& oracle,
                         const SearchHooks& hooks) {
    switch (method) {
    case SearchMethod::sequential:
        return sequential_search(order, oracle, hooks);
    case SearchMethod::binary:
        return binary_search(order, oracle, hooks);
    case SearchMethod::quickxplain:
        break;
    }
    return quickxplain_search(order, oracle, hooks);
}

ExplanationResult explain(const Network& network, std::span<const double> x, const Traversal& traversal,
                          const PerturbationSpec& spec, SearchMethod search, bool confidence_ranking,
                          const SearchHooks& hooks) {
    const auto start = std::chrono::steady_clock::now();
    if (traversal.order.size() != network.input_dim || sorted(traversal.order) != traversal_order_index(network.input_dim).order)
        throw Error("traversal is not a permutation of the input features");

    ValidityChecker checker(network, x, spec, confidence_ranking);
    ValidityOracle oracle = [&checker](std::span<const std::size_t> subset) { return checker(subset); };

    ExplanationResult result;
    result.predicted = checker.logits().predicted;
    result.traversal = traversal;
    result.spec = spec;
    result.search = search;
    result.confidence_ranking = confidence_ranking;

    if (oracle(traversal.order)) {
        result.robust = true;
        result.irrelevant = sorted(traversal.order);
    } else {
        SearchOutcome out = run_search(search, traversal.order, oracle, hooks);
        result.explanation = sorted(std::move(out.explanation));
        result.irrelevant = sorted(std::move(out.irrelevant));
    }
    result.stats = checker.stats();
    result.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

ExplanationResult explain_sequential(const Network& network, std::span<const double> x, const Traversal& traversal,
                                     const PerturbationSpec& spec, bool confidence_ranking) {
    return explain(network, x, traversal, spec, SearchMethod::sequential, confidence_ranking);
}

ExplanationResult explain_binary(const Network& network, std::span<const double> x, const Traversal& traversal,
                                 const PerturbationSpec& spec, bool confidence_ranking) {
    return explain(network, x, traversal, spec, SearchMethod::binary, confidence_ranking);
}

ExplanationResult explain_quickxplain(const Network& network, std::span<const double> x, const Traversal& traversal,
                                      const PerturbationSpec& spec, bool confidence_ranking) {
    return explain(network, x, traversal, spec, SearchMethod::quickxplain, confidence_ranking);
}

ValidationReport validate_explanation(const Network& network, std::span<const double> x,
                                      const ExplanationResult& result, const PerturbationSpec& spec) {
    ValidationReport report;

    Features all = join(result.explanation, result.irrelevant);
    std::sort(all.begin(), all.end());
    report.partition = all == traversal_order_index(network.input_dim).order;

    ValidityChecker checker(network, x, spec, result.confidence_ranking);
    report.sound = checker(result.irrelevant);

    report.optimal = true;
    for (std::size_t i : result.explanation) {
        const std::size_t extra[] = {i};
        if (checker(join(result.irrelevant, extra))) {
            report.optimal = false;
            report.removable.push_back(i);
        }
    }
    return report;
}

std::string explanation_json(const ExplanationResult& result) {
    nlohmann::ordered_json doc;
    doc["explanation"] = result.explanation;
    doc["irrelevant"] = result.irrelevant;
    doc["robust"] = result.robust;
    doc["predicted"] = result.predicted;
    doc["epsilon"] = result.spec.epsilon;
    doc["norm"] = "linf";
    doc["order_method"] = result.traversal.method;
    doc["search"] = std::string(to_string(result.search));
    doc["confidence_ranking"] = result.confidence_ranking;
    doc["oracle_calls"] = result.stats.checkvalid_calls;
    doc["solve_calls"] = result.stats.solve_calls;
    doc["unknown_verdicts"] = result.stats.unknown_verdicts;
    doc["nodes_expanded"] = result.stats.nodes_expanded;
    doc["min_box_width"] = result.spec.min_box_width;
    doc["max_nodes"] = result.spec.max_nodes;
    doc["delta"] = result.spec.delta;
    doc["traversal"] = result.traversal.order;
    doc["wall_time_ms"] = result.wall_time_ms;
    return doc.dump(2);
}

void write_pgm_mask(std::ostream& out, std::span<const std::size_t> explanation, std::size_t width,
                    std::size_t height) {
    std::vector<int> pixels(width * height, 0);
    for (std::size_t i : explanation) {
        if (i >= pixels.size())
            throw Error("explanation index " + std::to_string(i) + " outside the " + std::to_string(width) + "x" +
                        std::to_string(height) + " mask");
        pixels[i] = 255;
    }
    out << "P2\n" << width << ' ' << height << "\n255\n";
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c)
            out << (c ? " " : "") << pixels[r * width + c];
        out << '\n';
    }
}

} // namespace verix
