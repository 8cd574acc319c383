#include "verix/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <numeric>
#include <string>

namespace verix {

namespace {

constexpr int kDescentSweeps = 20;
constexpr int kCornerCoordinates = 3;
constexpr std::size_t kMaxPatternNeurons = 6;
constexpr int kDualSweeps = 40;

// Half-space g * z + h >= 0.
struct Halfspace {
    Eigen::RowVectorXd g;
    double h;
};

// Upper bound on max a * z + b over the box intersected with the half-spaces,
// from the Lagrangian dual max_box (a + sum beta_i g_i) z + b + sum beta_i h_i,
// which bounds the primal for every beta >= 0. Each beta_i is set by exact
// line search on the convex piecewise-linear dual. Returns -infinity when the
// dual is unbounded below, i.e. the half-spaces do not meet inside the box.
double dual_upper_bound(const Eigen::RowVectorXd& a, double b, const std::vector<Halfspace>& cons,
                        const Box& box, double stop_below) {
    const Eigen::VectorXd mid = box.center();
    const Eigen::VectorXd rad = 0.5 * box.widths();
    auto value = [&](const Eigen::RowVectorXd& v, double c) { return v.dot(mid) + v.cwiseAbs().dot(rad) + c; };

    std::vector<double> beta(cons.size(), 0.0);
    Eigen::RowVectorXd v = a;
    double c = b;
    double current = value(v, c);
    std::vector<std::pair<double, double>> breaks;
    for (int sweep = 0; sweep < kDualSweeps && current >= stop_below; ++sweep) {
        const double before = current;
        for (std::size_t i = 0; i < cons.size(); ++i) {
            const Halfspace& hs = cons[i];
            const Eigen::RowVectorXd v0 = v - beta[i] * hs.g;
            const double c0 = c - beta[i] * hs.h;
            // Right derivative at t = 0, then each breakpoint adds 2 * rad_k * |g_k|.
            double slope = hs.h + hs.g.dot(mid);
            breaks.clear();
            for (Eigen::Index k = 0; k < v0.size(); ++k) {
                const double g = hs.g[k];
                if (g == 0.0 || rad[k] == 0.0)
                    continue;
                const double sign = v0[k] != 0.0 ? (v0[k] > 0.0 ? 1.0 : -1.0) : (g > 0.0 ? 1.0 : -1.0);
                slope += rad[k] * g * sign;
                if (v0[k] * g < 0.0)
                    breaks.emplace_back(-v0[k] / g, 2.0 * rad[k] * std::abs(g));
            }
            double t = 0.0;
            if (slope < 0.0) {
                std::sort(breaks.begin(), breaks.end());
                bool settled = false;
                for (const auto& [at, jump] : breaks) {
                    slope += jump;
                    if (slope >= 0.0) {
                        t = at;
                        settled = true;
                        break;
                    }
                }
                if (!settled)
                    return -std::numeric_limits<double>::infinity();
            }
            beta[i] = t;
            v = v0 + t * hs.g;
            c = c0 + t * hs.h;
        }
        current = value(v, c);
        if (before - current <= 1e-12 * (1.0 + std::abs(before)))
            break;
    }
    return current;
}

// Enumerates the activation patterns of the ReLUs that are unstable over the
// box. Under a fixed pattern the single-output network is affine, so each
// pattern reduces to a linear program bounded through its dual. Returns true
// when no pattern can reach an objective value of -slack.
bool refute_by_patterns(const Network& objective, const Box& box, const std::vector<Box>& layers, double slack) {
    std::size_t unstable = 0;
    for (std::size_t k = 0; k < objective.layers.size(); ++k)
        if (!objective.layers[k].is_dense())
            unstable += static_cast<std::size_t>(
                ((layers[k].lo.array() < 0.0) && (layers[k].hi.array() > 0.0)).count());
    if (unstable == 0 || unstable > kMaxPatternNeurons)
        return false;

    const auto d = static_cast<Eigen::Index>(box.dim());
    std::vector<Halfspace> cons;
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << unstable); ++pattern) {
        cons.clear();
        Eigen::MatrixXd lin = Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd off = Eigen::VectorXd::Zero(d);
        std::size_t bit = 0;
        for (std::size_t k = 0; k < objective.layers.size(); ++k) {
            const Layer& layer = objective.layers[k];
            if (layer.is_dense()) {
                lin = layer.weights * lin;
                off = layer.weights * off + layer.bias;
                continue;
            }
            for (Eigen::Index j = 0; j < lin.rows(); ++j) {
                const double lo = layers[k].lo[j];
                const double hi = layers[k].hi[j];
                bool active = lo >= 0.0;
                if (lo < 0.0 && hi > 0.0) {
                    active = (pattern >> bit++) & 1u;
                    const double sign = active ? 1.0 : -1.0;
                    cons.push_back({sign * lin.row(j), sign * off[j]});
                }
                if (!active) {
                    lin.row(j).setZero();
                    off[j] = 0.0;
                }
            }
        }
        if (dual_upper_bound(lin.row(0), off[0], cons, box, -slack) >= -slack)
            return false;
    }
    return true;
}

// Folds a 1 x n combination of the outputs (plus offset) into the network so
// the result has a single output.
Network scalarize(Network net, const Eigen::RowVectorXd& combination, double offset) {
    if (!net.layers.empty() && net.layers.back().is_dense()) {
        Layer& last = net.layers.back();
        Eigen::MatrixXd w = combination * last.weights;
        Eigen::VectorXd b(1);
        b[0] = combination.dot(last.bias) + offset;
        last = Layer::dense(std::move(w), std::move(b));
    } else {
        Eigen::VectorXd b(1);
        b[0] = offset;
        net.layers.push_back(Layer::dense(combination, std::move(b)));
    }
    net.labels = {"objective"};
    return net;
}

struct SearchResult {
    Verdict verdict = Verdict::unknown;
    Eigen::VectorXd witness;
    std::size_t nodes = 0;
};

// Looks for z in the box with objective(z) > 0 that `confirm` accepts.
class CounterexampleSearch {
public:
    using Confirm = std::function<bool(const Eigen::VectorXd&)>;

    CounterexampleSearch(const Network& objective, Confirm confirm, const PerturbationSpec& spec)
        : objective_(objective), confirm_(std::move(confirm)), spec_(spec) {}

    SearchResult run(const Box& root) {
        SearchResult result;
        if ((root.widths().array() <= 0.0).all()) {
            result.nodes = 1;
            const Eigen::VectorXd z = root.center();
            if (confirm_(z)) {
                result.verdict = Verdict::sat;
                result.witness = z;
            } else {
                result.verdict = Verdict::unsat;
            }
            return result;
        }

        struct Node {
            Box box;
            LinearBounds linear;
            double upper;
        };
        std::vector<Node> stack;
        bool undecided = false;

        auto bound = [&](Box box) -> std::optional<Node> {
            ++result.nodes;
            const std::vector<Box> layers = refined_layer_bounds(objective_, box);
            LinearBounds lin = crown_linear_bounds(objective_, box, layers);
            const OutputBounds crown = lin.concretize(box);
            const double upper = std::min(crown.upper[0], layers.back().hi[0]);
            if (upper < -kSlack || refute_by_patterns(objective_, box, layers, kSlack))
                return std::nullopt;
            return Node{std::move(box), std::move(lin), upper};
        };

        auto root_node = bound(root);
        if (!root_node) {
            result.verdict = Verdict::unsat;
            return result;
        }
        stack.push_back(std::move(*root_node));
        bool at_root = true;

        while (!stack.empty()) {
            Node node = std::move(stack.back());
            stack.pop_back();

            const Eigen::VectorXd widths = node.box.widths();
            const bool leaf = widths.maxCoeff() < spec_.min_box_width;

            if (auto z = probe(node.box, node.linear, at_root || leaf)) {
                result.verdict = Verdict::sat;
                result.witness = std::move(*z);
                return result;
            }
            at_root = false;
            if (leaf) {
                undecided = true;
                continue;
            }
            if (result.nodes + 2 > spec_.max_nodes) {
                undecided = true;
                break;
            }

            const Eigen::Index split = branch_coordinate(node.linear, widths);
            const double mid = 0.5 * (node.box.lo[split] + node.box.hi[split]);
            Box left = node.box;
            Box right = node.box;
            left.hi[split] = mid;
            right.lo[split] = mid;
            auto a = bound(std::move(left));
            auto b = bound(std::move(right));
            // The child with the larger upper bound is explored first.
            if (a && b && a->upper > b->upper)
                std::swap(a, b);
            if (a)
                stack.push_back(std::move(*a));
            if (b)
                stack.push_back(std::move(*b));
        }
        result.verdict = undecided ? Verdict::unknown : Verdict::unsat;
        return result;
    }

private:
    double value(const Eigen::VectorXd& z) const { return forward(objective_, z)[0]; }

    // Coordinate whose width contributes most to the upper linear bound, so
    // halving it cuts the most from the concretized upper bound. Falls back to
    // the widest coordinate when the bound is flat in every splittable one.
    Eigen::Index branch_coordinate(const LinearBounds& lin, const Eigen::VectorXd& widths) const {
        Eigen::Index best = -1;
        double best_score = 0.0;
        for (Eigen::Index k = 0; k < widths.size(); ++k) {
            if (widths[k] < spec_.min_box_width)
                continue;
            const double score = std::abs(lin.upper_coeffs(0, k)) * widths[k];
            if (score > best_score) {
                best_score = score;
                best = k;
            }
        }
        if (best < 0)
            widths.maxCoeff(&best);
        return best;
    }

    bool accept(const Eigen::VectorXd& z, double g) const { return g > 0.0 && confirm_(z); }

    std::optional<Eigen::VectorXd> probe(const Box& box, const LinearBounds& lin, bool descend) const {
        const auto d = static_cast<Eigen::Index>(box.dim());
        std::vector<Eigen::VectorXd> candidates;
        candidates.push_back(box.center());

        // Maximizers of the affine under- and over-estimators.
        for (const Eigen::MatrixXd* coeffs : {&lin.lower_coeffs, &lin.upper_coeffs}) {
            Eigen::VectorXd z(d);
            for (Eigen::Index k = 0; k < d; ++k)
                z[k] = (*coeffs)(0, k) >= 0.0 ? box.hi[k] : box.lo[k];
            candidates.push_back(std::move(z));
        }

        // Corners over the widest coordinates, remaining ones at the center.
        std::vector<Eigen::Index> dims(static_cast<std::size_t>(d));
        std::iota(dims.begin(), dims.end(), Eigen::Index{0});
        const Eigen::VectorXd widths = box.widths();
        std::stable_sort(dims.begin(), dims.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return widths[a] > widths[b]; });
        const int corner_dims = static_cast<int>(std::min<Eigen::Index>(kCornerCoordinates, d));
        for (unsigned mask = 0; mask < (1u << corner_dims); ++mask) {
            Eigen::VectorXd z = box.center();
            for (int t = 0; t < corner_dims; ++t) {
                const Eigen::Index k = dims[static_cast<std::size_t>(t)];
                z[k] = (mask >> t) & 1u ? box.hi[k] : box.lo[k];
            }
            candidates.push_back(std::move(z));
        }

        std::size_t best = 0;
        double best_value = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const double g = value(candidates[i]);
            if (accept(candidates[i], g))
                return candidates[i];
            if (g > best_value) {
                best_value = g;
                best = i;
            }
        }
        if (!descend)
            return std::nullopt;

        Eigen::VectorXd z = candidates[best];
        double g = best_value;
        for (int sweep = 0; sweep < kDescentSweeps; ++sweep) {
            bool improved = false;
            for (Eigen::Index k = 0; k < d; ++k) {
                const double current = z[k];
                for (double v : {box.lo[k], box.hi[k], 0.5 * (box.lo[k] + box.hi[k])}) {
                    if (v == current)
                        continue;
                    z[k] = v;
                    const double trial = value(z);
                    if (trial > g) {
                        g = trial;
                        improved = true;
                        if (accept(z, g))
                            return z;
                        break;
                    }
                    z[k] = current;
                }
            }
            if (!improved)
                break;
        }
        return std::nullopt;
    }

    const Network& objective_;
    Confirm confirm_;
    const PerturbationSpec& spec_;
};

void check_query(const Network& network, const Query& query) {
    const std::size_t n = network.output_dim();
    if (query.base.size() != network.input_dim)
        throw Error("query input has the wrong dimension");
    if (query.predicted >= n || query.target >= n)
        throw Error("query class index out of range");
    if (query.predicted == query.target)
        throw Error("query target must differ from the predicted class");
    for (std::size_t i : query.free)
        if (i >= network.input_dim)
            throw Error("feature index " + std::to_string(i) + " out of range");
}

Outcome to_outcome(const SearchResult& r, const FreeSubspace& sub) {
    Outcome out;
    out.verdict = r.verdict;
    out.nodes_expanded = r.nodes;
    if (r.verdict == Verdict::sat)
        out.witness = to_std(sub.lift(r.witness));
    return out;
}

} // namespace

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
    case Verdict::unsat:
        return "UNSAT";
    case Verdict::sat:
        return "SAT";
    case Verdict::unknown:
        break;
    }
    return "UNKNOWN";
}

Outcome solve(const Network& network, const Query& query, const PerturbationSpec& spec) {
    check_query(network, query);
    const FreeSubspace sub = restrict_to_free(network, query.base, query.free, spec.epsilon);

    Eigen::RowVectorXd diff = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(network.output_dim()));
    diff[static_cast<Eigen::Index>(query.target)] = 1.0;
    diff[static_cast<Eigen::Index>(query.predicted)] -= 1.0;
    const Network objective = scalarize(sub.network, diff, 0.0);

    const auto c = static_cast<Eigen::Index>(query.predicted);
    const auto j = static_cast<Eigen::Index>(query.target);
    auto confirm = [&](const Eigen::VectorXd& z) {
        const Eigen::VectorXd y = forward(network, sub.lift(z));
        return y[j] > y[c];
    };
    CounterexampleSearch search(objective, confirm, spec);
    return to_outcome(search.run(sub.box), sub);
}

std::vector<std::size_t> confidence_ranking(const Logits& logits) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < static_cast<std::size_t>(logits.values.size()); ++i)
        if (i != logits.predicted)
            order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return logits.values[static_cast<Eigen::Index>(a)] > logits.values[static_cast<Eigen::Index>(b)];
    });
    return order;
}

std::vector<std::size_t> index_ranking(const Logits& logits) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < static_cast<std::size_t>(logits.values.size()); ++i)
        if (i != logits.predicted)
            order.push_back(i);
    return order;
}

ValidityChecker::ValidityChecker(const Network& network, std::span<const double> x, const PerturbationSpec& spec,
                                 bool use_confidence_ranking)
    : network_(network), x_(x.begin(), x.end()), spec_(spec), logits_(infer(network, x)) {
    spec_.validate();
    order_ = use_confidence_ranking ? confidence_ranking(logits_) : index_ranking(logits_);
    stats_.solve_calls_per_class.assign(network.output_dim(), 0);
}

bool ValidityChecker::operator()(std::span<const std::size_t> subset) {
    ++stats_.checkvalid_calls;
    if (network_.output_dim() == 1)
        return check_regression(subset);
    return check_classification(subset);
}

bool ValidityChecker::check_classification(std::span<const std::size_t> subset) {
    if (subset.empty())
        return true;
    Query query{x_, {subset.begin(), subset.end()}, logits_.predicted, 0};
    for (std::size_t j : order_) {
        query.target = j;
        const Outcome outcome = solve(network_, query, spec_);
        ++stats_.solve_calls;
        ++stats_.solve_calls_per_class[j];
        stats_.nodes_expanded += outcome.nodes_expanded;
        if (outcome.verdict == Verdict::unknown)
            ++stats_.unknown_verdicts;
        if (outcome.verdict != Verdict::unsat)
            return false;
    }
    return true;
}

bool ValidityChecker::check_regression(std::span<const std::size_t> subset) {
    if (subset.empty())
        return true;
    for (std::size_t i : subset)
        if (i >= network_.input_dim)
            throw Error("feature index " + std::to_string(i) + " out of range");
    const FreeSubspace sub = restrict_to_free(network_, x_, subset, spec_.epsilon);
    const double fx = logits_.values[0];
    const double delta = spec_.delta;

    // Two one-sided searches: f(x') > f(x) + delta and f(x') < f(x) - delta.
    for (double sign : {1.0, -1.0}) {
        Eigen::RowVectorXd combination(1);
        combination[0] = sign;
        const Network objective = scalarize(sub.network, combination, -sign * fx - delta);
        auto confirm = [&](const Eigen::VectorXd& z) {
            return sign * (forward(network_, sub.lift(z))[0] - fx) > delta;
        };
        CounterexampleSearch search(objective, confirm, spec_);
        const SearchResult r = search.run(sub.box);
        ++stats_.solve_calls;
        ++stats_.solve_calls_per_class[0];
        stats_.nodes_expanded += r.nodes;
        if (r.verdict == Verdict::unknown)
            ++stats_.unknown_verdicts;
        if (r.verdict != Verdict::unsat)
            return false;
    }
    return true;
}

bool check_valid(const Network& network, std::span<const double> x, std::span<const std::size_t> subset,
                 const PerturbationSpec& spec, OracleStats& stats, bool use_confidence_ranking) {
    ValidityChecker checker(network, x, spec, use_confidence_ranking);
    const bool valid = checker(subset);
    const OracleStats& s = checker.stats();
    stats.checkvalid_calls += s.checkvalid_calls;
    stats.solve_calls += s.solve_calls;
    stats.unknown_verdicts += s.unknown_verdicts;
    stats.nodes_expanded += s.nodes_expanded;
    if (stats.solve_calls_per_class.size() < s.solve_calls_per_class.size())
        stats.solve_calls_per_class.resize(s.solve_calls_per_class.size(), 0);
    for (std::size_t j = 0; j < s.solve_calls_per_class.size(); ++j)
        stats.solve_calls_per_class[j] += s.solve_calls_per_class[j];
    return valid;
}

bool check_valid_regression(const Network& network, std::span<const double> x, std::span<const std::size_t> subset,
                            const PerturbationSpec& spec, OracleStats& stats) {
    if (network.output_dim() != 1)
        throw Error("regression check requires a single-output network");
    return check_valid(network, x, subset, spec, stats);
}

} // namespace verix
