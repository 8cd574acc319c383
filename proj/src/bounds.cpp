#include "verix/bounds.hpp"

#include <cmath>
#include <string>

namespace verix {

namespace {

void require_dim(const Network& network, const Box& box) {
    if (box.dim() != network.input_dim)
        throw Error("box has " + std::to_string(box.dim()) + " dimensions, network expects " +
                    std::to_string(network.input_dim));
}

// Relaxation of one ReLU neuron given its pre-activation interval:
// lower_slope * z <= relu(z) <= upper_slope * z + upper_intercept.
struct ReluRelaxation {
    double lower_slope;
    double upper_slope;
    double upper_intercept;
};

ReluRelaxation relax_relu(double l, double u) {
    if (u <= 0.0)
        return {0.0, 0.0, 0.0};
    if (l >= 0.0)
        return {1.0, 1.0, 0.0};
    const double slope = u / (u - l);
    return {u >= -l ? 1.0 : 0.0, slope, -slope * l};
}

// Backward substitution of `spec` times the output of layers [0, end) down to
// the input, relaxing each ReLU from its input enclosure in `pre`.
LinearBounds backward(const Network& network, std::size_t end, const std::vector<Box>& pre,
                      const Eigen::MatrixXd& spec) {
    const Eigen::Index n = spec.rows();
    Eigen::MatrixXd lam_u = spec;
    Eigen::MatrixXd lam_l = spec;
    Eigen::VectorXd c_u = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd c_l = Eigen::VectorXd::Zero(n);

    for (std::size_t k = end; k-- > 0;) {
        const Layer& layer = network.layers[k];
        if (layer.is_dense()) {
            c_u += lam_u * layer.bias;
            c_l += lam_l * layer.bias;
            lam_u = lam_u * layer.weights;
            lam_l = lam_l * layer.weights;
            continue;
        }
        const Box& in = pre[k];
        for (Eigen::Index j = 0; j < lam_u.cols(); ++j) {
            const ReluRelaxation rx = relax_relu(in.lo[j], in.hi[j]);
            for (Eigen::Index r = 0; r < n; ++r) {
                // Upper bound: positive coefficients take the upper line.
                double& a = lam_u(r, j);
                if (a >= 0.0) {
                    c_u[r] += a * rx.upper_intercept;
                    a *= rx.upper_slope;
                } else {
                    a *= rx.lower_slope;
                }
                // Lower bound: negative coefficients take the upper line.
                double& b = lam_l(r, j);
                if (b >= 0.0) {
                    b *= rx.lower_slope;
                } else {
                    c_l[r] += b * rx.upper_intercept;
                    b *= rx.upper_slope;
                }
            }
        }
    }
    return {std::move(lam_l), std::move(lam_u), std::move(c_l), std::move(c_u)};
}

} // namespace

void PerturbationSpec::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw Error("epsilon must be finite and non-negative");
    if (!(delta >= 0.0) || !std::isfinite(delta))
        throw Error("delta must be finite and non-negative");
    if (!(min_box_width > 0.0))
        throw Error("min_box_width must be positive");
    if (max_nodes < 1)
        throw Error("max_nodes must be at least 1");
}

bool Box::contains(const Eigen::VectorXd& x) const {
    if (x.size() != lo.size())
        return false;
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

void Box::validate() const {
    if (lo.size() != hi.size())
        throw Error("box bounds have different lengths");
    if (!lo.allFinite() || !hi.allFinite())
        throw Error("box bounds must be finite");
    if ((lo.array() > hi.array()).any())
        throw Error("box requires lo <= hi");
}

OutputBounds LinearBounds::concretize(const Box& box) const {
    const Eigen::MatrixXd lp = lower_coeffs.cwiseMax(0.0);
    const Eigen::MatrixXd ln = lower_coeffs.cwiseMin(0.0);
    const Eigen::MatrixXd up = upper_coeffs.cwiseMax(0.0);
    const Eigen::MatrixXd un = upper_coeffs.cwiseMin(0.0);
    OutputBounds out;
    out.lower = lp * box.lo + ln * box.hi + lower_const;
    out.upper = up * box.hi + un * box.lo + upper_const;
    return out;
}

std::vector<Box> ibp_layer_bounds(const Network& network, const Box& box) {
    require_dim(network, box);
    std::vector<Box> result;
    result.reserve(network.layers.size() + 1);
    result.push_back(box);
    for (const Layer& layer : network.layers) {
        const Box& in = result.back();
        Box out;
        if (layer.is_dense()) {
            const Eigen::VectorXd mid = 0.5 * (in.lo + in.hi);
            const Eigen::VectorXd rad = 0.5 * (in.hi - in.lo);
            const Eigen::VectorXd c = layer.weights * mid + layer.bias;
            const Eigen::VectorXd r = layer.weights.cwiseAbs() * rad;
            out.lo = c - r;
            out.hi = c + r;
        } else {
            out.lo = in.lo.cwiseMax(0.0);
            out.hi = in.hi.cwiseMax(0.0);
        }
        result.push_back(std::move(out));
    }
    return result;
}

OutputBounds ibp_bounds(const Network& network, const Box& box) {
    auto layers = ibp_layer_bounds(network, box);
    return {std::move(layers.back().lo), std::move(layers.back().hi)};
}

LinearBounds crown_linear_bounds(const Network& network, const Box& box) {
    return crown_linear_bounds(network, box, ibp_layer_bounds(network, box));
}

LinearBounds crown_linear_bounds(const Network& network, const Box& box, const std::vector<Box>& layer_inputs) {
    require_dim(network, box);
    if (layer_inputs.size() != network.layers.size() + 1)
        throw Error("layer bounds do not match the network depth");
    const auto n = static_cast<Eigen::Index>(network.output_dim());
    return backward(network, network.layers.size(), layer_inputs, Eigen::MatrixXd::Identity(n, n));
}

std::vector<Box> refined_layer_bounds(const Network& network, const Box& box) {
    require_dim(network, box);
    std::vector<Box> result;
    result.reserve(network.layers.size() + 1);
    result.push_back(box);
    for (std::size_t k = 0; k < network.layers.size(); ++k) {
        const Layer& layer = network.layers[k];
        const Box& in = result.back();
        Box out;
        if (!layer.is_dense()) {
            out.lo = in.lo.cwiseMax(0.0);
            out.hi = in.hi.cwiseMax(0.0);
            result.push_back(std::move(out));
            continue;
        }
        const Eigen::VectorXd mid = 0.5 * (in.lo + in.hi);
        const Eigen::VectorXd rad = 0.5 * (in.hi - in.lo);
        const Eigen::VectorXd c = layer.weights * mid + layer.bias;
        const Eigen::VectorXd r = layer.weights.cwiseAbs() * rad;
        out.lo = c - r;
        out.hi = c + r;
        const bool feeds_relu = k + 1 < network.layers.size() && !network.layers[k + 1].is_dense();
        if (feeds_relu && k > 0) {
            const auto width = layer.weights.rows();
            const OutputBounds lin =
                backward(network, k + 1, result, Eigen::MatrixXd::Identity(width, width)).concretize(box);
            out.lo = out.lo.cwiseMax(lin.lower);
            out.hi = out.hi.cwiseMin(lin.upper);
        }
        result.push_back(std::move(out));
    }
    return result;
}

OutputBounds crown_bounds(const Network& network, const Box& box) {
    return crown_linear_bounds(network, box).concretize(box);
}

OutputBounds compute_bounds(const Network& network, const Box& box, BoundMethod method) {
    return method == BoundMethod::ibp ? ibp_bounds(network, box) : crown_bounds(network, box);
}

Box perturbation_box(const Network& network, std::span<const double> x, std::span<const std::size_t> free,
                     double epsilon) {
    if (x.size() != network.input_dim)
        throw Error("input has " + std::to_string(x.size()) + " features, network expects " +
                    std::to_string(network.input_dim));
    Box box = Box::point(to_vector(x));
    for (std::size_t i : free) {
        if (i >= network.input_dim)
            throw Error("feature index " + std::to_string(i) + " out of range");
        const auto k = static_cast<Eigen::Index>(i);
        double lo = x[i] - epsilon;
        double hi = x[i] + epsilon;
        if (network.input_bounds) {
            const Interval& valid = (*network.input_bounds)[i];
            lo = std::max(lo, valid.lo);
            hi = std::min(hi, valid.hi);
        }
        // An input outside its valid range still keeps its own value in the box.
        box.lo[k] = std::min(lo, x[i]);
        box.hi[k] = std::max(hi, x[i]);
    }
    return box;
}

Eigen::VectorXd FreeSubspace::lift(const Eigen::VectorXd& z) const {
    Eigen::VectorXd x = base;
    for (std::size_t k = 0; k < coordinates.size(); ++k)
        x[static_cast<Eigen::Index>(coordinates[k])] = z[static_cast<Eigen::Index>(k)];
    return x;
}

FreeSubspace restrict_to_free(const Network& network, std::span<const double> x, std::span<const std::size_t> free,
                              double epsilon) {
    const Box full = perturbation_box(network, x, free, epsilon);
    FreeSubspace sub;
    sub.base = to_vector(x);

    if (network.layers.empty() || !network.layers.front().is_dense()) {
        sub.network = network;
        sub.box = full;
        sub.coordinates.resize(network.input_dim);
        for (std::size_t i = 0; i < network.input_dim; ++i)
            sub.coordinates[i] = i;
        return sub;
    }

    std::vector<bool> is_free(network.input_dim, false);
    for (std::size_t i : free)
        is_free[i] = true;
    for (std::size_t i = 0; i < network.input_dim; ++i)
        if (is_free[i])
            sub.coordinates.push_back(i);

    const Layer& first = network.layers.front();
    const auto d = static_cast<Eigen::Index>(sub.coordinates.size());
    Eigen::MatrixXd w(first.weights.rows(), d);
    Eigen::VectorXd b = first.bias;
    for (std::size_t i = 0, k = 0; i < network.input_dim; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        if (is_free[i])
            w.col(static_cast<Eigen::Index>(k++)) = first.weights.col(col);
        else
            b += first.weights.col(col) * x[i];
    }

    sub.network.name = network.name;
    sub.network.input_dim = sub.coordinates.size();
    sub.network.labels = network.labels;
    sub.network.layers.reserve(network.layers.size());
    sub.network.layers.push_back(Layer::dense(std::move(w), std::move(b)));
    for (std::size_t k = 1; k < network.layers.size(); ++k)
        sub.network.layers.push_back(network.layers[k]);

    sub.box.lo.resize(d);
    sub.box.hi.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto i = static_cast<Eigen::Index>(sub.coordinates[static_cast<std::size_t>(k)]);
        sub.box.lo[k] = full.lo[i];
        sub.box.hi[k] = full.hi[i];
    }
    return sub;
}

double epsilon_lower_bound(const Network& network, std::span<const double> x, std::size_t feature,
                           const PerturbationSpec& spec, BoundMethod method) {
    if (feature >= network.input_dim)
        throw Error("feature index " + std::to_string(feature) + " out of range");
    const std::size_t c = infer(network, x).predicted;
    // Bounds run on the full box rather than a folded subspace so that features
    // with identical boxes get bitwise identical scores.
    const std::size_t free[] = {feature};
    const OutputBounds b = compute_bounds(network, perturbation_box(network, x, free, spec.epsilon), method);
    return b.lower[static_cast<Eigen::Index>(c)];
}

} // namespace verix
