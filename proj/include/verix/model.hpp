#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace verix {

/// Raised for malformed inputs: bad documents, dimension mismatches, non-finite values.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool operator==(const Interval&) const = default;
};

enum class LayerKind { dense, relu };

/// A dense layer maps `in` to `out` units as Wx + b with W stored out x in.
/// ReLU layers carry no parameters.
struct Layer {
    LayerKind kind = LayerKind::relu;
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;

    static Layer dense(Eigen::MatrixXd weights, Eigen::VectorXd bias);
    static Layer relu();

    bool is_dense() const { return kind == LayerKind::dense; }
};

/// Feed-forward classifier built from dense and ReLU layers. Outputs are raw
/// logits, one per label.
struct Network {
    std::string name;
    std::size_t input_dim = 0;
    std::vector<std::string> labels;
    std::vector<Layer> layers;
    std::optional<std::vector<Interval>> input_bounds;

    std::size_t output_dim() const { return labels.size(); }

    /// Checks the width chain, parameter finiteness and input bounds; throws Error.
    void validate() const;
};

struct Logits {
    Eigen::VectorXd values;
    std::size_t predicted = 0;
};

struct Sample {
    std::vector<double> features;
    std::optional<std::size_t> label;
};

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(const Eigen::VectorXd& values);

/// Exact forward pass without argument checking.
Eigen::VectorXd forward(const Network& network, const Eigen::VectorXd& x);

Logits infer(const Network& network, std::span<const double> x);

Network load_model(std::istream& source);
Network load_model_file(const std::string& path);
void save_model(const Network& network, std::ostream& sink);

std::vector<Sample> load_dataset(std::istream& source, std::size_t input_dim);
std::vector<Sample> load_dataset_file(const std::string& path, std::size_t input_dim);

inline Eigen::VectorXd to_vector(std::span<const double> x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& x) {
    return {x.data(), x.data() + x.size()};
}

} // namespace verix
