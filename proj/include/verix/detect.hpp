#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "verix/explain.hpp"
#include "verix/model.hpp"
#include "verix/perturbation.hpp"
#include "verix/traversal.hpp"

namespace verix {

struct PipelineConfig {
    PerturbationSpec spec;
    OrderMethod order = OrderMethod::bound_crown;
    SearchMethod search = SearchMethod::binary;
    bool confidence_ranking = true;
};

struct SampleScore {
    std::size_t sample_id = 0;
    std::size_t predicted = 0;
    std::optional<bool> correct;
    double max_confidence = 0.0;
    std::size_t explanation_size = 0;
    bool robust = false;
    std::size_t oracle_calls = 0;
    /// Set when the sample could not be scored; the other fields are then unset defaults.
    std::optional<std::string> error;
};

/// Largest softmax probability of the logits.
double max_softmax(const Eigen::VectorXd& logits);

SampleScore score_sample(const Network& network, const Sample& sample, std::size_t id, const PipelineConfig& config);

/// Explains every sample; samples are distributed across OpenMP threads and
/// the result keeps input order.
std::vector<SampleScore> score_dataset(const Network& network, std::span<const Sample> samples,
                                       const PipelineConfig& config);

/// Single-threaded reference for score_dataset.
std::vector<SampleScore> score_dataset_reference(const Network& network, std::span<const Sample> samples,
                                                 const PipelineConfig& config);

struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    std::vector<std::pair<double, double>> points;
    double auroc = 0.0;
};

/// Pair-counting AUROC: P(score_pos > score_neg) with ties counting one half.
double auroc(std::span<const double> scores, const std::vector<bool>& positives);

/// Descending-threshold sweep; `auroc` of the result is the trapezoidal area.
RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positives);

/// Hanley-McNeil standard error of an AUROC estimate.
double auroc_standard_error(double auc, std::size_t positives, std::size_t negatives);

struct KnnPoint {
    double confidence = 0.0;
    double size = 0.0;
    int label = 0;
};

/// Majority label of the k nearest training points (Euclidean distance, min-max
/// normalized on the training set when `normalize` is set). Distance ties go
/// to the lower training index, vote ties to the smaller label.
int knn_classify(std::span<const KnnPoint> train, std::size_t k, std::pair<double, double> query,
                 bool normalize = true);

} // namespace verix
