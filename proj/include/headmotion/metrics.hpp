#pragma once

#include <span>
#include <string>
#include <vector>

#include "headmotion/manifest.hpp"
#include "headmotion/volume.hpp"

namespace headmotion::metrics {

/// 1 - SS_res / SS_tot. Throws ConstantInput when y is constant.
double r2(std::span<const double> y, std::span<const double> yhat);

/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);

struct Correlation {
  double rho = 0.0;
  double p = 1.0;
};

enum class PValueMethod { TApproximation, ExactPermutation };

/// Spearman rank correlation with a two-sided p-value. The exact permutation test is
/// available for n <= 10.
Correlation spearman(std::span<const double> x, std::span<const double> y,
                     PValueMethod method = PValueMethod::TApproximation);

/// Average edge strength: per axial slice, in-plane central-difference gradient magnitude,
/// Otsu threshold on the interior gradients, mean gradient over edge voxels; averaged over
/// slices that have any edge voxel. Throws NoEdges when no slice has one.
double aes(const Volume& v);

/// Otsu threshold of `values` over a 256-bin histogram spanning [min, max].
double otsu_threshold(std::span<const double> values);

struct CovariateFit {
  double rho = 0.0;
  double p = 1.0;
  double slope = 0.0;  // score = slope * covariate + intercept
  double intercept = 0.0;
  std::size_t n = 0;
};

/// Spearman correlation of `scores` (one per manifest entry, manifest order) against the named
/// covariate, plus the least-squares line. Missing covariate rows are listed in the error.
CovariateFit correlate_covariate(std::span<const double> scores, const std::string& covariate,
                                 const io::DatasetManifest& manifest);

/// Same computation on plain vectors.
CovariateFit correlate(std::span<const double> scores, std::span<const double> covariate);

struct Separation {
  double threshold = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
};

/// AUC by the rank statistic (higher score = positive class) and the accuracy-maximizing
/// threshold (score >= threshold predicts positive).
Separation threshold_separation(std::span<const double> scores, std::span<const int> labels);

/// P(score_pos > score_neg) + 0.5 P(tie).
double auc(std::span<const double> scores, std::span<const int> labels);

struct EvalRow {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  double p_value = 0.0;
  bool has_p = false;
};

/// `metric,value,n,p_value` CSV.
std::string format_report(const std::vector<EvalRow>& rows);

}  // namespace headmotion::metrics
