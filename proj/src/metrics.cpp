#include "headmotion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"

namespace headmotion::metrics {

namespace {

void require_same_length(std::size_t a, std::size_t b, std::size_t min_n) {
  if (a != b) throw Error(ErrorKind::ShapeMismatch, "input lengths differ");
  if (a < min_n) {
    throw Error(ErrorKind::DegenerateInput, "need at least " + std::to_string(min_n) + " samples");
  }
}

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double r2(std::span<const double> y, std::span<const double> yhat) {
  require_same_length(y.size(), yhat.size(), 2);
  const double m = mean(y);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - m) * (y[i] - m);
  }
  if (ss_tot == 0.0) throw Error(ErrorKind::ConstantInput, "R^2 is undefined for constant targets");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), 2);
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::ConstantInput, "correlation of a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Correlation spearman(std::span<const double> x, std::span<const double> y, PValueMethod method) {
  require_same_length(x.size(), y.size(), 3);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Correlation c;
  c.rho = pearson(rx, ry);
  const double n = static_cast<double>(x.size());
  if (method == PValueMethod::ExactPermutation) {
    if (x.size() > 10) throw Error(ErrorKind::Config, "exact permutation test is limited to n <= 10");
    std::vector<double> perm = ry;
    std::sort(perm.begin(), perm.end());
    std::size_t total = 0, extreme = 0;
    const double threshold = std::abs(c.rho) - 1e-12;
    do {
      ++total;
      double r = 0.0;
      try {
        r = pearson(rx, perm);
      } catch (const Error&) {
        r = 0.0;
      }
      if (std::abs(r) >= threshold) ++extreme;
    } while (std::next_permutation(perm.begin(), perm.end()));
    c.p = static_cast<double>(extreme) / static_cast<double>(total);
    return c;
  }
  if (std::abs(c.rho) >= 1.0) {
    c.p = 0.0;
    return c;
  }
  const double t = c.rho * std::sqrt((n - 2.0) / (1.0 - c.rho * c.rho));
  const boost::math::students_t dist(n - 2.0);
  c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

double otsu_threshold(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::DegenerateInput, "Otsu threshold of an empty set");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) return hi;
  constexpr int kBins = 256;
  std::vector<double> hist(kBins, 0.0);
  const double width = (hi - lo) / kBins;
  for (double v : values) {
    const int b = std::min(kBins - 1, static_cast<int>((v - lo) / width));
    hist[b] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins - 1; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  // Values at or above the upper edge of the best class-0 bin are foreground.
  return lo + (best_bin + 1) * width;
}

double aes(const Volume& v) {
  const auto [nx, ny, nz] = v.dims();
  double total = 0.0;
  int slices = 0;
  std::vector<double> grad;
  for (int z = 0; z < nz; ++z) {
    grad.clear();
    for (int y = 1; y + 1 < ny; ++y) {
      for (int x = 1; x + 1 < nx; ++x) {
        const double gx = (static_cast<double>(v.at(x + 1, y, z)) - v.at(x - 1, y, z)) / 2.0;
        const double gy = (static_cast<double>(v.at(x, y + 1, z)) - v.at(x, y - 1, z)) / 2.0;
        grad.push_back(std::hypot(gx, gy));
      }
    }
    if (grad.empty()) continue;
    const auto [lo, hi] = std::minmax_element(grad.begin(), grad.end());
    if (*hi <= *lo) continue;
    const double thr = otsu_threshold(grad);
    double sum = 0.0;
    std::size_t count = 0;
    for (double g : grad) {
      if (g >= thr) {
        sum += g;
        ++count;
      }
    }
    if (count == 0) continue;
    total += sum / static_cast<double>(count);
    ++slices;
  }
  if (slices == 0) throw Error(ErrorKind::NoEdges, "volume has no detectable edges");
  return total / slices;
}

CovariateFit correlate(std::span<const double> scores, std::span<const double> covariate) {
  require_same_length(scores.size(), covariate.size(), 3);
  CovariateFit fit;
  const auto c = spearman(scores, covariate);
  fit.rho = c.rho;
  fit.p = c.p;
  fit.n = scores.size();
  const double mx = mean(covariate), my = mean(scores);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    sxy += (covariate[i] - mx) * (scores[i] - my);
    sxx += (covariate[i] - mx) * (covariate[i] - mx);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

CovariateFit correlate_covariate(std::span<const double> scores, const std::string& covariate,
                                 const io::DatasetManifest& manifest) {
  if (scores.size() != manifest.size()) {
    throw Error(ErrorKind::ShapeMismatch, "one score per manifest entry is required");
  }
  std::vector<double> values;
  std::string missing;
  for (const auto& e : manifest.entries()) {
    const auto it = e.covariates.find(covariate);
    if (it == e.covariates.end()) {
      missing += (missing.empty() ? "" : ", ") + e.volume;
    } else {
      values.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::MissingCovariate, "covariate '" + covariate + "' missing for: " + missing);
  }
  return correlate(scores, values);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores.size(), labels.size(), 2);
  const auto ranks = average_ranks(scores);
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorKind::Parse, "labels must be 0 or 1");
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += ranks[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw Error(ErrorKind::SingleClass, "both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Separation threshold_separation(std::span<const double> scores, std::span<const int> labels) {
  Separation s;
  s.auc = auc(scores, labels);
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  // Candidates: below everything, every midpoint between adjacent distinct scores, above everything.
  std::vector<double> candidates;
  candidates.push_back(sorted.front() - 1.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  candidates.push_back(sorted.back() + 1.0);

  const double n = static_cast<double>(scores.size());
  auto accuracy = [&](double thr) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const int predicted = scores[i] >= thr ? 1 : 0;
      if (predicted == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / n;
  };
  // Closest cross-class pair: the gap the tie-break leans toward.
  double pair_mid = 0.0, pair_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] == 0 && labels[j] == 1) {
        const double gap = std::abs(scores[j] - scores[i]);
        if (gap < pair_gap) {
          pair_gap = gap;
          pair_mid = 0.5 * (scores[i] + scores[j]);
        }
      }
    }
  }
  s.accuracy = -1.0;
  for (double thr : candidates) {
    const double acc = accuracy(thr);
    const bool better = acc > s.accuracy;
    const bool tie_closer = acc == s.accuracy && std::abs(thr - pair_mid) < std::abs(s.threshold - pair_mid);
    if (better || tie_closer) {
      s.accuracy = acc;
      s.threshold = thr;
    }
  }
  return s;
}

std::string format_report(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << "metric,value,n,p_value\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << detail::format_double(r.value) << ',' << r.n << ','
        << (r.has_p ? detail::format_double(r.p_value) : "") << '\n';
  }
  return out.str();
}

}  // namespace headmotion::metrics
