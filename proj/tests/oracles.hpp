#pragma once

// Brute-force reference implementations used to check the metrics module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double r2(const std::vector<double>& y, const std::vector<double>& yhat) {
  const double m = mean(y);
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    tot += (y[i] - m) * (y[i] - m);
  }
  return 1.0 - res / tot;
}

// 1 + (#smaller) + (#equal others) / 2, the mid-rank of every tie group.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double smaller = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) smaller += 1.0;
      else if (x[j] == x[i] && j != i) equal += 1.0;
    }
    r[i] = 1.0 + smaller + equal / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
inline double auc(const std::vector<double>& s, const std::vector<int>& label) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (label[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (label[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) good += 1.0;
      else if (s[i] == s[j]) good += 0.5;
    }
  }
  return good / pairs;
}

// Best accuracy of "score >= t" over every t that changes the partition.
inline double best_threshold_accuracy(const std::vector<double>& s, const std::vector<int>& label) {
  std::vector<double> cuts = s;
  cuts.push_back(*std::max_element(s.begin(), s.end()) + 1.0);
  double best = 0.0;
  for (double t : cuts) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < s.size(); ++i) ok += (s[i] >= t ? 1 : 0) == label[i];
    best = std::max(best, static_cast<double>(ok) / static_cast<double>(s.size()));
  }
  return best;
}

inline double decode(const std::vector<double>& p, double lo, double hi) {
  const double w = (hi - lo) / static_cast<double>(p.size());
  double v = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) v += p[i] * (lo + w * (static_cast<double>(i) + 0.5));
  return v;
}

}  // namespace oracle
