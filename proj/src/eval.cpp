#include "superres/eval.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace superres {

MatchResult greedy_match(const std::vector<Point>& truth, const std::vector<Point>& estimate, double r) {
  if (!std::isfinite(r) || r <= 0.0) throw InvalidArgument("greedy_match: radius must be > 0");
  std::vector<MatchPair> edges;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = 0; j < estimate.size(); ++j) {
      const double d = distance(truth[i], estimate[j]);
      if (d < r) edges.push_back({i, j, d});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const MatchPair& a, const MatchPair& b) {
    return std::tie(a.distance, a.truth, a.estimate) < std::tie(b.distance, b.truth, b.estimate);
  });

  MatchResult out;
  out.n_truth = truth.size();
  out.n_estimate = estimate.size();
  std::vector<bool> truth_used(truth.size(), false);
  std::vector<bool> est_used(estimate.size(), false);
  for (const MatchPair& e : edges) {
    if (truth_used[e.truth] || est_used[e.estimate]) continue;
    truth_used[e.truth] = true;
    est_used[e.estimate] = true;
    out.pairs.push_back(e);
  }
  out.tp = out.pairs.size();
  out.fn = out.n_truth - out.tp;
  out.fp = out.n_estimate - out.tp;
  return out;
}

MatchResult f_score(MatchResult match) {
  if (match.n_truth == 0 && match.n_estimate == 0) {
    throw UndefinedScore("f_score: no true sources and no estimates");
  }
  const auto tp = static_cast<double>(match.tp);
  match.precision = match.n_estimate == 0 ? 0.0 : tp / static_cast<double>(match.n_estimate);
  match.recall = match.n_truth == 0 ? 0.0 : tp / static_cast<double>(match.n_truth);
  const double denom = match.precision + match.recall;
  match.fscore = denom == 0.0 ? 0.0 : 2.0 * match.precision * match.recall / denom;
  return match;
}

MatchResult score_estimate(const std::vector<Point>& truth, const std::vector<Point>& estimate, double r) {
  return f_score(greedy_match(truth, estimate, r));
}

}  // namespace superres
