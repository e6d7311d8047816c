#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "superres/core.hpp"

namespace superres {

/// Raised when precision and recall are both undefined (no truth, no estimates).
class UndefinedScore : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct MatchPair {
  std::size_t truth = 0;
  std::size_t estimate = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::size_t n_truth = 0;
  std::size_t n_estimate = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

/// Greedy bipartite matching: every (truth, estimate) pair closer than r
/// (strictly) is an edge; edges are taken in ascending (distance, truth
/// index, estimate index) order, skipping any that reuse a vertex.
/// Fills pairs and TP/FP/FN; scores are left at zero.
MatchResult greedy_match(const std::vector<Point>& truth, const std::vector<Point>& estimate, double r);

/// Fills precision = TP/N, recall = TP/M and their harmonic mean.
/// Throws UndefinedScore when M = N = 0.
MatchResult f_score(MatchResult match);

/// greedy_match followed by f_score.
MatchResult score_estimate(const std::vector<Point>& truth, const std::vector<Point>& estimate, double r);

}  // namespace superres
