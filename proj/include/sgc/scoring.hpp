#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "sgc/core.hpp"
#include "sgc/error.hpp"
#include "sgc/hierarchy.hpp"

namespace sgc::score {

struct ScorerConfig {
  double lambda = 0.5;  // fusion weight in [0, 1]
  double tau = 0.0;     // evaluator tolerance, >= 0
  Vec text_tokens;      // learned offset; empty = zero

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0)
      throw Error(Errc::ParseError, "lambda must lie in [0, 1]");
    if (tau < 0.0) throw Error(Errc::ParseError, "tau must be >= 0");
    if (!all_finite(text_tokens))
      throw Error(Errc::NonFiniteValue, "text tokens contain NaN/Inf");
  }
};

struct ScoreBreakdown {
  int class_id = 0;
  std::vector<double> p;  // per-level cosine scores
  std::vector<int> u;     // evaluator bits, size |p| - 1
  double r = 0.0;         // running average over the accepted prefix
  double base = 0.0;      // initial score plus token offset
  double s = 0.0;         // fused score
};

/// Cosine score of the query against every level embedding, in order.
inline std::vector<double> level_scores(const Vec& x, const hier::ClassEntry& entry) {
  std::vector<double> p;
  p.reserve(entry.levels.size());
  for (const hier::Level& l : entry.levels) p.push_back(cosine_sim(l.embedding, x));
  return p;
}

/// A deeper description is accepted only if its score strictly exceeds
/// the previous one by more than the tolerance.
inline std::vector<int> evaluator_bits(const std::vector<double>& p, double tau) {
  if (p.empty()) throw Error(Errc::EmptyInput, "no level scores");
  std::vector<int> u;
  u.reserve(p.size() - 1);
  for (std::size_t k = 0; k + 1 < p.size(); ++k)
    u.push_back(p[k + 1] > p[k] + tau ? 1 : 0);
  return u;
}

/// Running average of the longest prefix accepted by the evaluator bits.
inline double running_average(const std::vector<double>& p, const std::vector<int>& u) {
  if (p.empty()) throw Error(Errc::EmptyInput, "no level scores");
  if (u.size() + 1 != p.size())
    throw Error(Errc::DimMismatch, "evaluator bits must have one entry less than scores");
  double num = p[0];
  double den = 1.0;
  double prod = 1.0;
  for (std::size_t j = 1; j < p.size(); ++j) {
    prod *= u[j - 1];
    num += p[j] * prod;
    den += prod;
  }
  return num / den;
}

/// Full per-class breakdown: level scores, evaluator bits, running
/// average, and the lambda-fused final score.
inline ScoreBreakdown fused_score(const Vec& x, const hier::ClassEntry& entry,
                                  const ScorerConfig& cfg) {
  if (entry.levels.empty())
    throw Error(Errc::EmptyHierarchy, "class '" + entry.name + "' has no levels");
  ScoreBreakdown b;
  b.class_id = entry.class_id;
  b.p = level_scores(x, entry);
  b.u = evaluator_bits(b.p, cfg.tau);
  b.r = running_average(b.p, b.u);
  double offset = 0.0;
  if (!cfg.text_tokens.empty()) offset = dot(cfg.text_tokens, x);
  b.base = b.p[0] + offset;
  b.s = (1.0 - cfg.lambda) * b.base + cfg.lambda * b.r;
  return b;
}

/// Scores the query against every class, ranked by fused score
/// descending; ties break toward the smaller class id.
inline std::vector<ScoreBreakdown> classify(const Vec& x, const hier::ClassHierarchy& h,
                                            const ScorerConfig& cfg) {
  cfg.validate();
  if (h.classes.empty()) throw Error(Errc::EmptyHierarchy, "hierarchy has no classes");
  std::vector<ScoreBreakdown> out;
  out.reserve(h.classes.size());
  for (const hier::ClassEntry& e : h.classes) out.push_back(fused_score(x, e, cfg));
  std::sort(out.begin(), out.end(), [](const ScoreBreakdown& a, const ScoreBreakdown& b) {
    if (a.s != b.s) return a.s > b.s;
    return a.class_id < b.class_id;
  });
  return out;
}

}  // namespace sgc::score
