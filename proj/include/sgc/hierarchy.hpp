#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgc/core.hpp"
#include "sgc/error.hpp"
#include "sgc/llm.hpp"

namespace sgc::hier {

struct Level {
  std::string text;
  Vec embedding;  // unit norm
};

struct ClassEntry {
  int class_id = 0;
  std::string name;
  std::vector<Level> levels;  // level 1 first
};

struct BuildLogEntry {
  int depth = 0;              // level index this round produced
  std::vector<int> members;   // class ids, ascending
  std::string strategy;       // initial | summary_compare | direct_compare | singleton
  int k = 1;                  // cluster count of the round that emitted this entry
};

struct ClassHierarchy {
  int grouping_threshold = 6;
  int max_depth = 3;
  std::vector<ClassEntry> classes;
  std::vector<BuildLogEntry> build_log;
  Vec text_tokens;  // optional learned offset for scoring; empty = zero
};

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignments;   // per input point
  std::vector<Vec> centroids;     // unit-renormalized cluster means
  double inertia = 0.0;           // sum of squared distances to the raw means
};

namespace detail {

inline double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a given
/// seed; empty clusters are repaired by stealing the point farthest from
/// its assigned centroid.
inline KMeansResult kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  if (k < 1 || k > n)
    throw Error(Errc::BadK, "k=" + std::to_string(k) + " for " + std::to_string(n) + " points");
  const std::size_t dim = points.front().size();
  for (const Vec& p : points)
    if (p.size() != dim) throw Error(Errc::DimMismatch, "points have mixed dimensions");

  std::mt19937_64 rng(seed);
  auto unit = [&rng]() { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };

  // k-means++ seeding
  std::vector<Vec> centers;
  centers.reserve(static_cast<std::size_t>(k));
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  int first = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
  centers.push_back(points[static_cast<std::size_t>(first)]);
  chosen[static_cast<std::size_t>(first)] = 1;
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& c : centers) best = std::min(best, detail::sq_dist(points[static_cast<std::size_t>(i)], c));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    int next = -1;
    if (total > 0.0) {
      double target = unit() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= target) { next = i; break; }
      }
      if (next < 0) next = n - 1;
    } else {
      // all remaining points coincide with a center; take the first unchosen
      for (int i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) { next = i; break; }
      if (next < 0) next = 0;
    }
    chosen[static_cast<std::size_t>(next)] = 1;
    centers.push_back(points[static_cast<std::size_t>(next)]);
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  auto assign_all = [&]() {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = detail::sq_dist(points[static_cast<std::size_t>(i)],
                                         centers[static_cast<std::size_t>(c)]);
        if (d < bd) { bd = d; best = c; }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    return changed;
  };

  auto repair_empties = [&]() {
    for (int c = 0; c < k; ++c) {
      if (std::count(assign.begin(), assign.end(), c) > 0) continue;
      // steal the point farthest from its current centroid
      int worst = -1;
      double wd = -1.0;
      for (int i = 0; i < n; ++i) {
        const int a = assign[static_cast<std::size_t>(i)];
        if (std::count(assign.begin(), assign.end(), a) <= 1) continue;
        const double d = detail::sq_dist(points[static_cast<std::size_t>(i)],
                                         centers[static_cast<std::size_t>(a)]);
        if (d > wd) { wd = d; worst = i; }
      }
      if (worst >= 0) {
        assign[static_cast<std::size_t>(worst)] = c;
        centers[static_cast<std::size_t>(c)] = points[static_cast<std::size_t>(worst)];
      }
    }
  };

  auto recompute_means = [&]() {
    std::vector<Vec> means(static_cast<std::size_t>(k), Vec(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
      counts[c]++;
      for (std::size_t j = 0; j < dim; ++j) means[c][j] += points[static_cast<std::size_t>(i)][j];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        for (std::size_t j = 0; j < dim; ++j)
          means[static_cast<std::size_t>(c)][j] /= counts[static_cast<std::size_t>(c)];
    return means;
  };

  assign_all();
  repair_empties();
  for (int iter = 0; iter < 100; ++iter) {
    centers = recompute_means();
    if (!assign_all()) break;
    repair_empties();
  }

  std::vector<Vec> means = recompute_means();
  KMeansResult res;
  res.assignments = std::move(assign);
  res.inertia = 0.0;
  for (int i = 0; i < n; ++i)
    res.inertia += detail::sq_dist(points[static_cast<std::size_t>(i)],
                                   means[static_cast<std::size_t>(res.assignments[static_cast<std::size_t>(i)])]);
  res.centroids.reserve(means.size());
  for (Vec& m : means) {
    const double nn = norm(m);
    res.centroids.push_back(nn < 1e-12 ? m : l2_normalize(m));
  }
  return res;
}

/// Number of clusters for one grouping round: classes divided by the
/// grouping threshold, rounded up.
inline int choose_k(int num_classes, int grouping_threshold) {
  if (num_classes < 1 || grouping_threshold < 1)
    throw Error(Errc::BadK, "num_classes and threshold must be positive");
  const int k = (num_classes + grouping_threshold - 1) / grouping_threshold;
  return std::clamp(k, 1, num_classes);
}

enum class CompareStrategy { SummaryCompare, DirectCompare };

/// Summary-based comparison for groups exceeding half the grouping
/// threshold (strictly), direct comparison otherwise.
inline CompareStrategy select_strategy(int group_size, int grouping_threshold) {
  return 2 * group_size > grouping_threshold ? CompareStrategy::SummaryCompare
                                             : CompareStrategy::DirectCompare;
}

// ---------------------------------------------------------------------------
// Hierarchy construction
// ---------------------------------------------------------------------------

struct BuildConfig {
  int grouping_threshold = 6;
  int max_depth = 3;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string join_names(const std::vector<ClassEntry>& classes,
                              const std::vector<int>& ids, int skip_id = -1) {
  std::string out;
  for (int id : ids) {
    if (id == skip_id) continue;
    if (!out.empty()) out += ", ";
    out += classes[static_cast<std::size_t>(id)].name;
  }
  return out;
}

inline std::uint64_t round_seed(std::uint64_t base, int depth, const std::vector<int>& members) {
  std::uint64_t h = base ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(depth + 1));
  for (int m : members) {
    h ^= static_cast<std::uint64_t>(m) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& where) {
  const std::string what = e.what();
  const std::string prefix = std::string(errc_name(e.code())) + ": ";
  const std::string bare = what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
  throw Error(e.code(), bare + " (" + where + ")");
}

}  // namespace detail

/// Builds the class hierarchy: one initial description per class, then
/// recursive cluster-and-compare rounds. Each round clusters the current
/// group, generates comparative descriptions per cluster, and recurses
/// into clusters that actually shrank.
inline ClassHierarchy build_hierarchy(const std::vector<std::string>& names,
                                      const BuildConfig& cfg,
                                      llm::Provider& provider,
                                      const llm::TextEncoder& encoder) {
  if (names.empty()) throw Error(Errc::EmptyInput, "class list is empty");
  {
    std::set<std::string> uniq(names.begin(), names.end());
    if (uniq.size() != names.size())
      throw Error(Errc::DuplicateClass, "class names must be distinct");
  }
  if (cfg.max_depth < 1) throw Error(Errc::BadK, "max_depth must be >= 1");
  if (cfg.grouping_threshold < 1) throw Error(Errc::BadK, "grouping threshold must be >= 1");

  ClassHierarchy h;
  h.grouping_threshold = cfg.grouping_threshold;
  h.max_depth = cfg.max_depth;
  h.classes.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i)
    h.classes.push_back({static_cast<int>(i), names[i], {}});

  auto describe = [&](int id, const std::string& prompt, int depth) {
    ClassEntry& e = h.classes[static_cast<std::size_t>(id)];
    try {
      const std::string text = provider.complete(prompt).text;
      e.levels.push_back({text, llm::embed_description(text, encoder)});
    } catch (const Error& err) {
      detail::rethrow_with_context(err, "class '" + e.name + "', depth " +
                                            std::to_string(depth));
    }
  };

  // level 1: per-class initial descriptions
  std::vector<int> all_ids(names.size());
  std::iota(all_ids.begin(), all_ids.end(), 0);
  for (int id : all_ids)
    describe(id, llm::render_prompt(llm::PromptKind::Initial,
                                    {{"HOI category", h.classes[static_cast<std::size_t>(id)].name}}),
             1);
  h.build_log.push_back({1, all_ids, "initial", 1});

  // cluster-level embedding: mean of all levels built so far, renormalized
  auto class_point = [&](int id) {
    const ClassEntry& e = h.classes[static_cast<std::size_t>(id)];
    std::vector<Vec> embs;
    embs.reserve(e.levels.size());
    for (const Level& l : e.levels) embs.push_back(l.embedding);
    return l2_normalize(mean_of(embs));
  };

  auto expand = [&](auto&& self, const std::vector<int>& group, int depth) -> void {
    if (group.size() < 2 || depth > cfg.max_depth) return;
    const int k = choose_k(static_cast<int>(group.size()), cfg.grouping_threshold);
    std::vector<Vec> pts;
    pts.reserve(group.size());
    for (int id : group) pts.push_back(class_point(id));
    const KMeansResult km = kmeans(pts, k, detail::round_seed(cfg.seed, depth, group));

    std::vector<std::vector<int>> clusters(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < group.size(); ++i)
      clusters[static_cast<std::size_t>(km.assignments[i])].push_back(group[i]);

    for (const std::vector<int>& members : clusters) {
      if (members.empty()) continue;  // cannot happen after repair
      if (members.size() == 1) {
        h.build_log.push_back({depth, members, "singleton", k});
        continue;
      }
      const CompareStrategy strat =
          select_strategy(static_cast<int>(members.size()), cfg.grouping_threshold);
      if (strat == CompareStrategy::SummaryCompare) {
        std::string summary;
        try {
          summary = provider.complete(
              llm::render_prompt(llm::PromptKind::Summarize,
                                 {{"category list", detail::join_names(h.classes, members)}}))
              .text;
        } catch (const Error& err) {
          detail::rethrow_with_context(err, "cluster summary, depth " + std::to_string(depth));
        }
        for (int id : members)
          describe(id,
                   llm::render_prompt(llm::PromptKind::SummaryCompare,
                                      {{"HOI category", h.classes[static_cast<std::size_t>(id)].name},
                                       {"subset description", summary}}),
                   depth);
        h.build_log.push_back({depth, members, "summary_compare", k});
      } else {
        for (int id : members)
          describe(id,
                   llm::render_prompt(llm::PromptKind::DirectCompare,
                                      {{"target category", h.classes[static_cast<std::size_t>(id)].name},
                                       {"other categories", detail::join_names(h.classes, members, id)}}),
                   depth);
        h.build_log.push_back({depth, members, "direct_compare", k});
      }
      // a cluster identical to the group it came from cannot refine further
      if (members != group) self(self, members, depth + 1);
    }
  };

  expand(expand, all_ids, 2);
  return h;
}

// ---------------------------------------------------------------------------
// JSON serialization (the contract between build and scoring)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Level& l) {
  j = {{"text", l.text}, {"embedding", l.embedding}};
}

inline void from_json(const nlohmann::json& j, Level& l) {
  j.at("text").get_to(l.text);
  j.at("embedding").get_to(l.embedding);
}

inline void to_json(nlohmann::json& j, const ClassEntry& e) {
  j = {{"id", e.class_id}, {"name", e.name}, {"levels", e.levels}};
}

inline void from_json(const nlohmann::json& j, ClassEntry& e) {
  j.at("id").get_to(e.class_id);
  j.at("name").get_to(e.name);
  j.at("levels").get_to(e.levels);
}

inline void to_json(nlohmann::json& j, const BuildLogEntry& e) {
  j = {{"depth", e.depth}, {"members", e.members}, {"strategy", e.strategy}, {"k", e.k}};
}

inline void from_json(const nlohmann::json& j, BuildLogEntry& e) {
  j.at("depth").get_to(e.depth);
  j.at("members").get_to(e.members);
  j.at("strategy").get_to(e.strategy);
  e.k = j.value("k", 1);
}

inline void to_json(nlohmann::json& j, const ClassHierarchy& h) {
  j = {{"N", h.grouping_threshold},
       {"max_depth", h.max_depth},
       {"classes", h.classes},
       {"build_log", h.build_log}};
  if (!h.text_tokens.empty()) j["text_tokens"] = h.text_tokens;
}

inline void from_json(const nlohmann::json& j, ClassHierarchy& h) {
  j.at("N").get_to(h.grouping_threshold);
  j.at("max_depth").get_to(h.max_depth);
  j.at("classes").get_to(h.classes);
  j.at("build_log").get_to(h.build_log);
  h.text_tokens = j.value("text_tokens", Vec{});
}

}  // namespace sgc::hier
