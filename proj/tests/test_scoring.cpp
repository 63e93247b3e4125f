#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "sgc/scoring.hpp"

using namespace sgc;
using namespace sgc::score;

namespace {

hier::ClassEntry entry_of(int id, std::vector<Vec> embeddings) {
  hier::ClassEntry e;
  e.class_id = id;
  e.name = "class " + std::to_string(id);
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    e.levels.push_back({"level " + std::to_string(i + 1), std::move(embeddings[i])});
  return e;
}

// Three classes, three levels each, scored against x = [0.8, 0.6, 0, 0].
// Expected values evaluated by hand:
//   p_A = [0.8, 0.6, 0.96], p_B = [0.6, 0.96, 1.0], p_C = [0, 0, 0.8]
hier::ClassHierarchy spreadsheet_hierarchy() {
  hier::ClassHierarchy h;
  h.classes.push_back(entry_of(
      0, {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}, {0.6, 0.8, 0.0, 0.0}}));
  h.classes.push_back(entry_of(
      1, {{0.0, 1.0, 0.0, 0.0}, {0.6, 0.8, 0.0, 0.0}, {0.8, 0.6, 0.0, 0.0}}));
  h.classes.push_back(entry_of(
      2, {{0.0, 0.0, 1.0, 0.0}, {0.0, 0.0, 0.0, 1.0}, {0.28, 0.96, 0.0, 0.0}}));
  return h;
}

const Vec kQuery{0.8, 0.6, 0.0, 0.0};

}  // namespace

TEST_CASE("level scores are per-level cosines in order") {
  const auto h = spreadsheet_hierarchy();
  const auto p = level_scores(kQuery, h.classes[0]);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == Catch::Approx(0.8).margin(1e-12));
  CHECK(p[1] == Catch::Approx(0.6).margin(1e-12));
  CHECK(p[2] == Catch::Approx(0.96).margin(1e-12));

  // query equal to a level embedding scores one; orthogonal scores zero
  CHECK(level_scores({0.0, 0.0, 1.0, 0.0}, h.classes[2])[0] == Catch::Approx(1.0));
  const auto pc = level_scores({0.0, 0.0, 0.0, 1.0}, h.classes[0]);
  for (double v : pc) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("evaluator bits require a strict improvement beyond tau") {
  CHECK(evaluator_bits({0.5, 0.7}, 0.0) == std::vector<int>{1});
  CHECK(evaluator_bits({0.5, 0.5}, 0.0) == std::vector<int>{0});
  CHECK(evaluator_bits({0.5, 0.7}, 0.3) == std::vector<int>{0});
  CHECK(evaluator_bits({0.5}, 0.0).empty());
}

TEST_CASE("running average follows the accepted prefix") {
  CHECK(running_average({0.5}, {}) == Catch::Approx(0.5));
  CHECK(running_average({0.5, 0.7}, {1}) == Catch::Approx(0.6));
  CHECK(running_average({0.5, 0.4, 0.9}, {0, 1}) == Catch::Approx(0.5));
  CHECK_THROWS_AS(running_average({0.5, 0.7}, {1, 0}), Error);
}

TEST_CASE("running average equals the mean of the longest accepted prefix") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng() % 6;
    std::vector<double> p(m);
    for (double& v : p) v = static_cast<double>(rng() % 2001) / 1000.0 - 1.0;
    const double tau = (rng() % 2) ? 0.0 : 0.1;
    const auto u = evaluator_bits(p, tau);
    // independent route: walk forward while each score beats the previous
    // by more than tau, then average the accepted prefix
    std::size_t len = 1;
    while (len < m && p[len] > p[len - 1] + tau) ++len;
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) mean += p[i];
    mean /= static_cast<double>(len);
    CHECK(running_average(p, u) == Catch::Approx(mean).margin(1e-12));
  }
}

TEST_CASE("fused score blends the base and the running average") {
  const auto h = spreadsheet_hierarchy();
  hier::ClassEntry two_levels = entry_of(0, {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}});
  // p = [0.5, 0.7] against a diagonal-ish query
  const Vec q{0.5, 0.7, std::sqrt(1 - 0.25 - 0.49), 0.0};
  ScorerConfig cfg;

  cfg.lambda = 0.0;
  CHECK(fused_score(q, two_levels, cfg).s == Catch::Approx(0.5).margin(1e-12));

  cfg.lambda = 1.0;
  CHECK(fused_score(q, two_levels, cfg).s == Catch::Approx(0.6).margin(1e-12));

  cfg.lambda = 0.5;
  const auto b = fused_score(q, two_levels, cfg);
  CHECK(b.s == Catch::Approx(0.55).margin(1e-12));
  CHECK(b.base == Catch::Approx(0.5).margin(1e-12));
  CHECK(b.r == Catch::Approx(0.6).margin(1e-12));
  CHECK(b.u == std::vector<int>{1});
}

TEST_CASE("learned text tokens shift the base term") {
  hier::ClassEntry e = entry_of(0, {{1.0, 0.0}});
  ScorerConfig cfg;
  cfg.lambda = 0.0;
  cfg.text_tokens = {0.5, -0.25};
  const auto b = fused_score({1.0, 0.0}, e, cfg);
  CHECK(b.base == Catch::Approx(1.0 + 0.5).margin(1e-12));
  CHECK(b.s == Catch::Approx(1.5).margin(1e-12));
}

TEST_CASE("spreadsheet oracle: p, u, r and s across lambda and tau") {
  const auto h = spreadsheet_hierarchy();
  struct Expect {
    double tau;
    std::vector<int> u[3];
    double r[3];
  };
  const Expect cases[] = {
      {0.0, {{0, 1}, {1, 1}, {0, 1}}, {0.8, 2.56 / 3.0, 0.0}},
      {0.3, {{0, 1}, {1, 0}, {0, 1}}, {0.8, 0.78, 0.0}},
  };
  const double p1[3] = {0.8, 0.6, 0.0};
  for (const Expect& ex : cases) {
    for (double lambda : {0.0, 0.5, 1.0}) {
      ScorerConfig cfg;
      cfg.lambda = lambda;
      cfg.tau = ex.tau;
      for (int c = 0; c < 3; ++c) {
        const auto b = fused_score(kQuery, h.classes[static_cast<std::size_t>(c)], cfg);
        CHECK(b.u == ex.u[c]);
        CHECK(b.r == Catch::Approx(ex.r[c]).margin(1e-9));
        CHECK(b.s ==
              Catch::Approx((1.0 - lambda) * p1[c] + lambda * ex.r[c]).margin(1e-9));
      }
    }
  }
}

TEST_CASE("classify ranks by fused score with id tie-breaks") {
  const auto h = spreadsheet_hierarchy();
  ScorerConfig cfg;  // lambda 0.5, tau 0

  const auto ranked = classify(kQuery, h, cfg);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].class_id == 0);  // s = 0.8
  CHECK(ranked[1].class_id == 1);  // s = 0.5*0.6 + 0.5*2.56/3 = 0.72666...
  CHECK(ranked[2].class_id == 2);  // s = 0
  CHECK(ranked[0].s == Catch::Approx(0.8).margin(1e-9));
  CHECK(ranked[1].s == Catch::Approx(0.3 + 1.28 / 3.0).margin(1e-9));

  cfg.lambda = 1.0;
  const auto by_r = classify(kQuery, h, cfg);
  CHECK(by_r[0].class_id == 1);  // r_B = 2.56/3 beats r_A = 0.8
  CHECK(by_r[1].class_id == 0);
}

TEST_CASE("identical classes tie and break by ascending id") {
  hier::ClassHierarchy h;
  h.classes.push_back(entry_of(0, {{1.0, 0.0}}));
  h.classes.push_back(entry_of(1, {{1.0, 0.0}}));
  const auto ranked = classify({1.0, 0.0}, h, {});
  CHECK(ranked[0].class_id == 0);
  CHECK(ranked[1].class_id == 1);
  CHECK(ranked[0].s == ranked[1].s);
}

TEST_CASE("classify rejects an empty hierarchy") {
  try {
    classify({1.0, 0.0}, hier::ClassHierarchy{}, {});
    FAIL("expected EmptyHierarchy");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyHierarchy);
  }
}

TEST_CASE("lambda zero with zero tokens ranks exactly like the initial score") {
  std::mt19937_64 rng(31);
  auto rnd_unit = [&rng](std::size_t dim) {
    Vec v(dim);
    for (double& x : v) x = static_cast<double>(rng() % 2001) / 1000.0 - 1.0;
    return l2_normalize(v);
  };
  for (int trial = 0; trial < 20; ++trial) {
    hier::ClassHierarchy h;
    for (int c = 0; c < 5; ++c) {
      std::vector<Vec> levels;
      for (int l = 0; l < 1 + static_cast<int>(rng() % 3); ++l) levels.push_back(rnd_unit(6));
      h.classes.push_back(entry_of(c, std::move(levels)));
    }
    const Vec q = rnd_unit(6);
    ScorerConfig cfg;
    cfg.lambda = 0.0;
    const auto ranked = classify(q, h, cfg);
    std::vector<std::pair<double, int>> by_p1;
    for (const auto& e : h.classes)
      by_p1.emplace_back(-cosine_sim(e.levels[0].embedding, q), e.class_id);
    std::sort(by_p1.begin(), by_p1.end());
    for (std::size_t i = 0; i < ranked.size(); ++i)
      CHECK(ranked[i].class_id == by_p1[i].second);
  }
}

TEST_CASE("r stays within the score range and obeys prefix semantics") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + rng() % 6;
    std::vector<double> p(m);
    for (double& v : p) v = static_cast<double>(rng() % 2001) / 1000.0 - 1.0;
    const auto u = evaluator_bits(p, 0.0);
    const double r = running_average(p, u);
    CHECK(r >= *std::min_element(p.begin(), p.end()) - 1e-12);
    CHECK(r <= *std::max_element(p.begin(), p.end()) + 1e-12);
    if (!u.empty() && u[0] == 0) CHECK(r == p[0]);

    // appending a level that fails the evaluator leaves r unchanged
    std::vector<double> longer = p;
    longer.push_back(*std::min_element(p.begin(), p.end()) - 0.5);
    const auto u2 = evaluator_bits(longer, 0.0);
    CHECK(running_average(longer, u2) == Catch::Approx(r).margin(1e-12));
  }
}

TEST_CASE("per-class scores ignore the other classes") {
  const auto h = spreadsheet_hierarchy();
  hier::ClassHierarchy shuffled;
  shuffled.classes = {h.classes[2], h.classes[0], h.classes[1]};
  ScorerConfig cfg;
  const auto a = classify(kQuery, h, cfg);
  const auto b = classify(kQuery, shuffled, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].class_id == b[i].class_id);
    CHECK(a[i].s == b[i].s);
  }
}
