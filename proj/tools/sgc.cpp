// Command-line front end wiring the pipeline stages end to end:
// feature aggregation, hierarchy construction, hierarchical scoring,
// and detection evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgc/sgc.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

struct ProviderOptions {
  std::string kind = "stub";  // stub | fixture | http
  std::string fixture_file;
  std::string endpoint;
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  std::string cache_dir;
  int timeout_ms = 30000;
  int retries = 0;
  int max_in_flight = 1;
  double temperature = std::numeric_limits<double>::quiet_NaN();
  double top_p = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t stub_seed = 0;
};

struct EncoderOptions {
  std::string kind = "stub";  // stub | file
  std::string table_file;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

void add_provider_options(CLI::App* cmd, ProviderOptions& p) {
  cmd->add_option("--provider", p.kind, "LLM backend: stub, fixture or http")
      ->check(CLI::IsMember({"stub", "fixture", "http"}))
      ->capture_default_str();
  cmd->add_option("--fixture", p.fixture_file, "JSON prompt->response map (fixture provider)");
  cmd->add_option("--endpoint", p.endpoint, "chat-completions base URL (http provider)");
  cmd->add_option("--model", p.model, "model name sent to the endpoint")->capture_default_str();
  cmd->add_option("--api-key", p.api_key, "API key (default: env SGC_LLM_API_KEY)");
  cmd->add_option("--cache-dir", p.cache_dir,
                  "response cache directory (default: env SGC_CACHE_DIR, else no cache)");
  cmd->add_option("--timeout-ms", p.timeout_ms, "HTTP timeout")->capture_default_str();
  cmd->add_option("--retries", p.retries, "HTTP retry count")->capture_default_str();
  cmd->add_option("--max-in-flight", p.max_in_flight, "max concurrent HTTP requests")
      ->capture_default_str();
  cmd->add_option("--temperature", p.temperature, "sampling temperature passthrough");
  cmd->add_option("--top-p", p.top_p, "nucleus sampling passthrough");
  cmd->add_option("--stub-seed", p.stub_seed, "seed for the stub provider")
      ->capture_default_str();
}

void add_encoder_options(CLI::App* cmd, EncoderOptions& e) {
  cmd->add_option("--encoder", e.kind, "text encoder: stub or file")
      ->check(CLI::IsMember({"stub", "file"}))
      ->capture_default_str();
  cmd->add_option("--embeddings", e.table_file, "JSON description->embedding table (file encoder)");
  cmd->add_option("--encoder-dim", e.dim, "embedding dimension (stub encoder)")
      ->capture_default_str();
  cmd->add_option("--encoder-seed", e.seed, "seed for the stub encoder")->capture_default_str();
}

struct BuiltProvider {
  std::shared_ptr<sgc::llm::Provider> inner;
  std::shared_ptr<sgc::llm::Provider> front;  // == inner unless a cache wraps it
};

BuiltProvider make_provider(const ProviderOptions& p) {
  BuiltProvider bp;
  if (p.kind == "fixture") {
    if (p.fixture_file.empty())
      throw sgc::Error(sgc::Errc::ParseError, "--fixture is required with --provider fixture");
    bp.inner = std::make_shared<sgc::llm::FixtureProvider>(
        sgc::llm::FixtureProvider::from_file(p.fixture_file));
  } else if (p.kind == "http") {
    if (p.endpoint.empty())
      throw sgc::Error(sgc::Errc::ParseError, "--endpoint is required with --provider http");
    sgc::llm::HttpConfig cfg;
    cfg.endpoint = p.endpoint;
    cfg.model = p.model;
    cfg.api_key = p.api_key;
    cfg.timeout_ms = p.timeout_ms;
    cfg.retries = p.retries;
    cfg.max_in_flight = p.max_in_flight;
    if (!std::isnan(p.temperature)) cfg.temperature = p.temperature;
    if (!std::isnan(p.top_p)) cfg.top_p = p.top_p;
    bp.inner = std::make_shared<sgc::llm::HttpProvider>(cfg);
  } else {
    bp.inner = std::make_shared<sgc::llm::StubProvider>(p.stub_seed);
  }
  std::string cache_dir = p.cache_dir;
  if (cache_dir.empty()) {
    if (const char* env = std::getenv("SGC_CACHE_DIR")) cache_dir = env;
  }
  if (!cache_dir.empty())
    bp.front = std::make_shared<sgc::llm::CachingProvider>(bp.inner, cache_dir);
  else
    bp.front = bp.inner;
  return bp;
}

sgc::llm::TextEncoder make_encoder(const EncoderOptions& e) {
  if (e.kind == "file") {
    if (e.table_file.empty())
      throw sgc::Error(sgc::Errc::ParseError, "--embeddings is required with --encoder file");
    return sgc::llm::TextEncoder::from_file(e.table_file);
  }
  return sgc::llm::TextEncoder::stub(e.dim, e.seed);
}

// ---------------------------------------------------------------------------
// aggregate
// ---------------------------------------------------------------------------

struct AggregateArgs {
  std::string stack_file;
  std::string out_file;
  std::string partition = "6-8,9-11,12";
  double sigma = 1.0;
  std::vector<double> block_weights;
  std::string aggregation = "dgw";
  std::string decoder_file;
  std::string decoded_out;
};

int run_aggregate(const AggregateArgs& a) {
  const sgc::gsa::LayerFeatureStack stack = sgc::io::read_feature_stack(a.stack_file);
  sgc::gsa::GsaParams params;
  params.partition = sgc::gsa::parse_partition(a.partition);
  params.sigma = a.sigma;
  params.block_weights = a.block_weights.empty()
                             ? sgc::gsa::default_block_weights(params.partition.num_blocks())
                             : a.block_weights;
  if (a.aggregation == "sum") {
    // unweighted intra-block sum, the plain-aggregation ablation
    std::vector<std::vector<double>> ones;
    for (std::size_t s = 0; s < params.partition.num_blocks(); ++s)
      ones.emplace_back(static_cast<std::size_t>(params.partition.block_length(s)), 1.0);
    params.intra_weights = std::move(ones);
  }
  params.validate(stack.layers);

  std::optional<sgc::gsa::DecoderParams> dec;
  if (!a.decoder_file.empty()) {
    dec = sgc::io::read_decoder_params(a.decoder_file);
    dec->validate(stack.dim);
  }

  const sgc::Mat z = sgc::gsa::aggregate(stack, params);
  sgc::io::write_matrix(a.out_file, z);
  std::cout << "wrote " << a.out_file << " (" << z.rows << "x" << z.cols << ")\n";
  if (dec) {
    if (a.decoded_out.empty())
      throw sgc::Error(sgc::Errc::ParseError, "--decoded-out is required with --decoder");
    const sgc::Mat x = sgc::gsa::decode(z, *dec);
    sgc::io::write_matrix(a.decoded_out, x);
    std::cout << "wrote " << a.decoded_out << " (" << x.rows << "x" << x.cols << ")\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// build-hierarchy
// ---------------------------------------------------------------------------

struct BuildArgs {
  std::string classes_file;
  std::string out_file;
  int grouping_threshold = 6;
  int max_depth = 3;
  std::uint64_t seed = 0;
  ProviderOptions provider;
  EncoderOptions encoder;
};

int run_build(const BuildArgs& a) {
  const std::vector<std::string> names = sgc::io::read_class_list(a.classes_file);
  BuiltProvider provider = make_provider(a.provider);
  const sgc::llm::TextEncoder encoder = make_encoder(a.encoder);
  sgc::hier::BuildConfig cfg;
  cfg.grouping_threshold = a.grouping_threshold;
  cfg.max_depth = a.max_depth;
  cfg.seed = a.seed;
  const sgc::hier::ClassHierarchy h =
      sgc::hier::build_hierarchy(names, cfg, *provider.front, encoder);
  sgc::io::save_hierarchy(a.out_file, h);
  const std::size_t total = provider.front->calls();
  const std::size_t misses = provider.inner->calls();
  std::cout << "wrote " << a.out_file << " (" << h.classes.size()
            << " classes, llm_calls=" << misses << " cache_hits=" << (total - misses)
            << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string hierarchy_file;
  std::string queries_file;
  std::string out_file;
  double lambda = 0.5;
  double tau = 0.0;
  bool ignore_text_tokens = false;
  std::size_t top = 0;  // 0 = full ranking
};

int run_score(const ScoreArgs& a) {
  const sgc::hier::ClassHierarchy h = sgc::io::load_hierarchy(a.hierarchy_file);
  const std::vector<sgc::Vec> queries = sgc::io::read_queries(a.queries_file);
  sgc::score::ScorerConfig cfg;
  cfg.lambda = a.lambda;
  cfg.tau = a.tau;
  if (!a.ignore_text_tokens) cfg.text_tokens = h.text_tokens;
  cfg.validate();

  std::ostringstream out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<sgc::score::ScoreBreakdown> ranking;
    try {
      ranking = sgc::score::classify(queries[q], h, cfg);
    } catch (const sgc::Error& e) {
      throw sgc::Error(e.code(), std::string(e.what()) + " (query " + std::to_string(q) + ")");
    }
    if (a.top > 0 && ranking.size() > a.top) ranking.resize(a.top);
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& b : ranking)
      jr.push_back({{"class_id", b.class_id},
                    {"name", h.classes[static_cast<std::size_t>(b.class_id)].name},
                    {"p", b.p},
                    {"u", b.u},
                    {"r", b.r},
                    {"base", b.base},
                    {"s", b.s}});
    out << nlohmann::json({{"query", q}, {"ranking", std::move(jr)}}).dump() << "\n";
  }
  std::ofstream f(a.out_file);
  if (!f) throw sgc::Error(sgc::Errc::IoError, "cannot write " + a.out_file);
  f << out.str();
  std::cout << "wrote " << a.out_file << " (" << queries.size() << " queries)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string detections_file;
  std::string gt_file;
  std::string out_file;
  double gamma = 2.0;
  double iou_thresh = 0.5;
  std::string interpolation = "all";
};

int run_eval(const EvalArgs& a) {
  const auto gt = sgc::io::read_ground_truth(a.gt_file);
  const auto dets = sgc::io::read_detections_jsonl(a.detections_file);
  sgc::eval::EvalSettings settings;
  settings.gamma = a.gamma;
  settings.iou_thresh = a.iou_thresh;
  settings.eleven_point = (a.interpolation == "11point");
  const sgc::eval::EvalReport report =
      sgc::eval::evaluate_map(dets, gt.images, gt.categories.size(), settings);
  sgc::io::save_report(a.out_file, report, gt.categories);
  std::cout << "wrote " << a.out_file << " (mAP=" << report.map << " over "
            << report.per_category_ap.size() << " categories)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// self-test
// ---------------------------------------------------------------------------

int run_self_test() {
  int failures = 0;
  auto check = [&](const char* name, bool ok, const std::string& detail = "") {
    if (ok) {
      std::cout << "[ok]   " << name << "\n";
    } else {
      std::cout << "[fail] " << name << (detail.empty() ? "" : ": " + detail) << "\n";
      ++failures;
    }
  };
  auto near = [](double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; };

  using namespace sgc;

  {
    const auto w = gsa::dgw_weights(3, 1.0);
    check("gaussian layer weights",
          near(w[0], std::exp(-2.0)) && near(w[1], std::exp(-0.5)) && w[2] == 1.0);
  }
  {
    gsa::LayerFeatureStack stack(2, 1, 1);
    stack.features[0](0, 0) = 1.0;
    stack.features[1](0, 0) = 2.0;
    gsa::GsaParams params;
    params.partition = {{{1, 2}}};
    params.block_weights = {1.0};
    const Mat z = gsa::aggregate(stack, params);
    check("two-layer aggregation", near(z(0, 0), std::exp(-0.5) + 2.0, 1e-8));
  }
  {
    Mat z(1, 2);
    z(0, 0) = 3.0;
    z(0, 1) = -1.0;
    gsa::DecoderParams dec{Mat(1, 2), Mat::identity(2), Mat::identity(2), Mat::identity(2)};
    const Mat x = gsa::decode(z, dec);
    check("single-token decode identity", x(0, 0) == 3.0 && x(0, 1) == -1.0);
  }
  {
    Mat c(2, 2);
    c(0, 0) = 1; c(0, 1) = 2; c(1, 0) = 3; c(1, 1) = 1;
    const auto a = eval::hungarian(c);
    check("hungarian 2x2", near(a.total_cost, 2.0) && a.pairs.size() == 2);
  }
  {
    std::vector<double> p{0.5, 0.7};
    const auto u = score::evaluator_bits(p, 0.0);
    const double r = score::running_average(p, u);
    check("running average", u[0] == 1 && near(r, 0.6));
  }
  {
    eval::BBox a{0, 0, 2, 2}, b{1, 0, 3, 2};
    check("iou", near(eval::iou(a, b), 2.0 / 6.0));
    eval::BBox c{0, 0, 1, 1}, d{2, 0, 3, 1};
    check("giou loss", near(eval::giou_loss(c, d), 4.0 / 3.0, 1e-8));
  }
  {
    const auto enc = llm::TextEncoder::stub(32, 7);
    const Vec v1 = llm::encode_text("hold cat", enc);
    const Vec v2 = llm::encode_text("hold cat", enc);
    check("stub encoder determinism", v1 == v2 && near(norm(v1), 1.0));
  }
  {
    check("prompt rendering",
          llm::render_prompt(llm::PromptKind::Initial, {{"HOI category", "hold cat"}}) ==
              "What features are useful to distinguish hold cat in a photo?");
  }
  {
    eval::ImagePredictions ip{1, {{{0, 0, 10, 10}, {20, 20, 30, 30}, {0.1, 0.9}, 1.0}}};
    eval::ImageGroundTruth ig{1, {{{0, 0, 10, 10}, {20, 20, 30, 30}, 1}}};
    const auto rep = eval::evaluate_map({ip}, {ig}, 2);
    check("perfect detection mAP", near(rep.map, 1.0));
  }

  std::cout << (failures ? "self-test FAILED\n" : "self-test passed\n");
  return failures ? kExitData : kExitOk;
}

int dispatch_error(const sgc::Error& e) {
  std::cerr << "error: " << e.what() << "\n";
  return sgc::is_provider_error(e.code()) ? kExitProvider : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-granularity feature aggregation, LLM-driven hierarchical "
               "group-comparison classification, and detection evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read defaults from an INI/TOML file");

  AggregateArgs agg;
  CLI::App* cmd_agg = app.add_subcommand(
      "aggregate", "Fuse a layer-feature stack into one feature map");
  cmd_agg->add_option("--stack", agg.stack_file, "feature-stack JSON")->required();
  cmd_agg->add_option("--out", agg.out_file, "output matrix JSON")->required();
  cmd_agg->add_option("--partition", agg.partition, "layer blocks, e.g. 6-8,9-11,12")
      ->capture_default_str();
  cmd_agg->add_option("--sigma", agg.sigma, "Gaussian variance parameter")
      ->capture_default_str();
  cmd_agg->add_option("--block-weights", agg.block_weights,
                      "inter-block weights (default 1,..,1,2)")
      ->delimiter(',');
  cmd_agg->add_option("--aggregation", agg.aggregation, "dgw or sum")
      ->check(CLI::IsMember({"dgw", "sum"}))
      ->capture_default_str();
  cmd_agg->add_option("--decoder", agg.decoder_file, "decoder params JSON (optional)");
  cmd_agg->add_option("--decoded-out", agg.decoded_out, "decoded output matrix JSON");

  BuildArgs build;
  CLI::App* cmd_build = app.add_subcommand(
      "build-hierarchy", "Construct the class hierarchy via grouped LLM comparisons");
  cmd_build->add_option("--classes", build.classes_file, "class list, one name per line")
      ->required();
  cmd_build->add_option("--out", build.out_file, "output hierarchy JSON")->required();
  cmd_build->add_option("--N,--grouping-threshold", build.grouping_threshold,
                        "grouping threshold")
      ->capture_default_str();
  cmd_build->add_option("--max-depth", build.max_depth, "maximum hierarchy depth")
      ->capture_default_str();
  cmd_build->add_option("--seed", build.seed, "clustering seed")->capture_default_str();
  add_provider_options(cmd_build, build.provider);
  add_encoder_options(cmd_build, build.encoder);

  ScoreArgs sc;
  CLI::App* cmd_score = app.add_subcommand(
      "score", "Rank classes for query embeddings against a hierarchy");
  cmd_score->add_option("--hierarchy", sc.hierarchy_file, "hierarchy JSON")->required();
  cmd_score->add_option("--queries", sc.queries_file, "query embeddings JSON")->required();
  cmd_score->add_option("--out", sc.out_file, "output JSON lines")->required();
  cmd_score->add_option("--lambda", sc.lambda, "fusion weight")->capture_default_str();
  cmd_score->add_option("--tau", sc.tau, "evaluator tolerance")->capture_default_str();
  cmd_score->add_flag("--ignore-text-tokens", sc.ignore_text_tokens,
                      "skip the learned token offset stored in the hierarchy");
  cmd_score->add_option("--top", sc.top, "truncate each ranking (0 = full)")
      ->capture_default_str();

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand(
      "eval", "Score detections against ground truth (per-category AP, mAP)");
  cmd_eval->add_option("--detections", ev.detections_file, "detections JSON lines")->required();
  cmd_eval->add_option("--gt", ev.gt_file, "ground-truth JSON")->required();
  cmd_eval->add_option("--out", ev.out_file, "output report JSON")->required();
  cmd_eval->add_option("--gamma", ev.gamma, "box-score exponent (> 1)")->capture_default_str();
  cmd_eval->add_option("--iou-thresh", ev.iou_thresh, "dual-IoU true-positive threshold")
      ->capture_default_str();
  cmd_eval->add_option("--interpolation", ev.interpolation, "all or 11point")
      ->check(CLI::IsMember({"all", "11point"}))
      ->capture_default_str();

  CLI::App* cmd_self = app.add_subcommand("self-test", "Run built-in sanity checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cmd_agg->parsed()) return run_aggregate(agg);
    if (cmd_build->parsed()) return run_build(build);
    if (cmd_score->parsed()) return run_score(sc);
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_self->parsed()) return run_self_test();
  } catch (const sgc::Error& e) {
    return dispatch_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
