#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgc/core.hpp"
#include "sgc/error.hpp"
#include "sgc/gsa.hpp"
#include "sgc/hierarchy.hpp"
#include "sgc/matching.hpp"

namespace sgc::io {

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw Error(Errc::ParseError, path.string() + " is not valid JSON");
  return j;
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Feature stacks and matrices
// ---------------------------------------------------------------------------

/// {"layers": L, "tokens": T, "dim": C, "data": [layer][token][channel]}
inline gsa::LayerFeatureStack read_feature_stack(const std::filesystem::path& path) {
  const nlohmann::json j = load_json(path);
  gsa::LayerFeatureStack stack;
  try {
    stack.layers = j.at("layers").get<std::size_t>();
    stack.tokens = j.at("tokens").get<std::size_t>();
    stack.dim = j.at("dim").get<std::size_t>();
    const auto& data = j.at("data");
    if (!data.is_array() || data.size() != stack.layers)
      throw Error(Errc::DimMismatch, "'data' must hold one matrix per layer");
    stack.features.reserve(stack.layers);
    for (const auto& layer : data) {
      if (!layer.is_array() || layer.size() != stack.tokens)
        throw Error(Errc::DimMismatch, "layer matrix must have 'tokens' rows");
      Mat m(stack.tokens, stack.dim);
      for (std::size_t t = 0; t < stack.tokens; ++t) {
        const auto& row = layer.at(t);
        if (!row.is_array() || row.size() != stack.dim)
          throw Error(Errc::DimMismatch, "feature row must have 'dim' entries");
        for (std::size_t c = 0; c < stack.dim; ++c)
          m(t, c) = row.at(c).get<double>();
      }
      stack.features.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  stack.validate();
  return stack;
}

inline void write_feature_stack(const std::filesystem::path& path,
                                const gsa::LayerFeatureStack& stack) {
  nlohmann::json data = nlohmann::json::array();
  for (const Mat& m : stack.features) {
    nlohmann::json layer = nlohmann::json::array();
    for (std::size_t t = 0; t < m.rows; ++t) layer.push_back(m.row(t));
    data.push_back(std::move(layer));
  }
  save_json(path, {{"layers", stack.layers},
                   {"tokens", stack.tokens},
                   {"dim", stack.dim},
                   {"data", std::move(data)}});
}

/// {"rows": R, "cols": C, "data": [row][col]}
inline void write_matrix(const std::filesystem::path& path, const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(m.row(r));
  save_json(path, {{"rows", m.rows}, {"cols", m.cols}, {"data", std::move(rows)}});
}

inline Mat read_matrix(const std::filesystem::path& path) {
  const nlohmann::json j = load_json(path);
  try {
    Mat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto& data = j.at("data");
    if (data.size() != m.rows)
      throw Error(Errc::DimMismatch, "'data' row count mismatch");
    for (std::size_t r = 0; r < m.rows; ++r) {
      const auto& row = data.at(r);
      if (row.size() != m.cols)
        throw Error(Errc::DimMismatch, "'data' col count mismatch");
      for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = row.at(c).get<double>();
    }
    if (!all_finite(m)) throw Error(Errc::NonFiniteValue, "matrix contains NaN/Inf");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

/// {"query": {...}, "w_q": {...}, "w_k": {...}, "w_v": {...}} — matrices
/// in the write_matrix layout.
inline gsa::DecoderParams read_decoder_params(const std::filesystem::path& path) {
  const nlohmann::json j = load_json(path);
  auto mat = [&](const char* key) {
    const auto& mj = j.at(key);
    Mat m(mj.at("rows").get<std::size_t>(), mj.at("cols").get<std::size_t>());
    const auto& data = mj.at("data");
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = data.at(r).at(c).get<double>();
    return m;
  };
  try {
    return {mat("query"), mat("w_q"), mat("w_k"), mat("w_v")};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Class lists, hierarchies, queries
// ---------------------------------------------------------------------------

/// Plain text, one class name per line; blank lines skipped.
inline std::vector<std::string> read_class_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    names.push_back(line.substr(b, e - b + 1));
  }
  if (names.empty()) throw Error(Errc::EmptyInput, path.string() + " lists no classes");
  return names;
}

inline void save_hierarchy(const std::filesystem::path& path, const hier::ClassHierarchy& h) {
  save_json(path, nlohmann::json(h));
}

inline hier::ClassHierarchy load_hierarchy(const std::filesystem::path& path) {
  try {
    return load_json(path).get<hier::ClassHierarchy>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

/// {"dim": C, "queries": [[...], ...]}
inline std::vector<Vec> read_queries(const std::filesystem::path& path) {
  const nlohmann::json j = load_json(path);
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<Vec> out;
    for (const auto& q : j.at("queries")) {
      Vec v = q.get<Vec>();
      if (v.size() != dim)
        throw Error(Errc::DimMismatch, "query dimension != declared dim");
      if (!all_finite(v)) throw Error(Errc::NonFiniteValue, "query contains NaN/Inf");
      out.push_back(std::move(v));
    }
    if (out.empty()) throw Error(Errc::EmptyInput, "no queries in " + path.string());
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Detections, ground truth, evaluation reports
// ---------------------------------------------------------------------------

/// JSON lines, one prediction per line:
/// {"image_id":…, "human_box":[x1,y1,x2,y2], "object_box":[…],
///  "category_scores":[…], "box_score":…}
inline std::vector<eval::ImagePredictions> read_detections_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<eval::ImagePredictions> images;
  std::map<std::int64_t, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  auto box_of = [](const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 4)
      throw Error(Errc::ParseError, "box must be [x1,y1,x2,y2]");
    return eval::BBox{a.at(0).get<double>(), a.at(1).get<double>(),
                      a.at(2).get<double>(), a.at(3).get<double>()};
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(Errc::ParseError, path.string() + " line " + std::to_string(lineno) +
                                        ": invalid JSON");
    try {
      eval::HoiPrediction p;
      const auto image_id = j.at("image_id").get<std::int64_t>();
      p.human_box = box_of(j.at("human_box"));
      p.object_box = box_of(j.at("object_box"));
      p.class_scores = j.at("category_scores").get<Vec>();
      p.box_score = j.at("box_score").get<double>();
      if (p.box_score < 0.0 || p.box_score > 1.0)
        throw Error(Errc::ParseError, "box_score must lie in [0, 1]");
      auto [it, fresh] = index.try_emplace(image_id, images.size());
      if (fresh) images.push_back({image_id, {}});
      images[it->second].preds.push_back(std::move(p));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, path.string() + " line " + std::to_string(lineno) +
                                        ": " + e.what());
    }
  }
  return images;
}

struct GroundTruthFile {
  std::vector<eval::ImageGroundTruth> images;
  std::vector<std::pair<int, std::string>> categories;  // (id, name), score-vector order
};

/// {"images":[{"image_id":…, "instances":[{"human_box":[…], "object_box":[…],
///  "category_id":…}]}], "categories":[{"id":…, "name":…}]}
/// Instance category ids are resolved to indices in the categories array.
inline GroundTruthFile read_ground_truth(const std::filesystem::path& path) {
  const nlohmann::json j = load_json(path);
  GroundTruthFile out;
  auto box_of = [](const nlohmann::json& a) {
    return eval::BBox{a.at(0).get<double>(), a.at(1).get<double>(),
                      a.at(2).get<double>(), a.at(3).get<double>()};
  };
  try {
    std::map<int, int> id_to_index;
    for (const auto& c : j.at("categories")) {
      const int id = c.at("id").get<int>();
      id_to_index[id] = static_cast<int>(out.categories.size());
      out.categories.emplace_back(id, c.at("name").get<std::string>());
    }
    for (const auto& img : j.at("images")) {
      eval::ImageGroundTruth ig;
      ig.image_id = img.at("image_id").get<std::int64_t>();
      for (const auto& inst : img.at("instances")) {
        eval::GroundTruthInstance g;
        g.human_box = box_of(inst.at("human_box"));
        g.object_box = box_of(inst.at("object_box"));
        const int id = inst.at("category_id").get<int>();
        auto it = id_to_index.find(id);
        if (it == id_to_index.end())
          throw Error(Errc::UnknownCategory,
                      "instance category " + std::to_string(id) + " not in categories");
        g.category_id = it->second;
        ig.instances.push_back(g);
      }
      out.images.push_back(std::move(ig));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return out;
}

inline void save_report(const std::filesystem::path& path, const eval::EvalReport& report,
                        const std::vector<std::pair<int, std::string>>& categories) {
  nlohmann::json per_cat = nlohmann::json::object();
  for (const auto& [idx, ap] : report.per_category_ap)
    per_cat[std::to_string(categories[static_cast<std::size_t>(idx)].first)] = ap;
  nlohmann::json skipped = nlohmann::json::array();
  for (int idx : report.skipped_categories)
    skipped.push_back(categories[static_cast<std::size_t>(idx)].first);
  save_json(path,
            {{"per_category_ap", std::move(per_cat)},
             {"map", report.map},
             {"num_images", report.num_images},
             {"skipped_categories", std::move(skipped)},
             {"settings",
              {{"iou_thresh", report.settings.iou_thresh},
               {"gamma", report.settings.gamma},
               {"interpolation", report.settings.eleven_point ? "11point" : "all_points"}}}});
}

}  // namespace sgc::io
