#include "mapdistill/map_types.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace mapdistill {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void validate_elements(const std::vector<MapElement>& elems, const std::string& sample_id,
                       bool require_scores) {
  for (const auto& e : elems) {
    const int c = static_cast<int>(e.class_id);
    if (c < 0 || c >= kNumMapClasses)
      throw ConfigError("sample " + sample_id + ": class_id out of range");
    if (e.points.rows() < 2)
      throw ConfigError("sample " + sample_id + ": element has fewer than 2 points");
    for (Eigen::Index i = 0; i < e.points.rows(); ++i) {
      if (std::abs(e.points(i, 0)) > kRangeX || std::abs(e.points(i, 1)) > kRangeY)
        throw ConfigError("sample " + sample_id + ": point outside perception range");
    }
    if (require_scores && !e.score)
      throw ConfigError("sample " + sample_id + ": prediction element missing score");
    if (e.score && (*e.score < 0.0 || *e.score > 1.0))
      throw ConfigError("sample " + sample_id + ": score outside [0,1]");
  }
}

namespace {

using nlohmann::json;

MapElement element_from_json(const json& j) {
  MapElement e;
  e.class_id = static_cast<MapClass>(j.at("class_id").get<int>());
  const auto& pts = j.at("points");
  e.points.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    e.points(static_cast<Eigen::Index>(i), 0) = pts[i].at(0).get<double>();
    e.points(static_cast<Eigen::Index>(i), 1) = pts[i].at(1).get<double>();
  }
  if (j.contains("score")) e.score = j.at("score").get<double>();
  return e;
}

void write_elements(std::ostream& os, const std::vector<MapElement>& elems) {
  os << "\"elements\":[";
  for (std::size_t k = 0; k < elems.size(); ++k) {
    const auto& e = elems[k];
    if (k) os << ",";
    os << "{\"class_id\":" << static_cast<int>(e.class_id) << ",\"points\":[";
    for (Eigen::Index i = 0; i < e.points.rows(); ++i) {
      if (i) os << ",";
      os << "[" << format_double(e.points(i, 0)) << "," << format_double(e.points(i, 1)) << "]";
    }
    os << "]";
    if (e.score) os << ",\"score\":" << format_double(*e.score);
    os << "}";
  }
  os << "]";
}

// Parses one record line; other fields handled by the caller.
json parse_line(const std::string& line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& ex) {
    throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

}  // namespace

std::vector<MapSample> load_dataset(const std::string& path) {
  auto is = open_in(path);
  std::vector<MapSample> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    MapSample s;
    try {
      s.sample_id = j.at("sample_id").get<std::string>();
      s.scene_seed = j.at("scene_seed").get<std::uint64_t>();
      for (const auto& je : j.at("elements")) s.ground_truth.push_back(element_from_json(je));
    } catch (const json::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!ids.insert(s.sample_id).second)
      throw ParseError("line " + std::to_string(line_no) + ": duplicate sample_id " + s.sample_id);
    validate_elements(s.ground_truth, s.sample_id, /*require_scores=*/false);
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<MapSample>& samples) {
  auto os = open_out(path);
  for (const auto& s : samples) {
    os << "{\"sample_id\":\"" << s.sample_id << "\",\"scene_seed\":" << s.scene_seed << ",";
    write_elements(os, s.ground_truth);
    os << "}\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<PredictionSet> load_predictions(const std::string& path) {
  auto is = open_in(path);
  std::vector<PredictionSet> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    PredictionSet p;
    try {
      p.sample_id = j.at("sample_id").get<std::string>();
      for (const auto& je : j.at("elements")) p.elements.push_back(element_from_json(je));
    } catch (const json::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!ids.insert(p.sample_id).second)
      throw ParseError("line " + std::to_string(line_no) + ": duplicate sample_id " + p.sample_id);
    validate_elements(p.elements, p.sample_id, /*require_scores=*/true);
    out.push_back(std::move(p));
  }
  return out;
}

void save_predictions(const std::string& path, const std::vector<PredictionSet>& preds) {
  auto os = open_out(path);
  for (const auto& p : preds) {
    os << "{\"sample_id\":\"" << p.sample_id << "\",\"scene_seed\":0,";
    write_elements(os, p.elements);
    os << "}\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mapdistill
