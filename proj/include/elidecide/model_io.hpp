#pragma once

// Model files: UTF-8 JSON
//   { "version": 1, "n": int,
//     "classes": [ { "id": int, "centroid": [..], "delta": x, "matrix": [[..]] } ],
//     "projection": { "weight": [[..]], "bias": [..] } }        (optional)
// Floats are written with 17 significant digits so they reload bit-exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "elidecide/ellipsoid.hpp"
#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"

namespace elidecide {

struct Model {
  BoundarySet boundaries;
  std::optional<ProjectionHead> projection;
};

namespace model_detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_vector(std::ostringstream& os, const Vector& v) {
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << fmt17(v[i]);
  os << ']';
}

inline void write_matrix(std::ostringstream& os, const Matrix& m, const char* indent) {
  os << '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << (r ? ",\n" : "\n") << indent << '[';
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? ", " : "") << fmt17(m(r, c));
    os << ']';
  }
  os << ']';
}

inline Vector read_vector(const nlohmann::json& j, std::size_t expected, const char* what) {
  ELIDECIDE_REQUIRE(j.is_array(), ErrorKind::FormatError, std::string(what) + " must be an array");
  ELIDECIDE_REQUIRE(j.size() == expected, ErrorKind::FormatError,
                    std::string(what) + " has " + std::to_string(j.size()) + " entries, expected " +
                        std::to_string(expected));
  Vector v(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    ELIDECIDE_REQUIRE(j[i].is_number(), ErrorKind::FormatError, std::string(what) + " entry is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Matrix read_matrix(const nlohmann::json& j, std::size_t rows, std::size_t cols, const char* what) {
  ELIDECIDE_REQUIRE(j.is_array() && j.size() == rows, ErrorKind::FormatError,
                    std::string(what) + " must have " + std::to_string(rows) + " rows");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) m.row(static_cast<Eigen::Index>(r)) = read_vector(j[r], cols, what);
  return m;
}

}  // namespace model_detail

inline std::string encode_model(const Model& model) {
  using namespace model_detail;
  model.boundaries.validate();
  std::ostringstream os;
  os << "{\n  \"version\": 1,\n  \"n\": " << model.boundaries.dim() << ",\n  \"classes\": [";
  bool first = true;
  for (const auto& e : model.boundaries.ellipsoids) {
    os << (first ? "\n" : ",\n") << "    {\n      \"id\": " << e.id << ",\n      \"centroid\": ";
    write_vector(os, e.centroid);
    os << ",\n      \"delta\": " << fmt17(e.scale) << ",\n      \"matrix\": ";
    write_matrix(os, e.matrix, "        ");
    os << "\n    }";
    first = false;
  }
  os << "\n  ]";
  if (model.projection) {
    os << ",\n  \"projection\": {\n    \"weight\": ";
    write_matrix(os, model.projection->weight, "      ");
    os << ",\n    \"bias\": ";
    write_vector(os, model.projection->bias);
    os << "\n  }";
  }
  os << "\n}\n";
  return os.str();
}

inline Model decode_model(const std::string& text) {
  using namespace model_detail;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::FormatError, std::string("invalid JSON: ") + ex.what());
  }
  ELIDECIDE_REQUIRE(doc.is_object(), ErrorKind::FormatError, "model must be a JSON object");
  ELIDECIDE_REQUIRE(doc.contains("version") && doc["version"] == 1, ErrorKind::FormatError,
                    "missing or unsupported version");
  ELIDECIDE_REQUIRE(doc.contains("n") && doc["n"].is_number_integer() && doc["n"].get<long long>() > 0,
                    ErrorKind::FormatError, "missing or invalid n");
  ELIDECIDE_REQUIRE(doc.contains("classes") && doc["classes"].is_array(), ErrorKind::FormatError,
                    "missing classes array");
  const auto n = doc["n"].get<std::size_t>();
  Model model;
  for (const auto& c : doc["classes"]) {
    ELIDECIDE_REQUIRE(c.is_object() && c.contains("id") && c.contains("centroid") && c.contains("delta") &&
                          c.contains("matrix"),
                      ErrorKind::FormatError, "class entry is missing fields");
    ELIDECIDE_REQUIRE(c["id"].is_number_integer(), ErrorKind::FormatError, "class id must be an integer");
    ELIDECIDE_REQUIRE(c["delta"].is_number() && c["delta"].get<double>() > 0.0, ErrorKind::FormatError,
                      "delta must be a positive number");
    Ellipsoid e;
    e.id = c["id"].get<int>();
    e.centroid = read_vector(c["centroid"], n, "centroid");
    e.scale = c["delta"].get<double>();
    e.matrix = read_matrix(c["matrix"], n, n, "matrix");
    model.boundaries.ellipsoids.push_back(std::move(e));
  }
  if (doc.contains("projection")) {
    const auto& p = doc["projection"];
    ELIDECIDE_REQUIRE(p.is_object() && p.contains("weight") && p.contains("bias") && p["weight"].is_array() &&
                          !p["weight"].empty() && p["weight"][0].is_array(),
                      ErrorKind::FormatError, "malformed projection");
    const std::size_t in_dim = p["weight"][0].size();
    ProjectionHead head{read_matrix(p["weight"], n, in_dim, "projection weight"),
                        read_vector(p["bias"], n, "projection bias")};
    model.projection = std::move(head);
  }
  return model;
}

inline void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ELIDECIDE_REQUIRE(out.good(), ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << encode_model(model);
  ELIDECIDE_REQUIRE(out.good(), ErrorKind::IoError, "write failed for " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  ELIDECIDE_REQUIRE(in.good(), ErrorKind::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_model(ss.str());
}

inline void save_boundaries(const BoundarySet& bs, const std::filesystem::path& path) {
  save_model(Model{bs, std::nullopt}, path);
}

inline BoundarySet load_boundaries(const std::filesystem::path& path) { return load_model(path).boundaries; }

}  // namespace elidecide
