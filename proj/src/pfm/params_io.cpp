// SPDX-License-Identifier: Apache-2.0
#include "vtmot/pfm/params_io.hpp"

#include "vtmot/error.hpp"
#include "vtmot/mot_data.hpp"

namespace vtmot::pfm {

namespace {

std::vector<long long> shape_of(const nlohmann::json& j, std::size_t rank) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw Error(ErrorCode::InvalidValue, "array record needs 'shape' and 'data'");
  }
  const auto shape = j.at("shape").get<std::vector<long long>>();
  if (shape.size() != rank) {
    throw Error(ErrorCode::InvalidValue, "expected rank " + std::to_string(rank) + ", got " + std::to_string(shape.size()));
  }
  long long n = 1;
  for (long long s : shape) {
    if (s < 0) throw Error(ErrorCode::InvalidValue, "negative extent in shape");
    n *= s;
  }
  if (!j.at("data").is_array() || static_cast<long long>(j.at("data").size()) != n) {
    throw Error(ErrorCode::InvalidValue, "data length does not match shape");
  }
  return shape;
}

std::string shape_string(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "," + std::to_string(c) + "]";
}

}  // namespace

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto shape = shape_of(j, 2);
  const auto data = j.at("data").get<std::vector<double>>();
  Matrix m(shape[0], shape[1]);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

nlohmann::json image_to_json(const Image& img) {
  return {{"shape", {img.channels, img.height, img.width}}, {"data", img.data}};
}

Image image_from_json(const nlohmann::json& j) {
  const auto shape = shape_of(j, 3);
  Image img(static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2]));
  img.data = j.at("data").get<std::vector<double>>();
  return img;
}

nlohmann::json to_json(const std::map<std::string, Matrix>& arrays) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, m] : arrays) j[k] = matrix_to_json(m);
  return j;
}

std::map<std::string, Matrix> arrays_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidValue, "array document must be an object");
  std::map<std::string, Matrix> out;
  for (const auto& [k, v] : j.items()) out.emplace(k, matrix_from_json(v));
  return out;
}

nlohmann::json config_to_json(const PfmConfig& c) {
  return {{"d", c.d},
          {"n_heads", c.n_heads},
          {"ffn_hidden", c.ffn_hidden},
          {"stem_channels", c.stem_channels},
          {"visible_channels", c.visible_channels},
          {"infrared_channels", c.infrared_channels},
          {"height", c.height},
          {"width", c.width},
          {"variant", std::string(to_string(c.variant))}};
}

PfmConfig config_from_json(const nlohmann::json& j) {
  PfmConfig c;
  if (!j.is_object()) throw Error(ErrorCode::InvalidValue, "config must be an object");
  c.d = j.value("d", c.d);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.visible_channels = j.value("visible_channels", c.visible_channels);
  c.infrared_channels = j.value("infrared_channels", c.infrared_channels);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

nlohmann::json params_to_json(const PfmParams& p) {
  PfmParams copy = p;
  nlohmann::json params = nlohmann::json::object();
  copy.visit([&](const std::string& name, Matrix& m) { params[name] = matrix_to_json(m); });
  return {{"config", config_to_json(p.config)}, {"params", params}};
}

PfmParams params_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("config") || !j.contains("params")) {
    throw Error(ErrorCode::MissingKey, "parameter document needs 'config' and 'params'");
  }
  // A random instance fixes the expected names and shapes.
  PfmParams p = PfmParams::random(config_from_json(j.at("config")), 0);
  const nlohmann::json& params = j.at("params");
  p.visit([&](const std::string& name, Matrix& m) {
    if (!params.contains(name)) throw Error(ErrorCode::MissingKey, "parameter '" + name + "' missing");
    Matrix loaded = matrix_from_json(params.at(name));
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + name + "' has shape " +
                                                shape_string(loaded.rows(), loaded.cols()) + ", expected " +
                                                shape_string(m.rows(), m.cols()));
    }
    m = std::move(loaded);
  });
  return p;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidValue, path.string() + ": " + e.what());
  }
}

}  // namespace vtmot::pfm
