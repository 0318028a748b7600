#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "slimnam/model.hpp"

namespace slimnam
{

namespace
{
constexpr int kFormatVersion = 1;

template <typename T>
T require(const nlohmann::json& obj, const char* field)
{
  if (!obj.contains(field))
    throw LoadError(std::string("missing field '") + field + "'");
  try
  {
    return obj.at(field).get<T>();
  }
  catch (const nlohmann::json::exception&)
  {
    throw LoadError(std::string("field '") + field + "' has the wrong type");
  }
}

int require_int(const nlohmann::json& obj, const char* field)
{
  if (!obj.contains(field) || !obj.at(field).is_number_integer())
    throw LoadError(std::string("field '") + field + "' must be an integer");
  return obj.at(field).get<int>();
}
} // namespace

std::string model_to_string(const Model& model)
{
  nlohmann::json config = {
    {"channels", model.config.channels},       {"kernel_size", model.config.kernel_size},
    {"dilations", model.config.dilations},     {"input_dim", model.config.input_dim},
    {"output_dim", model.config.output_dim},   {"sample_rate", model.config.sample_rate},
  };
  nlohmann::json doc = {{"format_version", kFormatVersion}, {"config", config}, {"weights", flatten(model)}};
  return doc.dump() + "\n";
}

Model model_from_string(const std::string& text)
{
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(text);
  }
  catch (const nlohmann::json::exception& e)
  {
    throw LoadError(std::string("malformed model file: ") + e.what());
  }
  if (!doc.is_object())
    throw LoadError("model file must hold a single top-level object");
  if (require_int(doc, "format_version") != kFormatVersion)
    throw LoadError("unsupported format_version");
  if (!doc.contains("config") || !doc["config"].is_object())
    throw LoadError("missing field 'config'");
  const auto& jc = doc["config"];

  WaveNetConfig config;
  config.channels = require_int(jc, "channels");
  config.kernel_size = require_int(jc, "kernel_size");
  if (!jc.contains("dilations") || !jc["dilations"].is_array())
    throw LoadError("field 'dilations' must be an array");
  config.dilations.clear();
  for (const auto& d : jc["dilations"])
  {
    if (!d.is_number_integer())
      throw LoadError("field 'dilations' must hold integers");
    config.dilations.push_back(d.get<int>());
  }
  config.input_dim = require_int(jc, "input_dim");
  config.output_dim = require_int(jc, "output_dim");
  config.sample_rate = require<double>(jc, "sample_rate");
  try
  {
    validate(config);
  }
  catch (const ConfigError& e)
  {
    throw LoadError(std::string("invalid config: ") + e.what());
  }

  if (!doc.contains("weights") || !doc["weights"].is_array())
    throw LoadError("field 'weights' must be an array");
  const auto& jw = doc["weights"];
  const std::size_t expected = ParamLayout(config).total;
  if (jw.size() != expected)
    throw LoadError("field 'weights' has " + std::to_string(jw.size()) + " entries, expected "
                    + std::to_string(expected));
  std::vector<double> flat;
  flat.reserve(expected);
  for (std::size_t i = 0; i < jw.size(); ++i)
  {
    if (!jw[i].is_number() || !std::isfinite(jw[i].get<double>()))
      throw LoadError("weights[" + std::to_string(i) + "] is not a finite number");
    flat.push_back(jw[i].get<double>());
  }
  return unflatten(config, flat);
}

void save_model(const Model& model, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot open '" + path.string() + "' for writing");
  out << model_to_string(model);
  if (!out)
    throw Error("write failed for '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw LoadError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_string(buf.str());
}

} // namespace slimnam
