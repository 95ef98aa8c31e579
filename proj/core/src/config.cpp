#include "bevloop/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bevloop {

void PipelineConfig::Validate() const {
  const auto require = [](bool condition, const std::string &message) {
    if (!condition) throw std::invalid_argument("config: " + message);
  };
  require(displacement_threshold > 0.0, "tau_c must be positive");
  require(max_range > 0.0, "max_range must be positive");
  require(map_voxel_size > 0.0, "map voxel size must be positive");
  require(bev_resolution > 0.0, "bev resolution must be positive");
  require(prune_threshold >= 0 && prune_threshold <= 256,
          "prune threshold must be within 0..256 bits");
  require(match_threshold >= 0 && match_threshold <= 256,
          "match threshold must be within 0..256 bits");
  require(min_inliers >= 1, "gamma must be at least 1");
  require(inlier_tolerance > 0.0, "inlier tolerance must be positive");
  require(ransac_iterations >= 1, "ransac iterations must be at least 1");
  require(scan_closure_distance > 0.0, "tau_d must be positive");
  require(ground.cell_size > 0.0, "ground cell size must be positive");
  require(ground.max_iterations >= 1, "ground iterations must be at least 1");
  require(ground.inlier_distance > 0.0,
          "ground inlier distance must be positive");
  require(ground.convergence_epsilon > 0.0,
          "ground convergence epsilon must be positive");
  require(features.fast_threshold >= 1 && features.fast_threshold <= 255,
          "fast threshold must be within 1..255");
  require(features.max_features >= 1, "max features must be at least 1");
}

namespace {

struct Field {
  std::function<void(PipelineConfig &, const std::string &)> set;
  std::function<std::string(const PipelineConfig &)> get;
};

template <typename T>
T ParseValue(const std::string &text);

template <>
double ParseValue<double>(const std::string &text) {
  std::size_t consumed = 0;
  const double value = std::stod(text, &consumed);
  if (consumed != text.size()) throw std::invalid_argument(text);
  return value;
}

template <>
int ParseValue<int>(const std::string &text) {
  std::size_t consumed = 0;
  const int value = std::stoi(text, &consumed);
  if (consumed != text.size()) throw std::invalid_argument(text);
  return value;
}

template <>
std::uint64_t ParseValue<std::uint64_t>(const std::string &text) {
  std::size_t consumed = 0;
  const std::uint64_t value = std::stoull(text, &consumed);
  if (consumed != text.size()) throw std::invalid_argument(text);
  return value;
}

template <>
bool ParseValue<bool>(const std::string &text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument(text);
}

std::string FormatDouble(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

const std::map<std::string, Field> &Fields() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    const auto add_double = [&f](const std::string &key,
                                 double PipelineConfig::*member) {
      f[key] = Field{[member](PipelineConfig &c, const std::string &v) {
                       c.*member = ParseValue<double>(v);
                     },
                     [member](const PipelineConfig &c) {
                       return FormatDouble(c.*member);
                     }};
    };
    const auto add_int = [&f](const std::string &key,
                              int PipelineConfig::*member) {
      f[key] = Field{[member](PipelineConfig &c, const std::string &v) {
                       c.*member = ParseValue<int>(v);
                     },
                     [member](const PipelineConfig &c) {
                       return std::to_string(c.*member);
                     }};
    };
    const auto add_bool = [&f](const std::string &key,
                               bool PipelineConfig::*member) {
      f[key] = Field{[member](PipelineConfig &c, const std::string &v) {
                       c.*member = ParseValue<bool>(v);
                     },
                     [member](const PipelineConfig &c) {
                       return (c.*member) ? std::string("true")
                                          : std::string("false");
                     }};
    };

    add_double("tau_c", &PipelineConfig::displacement_threshold);
    add_double("max_range", &PipelineConfig::max_range);
    add_double("voxel_map", &PipelineConfig::map_voxel_size);
    add_double("bev_resolution", &PipelineConfig::bev_resolution);
    add_int("tau_pr", &PipelineConfig::prune_threshold);
    add_int("tau_match", &PipelineConfig::match_threshold);
    add_int("gamma", &PipelineConfig::min_inliers);
    add_double("inlier_tolerance", &PipelineConfig::inlier_tolerance);
    add_int("n_ransac", &PipelineConfig::ransac_iterations);
    add_double("tau_d", &PipelineConfig::scan_closure_distance);
    add_int("exclude_recent", &PipelineConfig::exclude_recent);
    add_bool("ground_alignment", &PipelineConfig::ground_alignment);
    add_bool("feature_pruning", &PipelineConfig::feature_pruning);

    f["seed"] = Field{[](PipelineConfig &c, const std::string &v) {
                        c.seed = ParseValue<std::uint64_t>(v);
                      },
                      [](const PipelineConfig &c) {
                        return std::to_string(c.seed);
                      }};
    f["ground_cell"] = Field{[](PipelineConfig &c, const std::string &v) {
                               c.ground.cell_size = ParseValue<double>(v);
                             },
                             [](const PipelineConfig &c) {
                               return FormatDouble(c.ground.cell_size);
                             }};
    f["ground_max_iters"] =
        Field{[](PipelineConfig &c, const std::string &v) {
                c.ground.max_iterations = ParseValue<int>(v);
              },
              [](const PipelineConfig &c) {
                return std::to_string(c.ground.max_iterations);
              }};
    f["ground_inlier_dist"] =
        Field{[](PipelineConfig &c, const std::string &v) {
                c.ground.inlier_distance = ParseValue<double>(v);
              },
              [](const PipelineConfig &c) {
                return FormatDouble(c.ground.inlier_distance);
              }};
    f["ground_eps"] = Field{[](PipelineConfig &c, const std::string &v) {
                              c.ground.convergence_epsilon =
                                  ParseValue<double>(v);
                            },
                            [](const PipelineConfig &c) {
                              return FormatDouble(c.ground.convergence_epsilon);
                            }};
    f["fast_threshold"] = Field{[](PipelineConfig &c, const std::string &v) {
                                  c.features.fast_threshold =
                                      ParseValue<int>(v);
                                },
                                [](const PipelineConfig &c) {
                                  return std::to_string(
                                      c.features.fast_threshold);
                                }};
    f["max_features"] = Field{[](PipelineConfig &c, const std::string &v) {
                                c.features.max_features = ParseValue<int>(v);
                              },
                              [](const PipelineConfig &c) {
                                return std::to_string(c.features.max_features);
                              }};
    return f;
  }();
  return fields;
}

}  // namespace

PipelineConfig ParseConfig(std::istream &in) {
  PipelineConfig config;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.resize(comment);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto equals = line.find('=');
    if (equals == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_number) +
                                  ": expected key = value");
    }
    const auto trim = [](std::string text) {
      const auto begin = text.find_first_not_of(" \t\r");
      const auto end = text.find_last_not_of(" \t\r");
      if (begin == std::string::npos) return std::string();
      return text.substr(begin, end - begin + 1);
    };
    const std::string key = trim(line.substr(0, equals));
    const std::string value = trim(line.substr(equals + 1));
    const auto it = Fields().find(key);
    if (it == Fields().end()) {
      throw std::invalid_argument("config line " + std::to_string(line_number) +
                                  ": unknown key '" + key + "'");
    }
    try {
      it->second.set(config, value);
    } catch (const std::exception &) {
      throw std::invalid_argument("config line " + std::to_string(line_number) +
                                  ": bad value for '" + key + "'");
    }
  }
  config.Validate();
  return config;
}

PipelineConfig ParseConfigFile(const std::string &path) {
  std::ifstream file(path);
  if (!file) {
    throw std::runtime_error("cannot open config file " + path);
  }
  return ParseConfig(file);
}

std::string SerializeConfig(const PipelineConfig &config) {
  std::ostringstream out;
  for (const auto &[key, field] : Fields()) {
    out << key << " = " << field.get(config) << "\n";
  }
  return out.str();
}

}  // namespace bevloop
