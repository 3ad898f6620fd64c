#include "fusionkit/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fusionkit/errors.hpp"

namespace fusionkit {

namespace {

std::string trim(const std::string& s) {
  const size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

double parse_double(const std::string& key, const std::string& value) {
  if (value == "inf") return std::numeric_limits<double>::infinity();
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key " + key + " expects a number, got '" +
                                value + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key " + key + " expects an integer, got '" +
                                value + "'");
  }
}

std::string format_double(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

const std::vector<Key>& registry() {
  auto dbl = [](const char* name, auto member) {
    return Key{name,
               [name, member](RunConfig& c, const std::string& v) {
                 member(c) = parse_double(name, v);
               },
               [member](const RunConfig& c) {
                 return format_double(member(const_cast<RunConfig&>(c)));
               }};
  };
  auto integer = [](const char* name, auto member) {
    return Key{name,
               [name, member](RunConfig& c, const std::string& v) {
                 member(c) = static_cast<int>(parse_int(name, v));
               },
               [member](const RunConfig& c) {
                 return std::to_string(member(const_cast<RunConfig&>(c)));
               }};
  };

  static const std::vector<Key> keys = {
      dbl("loss.gamma", [](RunConfig& c) -> double& { return c.loss.gamma; }),
      dbl("loss.alpha", [](RunConfig& c) -> double& { return c.loss.alpha; }),
      dbl("loss.beta", [](RunConfig& c) -> double& { return c.loss.beta; }),
      dbl("loss.lambda", [](RunConfig& c) -> double& { return c.loss.lambda; }),
      dbl("loss.eta", [](RunConfig& c) -> double& { return c.loss.eta; }),
      dbl("loss.smoothness_weight",
          [](RunConfig& c) -> double& { return c.loss.smoothness_weight; }),
      integer("loss.ssim_window", [](RunConfig& c) -> int& { return c.loss.ssim_window; }),
      Key{"loss.aggregate",
          [](RunConfig& c, const std::string& v) {
            if (v == "min") {
              c.loss.aggregate = LossConfig::Aggregate::kMin;
            } else if (v == "sum") {
              c.loss.aggregate = LossConfig::Aggregate::kSum;
            } else {
              throw std::invalid_argument(
                  "config: loss.aggregate must be 'min' or 'sum', got '" + v + "'");
            }
          },
          [](const RunConfig& c) {
            return c.loss.aggregate == LossConfig::Aggregate::kMin ? std::string("min")
                                                                   : std::string("sum");
          }},
      dbl("pdr.radius", [](RunConfig& c) -> double& { return c.pdr_radius; }),
      integer("gdc.k", [](RunConfig& c) -> int& { return c.gdc.k; }),
      integer("gdc.stride", [](RunConfig& c) -> int& { return c.gdc.stride; }),
      dbl("gdc.ridge_scale", [](RunConfig& c) -> double& { return c.gdc.ridge_scale; }),
      dbl("gdc.anchor_strength",
          [](RunConfig& c) -> double& { return c.gdc.anchor_strength; }),
      dbl("gdc.cg_tolerance", [](RunConfig& c) -> double& { return c.gdc.cg_tolerance; }),
      integer("gdc.max_iterations_per_node",
              [](RunConfig& c) -> int& { return c.gdc.max_iterations_per_node; }),
      integer("opt.iterations", [](RunConfig& c) -> int& { return c.opt_iterations; }),
      dbl("opt.step", [](RunConfig& c) -> double& { return c.opt_step; }),
      dbl("opt.pose_step", [](RunConfig& c) -> double& { return c.opt_pose_step; }),
      dbl("opt.d_min", [](RunConfig& c) -> double& { return c.opt_d_min; }),
      dbl("opt.d_max", [](RunConfig& c) -> double& { return c.opt_d_max; }),
      dbl("eval.cap", [](RunConfig& c) -> double& { return c.eval_cap; }),
      Key{"eval.crop",
          [](RunConfig& c, const std::string& v) {
            if (v != "garg" && v != "none") {
              throw std::invalid_argument(
                  "config: eval.crop must be 'garg' or 'none', got '" + v + "'");
            }
            c.eval_crop = v;
          },
          [](const RunConfig& c) { return c.eval_crop; }},
      Key{"seed",
          [](RunConfig& c, const std::string& v) {
            c.seed = static_cast<uint64_t>(parse_int("seed", v));
          },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
  };
  return keys;
}

}  // namespace

void RunConfig::apply_line(const std::string& raw) {
  std::string line = raw;
  const size_t hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;

  const size_t eq = line.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("config: expected 'key = value', got '" + line + "'");
  }
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));

  for (const Key& entry : registry()) {
    if (key == entry.name) {
      entry.set(*this, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

void RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open config " + path.string());
  std::string line;
  while (std::getline(file, line)) apply_line(line);
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const Key& entry : registry()) {
    out << entry.name << " = " << entry.get(*this) << '\n';
  }
  return out.str();
}

void RunConfig::validate() const {
  loss.validate();
  if (pdr_radius < 0.0) throw std::invalid_argument("config: pdr.radius must be >= 0");
  if (gdc.k < 3) throw std::invalid_argument("config: gdc.k must be >= 3");
  if (gdc.stride < 1) throw std::invalid_argument("config: gdc.stride must be >= 1");
  if (opt_iterations < 1) {
    throw std::invalid_argument("config: opt.iterations must be >= 1");
  }
  if (!(opt_d_min > 0.0) || !(opt_d_max > opt_d_min)) {
    throw std::invalid_argument("config: need 0 < opt.d_min < opt.d_max");
  }
  if (!(eval_cap > 0.0)) throw std::invalid_argument("config: eval.cap must be > 0");
}

}  // namespace fusionkit
