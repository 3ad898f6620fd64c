#pragma once

#include <filesystem>
#include <string>

#include "fusionkit/gdc.hpp"
#include "fusionkit/losses.hpp"

namespace fusionkit {

/// Flat key = value run configuration shared by the CLI subcommands.
/// Unknown keys are rejected; dump() prints every key with its current
/// value and round-trips through parse().
struct RunConfig {
  LossConfig loss;

  double pdr_radius = 0.0;  // pixels; 0 = auto (4 at width 640, scaled by width)

  GdcOptions gdc;

  int opt_iterations = 200;
  double opt_step = 1e-2;
  double opt_pose_step = 1e-3;
  double opt_d_min = 0.1;
  double opt_d_max = 100.0;

  double eval_cap = 80.0;
  std::string eval_crop = "garg";  // garg | none

  uint64_t seed = 42;

  double effective_pdr_radius(int width) const {
    return pdr_radius > 0.0 ? pdr_radius : 4.0 * width / 640.0;
  }

  void apply_line(const std::string& line);  // single "key = value"
  void parse_file(const std::filesystem::path& path);
  std::string dump() const;
  void validate() const;
};

}  // namespace fusionkit
