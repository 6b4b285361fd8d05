#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "lookuplm/model.hpp"
#include "lookuplm/trainer.hpp"

namespace lookuplm {

// Flat key=value experiment configuration. File values load first, flag
// overrides apply on top, and the effective settings are echoed to the run
// log. Unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  void apply(const std::string& key, const std::string& value);
  void apply_line(const std::string& line);     // "key=value", '#' comments
  void apply_file(const std::string& path);
  void apply_overrides(std::span<const std::string> kvs);

  // One key=value per line, every known key with its effective value.
  void echo(std::ostream& out) const;
};

}  // namespace lookuplm
