#include "lookuplm/run_config.hpp"

#include <cctype>
#include <ostream>
#include <stdexcept>

#include "lookuplm/vocab.hpp"

namespace lookuplm {

namespace {

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::int64_t x = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + value + "'");
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "layers") {
    model.layers = static_cast<int>(parse_int(key, value));
  } else if (key == "hidden") {
    model.hidden = static_cast<int>(parse_int(key, value));
  } else if (key == "input_dim") {
    model.input_dim = static_cast<int>(parse_int(key, value));
  } else if (key == "order") {
    model.order = static_cast<int>(parse_int(key, value));
  } else if (key == "table_rows") {
    model.table_rows = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "table_dim") {
    model.table_dim = static_cast<int>(parse_int(key, value));
  } else if (key == "include_current") {
    model.include_current = parse_bool(key, value);
  } else if (key == "injection") {
    model.injection = injection_from_string(value);
  } else if (key == "steps") {
    train.steps = parse_int(key, value);
  } else if (key == "batch_size") {
    train.batch_size = static_cast<int>(parse_int(key, value));
  } else if (key == "lr0") {
    train.lr0 = parse_real(key, value);
  } else if (key == "decay_rate") {
    train.decay_rate = parse_real(key, value);
  } else if (key == "decay_steps") {
    train.decay_steps = parse_int(key, value);
  } else if (key == "beta1") {
    train.beta1 = parse_real(key, value);
  } else if (key == "beta2") {
    train.beta2 = parse_real(key, value);
  } else if (key == "eps") {
    train.eps = parse_real(key, value);
  } else if (key == "clip_norm") {
    train.clip_norm = parse_real(key, value);
  } else if (key == "max_sentence_len") {
    train.max_sentence_len = static_cast<int>(parse_int(key, value));
  } else if (key == "seed") {
    train.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "init_scale") {
    train.init_scale = parse_real(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void RunConfig::apply_line(const std::string& line) {
  const std::size_t hash = line.find('#');
  std::string body = hash == std::string::npos ? line : line.substr(0, hash);
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
  std::size_t start = 0;
  while (start < body.size() && std::isspace(static_cast<unsigned char>(body[start]))) ++start;
  body = body.substr(start);
  if (body.empty()) return;

  const std::size_t eq = body.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("config: expected key=value, got '" + body + "'");
  }
  apply(body.substr(0, eq), body.substr(eq + 1));
}

void RunConfig::apply_file(const std::string& path) {
  for (const std::string& line : read_lines(path)) apply_line(line);
}

void RunConfig::apply_overrides(std::span<const std::string> kvs) {
  for (const std::string& kv : kvs) apply_line(kv);
}

void RunConfig::echo(std::ostream& out) const {
  out << "layers=" << model.layers << '\n'
      << "hidden=" << model.hidden << '\n'
      << "input_dim=" << model.input_dim << '\n'
      << "order=" << model.order << '\n'
      << "table_rows=" << model.table_rows << '\n'
      << "table_dim=" << model.table_dim << '\n'
      << "include_current=" << (model.include_current ? 1 : 0) << '\n'
      << "injection=" << injection_to_string(model.injection) << '\n'
      << "steps=" << train.steps << '\n'
      << "batch_size=" << train.batch_size << '\n'
      << "lr0=" << train.lr0 << '\n'
      << "decay_rate=" << train.decay_rate << '\n'
      << "decay_steps=" << train.decay_steps << '\n'
      << "beta1=" << train.beta1 << '\n'
      << "beta2=" << train.beta2 << '\n'
      << "eps=" << train.eps << '\n'
      << "clip_norm=" << train.clip_norm << '\n'
      << "max_sentence_len=" << train.max_sentence_len << '\n'
      << "seed=" << train.seed << '\n'
      << "init_scale=" << train.init_scale << '\n';
}

}  // namespace lookuplm
