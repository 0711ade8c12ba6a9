#include "mtl/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "mtl/error.hpp"

namespace mtl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    if (v.empty() || v[0] == '-' || v[0] == '+') throw std::invalid_argument(v);
    std::size_t used = 0;
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  return trainer.kind == o.trainer.kind && trainer.alpha == o.trainer.alpha && trainer.beta == o.trainer.beta &&
         trainer.head_step_size == o.trainer.head_step_size && trainer.loss_weights == o.trainer.loss_weights &&
         trainer.batch_size == o.trainer.batch_size && trainer.seed == o.trainer.seed && dataset == o.dataset &&
         synthetic_pool == o.synthetic_pool && source_a_images == o.source_a_images &&
         source_a_labels == o.source_a_labels && source_b_images == o.source_b_images &&
         source_b_labels == o.source_b_labels && sizes == o.sizes && dataset_seed == o.dataset_seed &&
         epochs == o.epochs && patience == o.patience && out_dir == o.out_dir && cache_dir == o.cache_dir;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      errors.push_back(key + ": repeated on line " + std::to_string(line_no) + " (first on line " +
                       std::to_string(it->second) + ")");
      continue;
    }
    try {
      if (key == "trainer") c.trainer.kind = parse_trainer_name(value);
      else if (key == "alpha") c.trainer.alpha = parse_double(key, value);
      else if (key == "beta") c.trainer.beta = parse_double(key, value);
      else if (key == "head_step_size") c.trainer.head_step_size = parse_double(key, value);
      else if (key == "loss_weights") {
        c.trainer.loss_weights.clear();
        for (const auto& w : split_list(value)) c.trainer.loss_weights.push_back(parse_double(key, w));
      } else if (key == "batch_size") c.trainer.batch_size = parse_uint(key, value);
      else if (key == "seed") c.trainer.seed = parse_uint(key, value);
      else if (key == "dataset") {
        if (value == "synthetic") c.dataset = DatasetKind::kSynthetic;
        else if (value == "idx") c.dataset = DatasetKind::kIdx;
        else throw ConfigError("dataset: expected 'synthetic' or 'idx', got '" + value + "'");
      } else if (key == "synthetic_pool") c.synthetic_pool = parse_uint(key, value);
      else if (key == "source_a_images") c.source_a_images = split_list(value);
      else if (key == "source_a_labels") c.source_a_labels = split_list(value);
      else if (key == "source_b_images") c.source_b_images = split_list(value);
      else if (key == "source_b_labels") c.source_b_labels = split_list(value);
      else if (key == "train_size") c.sizes.train = parse_uint(key, value);
      else if (key == "val_size") c.sizes.validation = parse_uint(key, value);
      else if (key == "test_size") c.sizes.test = parse_uint(key, value);
      else if (key == "dataset_seed") c.dataset_seed = parse_uint(key, value);
      else if (key == "epochs") c.epochs = parse_uint(key, value);
      else if (key == "patience") c.patience = parse_uint(key, value);
      else if (key == "out_dir") c.out_dir = value;
      else if (key == "cache_dir") c.cache_dir = value;
      else throw ConfigError(key + ": unknown key (line " + std::to_string(line_no) + ")");
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  if (errors.empty()) {
    try {
      validate_run_config(c);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  return c;
}

void validate_run_config(const RunConfig& c) {
  std::vector<std::string> errors;
  try {
    c.trainer.validate(2);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (c.sizes.train == 0) errors.push_back("train_size: must be positive");
  if (c.sizes.validation == 0) errors.push_back("val_size: must be positive");
  if (c.sizes.test == 0) errors.push_back("test_size: must be positive");
  if (c.epochs == 0) errors.push_back("epochs: must be positive");
  if (c.out_dir.empty()) errors.push_back("out_dir: must not be empty");
  if (c.dataset == DatasetKind::kSynthetic) {
    if (c.synthetic_pool < 2) errors.push_back("synthetic_pool: need at least 2 glyphs");
    if (!c.source_a_images.empty() || !c.source_b_images.empty()) {
      errors.push_back("source_a_images/source_b_images: only valid with dataset = idx");
    }
  } else {
    if (c.source_a_images.empty()) errors.push_back("source_a_images: required for dataset = idx");
    if (c.source_a_images.size() != c.source_a_labels.size()) {
      errors.push_back("source_a_labels: need one label file per image file");
    }
    if (c.source_b_images.size() != c.source_b_labels.size()) {
      errors.push_back("source_b_labels: need one label file per image file");
    }
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream out;
  std::vector<std::string> weights;
  for (double w : c.trainer.loss_weights) weights.push_back(fmt_double(w));
  out << "trainer = " << trainer_name(c.trainer.kind) << '\n'
      << "alpha = " << fmt_double(c.trainer.alpha) << '\n'
      << "beta = " << fmt_double(c.trainer.beta) << '\n'
      << "head_step_size = " << fmt_double(c.trainer.head_step_size) << '\n'
      << "loss_weights = " << join(weights) << '\n'
      << "batch_size = " << c.trainer.batch_size << '\n'
      << "seed = " << c.trainer.seed << '\n'
      << "dataset = " << (c.dataset == DatasetKind::kSynthetic ? "synthetic" : "idx") << '\n'
      << "synthetic_pool = " << c.synthetic_pool << '\n'
      << "source_a_images = " << join(c.source_a_images) << '\n'
      << "source_a_labels = " << join(c.source_a_labels) << '\n'
      << "source_b_images = " << join(c.source_b_images) << '\n'
      << "source_b_labels = " << join(c.source_b_labels) << '\n'
      << "train_size = " << c.sizes.train << '\n'
      << "val_size = " << c.sizes.validation << '\n'
      << "test_size = " << c.sizes.test << '\n'
      << "dataset_seed = " << c.dataset_seed << '\n'
      << "epochs = " << c.epochs << '\n'
      << "patience = " << c.patience << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "cache_dir = " << c.cache_dir << '\n';
  return out.str();
}

std::filesystem::path resolve_cache_root(const RunConfig& config) {
  if (const char* env = std::getenv("MTL_CACHE_DIR"); env && *env) return env;
  if (!config.cache_dir.empty()) return config.cache_dir;
  return "mtl-cache";
}

}  // namespace mtl
