// Copyright 2026 The dcabird Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dca/training.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dca {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

int parse_small_int(const std::string& key, const std::string& v) {
  long long x = parse_int(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError("config key '" + key + "': value out of range");
  }
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  std::string l = lower(v);
  if (l == "1" || l == "true" || l == "on" || l == "yes") return true;
  if (l == "0" || l == "false" || l == "off" || l == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_small_int(key, item));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

std::string flag(bool b) { return b ? "true" : "false"; }

// Resizes the layer list when a per-layer key has a different length.
void set_layer_field(TrainConfig& cfg, const std::string& key, const std::string& value,
                     int LayerSpec::*field) {
  std::vector<int> v = parse_int_list(key, value);
  if (v.empty()) throw ConfigError("config key '" + key + "': empty list");
  auto& layers = cfg.topology.layers;
  if (layers.size() != v.size()) {
    LayerSpec fill = layers.empty() ? LayerSpec{} : layers.back();
    layers.resize(v.size(), fill);
  }
  for (std::size_t i = 0; i < v.size(); ++i) layers[i].*field = v[i];
}

std::vector<int> layer_field(const TrainConfig& cfg, int LayerSpec::*field) {
  std::vector<int> v;
  for (const auto& l : cfg.topology.layers) v.push_back(l.*field);
  return v;
}

struct Key {
  const char* name;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define DCA_DOUBLE_KEY(k, member)                                                              \
  Key {                                                                                        \
    k, [](TrainConfig& c, const std::string& key, const std::string& v) {                     \
      c.member = parse_double(key, v);                                                         \
    },                                                                                         \
        [](const TrainConfig& c) { return num(c.member); }                                     \
  }
#define DCA_INT_KEY(k, member)                                                                 \
  Key {                                                                                        \
    k, [](TrainConfig& c, const std::string& key, const std::string& v) {                     \
      c.member = parse_small_int(key, v);                                                      \
    },                                                                                         \
        [](const TrainConfig& c) { return std::to_string(c.member); }                          \
  }
#define DCA_BOOL_KEY(k, member)                                                                \
  Key {                                                                                        \
    k, [](TrainConfig& c, const std::string& key, const std::string& v) {                     \
      c.member = parse_bool(key, v);                                                           \
    },                                                                                         \
        [](const TrainConfig& c) { return flag(c.member); }                                    \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      DCA_DOUBLE_KEY("alpha_domain", alpha_domain),
      DCA_DOUBLE_KEY("w_syn", w_syn),
      DCA_INT_KEY("epochs", epochs),
      DCA_INT_KEY("batch_size", batch_size),
      Key{"optimizer",
          [](TrainConfig& c, const std::string&, const std::string& v) {
            c.optimizer = parse_optimizer(v);
          },
          [](const TrainConfig& c) { return std::string(optimizer_name(c.optimizer)); }},
      DCA_DOUBLE_KEY("momentum", momentum),
      DCA_DOUBLE_KEY("adam_beta2", adam_beta2),
      DCA_DOUBLE_KEY("adam_eps", adam_eps),
      DCA_DOUBLE_KEY("lr", lr),
      DCA_DOUBLE_KEY("lr_min", lr_min),
      DCA_DOUBLE_KEY("weight_decay", weight_decay),
      DCA_DOUBLE_KEY("domain_lr_scale", domain_lr_scale),
      DCA_DOUBLE_KEY("grl_lambda_start", grl_schedule.lambda_start),
      DCA_DOUBLE_KEY("grl_lambda_end", grl_schedule.lambda_end),
      DCA_INT_KEY("grl_warmup_epochs", grl_schedule.warmup_epochs),
      Key{"norm",
          [](TrainConfig& c, const std::string&, const std::string& v) {
            c.norm_kind = parse_norm_kind(v);
          },
          [](const TrainConfig& c) { return std::string(norm_kind_name(c.norm_kind)); }},
      DCA_INT_KEY("group_size", group_size),
      DCA_BOOL_KEY("aug", toggles.standard_aug),
      DCA_BOOL_KEY("grl", toggles.grl),
      DCA_BOOL_KEY("mixup", toggles.mixup),
      DCA_BOOL_KEY("transfer", toggles.dialect_transfer),
      Key{"seed",
          [](TrainConfig& c, const std::string& key, const std::string& v) {
            long long s = parse_int(key, v);
            if (s < 0) throw ConfigError("config key 'seed': must be non-negative");
            c.seed = static_cast<std::uint64_t>(s);
          },
          [](const TrainConfig& c) { return std::to_string(c.seed); }},
      DCA_INT_KEY("repeats", repeats),
      DCA_DOUBLE_KEY("pitch_semitones", augment.pitch_semitone_range),
      DCA_DOUBLE_KEY("time_shift_s", augment.time_shift_range_s),
      DCA_DOUBLE_KEY("snr_db_min", augment.noise_snr_db_min),
      DCA_DOUBLE_KEY("snr_db_max", augment.noise_snr_db_max),
      DCA_INT_KEY("freq_masks", augment.freq_masks),
      DCA_INT_KEY("freq_mask_max", augment.freq_mask_max),
      DCA_INT_KEY("time_masks", augment.time_masks),
      DCA_INT_KEY("time_mask_max", augment.time_mask_max),
      DCA_DOUBLE_KEY("mixup_alpha", augment.mixup_alpha),
      DCA_DOUBLE_KEY("aug_prob", augment.apply_prob),
      DCA_DOUBLE_KEY("val_fraction", val_fraction),
      DCA_INT_KEY("domain_batch", domain_batch),
      DCA_BOOL_KEY("detach_domain", detach_domain),
      DCA_INT_KEY("domain_steps", domain_steps),
      DCA_INT_KEY("transfer_source_region", transfer_source_region),
      Key{"transfer_species",
          [](TrainConfig& c, const std::string& key, const std::string& v) {
            c.transfer_species = parse_int_list(key, v);
          },
          [](const TrainConfig& c) { return join(c.transfer_species); }},
      DCA_INT_KEY("test_stride", test_stride),
      Key{"tdnn_context",
          [](TrainConfig& c, const std::string& key, const std::string& v) {
            set_layer_field(c, key, v, &LayerSpec::context);
          },
          [](const TrainConfig& c) { return join(layer_field(c, &LayerSpec::context)); }},
      Key{"tdnn_dilation",
          [](TrainConfig& c, const std::string& key, const std::string& v) {
            set_layer_field(c, key, v, &LayerSpec::dilation);
          },
          [](const TrainConfig& c) { return join(layer_field(c, &LayerSpec::dilation)); }},
      Key{"tdnn_channels",
          [](TrainConfig& c, const std::string& key, const std::string& v) {
            set_layer_field(c, key, v, &LayerSpec::channels);
          },
          [](const TrainConfig& c) { return join(layer_field(c, &LayerSpec::channels)); }},
      DCA_INT_KEY("embedding_dim", topology.embedding_dim),
  };
  return table;
}

#undef DCA_DOUBLE_KEY
#undef DCA_INT_KEY
#undef DCA_BOOL_KEY

}  // namespace

Optimizer parse_optimizer(const std::string& name) {
  std::string n;
  for (char ch : name) n += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (n == "sgd") return Optimizer::kSgd;
  if (n == "adam") return Optimizer::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

const char* optimizer_name(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Topology TrainConfig::effective_topology() const {
  Topology t = topology;
  t.norm = norm_kind;
  t.group_size = group_size;
  return t;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid config: " + m); };
  if (!(alpha_domain >= 0.0)) fail("alpha_domain must be >= 0");
  if (!(w_syn > 0.0 && w_syn <= 1.0)) fail("w_syn must be in (0, 1]");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(domain_lr_scale > 0.0)) fail("domain_lr_scale must be > 0");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(lr_min >= 0.0)) fail("lr_min must be >= 0");
  if (grl_schedule.warmup_epochs < 0) fail("grl_warmup_epochs must be >= 0");
  if (repeats < 1) fail("repeats must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must be in [0, 1)");
  if (domain_batch < 0) fail("domain_batch must be >= 0");
  if (domain_steps < 0) fail("domain_steps must be >= 0");
  if (test_stride < 2) fail("test_stride must be >= 2");
  if (transfer_source_region < 0) fail("transfer_source_region must be >= 0");
  for (int s : transfer_species) {
    if (s < 0 || s >= topology.n_species) fail("transfer_species out of range");
  }
  augment.validate();
  effective_topology().validate();
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  std::string k = lower(trim(key));
  for (const Key& entry : keys()) {
    if (k == entry.name) {
      entry.set(cfg, k, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(TrainConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.emplace_back(k.name);
  return out;
}

}  // namespace dca
