/*
 * Copyright 2026 The Metaclip Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "metaclip/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "metaclip/errors.hpp"
#include "metaclip/privacy.hpp"

namespace metaclip::cli {

namespace fs = std::filesystem;

std::string ToString(TaskKind t) {
  switch (t) {
    case TaskKind::kSinusoid:
      return "sinusoid";
    case TaskKind::kQuadratic:
      return "quadratic";
    case TaskKind::kOmniglot:
      return "omniglot";
  }
  return "unknown";
}

TaskKind ParseTaskKind(const std::string& name) {
  if (name == "sinusoid") return TaskKind::kSinusoid;
  if (name == "quadratic") return TaskKind::kQuadratic;
  if (name == "omniglot") return TaskKind::kOmniglot;
  throw ConfigError("unknown task '" + name +
                    "' (expected sinusoid, quadratic or omniglot)");
}

namespace {

std::string ActivationName(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation ParseActivation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

template <typename T>
T As(const YAML::Node& node, const std::string& key, const char* expected) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + key + "' expects " + expected);
  }
}

double Real(const YAML::Node& n, const std::string& key) {
  return As<double>(n, key, "a real number");
}
int Int(const YAML::Node& n, const std::string& key) {
  return As<int>(n, key, "an integer");
}
bool Bool(const YAML::Node& n, const std::string& key) {
  return As<bool>(n, key, "true or false");
}
std::string Str(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError("config key '" + key + "' expects a string");
  return n.as<std::string>();
}

void Expect(bool ok, const std::string& key, const std::string& domain) {
  if (!ok) throw ConfigError("config key '" + key + "' must be " + domain);
}

using Setter = std::function<void(RunConfig&, const YAML::Node&)>;

const std::map<std::string, Setter>& TopLevelSetters() {
  static const std::map<std::string, Setter> setters = {
      {"algorithm",
       [](RunConfig& c, const YAML::Node& n) {
         c.train.algorithm = ParseAlgorithm(Str(n, "algorithm"));
       }},
      {"privacy",
       [](RunConfig& c, const YAML::Node& n) {
         c.train.privacy = ParsePrivacyMode(Str(n, "privacy"));
       }},
      {"task",
       [](RunConfig& c, const YAML::Node& n) {
         c.task = ParseTaskKind(Str(n, "task"));
       }},
      {"inner_lr", [](RunConfig& c, const YAML::Node& n) { c.train.inner_lr = Real(n, "inner_lr"); }},
      {"meta_lr", [](RunConfig& c, const YAML::Node& n) { c.train.meta_lr = Real(n, "meta_lr"); }},
      {"meta_iterations", [](RunConfig& c, const YAML::Node& n) { c.train.meta_iterations = Int(n, "meta_iterations"); }},
      {"meta_batch", [](RunConfig& c, const YAML::Node& n) { c.train.meta_batch = Int(n, "meta_batch"); }},
      {"inner_steps", [](RunConfig& c, const YAML::Node& n) { c.train.inner_steps = Int(n, "inner_steps"); }},
      {"sigma", [](RunConfig& c, const YAML::Node& n) { c.train.sigma = Real(n, "sigma"); }},
      {"fixed_C", [](RunConfig& c, const YAML::Node& n) { c.train.fixed_C = Real(n, "fixed_C"); }},
      {"delta", [](RunConfig& c, const YAML::Node& n) { c.train.delta = Real(n, "delta"); }},
      {"seed",
       [](RunConfig& c, const YAML::Node& n) {
         c.train.seed = As<std::uint64_t>(n, "seed", "a non-negative integer");
       }},
      {"eval_every", [](RunConfig& c, const YAML::Node& n) { c.train.eval_every = Int(n, "eval_every"); }},
      {"way", [](RunConfig& c, const YAML::Node& n) { c.train.way = Int(n, "way"); }},
      {"shot", [](RunConfig& c, const YAML::Node& n) { c.train.shot = Int(n, "shot"); }},
      {"query_per_class", [](RunConfig& c, const YAML::Node& n) { c.train.query_per_class = Int(n, "query_per_class"); }},
      {"clip_mode",
       [](RunConfig& c, const YAML::Node& n) {
         c.train.clip_mode = ParseClipMode(Str(n, "clip_mode"));
       }},
      {"eta_C", [](RunConfig& c, const YAML::Node& n) { c.train.eta_C = Real(n, "eta_C"); }},
      {"C_min", [](RunConfig& c, const YAML::Node& n) { c.train.C_min = Real(n, "C_min"); }},
      {"C_max", [](RunConfig& c, const YAML::Node& n) { c.train.C_max = Real(n, "C_max"); }},
      {"clip_init_episodes", [](RunConfig& c, const YAML::Node& n) { c.train.clip_init_episodes = Int(n, "clip_init_episodes"); }},
      {"freeze_alpha", [](RunConfig& c, const YAML::Node& n) { c.train.freeze_alpha = Bool(n, "freeze_alpha"); }},
      {"threads", [](RunConfig& c, const YAML::Node& n) { c.train.threads = Int(n, "threads"); }},
      {"omniglot_root", [](RunConfig& c, const YAML::Node& n) { c.omniglot_root = Str(n, "omniglot_root"); }},
      {"output_dir", [](RunConfig& c, const YAML::Node& n) { c.output_dir = Str(n, "output_dir"); }},
      {"target_epsilon", [](RunConfig& c, const YAML::Node& n) { c.target_epsilon = Real(n, "target_epsilon"); }},
      {"hidden",
       [](RunConfig& c, const YAML::Node& n) {
         if (!n.IsSequence()) throw ConfigError("config key 'hidden' expects a list of widths");
         c.hidden.clear();
         for (const auto& w : n) c.hidden.push_back(Int(w, "hidden"));
       }},
      {"activation",
       [](RunConfig& c, const YAML::Node& n) {
         c.activation = ParseActivation(Str(n, "activation"));
       }},
      {"image_side", [](RunConfig& c, const YAML::Node& n) { c.image_side = Int(n, "image_side"); }},
      {"train_characters", [](RunConfig& c, const YAML::Node& n) { c.train_characters = Int(n, "train_characters"); }},
      {"train_fraction", [](RunConfig& c, const YAML::Node& n) { c.train_fraction = Real(n, "train_fraction"); }},
      {"quadratic_dim", [](RunConfig& c, const YAML::Node& n) { c.quadratic_dim = Int(n, "quadratic_dim"); }},
      {"quadratic_tasks", [](RunConfig& c, const YAML::Node& n) { c.quadratic_tasks = Int(n, "quadratic_tasks"); }},
      {"quadratic_lambda_min", [](RunConfig& c, const YAML::Node& n) { c.quadratic_lambda_min = Real(n, "quadratic_lambda_min"); }},
      {"quadratic_lambda_max", [](RunConfig& c, const YAML::Node& n) { c.quadratic_lambda_max = Real(n, "quadratic_lambda_max"); }},
      {"quadratic_b_scale", [](RunConfig& c, const YAML::Node& n) { c.quadratic_b_scale = Real(n, "quadratic_b_scale"); }},
      {"quadratic_shared_curvature", [](RunConfig& c, const YAML::Node& n) { c.quadratic_shared_curvature = Bool(n, "quadratic_shared_curvature"); }},
      {"phi_hat", [](RunConfig& c, const YAML::Node& n) { c.phi_hat = Real(n, "phi_hat"); }},
      {"eval_episodes", [](RunConfig& c, const YAML::Node& n) { c.eval_episodes = Int(n, "eval_episodes"); }},
      {"eval_adapt_steps", [](RunConfig& c, const YAML::Node& n) { c.eval_adapt_steps = Int(n, "eval_adapt_steps"); }},
      {"wall_clock", [](RunConfig& c, const YAML::Node& n) { c.wall_clock = Bool(n, "wall_clock"); }},
  };
  return setters;
}

void ApplyAccountant(RunConfig& c, const YAML::Node& node) {
  if (!node.IsMap()) throw ConfigError("config key 'accountant' expects a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (key == "order_grid") {
      if (!kv.second.IsSequence()) {
        throw ConfigError("config key 'accountant.order_grid' expects a list");
      }
      c.train.order_grid.clear();
      for (const auto& z : kv.second) {
        c.train.order_grid.push_back(Real(z, "accountant.order_grid"));
      }
    } else if (key == "conservative_subsampling") {
      c.train.conservative_subsampling =
          Bool(kv.second, "accountant.conservative_subsampling");
    } else {
      throw ConfigError("unknown config key 'accountant." + key + "'");
    }
  }
}

void Validate(RunConfig& c) {
  const auto& t = c.train;
  Expect(t.inner_lr > 0.0 && std::isfinite(t.inner_lr), "inner_lr", "a finite real > 0");
  Expect(t.meta_lr >= 0.0 && std::isfinite(t.meta_lr), "meta_lr", "a finite real >= 0");
  Expect(t.meta_iterations >= 1, "meta_iterations", "an integer >= 1");
  Expect(t.meta_batch >= 1, "meta_batch", "an integer >= 1");
  Expect(t.inner_steps >= 1, "inner_steps", "an integer >= 1");
  Expect(t.sigma >= 0.0 && std::isfinite(t.sigma), "sigma", "a finite real >= 0");
  Expect(t.fixed_C > 0.0 && std::isfinite(t.fixed_C), "fixed_C", "a finite real > 0");
  Expect(t.delta > 0.0 && t.delta < 1.0, "delta", "in the open interval (0, 1)");
  Expect(t.eval_every >= 1, "eval_every", "an integer >= 1");
  Expect(t.way >= 1, "way", "an integer >= 1");
  Expect(t.shot >= 1, "shot", "an integer >= 1");
  Expect(t.query_per_class >= 1, "query_per_class", "an integer >= 1");
  Expect(t.C_min > 0.0, "C_min", "a real > 0");
  Expect(t.C_max >= t.C_min && std::isfinite(t.C_max), "C_max", "finite and >= C_min");
  Expect(t.clip_init_episodes >= 1, "clip_init_episodes", "an integer >= 1");
  Expect(t.threads >= 1, "threads", "an integer >= 1");
  if (t.eta_C) {
    Expect(*t.eta_C >= 0.0 && std::isfinite(*t.eta_C), "eta_C", "a finite real >= 0");
  }
  try {
    PrivacyLedger check(t.order_grid);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config key 'accountant.order_grid': ") + e.what());
  }
  for (int w : c.hidden) Expect(w >= 1, "hidden", "a list of widths >= 1");
  Expect(c.image_side >= 1, "image_side", "an integer >= 1");
  Expect(c.train_characters >= 0, "train_characters", "an integer >= 0 (0 = all)");
  Expect(c.train_fraction > 0.0 && c.train_fraction < 1.0, "train_fraction",
         "in the open interval (0, 1)");
  Expect(c.quadratic_dim >= 1, "quadratic_dim", "an integer >= 1");
  Expect(c.quadratic_tasks >= 1, "quadratic_tasks", "an integer >= 1");
  Expect(c.quadratic_lambda_min > 0.0, "quadratic_lambda_min", "a real > 0");
  Expect(c.quadratic_lambda_max >= c.quadratic_lambda_min, "quadratic_lambda_max",
         "a real >= quadratic_lambda_min");
  Expect(c.quadratic_b_scale >= 0.0, "quadratic_b_scale", "a real >= 0");
  Expect(c.phi_hat >= 0.0 && std::isfinite(c.phi_hat), "phi_hat", "a finite real >= 0");
  Expect(c.eval_episodes >= 1, "eval_episodes", "an integer >= 1");
  Expect(c.eval_adapt_steps >= 0, "eval_adapt_steps", "an integer >= 0");
  Expect(!c.output_dir.empty(), "output_dir", "a nonempty path");
  if (c.task == TaskKind::kSinusoid) {
    Expect(t.way == 1, "way", "1 for sinusoid regression");
  }
  if (c.task == TaskKind::kOmniglot) {
    Expect(c.omniglot_root.has_value(), "omniglot_root", "set when task is omniglot");
  }
  if (c.target_epsilon) {
    Expect(*c.target_epsilon > 0.0 && std::isfinite(*c.target_epsilon),
           "target_epsilon", "a finite real > 0");
  }
}

void Resolve(RunConfig& c) {
  auto& t = c.train;
  if (!t.eta_C) t.eta_C = t.meta_lr;
  if (c.hidden.empty()) {
    const int width = c.task == TaskKind::kOmniglot ? 128 : 64;
    c.hidden = {width, width};
  }
  if (c.target_epsilon && t.is_private()) {
    const std::int64_t pool = TaskPoolSize(c);
    const double q = (t.conservative_subsampling || pool <= 0)
                         ? 1.0
                         : std::min(1.0, double(t.meta_batch) / double(pool));
    const auto steps =
        static_cast<std::int64_t>(t.meta_iterations) * t.inner_steps;
    t.sigma = CalibrateSigma(*c.target_epsilon, t.delta, q, steps, t.order_grid)
                  .sigma;
  }
}

}  // namespace

std::int64_t TaskPoolSize(const RunConfig& cfg) {
  return cfg.task == TaskKind::kQuadratic ? cfg.quadratic_tasks : 0;
}

RunConfig ParseConfigText(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("cannot parse config: ") + e.what());
  }
  RunConfig cfg;
  if (root.IsNull()) {
    Validate(cfg);
    Resolve(cfg);
    return cfg;
  }
  if (!root.IsMap()) throw ConfigError("config must be a key/value mapping");
  const auto& setters = TopLevelSetters();
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key == "accountant") {
      ApplyAccountant(cfg, kv.second);
      continue;
    }
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    if (kv.second.IsNull()) throw ConfigError("config key '" + key + "' has no value");
    it->second(cfg, kv.second);
  }
  Validate(cfg);
  Resolve(cfg);
  return cfg;
}

RunConfig ParseAndValidate(const fs::path& config_file) {
  std::ifstream in(config_file);
  if (!in) throw ConfigError("cannot read config file " + config_file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = ParseConfigText(buf.str());
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    cfg.output_dir = env;
  }
  if (cfg.omniglot_root && cfg.task == TaskKind::kOmniglot &&
      !fs::is_directory(*cfg.omniglot_root)) {
    throw ConfigError("config key 'omniglot_root': " + *cfg.omniglot_root +
                      " is not a directory");
  }
  return cfg;
}

std::string EmitConfig(const RunConfig& c) {
  const auto& t = c.train;
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  auto kv = [&out](const char* key, const auto& value) {
    out << YAML::Key << key << YAML::Value << value;
  };
  kv("algorithm", ToString(t.algorithm));
  kv("privacy", ToString(t.privacy));
  kv("task", ToString(c.task));
  kv("inner_lr", t.inner_lr);
  kv("meta_lr", t.meta_lr);
  kv("meta_iterations", t.meta_iterations);
  kv("meta_batch", t.meta_batch);
  kv("inner_steps", t.inner_steps);
  kv("sigma", t.sigma);
  kv("fixed_C", t.fixed_C);
  kv("delta", t.delta);
  kv("seed", t.seed);
  kv("eval_every", t.eval_every);
  kv("way", t.way);
  kv("shot", t.shot);
  kv("query_per_class", t.query_per_class);
  kv("clip_mode", ToString(t.clip_mode));
  kv("eta_C", t.resolved_eta_C());
  kv("C_min", t.C_min);
  kv("C_max", t.C_max);
  kv("clip_init_episodes", t.clip_init_episodes);
  kv("freeze_alpha", t.freeze_alpha);
  kv("threads", t.threads);
  if (c.omniglot_root) kv("omniglot_root", *c.omniglot_root);
  kv("output_dir", c.output_dir);
  if (c.target_epsilon) kv("target_epsilon", *c.target_epsilon);
  out << YAML::Key << "hidden" << YAML::Value << YAML::Flow << c.hidden;
  kv("activation", ActivationName(c.activation));
  kv("image_side", c.image_side);
  kv("train_characters", c.train_characters);
  kv("train_fraction", c.train_fraction);
  kv("quadratic_dim", c.quadratic_dim);
  kv("quadratic_tasks", c.quadratic_tasks);
  kv("quadratic_lambda_min", c.quadratic_lambda_min);
  kv("quadratic_lambda_max", c.quadratic_lambda_max);
  kv("quadratic_b_scale", c.quadratic_b_scale);
  kv("quadratic_shared_curvature", c.quadratic_shared_curvature);
  kv("phi_hat", c.phi_hat);
  kv("eval_episodes", c.eval_episodes);
  kv("eval_adapt_steps", c.eval_adapt_steps);
  kv("wall_clock", c.wall_clock);
  out << YAML::Key << "accountant" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "order_grid" << YAML::Value << YAML::Flow
      << t.order_grid;
  kv("conservative_subsampling", t.conservative_subsampling);
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace metaclip::cli
