#include "tools/cli/config.h"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace flpl::cli {
namespace {

std::string Where(const std::string& origin, const YAML::Node& node) {
  return origin + ":" + std::to_string(node.Mark().line + 1);
}

using Handler = std::function<void(const YAML::Node&)>;

class SectionReader {
 public:
  SectionReader(std::string origin, std::string section)
      : origin_(std::move(origin)), section_(std::move(section)) {}

  template <typename T>
  SectionReader& Field(const std::string& key, T& out) {
    handlers_[key] = [this, key, &out](const YAML::Node& n) { out = As<T>(n, key); };
    return *this;
  }
  SectionReader& Custom(const std::string& key, Handler h) {
    handlers_[key] = std::move(h);
    return *this;
  }

  void Read(const YAML::Node& node) const {
    if (!node.IsMap()) {
      throw ConfigError(Where(origin_, node) + ": section '" + section_ + "' must be a mapping");
    }
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      auto it = handlers_.find(key);
      if (it == handlers_.end()) {
        throw ConfigError(Where(origin_, kv.first) + ": unknown key '" + Qualified(key) + "'");
      }
      it->second(kv.second);
    }
  }

  template <typename T>
  T As(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(Where(origin_, n) + ": bad value for '" + Qualified(key) + "'");
    }
  }

  const std::string& origin() const { return origin_; }
  std::string Qualified(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

 private:
  std::string origin_;
  std::string section_;
  std::map<std::string, Handler> handlers_;
};

template <typename E>
Handler Enum(const SectionReader& r, const std::string& key, E& out,
             std::function<E(const std::string&)> parse) {
  return [&r, key, &out, parse](const YAML::Node& n) {
    const std::string v = r.As<std::string>(n, key);
    try {
      out = parse(v);
    } catch (const Error& e) {
      throw ConfigError(Where(r.origin(), n) + ": " + r.Qualified(key) + ": " + e.what());
    }
  };
}

models::ModelKind ParseKind(const std::string& s) {
  if (s == "classifier") return models::ModelKind::kClassifier;
  if (s == "segmenter") return models::ModelKind::kSegmenter;
  throw ConfigError("expected classifier or segmenter, got '" + s + "'");
}

attack::OptimizerKind ParseOptimizer(const std::string& s) {
  if (s == "lbfgs") return attack::OptimizerKind::kLbfgs;
  if (s == "adam") return attack::OptimizerKind::kAdam;
  throw ConfigError("expected lbfgs or adam, got '" + s + "'");
}

ad::GradientObjective ParseObjective(const std::string& s) {
  if (s == "sse") return ad::GradientObjective::kSse;
  if (s == "neg_cosine") return ad::GradientObjective::kNegCosine;
  throw ConfigError("expected sse or neg_cosine, got '" + s + "'");
}

attack::InitKind ParseInit(const std::string& s) {
  if (s == "normal") return attack::InitKind::kNormal;
  if (s == "uniform") return attack::InitKind::kUniform;
  throw ConfigError("expected normal or uniform, got '" + s + "'");
}

bool ParseTransport(const std::string& s) {
  if (s == "inprocess") return false;
  if (s == "tcp") return true;
  throw ConfigError("expected inprocess or tcp, got '" + s + "'");
}

void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ExperimentConfig::Validate() const {
  Require(workers >= 1, "workers must be >= 1");
  Require(model.input_size >= 2, "model.input_size must be >= 2");
  Require(model.channels >= 1, "model.channels must be >= 1");
  Require(model.kernel >= 1 && model.kernel % 2 == 1, "model.kernel must be odd and positive");
  Require(model.input_channels >= 0, "model.input_channels must be >= 0");
  Require(model.init_std > 0, "model.init_std must be positive");
  Require(data.train_per_client >= 1, "data.train_per_client must be >= 1");
  Require(data.test_examples >= 1, "data.test_examples must be >= 1");
  Require(fl.clients >= 1, "fl.clients must be >= 1");
  Require(fl.clients_per_round >= 1 && fl.clients_per_round <= fl.clients,
          "fl.clients_per_round must lie in [1, fl.clients]");
  Require(fl.rounds >= 1, "fl.rounds must be >= 1");
  Require(fl.local_epochs >= 1, "fl.local_epochs must be >= 1");
  Require(fl.lr > 0, "fl.lr must be positive");
  Require(fl.batch_size >= 1, "fl.batch_size must be >= 1");
  Require(fl.port >= -1 && fl.port <= 65535, "fl.port must be in [0, 65535]");
  Require(attack.seeds >= 1, "attack.seeds must be >= 1");
  Require(attack.model_init_std > 0, "attack.model_init_std must be positive");
  Require(bench.repetitions >= 5, "bench.repetitions must be >= 5 (timings are medians)");
  for (int64_t n : bench.param_counts) Require(n >= 0, "bench.param_counts must be >= 0");
  for (double r : sweep.prune_ratios) {
    Require(r >= 0 && r <= 1, "sweep.prune_ratios must lie in [0, 1]");
  }
  for (double v : sweep.noise_variances) Require(v >= 0, "sweep.noise_variances must be >= 0");
  try {
    attack.config.Validate();
    defense.Validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig ParseConfig(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  ExperimentConfig c;
  if (root.IsNull()) return c;

  SectionReader model(origin, "model");
  model.Custom("kind", Enum<models::ModelKind>(model, "kind", c.model.kind, ParseKind))
      .Field("input_size", c.model.input_size)
      .Field("input_channels", c.model.input_channels)
      .Field("channels", c.model.channels)
      .Field("kernel", c.model.kernel)
      .Field("init_std", c.model.init_std);

  SectionReader data(origin, "data");
  data.Field("train_per_client", c.data.train_per_client)
      .Field("test_examples", c.data.test_examples);

  SectionReader fl(origin, "fl");
  fl.Field("clients", c.fl.clients)
      .Field("clients_per_round", c.fl.clients_per_round)
      .Field("rounds", c.fl.rounds)
      .Field("local_epochs", c.fl.local_epochs)
      .Field("lr", c.fl.lr)
      .Field("batch_size", c.fl.batch_size)
      .Custom("aggregation",
              Enum<fl::Aggregation>(fl, "aggregation", c.fl.aggregation, fl::ParseAggregation))
      .Custom("transport", Enum<bool>(fl, "transport", c.fl.tcp, ParseTransport))
      .Field("host", c.fl.host)
      .Field("port", c.fl.port);

  SectionReader defense(origin, "defense");
  defense
      .Custom("mode", Enum<defenses::DefenseMode>(defense, "mode", c.defense.mode,
                                                   defenses::ParseDefenseMode))
      .Field("epsilon", c.defense.epsilon)
      .Field("target_ratio", c.defense.target_ratio)
      .Field("variance", c.defense.variance);

  SectionReader crypto(origin, "crypto");
  crypto.Field("paillier_bits", c.crypto.paillier_bits)
      .Field("precision_bits", c.crypto.precision_bits)
      .Field("ckks_poly_degree", c.crypto.ckks_poly_degree)
      .Field("ckks_log2q", c.crypto.ckks_log2q)
      .Field("ckks_scale_bits", c.crypto.ckks_scale_bits)
      .Field("key_seed", c.crypto.key_seed);

  SectionReader attack(origin, "attack");
  attack::AttackConfig& ac = c.attack.config;
  attack.Custom("optimizer", Enum<attack::OptimizerKind>(attack, "optimizer", ac.optimizer,
                                                         ParseOptimizer))
      .Custom("objective",
              Enum<ad::GradientObjective>(attack, "objective", ac.objective, ParseObjective))
      .Custom("init", Enum<attack::InitKind>(attack, "init", ac.init, ParseInit))
      .Field("lr", ac.lr)
      .Field("max_outer_iters", ac.max_outer_iters)
      .Field("lbfgs_max_inner", ac.lbfgs_max_inner)
      .Field("batch_size", ac.batch_size)
      .Field("snapshot_every", ac.snapshot_every)
      .Field("model_init_std", c.attack.model_init_std)
      .Field("seeds", c.attack.seeds);

  SectionReader bench(origin, "bench");
  bench.Field("paillier_bits", c.bench.paillier_bits)
      .Field("ckks_poly_degrees", c.bench.ckks_poly_degrees)
      .Field("param_counts", c.bench.param_counts)
      .Field("repetitions", c.bench.repetitions);

  SectionReader sweep(origin, "sweep");
  sweep.Field("prune_ratios", c.sweep.prune_ratios)
      .Field("noise_variances", c.sweep.noise_variances)
      .Field("accuracy", c.sweep.accuracy)
      .Field("images", c.sweep.images);

  SectionReader top(origin, "");
  std::string out = c.out.string();
  top.Field("seed", c.seed)
      .Field("workers", c.workers)
      .Field("insecure_params", c.insecure_params)
      .Field("out", out)
      .Custom("model", [&](const YAML::Node& n) { model.Read(n); })
      .Custom("data", [&](const YAML::Node& n) { data.Read(n); })
      .Custom("fl", [&](const YAML::Node& n) { fl.Read(n); })
      .Custom("defense", [&](const YAML::Node& n) { defense.Read(n); })
      .Custom("crypto", [&](const YAML::Node& n) { crypto.Read(n); })
      .Custom("attack", [&](const YAML::Node& n) { attack.Read(n); })
      .Custom("bench", [&](const YAML::Node& n) { bench.Read(n); })
      .Custom("sweep", [&](const YAML::Node& n) { sweep.Read(n); });
  top.Read(root);
  c.out = out;
  c.Validate();
  return c;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str(), path.string());
}

}  // namespace flpl::cli
