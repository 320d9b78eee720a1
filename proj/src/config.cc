#include "fovb/config.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fovb {
namespace {

using Json = nlohmann::json;

template <typename Fn>
void ForEachKey(const Json& object, const std::string& where, Fn&& fn) {
  if (!object.is_object()) {
    throw ConfigError(where.empty() ? "config must be a JSON object"
                                    : "config key '" + where +
                                          "' must be an object");
  }
  for (auto it = object.begin(); it != object.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!fn(it.key(), it.value())) {
      throw ConfigError("unknown config key '" + path + "'");
    }
  }
}

std::size_t AsCount(const Json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double AsNumber(const Json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

void ParseModel(const Json& j, ModelConfig& m) {
  ForEachKey(j, "model", [&](const std::string& k, const Json& v) {
    if (k == "blocks") m.blocks = AsCount(v, "model.blocks");
    else if (k == "dim") m.dim = AsCount(v, "model.dim");
    else if (k == "heads") m.heads = AsCount(v, "model.heads");
    else if (k == "patch") m.patch = AsCount(v, "model.patch");
    else if (k == "r") m.reduction = AsCount(v, "model.r");
    else if (k == "vbfe_block") m.vbfe_block = AsCount(v, "model.vbfe_block");
    else if (k == "glfa_blocks") {
      if (!v.is_array()) {
        throw ConfigError("config key 'model.glfa_blocks' must be an array");
      }
      m.glfa_blocks.clear();
      for (const Json& e : v) m.glfa_blocks.push_back(AsCount(e, "model.glfa_blocks"));
    } else {
      return false;
    }
    return true;
  });
}

void ParseTrain(const Json& j, TrainConfig& t) {
  ForEachKey(j, "train", [&](const std::string& k, const Json& v) {
    if (k == "alpha") t.alpha = AsNumber(v, "train.alpha");
    else if (k == "lr") t.lr = AsNumber(v, "train.lr");
    else if (k == "weight_decay") t.weight_decay = AsNumber(v, "train.weight_decay");
    else if (k == "steps") t.steps = AsCount(v, "train.steps");
    else if (k == "batch") t.batch = AsCount(v, "train.batch");
    else if (k == "mc_samples") t.mc_samples = AsCount(v, "train.mc_samples");
    else if (k == "eval_every") t.eval_every = AsCount(v, "train.eval_every");
    else if (k == "orth_codes") {
      const std::string mode = v.is_string() ? v.get<std::string>() : "";
      if (mode == "sampled") t.orth_codes = OrthCodes::kSampled;
      else if (mode == "means") t.orth_codes = OrthCodes::kMeans;
      else throw ConfigError("config key 'train.orth_codes' must be \"sampled\" or \"means\"");
    } else if (k == "fusion") {
      const std::string mode = v.is_string() ? v.get<std::string>() : "";
      if (mode == "prior") t.fusion = TrainFusion::kPrior;
      else if (mode == "posterior") t.fusion = TrainFusion::kPosterior;
      else throw ConfigError("config key 'train.fusion' must be \"prior\" or \"posterior\"");
    } else {
      return false;
    }
    return true;
  });
}

void ParseData(const Json& j, DataConfig& d) {
  ForEachKey(j, "data", [&](const std::string& k, const Json& v) {
    if (k == "n_train") d.n_train = AsCount(v, "data.n_train");
    else if (k == "n_eval") d.n_eval = AsCount(v, "data.n_eval");
    else if (k == "category_mix") {
      if (v.is_array() && v.size() == 4) {
        for (std::size_t i = 0; i < 4; ++i)
          d.category_mix[i] = AsNumber(v[i], "data.category_mix");
      } else if (v.is_object()) {
        CategoryMix mix{0.0, 0.0, 0.0, 0.0};
        ForEachKey(v, "data.category_mix", [&](const std::string& name, const Json& w) {
          for (std::size_t i = 0; i < 4; ++i) {
            if (name == CategoryName(static_cast<Category>(i))) {
              mix[i] = AsNumber(w, "data.category_mix." + name);
              return true;
            }
          }
          return false;
        });
        d.category_mix = mix;
      } else {
        throw ConfigError(
            "config key 'data.category_mix' must be a 4-element array or an "
            "object keyed by REAL/RVFA/FVRA/FVFA");
      }
    } else {
      return false;
    }
    return true;
  });
}

}  // namespace

void RunConfig::Validate() const {
  try {
    model.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(train.alpha >= 0.0)) throw ConfigError("train.alpha must be >= 0");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (train.steps < 1) throw ConfigError("train.steps must be >= 1");
  if (train.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (train.mc_samples < 1) throw ConfigError("train.mc_samples must be >= 1");
  if (data.n_train < 1 || data.n_eval < 1) {
    throw ConfigError("data.n_train and data.n_eval must be >= 1");
  }
  double total = 0.0;
  for (double w : data.category_mix) {
    if (!(w >= 0.0)) throw ConfigError("data.category_mix weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("data.category_mix weights sum to zero");
}

std::uint64_t TrainDataSeed(std::uint64_t seed) { return seed * 2 + 1; }
std::uint64_t EvalDataSeed(std::uint64_t seed) { return seed * 2 + 2; }

RunConfig ParseRunConfig(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  ForEachKey(j, "", [&](const std::string& k, const Json& v) {
    if (k == "seed") config.seed = AsCount(v, "seed");
    else if (k == "model") ParseModel(v, config.model);
    else if (k == "train") ParseTrain(v, config.train);
    else if (k == "data") ParseData(v, config.data);
    else return false;
    return true;
  });
  config.Validate();
  return config;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError("cannot read config " + path);
  std::ostringstream text;
  text << file.rdbuf();
  return ParseRunConfig(text.str());
}

std::string RunConfigToJson(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["model"] = {{"blocks", c.model.blocks}, {"dim", c.model.dim},
                {"heads", c.model.heads},   {"patch", c.model.patch},
                {"r", c.model.reduction},   {"glfa_blocks", c.model.glfa_blocks},
                {"vbfe_block", c.model.vbfe_block}};
  j["train"] = {{"alpha", c.train.alpha},
                {"lr", c.train.lr},
                {"weight_decay", c.train.weight_decay},
                {"steps", c.train.steps},
                {"batch", c.train.batch},
                {"mc_samples", c.train.mc_samples},
                {"eval_every", c.train.eval_every},
                {"orth_codes", c.train.orth_codes == OrthCodes::kSampled
                                   ? "sampled"
                                   : "means"},
                {"fusion", c.train.fusion == TrainFusion::kPrior ? "prior"
                                                                 : "posterior"}};
  j["data"] = {{"n_train", c.data.n_train},
               {"n_eval", c.data.n_eval},
               {"category_mix", c.data.category_mix}};
  return j.dump(2);
}

}  // namespace fovb
