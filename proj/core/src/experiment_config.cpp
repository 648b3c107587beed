#include "ubalab/experiment_config.hpp"

#include <fstream>
#include <set>

namespace ubalab {

namespace {

using nlohmann::json;

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ContractError(path_ + " must be an object");
  }

  template <typename T>
  void Get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ContractError(Where(key) + " has the wrong type");
    }
  }
  bool Has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& At(const char* key) const { return j_.at(key); }
  std::string Where(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  void Finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key))
        throw ContractError("unknown config key '" +
                            (path_.empty() ? key : path_ + "." + key) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Kind, typename Parse>
void GetKind(Section& s, const char* key, Kind& out, Parse parse) {
  std::string v;
  if (!s.Has(key)) return;
  s.Get(key, v);
  out = parse(v);
}

template <typename Kind, typename Parse>
void GetKinds(Section& s, const char* key, std::vector<Kind>& out, Parse parse) {
  if (!s.Has(key)) return;
  std::vector<std::string> names;
  s.Get(key, names);
  out.clear();
  for (const auto& n : names) out.push_back(parse(n));
}

char ParseSeparator(const std::string& s) {
  if (s == "\\t" || s == "tab") return '\t';
  if (s.size() != 1) throw ContractError("separator must be one character");
  return s[0];
}

std::string SeparatorName(char c) { return c == '\t' ? "tab" : std::string(1, c); }

SyntheticConfig SyntheticFromJson(const json& j, const std::string& path) {
  SyntheticConfig c;
  Section s(j, path);
  s.Get("num_users", c.num_users);
  s.Get("num_items", c.num_items);
  s.Get("num_categories", c.num_categories);
  s.Get("density", c.density);
  s.Get("min_likes_per_user", c.min_likes_per_user);
  s.Get("popularity_exponent", c.popularity_exponent);
  s.Get("primary_affinity", c.primary_affinity);
  s.Get("secondary_affinity", c.secondary_affinity);
  s.Get("dislike_fraction", c.dislike_fraction);
  s.Get("seed", c.seed);
  s.Finish();
  return c;
}

json SyntheticToJson(const SyntheticConfig& c) {
  return {{"num_users", c.num_users},
          {"num_items", c.num_items},
          {"num_categories", c.num_categories},
          {"density", c.density},
          {"min_likes_per_user", c.min_likes_per_user},
          {"popularity_exponent", c.popularity_exponent},
          {"primary_affinity", c.primary_affinity},
          {"secondary_affinity", c.secondary_affinity},
          {"dislike_fraction", c.dislike_fraction},
          {"seed", c.seed}};
}

TrainConfig TrainFromSection(const json& j, const std::string& path,
                             const TrainConfig& base) {
  TrainConfig c = base;
  Section s(j, path);
  GetKind(s, "model", c.model_kind, ParseModelKind);
  GetKind(s, "loss", c.loss, ParseLossKind);
  s.Get("dim", c.embedding_dim);
  s.Get("epochs", c.epochs);
  s.Get("lr", c.learning_rate);
  s.Get("l2", c.l2_reg);
  s.Get("negatives", c.negatives_per_positive);
  s.Get("layers", c.lightgcn_layers);
  s.Get("batch", c.lightgcn_batch);
  s.Finish();
  return c;
}

}  // namespace

nlohmann::json TrainConfigToJson(const TrainConfig& c) {
  return {{"model", ToString(c.model_kind)}, {"loss", ToString(c.loss)},
          {"dim", c.embedding_dim},          {"epochs", c.epochs},
          {"lr", c.learning_rate},           {"l2", c.l2_reg},
          {"negatives", c.negatives_per_positive},
          {"layers", c.lightgcn_layers},     {"batch", c.lightgcn_batch}};
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j, const TrainConfig& base) {
  return TrainFromSection(j, "train", base);
}

std::string VictimLabel(const TrainConfig& cfg) {
  return ToString(cfg.model_kind) + "-" + ToString(cfg.loss);
}

ExperimentConfig ConfigFromJson(const nlohmann::json& j) {
  ExperimentConfig c;
  Section root(j, "");

  if (root.Has("dataset")) {
    Section s(root.At("dataset"), "dataset");
    s.Get("ratings", c.dataset.ratings);
    s.Get("categories", c.dataset.categories);
    if (s.Has("separator")) {
      std::string sep;
      s.Get("separator", sep);
      c.dataset.separator = ParseSeparator(sep);
    }
    s.Get("skip_header", c.dataset.skip_header);
    if (s.Has("synthetic"))
      c.dataset.synthetic = SyntheticFromJson(s.At("synthetic"), "dataset.synthetic");
    s.Finish();
  }
  if (root.Has("preprocess")) {
    Section s(root.At("preprocess"), "preprocess");
    s.Get("kcore", c.preprocess.kcore);
    s.Get("like_threshold", c.preprocess.like_threshold);
    s.Finish();
  }
  if (root.Has("targets")) {
    Section s(root.At("targets"), "targets");
    GetKind(s, "mode", c.targets.mode, ParsePopularityMode);
    s.Get("n_items", c.targets.n_items);
    s.Get("n_users", c.targets.n_users);
    s.Get("cat_threshold", c.targets.cat_threshold);
    s.Finish();
  }
  root.Get("accessible_ratio", c.accessible_ratio);
  if (root.Has("attacker")) {
    Section s(root.At("attacker"), "attacker");
    GetKind(s, "kind", c.attacker.kind, ParseAttackerKind);
    s.Get("profile_size", c.attacker.profile_size);
    s.Get("bandwagon_pool", c.attacker.bandwagon_pool);
    s.Finish();
  }
  if (root.Has("estimator")) {
    Section s(root.At("estimator"), "estimator");
    GetKind(s, "kind", c.estimator.kind, ParseEstimatorKind);
    s.Get("E", c.estimator.repeats);
    s.Get("H", c.estimator.max_budget);
    s.Get("K", c.estimator.top_k);
    s.Get("alpha", c.estimator.alpha);
    s.Get("beta", c.estimator.beta);
    s.Get("threads", c.estimator.threads);
    if (s.Has("surrogate"))
      c.estimator.surrogate =
          TrainFromSection(s.At("surrogate"), "estimator.surrogate", {});
    s.Finish();
  }
  GetKinds(root, "allocators", c.allocators, ParseAllocatorKind);
  root.Get("budget", c.budget);
  if (root.Has("victims")) {
    const auto& arr = root.At("victims");
    if (!arr.is_array()) throw ContractError("victims must be an array");
    c.victims.clear();
    for (std::size_t k = 0; k < arr.size(); ++k)
      c.victims.push_back(
          TrainFromSection(arr[k], "victims[" + std::to_string(k) + "]", {}));
  }
  root.Get("ks", c.ks);
  if (root.Has("defense")) {
    Section s(root.At("defense"), "defense");
    GetKinds(s, "detectors", c.defense.detectors, ParseDetectorKind);
    GetKinds(s, "allocators", c.defense.allocators, ParseAllocatorKind);
    if (s.Has("pca")) {
      Section p(s.At("pca"), "defense.pca");
      p.Get("components", c.defense.pca_components);
      p.Get("item_cap", c.defense.pca_item_cap);
      if (p.Has("standardize")) {
        std::string name;
        p.Get("standardize", name);
        c.defense.pca_standardize = ParsePcaStandardize(name);
      }
      if (p.Has("flag")) {
        std::string flag;
        p.Get("flag", flag);
        if (flag != "smallest" && flag != "largest")
          throw ContractError("defense.pca.flag must be smallest or largest");
        c.defense.pca_flag_largest = flag == "largest";
      }
      p.Finish();
    }
    if (s.Has("fap")) {
      Section f(s.At("fap"), "defense.fap");
      f.Get("damping", c.defense.fap.damping);
      f.Get("max_iters", c.defense.fap.max_iters);
      f.Get("tol", c.defense.fap.tol);
      f.Finish();
    }
    s.Finish();
  }
  if (root.Has("correlate")) {
    Section s(root.At("correlate"), "correlate");
    s.Get("orders", c.correlate.orders);
    s.Get("groups", c.correlate.num_groups);
    s.Get("sample_cap", c.correlate.sample_cap);
    if (s.Has("model"))
      c.correlate.model = TrainFromSection(s.At("model"), "correlate.model", {});
    s.Finish();
  }
  root.Get("repeat_seeds", c.repeat_seeds);
  root.Get("root_seed", c.root_seed);
  root.Get("output_dir", c.output_dir);
  root.Finish();
  c.Validate();
  return c;
}

nlohmann::json ConfigToJson(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"ratings", c.dataset.ratings},
                  {"categories", c.dataset.categories},
                  {"separator", SeparatorName(c.dataset.separator)},
                  {"skip_header", c.dataset.skip_header},
                  {"synthetic", SyntheticToJson(c.dataset.synthetic)}};
  j["preprocess"] = {{"kcore", c.preprocess.kcore},
                     {"like_threshold", c.preprocess.like_threshold}};
  j["targets"] = {{"mode", ToString(c.targets.mode)},
                  {"n_items", c.targets.n_items},
                  {"n_users", c.targets.n_users},
                  {"cat_threshold", c.targets.cat_threshold}};
  j["accessible_ratio"] = c.accessible_ratio;
  j["attacker"] = {{"kind", ToString(c.attacker.kind)},
                   {"profile_size", c.attacker.profile_size},
                   {"bandwagon_pool", c.attacker.bandwagon_pool}};
  j["estimator"] = {{"kind", ToString(c.estimator.kind)},
                    {"E", c.estimator.repeats},
                    {"H", c.estimator.max_budget},
                    {"K", c.estimator.top_k},
                    {"alpha", c.estimator.alpha},
                    {"beta", c.estimator.beta},
                    {"threads", c.estimator.threads},
                    {"surrogate", TrainConfigToJson(c.estimator.surrogate)}};
  auto names = [](const auto& kinds) {
    std::vector<std::string> out;
    for (auto k : kinds) out.push_back(ToString(k));
    return out;
  };
  j["allocators"] = names(c.allocators);
  j["budget"] = c.budget;
  j["victims"] = json::array();
  for (const auto& v : c.victims) j["victims"].push_back(TrainConfigToJson(v));
  j["ks"] = c.ks;
  j["defense"] = {
      {"detectors", names(c.defense.detectors)},
      {"allocators", names(c.defense.allocators)},
      {"pca",
       {{"components", c.defense.pca_components},
        {"item_cap", c.defense.pca_item_cap},
        {"standardize", ToString(c.defense.pca_standardize)},
        {"flag", c.defense.pca_flag_largest ? "largest" : "smallest"}}},
      {"fap",
       {{"damping", c.defense.fap.damping},
        {"max_iters", c.defense.fap.max_iters},
        {"tol", c.defense.fap.tol}}}};
  j["correlate"] = {{"orders", c.correlate.orders},
                    {"groups", c.correlate.num_groups},
                    {"sample_cap", c.correlate.sample_cap},
                    {"model", TrainConfigToJson(c.correlate.model)}};
  j["repeat_seeds"] = c.repeat_seeds;
  j["root_seed"] = c.root_seed;
  j["output_dir"] = c.output_dir;
  return j;
}

void ExperimentConfig::Validate() const {
  if (dataset.ratings.empty() != dataset.categories.empty())
    throw ContractError("dataset.ratings and dataset.categories go together");
  if (targets.n_items < 1) throw ContractError("targets.n_items must be >= 1");
  if (targets.n_users < 1) throw ContractError("targets.n_users must be >= 1");
  if (!(accessible_ratio > 0.0 && accessible_ratio <= 1.0))
    throw ContractError("accessible_ratio must lie in (0, 1]");
  if (attacker.profile_size < 0) throw ContractError("attacker.profile_size must be >= 0");
  if (attacker.bandwagon_pool < 1) throw ContractError("attacker.bandwagon_pool must be >= 1");
  if (estimator.repeats < 1) throw ContractError("estimator.E must be >= 1");
  if (estimator.max_budget < 1) throw ContractError("estimator.H must be >= 1");
  if (estimator.top_k < 1) throw ContractError("estimator.K must be >= 1");
  ProxyParams{estimator.alpha, estimator.beta}.Validate();
  estimator.surrogate.Validate();
  if (allocators.empty()) throw ContractError("allocators must not be empty");
  if (budget < 0) throw ContractError("budget must be >= 0");
  if (victims.empty()) throw ContractError("victims must not be empty");
  for (const auto& v : victims) v.Validate();
  if (ks.empty()) throw ContractError("ks must not be empty");
  for (auto k : ks)
    if (k < 1) throw ContractError("every K must be >= 1");
  if (defense.pca_components < 1) throw ContractError("defense.pca.components must be >= 1");
  if (!(defense.fap.damping > 0.0 && defense.fap.damping < 1.0))
    throw ContractError("defense.fap.damping must lie in (0, 1)");
  if (defense.fap.max_iters < 1) throw ContractError("defense.fap.max_iters must be >= 1");
  for (auto a : defense.allocators)
    if (std::find(allocators.begin(), allocators.end(), a) == allocators.end())
      throw ContractError("defense.allocators names an allocator that never runs");
  for (int order : correlate.orders)
    if (!IsSupportedOrder(order)) throw ContractError("correlate.orders must be odd, 1..7");
  if (correlate.num_groups < 3) throw ContractError("correlate.groups must be >= 3");
  correlate.model.Validate();
  if (repeat_seeds.empty()) throw ContractError("repeat_seeds must not be empty");
  if (output_dir.empty()) throw ContractError("output_dir must not be empty");
}

std::uint64_t ExperimentConfig::Hash() const {
  auto j = ConfigToJson(*this);
  // Neither changes any artifact.
  j.erase("output_dir");
  j["estimator"].erase("threads");
  return Fnv1a64().Update(j.dump()).digest();
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), 0);
  }
  return ConfigFromJson(j);
}

}  // namespace ubalab
