#include "ubalab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "ubalab/allocator.hpp"
#include "ubalab/attackers.hpp"
#include "ubalab/defense.hpp"
#include "ubalab/pathcount.hpp"
#include "ubalab/synthetic.hpp"
#include "ubalab/uplift.hpp"

namespace ubalab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kStageOrder = {
    "prepare", "estimate", "allocate", "attack", "defend", "correlate", "report"};

std::size_t StageRank(const std::string& name) {
  auto it = std::find(kStageOrder.begin(), kStageOrder.end(), name);
  return static_cast<std::size_t>(it - kStageOrder.begin());
}

void EnsureParent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void WriteFile(const std::string& path,
               const std::function<void(std::ostream&)>& body) {
  EnsureParent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  body(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

void WriteJsonFile(const std::string& path, const json& j) {
  WriteFile(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing artifact " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void RequireFile(const std::string& path, const std::string& producer) {
  if (!fs::exists(path))
    throw IoError("missing artifact " + path + " (run '" + producer + "' first)");
}

std::string CaseName(std::size_t c, std::size_t r) {
  return "c" + std::to_string(c) + "_r" + std::to_string(r);
}

// Targets of one case, as persisted by prepare.
struct CaseInfo {
  TargetSpec spec;             // over the real matrix
  InteractionMatrix accessible;
  TargetSpec accessible_spec;  // over the accessible matrix
};

struct Prepared {
  InteractionMatrix real;
  int profile_size = 1;
  std::vector<CaseInfo> cases;
};

}  // namespace

// ---------------------------------------------------------------------------

const StageRecord* RunManifest::Find(const std::string& stage) const {
  for (const auto& s : stages)
    if (s.name == stage) return &s;
  return nullptr;
}

void RunManifest::Put(StageRecord record) {
  stages.erase(std::remove_if(stages.begin(), stages.end(),
                              [&](const StageRecord& s) { return s.name == record.name; }),
               stages.end());
  stages.push_back(std::move(record));
  std::stable_sort(stages.begin(), stages.end(),
                   [](const StageRecord& a, const StageRecord& b) {
                     return StageRank(a.name) < StageRank(b.name);
                   });
}

bool RunManifest::Verify(const std::string& out_dir, std::string* problem) const {
  for (const auto& s : stages)
    for (const auto& a : s.artifacts) {
      const auto full = (fs::path(out_dir) / a.path).string();
      if (!fs::exists(full)) {
        if (problem) *problem = "missing " + a.path;
        return false;
      }
      if (HashToHex(HashFile(full)) != a.hash) {
        if (problem) *problem = "hash mismatch for " + a.path;
        return false;
      }
    }
  return true;
}

std::map<std::string, std::string> RunManifest::ArtifactHashes() const {
  std::map<std::string, std::string> out;
  for (const auto& s : stages)
    for (const auto& a : s.artifacts) out[a.path] = a.hash;
  return out;
}

json RunManifest::ToJson() const {
  json j;
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["stages"] = json::array();
  for (const auto& s : stages) {
    json js;
    js["name"] = s.name;
    js["seconds"] = s.seconds;
    js["notes"] = s.notes;
    js["artifacts"] = json::array();
    for (const auto& a : s.artifacts)
      js["artifacts"].push_back({{"path", a.path}, {"hash", a.hash}});
    j["stages"].push_back(js);
  }
  return j;
}

RunManifest RunManifest::FromJson(const json& j) {
  RunManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& js : j.at("stages")) {
      StageRecord s;
      s.name = js.at("name").get<std::string>();
      s.seconds = js.at("seconds").get<double>();
      s.notes = js.at("notes").get<std::map<std::string, std::string>>();
      for (const auto& a : js.at("artifacts"))
        s.artifacts.push_back({a.at("path").get<std::string>(), a.at("hash").get<std::string>()});
      m.stages.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what(), 0);
  }
  return m;
}

RunManifest ReadManifest(const std::string& out_dir) {
  const auto path = (fs::path(out_dir) / kManifestFile).string();
  if (!fs::exists(path)) return {};
  return RunManifest::FromJson(ReadJsonFile(path));
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t RepeatSeed(const ExperimentConfig& cfg, std::size_t r) {
  return DeriveSeed(cfg.root_seed, "repeat", {cfg.repeat_seeds.at(r)});
}

Prepared LoadPrepared(const std::string& out) {
  const auto dir = fs::path(out) / "prepare";
  const auto matrix_path = (dir / "matrix.im").string();
  const auto targets_path = (dir / "targets.json").string();
  RequireFile(matrix_path, "prepare");
  RequireFile(targets_path, "prepare");
  Prepared p;
  p.real = ReadMatrixFile(matrix_path);
  const auto j = ReadJsonFile(targets_path);
  p.profile_size = j.at("profile_size").get<int>();
  for (const auto& jc : j.at("cases")) {
    CaseInfo info;
    const auto item = p.real.FindItem(jc.at("target_item").get<std::string>());
    if (!item) throw ContractError("targets.json names an unknown item");
    info.spec.target_item = *item;
    info.spec.popularity_mode = ParsePopularityMode(jc.at("popularity_mode").get<std::string>());
    info.spec.selection_seed = jc.at("selection_seed").get<std::uint64_t>();
    for (const auto& id : jc.at("target_users").get<std::vector<std::string>>()) {
      const auto u = p.real.FindUser(id);
      if (!u) throw ContractError("targets.json names an unknown user " + id);
      info.spec.target_users.push_back(*u);
    }
    std::sort(info.spec.target_users.begin(), info.spec.target_users.end());
    info.spec.Validate(p.real);
    const auto acc_path = (fs::path(out) / jc.at("accessible").get<std::string>()).string();
    RequireFile(acc_path, "prepare");
    info.accessible = ReadMatrixFile(acc_path);
    info.accessible_spec = RebaseTargetSpec(info.spec, p.real, info.accessible);
    p.cases.push_back(std::move(info));
  }
  return p;
}

std::uint64_t UpliftCacheKey(const ExperimentConfig& cfg, const CaseInfo& info,
                             int profile_size, std::uint64_t base_seed) {
  const auto& e = cfg.estimator;
  Fnv1a64 h;
  h.Update(std::string_view("uplift-v1"))
      .UpdateValue(info.accessible.Fingerprint())
      .UpdateValue(info.accessible_spec.target_item)
      .UpdateSpan(std::span<const UserIndex>(info.accessible_spec.target_users))
      .UpdateValue(static_cast<int>(e.kind))
      .UpdateValue(e.max_budget);
  if (e.kind == EstimatorKind::kSimulated) {
    h.UpdateValue(e.repeats)
        .UpdateValue(static_cast<std::uint64_t>(e.top_k))
        .UpdateValue(e.surrogate.Hash())
        .UpdateValue(static_cast<int>(cfg.attacker.kind))
        .UpdateValue(cfg.attacker.bandwagon_pool)
        .UpdateValue(profile_size)
        .UpdateValue(base_seed);
  } else {
    h.UpdateValue(e.alpha).UpdateValue(e.beta).UpdateValue(profile_size);
  }
  return h.digest();
}

// Single writer per key: the table lands under a unique temporary name and is
// renamed into place, so readers never see a partial file.
void StoreInCache(const UpliftTable& table, const std::string& path) {
  EnsureParent(path);
  std::random_device rd;
  const auto tmp = path + ".tmp." + HashToHex((std::uint64_t{rd()} << 32) ^ rd());
  WriteUpliftTableFile(table, tmp);
  fs::rename(tmp, path);
}

Allocation BuildAllocation(AllocatorKind kind, const UpliftTable& table, int budget,
                           std::uint64_t seed) {
  Allocation alloc;
  switch (kind) {
    case AllocatorKind::kDp:
      return AllocateDp(table, budget);
    case AllocatorKind::kUniform:
      alloc = AllocateUniform(table.target_user_ids, budget, table.max_budget);
      break;
    case AllocatorKind::kRandom:
      alloc = AllocateRandom(table.target_user_ids, budget, table.max_budget, seed);
      break;
  }
  ScoreAllocation(table, alloc);
  return alloc;
}

// Report files written by attack and defend, sorted by name.
std::vector<std::string> ReportFiles(const std::string& out) {
  std::vector<std::string> files;
  for (const char* stage : {"attack", "defend"}) {
    const auto dir = fs::path(out) / stage;
    if (!fs::exists(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.size() > 12 && name.ends_with(".report.json"))
        files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

// ---------------------------------------------------------------------------

Pipeline::Pipeline(ExperimentConfig cfg, PipelineOptions opts)
    : cfg_(std::move(cfg)), opts_(std::move(opts)) {
  cfg_.Validate();
}

std::string Pipeline::cache_dir() const {
  return opts_.cache_dir.empty() ? Path("cache") : opts_.cache_dir;
}

std::string Pipeline::Path(const std::string& rel) const {
  return (fs::path(cfg_.output_dir) / rel).string();
}

void Pipeline::Log(const std::string& line) const {
  if (opts_.log) *opts_.log << line << std::endl;
}

void Pipeline::Record(StageRecord record) {
  auto manifest = ReadManifest(cfg_.output_dir);
  manifest.version = LibraryVersion();
  manifest.config_hash = HashToHex(cfg_.Hash());
  manifest.Put(std::move(record));
  WriteJsonFile(Path(kManifestFile), manifest.ToJson());
}

template <typename Fn>
void Pipeline::RunStage(const std::string& name, Fn&& body) {
  Log("[" + name + "] start");
  const auto start = std::chrono::steady_clock::now();
  StageRecord record;
  record.name = name;
  auto add = [&](const std::string& rel) {
    record.artifacts.push_back({rel, HashToHex(HashFile(Path(rel)))});
  };
  try {
    body(add, record.notes);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  record.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Log("[" + name + "] done in " + FormatDouble(record.seconds) + " s");
  Record(std::move(record));
}

void Pipeline::Prepare() {
  RunStage("prepare", [&](auto&& add, auto& notes) {
    fs::create_directories(Path("prepare"));
    // The output location is not part of the experiment, so two runs into
    // different directories produce identical artifacts.
    auto echo = ConfigToJson(cfg_);
    echo.erase("output_dir");
    WriteJsonFile(Path("config.json"), echo);
    add("config.json");

    std::string ratings = cfg_.dataset.ratings, categories = cfg_.dataset.categories;
    DelimitedFormat format{cfg_.dataset.separator, cfg_.dataset.skip_header};
    if (ratings.empty()) {
      ratings = Path("prepare/synthetic_ratings.csv");
      categories = Path("prepare/synthetic_categories.csv");
      WriteSyntheticFiles(GenerateSynthetic(cfg_.dataset.synthetic), ratings, categories);
      format = DelimitedFormat{',', false};
      add("prepare/synthetic_ratings.csv");
      add("prepare/synthetic_categories.csv");
      notes["dataset"] = "synthetic";
    } else {
      notes["dataset"] = ratings;
    }
    auto real = ToImplicit(LoadRatings(ratings, format), cfg_.preprocess.like_threshold);
    if (cfg_.preprocess.kcore > 0) real = KCoreFilter(real, cfg_.preprocess.kcore);
    if (real.empty()) throw EmptyMatrixError("no interactions left after preprocessing");
    const auto cats = LoadCategories(categories, real, format);
    notes["users"] = std::to_string(real.num_users());
    notes["items"] = std::to_string(real.num_items());
    notes["interactions"] = std::to_string(real.num_interactions());

    WriteMatrixFile(real, Path("prepare/matrix.im"));
    add("prepare/matrix.im");

    const int profile_size = cfg_.attacker.profile_size > 0
                                 ? cfg_.attacker.profile_size
                                 : DefaultProfileSize(real);
    const auto items = SelectTargetItems(real, cfg_.targets.mode, cfg_.targets.n_items,
                                         DeriveSeed(cfg_.root_seed, "select-items"));
    json targets;
    targets["profile_size"] = profile_size;
    targets["cases"] = json::array();
    for (std::size_t c = 0; c < items.size(); ++c) {
      auto spec = SelectTargetUsers(real, cats, items[c], cfg_.targets.n_users,
                                    cfg_.targets.cat_threshold, cfg_.root_seed,
                                    cfg_.targets.mode);
      const auto accessible = SplitAccessible(real, cfg_.accessible_ratio, spec.target_users,
                                              DeriveSeed(cfg_.root_seed, "accessible", {c}));
      const std::string acc_rel = "prepare/accessible_c" + std::to_string(c) + ".im";
      WriteMatrixFile(accessible, Path(acc_rel));
      add(acc_rel);
      std::vector<std::string> ids;
      for (UserIndex u : spec.target_users) ids.push_back(real.user_ids()[u]);
      targets["cases"].push_back({{"target_item", real.item_ids()[spec.target_item]},
                                  {"target_item_degree", real.ItemDegrees()[spec.target_item]},
                                  {"popularity_mode", ToString(spec.popularity_mode)},
                                  {"selection_seed", spec.selection_seed},
                                  {"target_users", ids},
                                  {"accessible", acc_rel}});
    }
    WriteJsonFile(Path("prepare/targets.json"), targets);
    add("prepare/targets.json");
  });
}

void Pipeline::Estimate() {
  RunStage("estimate", [&](auto&& add, auto& notes) {
    const auto prepared = LoadPrepared(cfg_.output_dir);
    const auto& e = cfg_.estimator;
    std::size_t hits = 0, misses = 0;
    for (std::size_t c = 0; c < prepared.cases.size(); ++c) {
      const auto& info = prepared.cases[c];
      for (std::size_t r = 0; r < cfg_.repeat_seeds.size(); ++r) {
        const std::uint64_t base_seed = DeriveSeed(RepeatSeed(cfg_, r), "estimate", {c});
        const auto key = UpliftCacheKey(cfg_, info, prepared.profile_size, base_seed);
        const auto cached = (fs::path(cache_dir()) / (HashToHex(key) + ".ut")).string();
        UpliftTable table;
        if (fs::exists(cached)) {
          table = ReadUpliftTableFile(cached);
          ++hits;
        } else {
          Log("[estimate] " + CaseName(c, r) + " computing " + ToString(e.kind) + " table");
          if (e.kind == EstimatorKind::kSimulated) {
            AttackerConfig attacker{cfg_.attacker.kind, prepared.profile_size,
                                    cfg_.attacker.bandwagon_pool, 0};
            SimulationOptions so;
            so.max_budget = e.max_budget;
            so.repeats = e.repeats;
            so.top_k = e.top_k;
            so.base_seed = base_seed;
            so.threads = e.threads;
            table = EstimateSimulated(info.accessible, info.accessible_spec, attacker,
                                      e.surrogate, so);
          } else {
            table = EstimateProxy(info.accessible, info.accessible_spec, e.max_budget,
                                  ProxyParams{e.alpha, e.beta}, prepared.profile_size);
          }
          StoreInCache(table, cached);
          ++misses;
        }
        const std::string rel = "estimate/" + CaseName(c, r) + ".ut";
        WriteFile(Path(rel), [&](std::ostream& out) { WriteUpliftTable(table, out); });
        add(rel);
        const std::string curves = "estimate/" + CaseName(c, r) + "_curves.tsv";
        WriteFile(Path(curves), [&](std::ostream& out) { WriteUpliftCurves(table, out); });
        add(curves);
      }
    }
    notes["cache"] = misses == 0 ? "hit" : (hits == 0 ? "miss" : "partial");
    notes["cache_hits"] = std::to_string(hits);
    notes["cache_misses"] = std::to_string(misses);
  });
}

void Pipeline::Allocate() {
  RunStage("allocate", [&](auto&& add, auto& notes) {
    const auto prepared = LoadPrepared(cfg_.output_dir);
    for (std::size_t c = 0; c < prepared.cases.size(); ++c)
      for (std::size_t r = 0; r < cfg_.repeat_seeds.size(); ++r) {
        const auto table_path = Path("estimate/" + CaseName(c, r) + ".ut");
        RequireFile(table_path, "estimate");
        const auto table = ReadUpliftTableFile(table_path);
        for (auto kind : cfg_.allocators) {
          const auto alloc =
              BuildAllocation(kind, table, cfg_.budget,
                              DeriveSeed(RepeatSeed(cfg_, r), "allocate", {c}));
          const std::string rel =
              "allocate/" + CaseName(c, r) + "_" + ToString(kind) + ".tsv";
          EnsureParent(Path(rel));
          WriteAllocationFile(alloc, Path(rel));
          add(rel);
        }
      }
    notes["budget"] = std::to_string(cfg_.budget);
  });
}

void Pipeline::Attack() {
  RunStage("attack", [&](auto&& add, auto& notes) {
    const auto prepared = LoadPrepared(cfg_.output_dir);
    std::size_t reports = 0;
    for (std::size_t c = 0; c < prepared.cases.size(); ++c) {
      const auto& info = prepared.cases[c];
      for (std::size_t r = 0; r < cfg_.repeat_seeds.size(); ++r) {
        const std::uint64_t rs = RepeatSeed(cfg_, r);
        for (auto kind : cfg_.allocators) {
          const std::string stem = CaseName(c, r) + "_" + ToString(kind);
          const auto alloc_path = Path("allocate/" + stem + ".tsv");
          RequireFile(alloc_path, "allocate");
          const auto alloc = ReadAllocationFile(alloc_path);
          AttackerConfig attacker{cfg_.attacker.kind, prepared.profile_size,
                                  cfg_.attacker.bandwagon_pool,
                                  DeriveSeed(rs, "attack", {c})};
          const auto fakes =
              GenerateFakeUsers(attacker, alloc, info.accessible_spec, info.accessible);
          const std::string fakes_rel = "attack/" + stem + ".fakes.csv";
          WriteFile(Path(fakes_rel),
                    [&](std::ostream& out) { WriteFakeUsers(fakes, prepared.real, out); });
          add(fakes_rel);
          for (const auto& victim : cfg_.victims) {
            Log("[attack] " + stem + " victim " + VictimLabel(victim));
            auto report = Evaluate(prepared.real, fakes, info.spec, victim, cfg_.ks,
                                   DeriveSeed(rs, "victim", {c}));
            auto& meta = report.metadata();
            meta["label"] = ToString(kind) + "/" + VictimLabel(victim);
            meta["allocator"] = ToString(kind);
            meta["estimator"] = ToString(cfg_.estimator.kind);
            meta["attacker"] = ToString(cfg_.attacker.kind);
            meta["case"] = std::to_string(c);
            meta["repeat_seed"] = std::to_string(cfg_.repeat_seeds[r]);
            meta["budget_spent"] = std::to_string(alloc.Spent());
            const std::string rel = "attack/" + stem + "_" + VictimLabel(victim) + ".report.json";
            WriteJsonFile(Path(rel), report.ToJson());
            add(rel);
            ++reports;
          }
        }
      }
    }
    notes["reports"] = std::to_string(reports);
  });
}

void Pipeline::Defend() {
  RunStage("defend", [&](auto&& add, auto& notes) {
    if (cfg_.defense.detectors.empty()) {
      notes["skipped"] = "no detectors configured";
      return;
    }
    const auto prepared = LoadPrepared(cfg_.output_dir);
    for (std::size_t c = 0; c < prepared.cases.size(); ++c) {
      const auto& info = prepared.cases[c];
      for (std::size_t r = 0; r < cfg_.repeat_seeds.size(); ++r) {
        const std::uint64_t rs = RepeatSeed(cfg_, r);
        for (auto kind : cfg_.defense.allocators) {
          const std::string stem = CaseName(c, r) + "_" + ToString(kind);
          const auto fakes_path = Path("attack/" + stem + ".fakes.csv");
          RequireFile(fakes_path, "attack");
          std::ifstream in(fakes_path);
          const auto fakes = ReadFakeUsers(in, prepared.real, info.spec.target_item);
          const auto stacked = StackFakes(prepared.real, fakes);
          for (auto detector : cfg_.defense.detectors) {
            DetectionResult det;
            if (detector == DetectorKind::kPca) {
              PcaOptions po{cfg_.defense.pca_components, cfg_.defense.pca_item_cap,
                            cfg_.defense.pca_standardize, cfg_.defense.pca_flag_largest};
              det = PcaDetect(stacked, fakes.size(), po);
            } else {
              det = FapDetect(stacked, info.spec.target_item, fakes.size(), cfg_.defense.fap);
            }
            det.AttachGroundTruth(prepared.real.num_users());
            const std::string dstem = stem + "_" + ToString(detector);
            const std::string det_rel = "defend/" + dstem + ".detect.tsv";
            WriteFile(Path(det_rel),
                      [&](std::ostream& out) { WriteDetection(det, stacked, out); });
            add(det_rel);
            for (const auto& victim : cfg_.victims) {
              Log("[defend] " + dstem + " victim " + VictimLabel(victim));
              auto report = FilterAndEvaluate(prepared.real, fakes, det, info.spec, victim,
                                              cfg_.ks, DeriveSeed(rs, "victim", {c}));
              auto& meta = report.metadata();
              meta["label"] = ToString(kind) + "+" + ToString(detector) + "/" +
                              VictimLabel(victim);
              meta["allocator"] = ToString(kind);
              meta["estimator"] = ToString(cfg_.estimator.kind);
              meta["attacker"] = ToString(cfg_.attacker.kind);
              meta["case"] = std::to_string(c);
              meta["repeat_seed"] = std::to_string(cfg_.repeat_seeds[r]);
              meta["recall"] = FormatDouble(det.confusion->recall());
              meta["precision"] = FormatDouble(det.confusion->precision());
              meta["detector_warning"] = det.warning ? "1" : "0";
              const std::string rel =
                  "defend/" + dstem + "_" + VictimLabel(victim) + ".report.json";
              WriteJsonFile(Path(rel), report.ToJson());
              add(rel);
            }
          }
        }
      }
    }
  });
}

void Pipeline::Correlate(const std::vector<int>& orders_override) {
  RunStage("correlate", [&](auto&& add, auto& notes) {
    const auto orders = orders_override.empty() ? cfg_.correlate.orders : orders_override;
    for (int order : orders)
      if (!IsSupportedOrder(order))
        throw ContractError("unsupported path order " + std::to_string(order));
    const auto matrix_path = Path("prepare/matrix.im");
    RequireFile(matrix_path, "prepare");
    const auto real = ReadMatrixFile(matrix_path);
    TrainConfig model_cfg = cfg_.correlate.model;
    model_cfg.seed = DeriveSeed(cfg_.root_seed, "correlate");
    const auto model = Train(real, model_cfg);
    for (int order : orders) {
      CorrelationOptions co;
      co.order = order;
      co.num_groups = cfg_.correlate.num_groups;
      co.sample_cap = cfg_.correlate.sample_cap;
      co.seed = DeriveSeed(cfg_.root_seed, "correlate", {static_cast<std::uint64_t>(order)});
      const auto report = ComputeCorrelationReport(model, real, co);
      const std::string stem = "correlate/order" + std::to_string(order);
      WriteFile(Path(stem + ".tsv"),
                [&](std::ostream& out) { WriteCorrelationPlotData(report, out); });
      add(stem + ".tsv");
      json j{{"order", order},
             {"spearman_r", report.spearman_r},
             {"p_value", report.p_value},
             {"groups", report.groups.size()},
             {"pairs", report.num_pairs},
             {"model", TrainConfigToJson(cfg_.correlate.model)}};
      WriteJsonFile(Path(stem + ".json"), j);
      add(stem + ".json");
      notes["order" + std::to_string(order) + ".spearman_r"] = FormatDouble(report.spearman_r);
    }
  });
}

RunResult ReportRuns(const std::vector<std::string>& out_dirs) {
  std::map<std::string, std::vector<MetricsReport>> by_label;
  std::vector<std::string> order;
  for (const auto& dir : out_dirs) {
    const auto files = ReportFiles(dir);
    for (const auto& f : files) {
      auto report = MetricsReport::FromJson(ReadJsonFile(f));
      std::string label = report.label();
      if (out_dirs.size() > 1) label = fs::path(dir).filename().string() + ":" + label;
      report.metadata()["label"] = label;
      if (!by_label.count(label)) order.push_back(label);
      by_label[label].push_back(std::move(report));
    }
  }
  if (by_label.empty())
    throw IoError("no attack or defense reports found (run 'attack' first)");
  std::sort(order.begin(), order.end());
  RunResult result;
  for (const auto& label : order) {
    auto avg = AverageReports(by_label[label]);
    avg.metadata().erase("case");
    avg.metadata().erase("repeat_seed");
    result.reports.push_back(std::move(avg));
  }
  result.comparison = Compare(result.reports);
  return result;
}

RunResult Pipeline::Report() {
  RunResult result;
  RunStage("report", [&](auto&& add, auto& notes) {
    result = ReportRuns({cfg_.output_dir});
    json all = json::array();
    for (const auto& r : result.reports) all.push_back(r.ToJson());
    WriteJsonFile(Path("report/metrics.json"), all);
    add("report/metrics.json");
    WriteFile(Path("report/comparison.tsv"),
              [&](std::ostream& out) { result.comparison.WriteDelimited(out); });
    add("report/comparison.tsv");
    WriteFile(Path("report/summary.txt"),
              [&](std::ostream& out) { result.comparison.WriteSummary(out); });
    add("report/summary.txt");
    notes["labels"] = std::to_string(result.reports.size());
  });
  result.manifest = ReadManifest(cfg_.output_dir);
  return result;
}

RunResult Pipeline::Run() {
  Prepare();
  Estimate();
  Allocate();
  Attack();
  if (!cfg_.defense.detectors.empty()) Defend();
  return Report();
}

}  // namespace ubalab
