#ifndef UBALAB_PIPELINE_HPP_
#define UBALAB_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubalab/evaluator.hpp"
#include "ubalab/experiment_config.hpp"

namespace ubalab {

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string hash;  // FNV-1a 64 of the file bytes, hex
};

struct StageRecord {
  std::string name;
  std::vector<ArtifactRecord> artifacts;
  double seconds = 0.0;
  std::map<std::string, std::string> notes;  // e.g. cache=hit
};

struct RunManifest {
  std::string version;
  std::string config_hash;
  std::vector<StageRecord> stages;  // in execution order

  const StageRecord* Find(const std::string& stage) const;
  // Inserts or replaces by name, keeping pipeline order.
  void Put(StageRecord record);
  // Every artifact exists under `out_dir` and still carries its hash.
  bool Verify(const std::string& out_dir, std::string* problem = nullptr) const;
  // path -> hash, wall-clock excluded.
  std::map<std::string, std::string> ArtifactHashes() const;

  nlohmann::json ToJson() const;
  static RunManifest FromJson(const nlohmann::json& j);
};

inline constexpr const char* kManifestFile = "manifest.json";
RunManifest ReadManifest(const std::string& out_dir);

struct PipelineOptions {
  // Uplift-table cache; empty = "<output_dir>/cache".
  std::string cache_dir;
  // Progress lines; null = silent.
  std::ostream* log = nullptr;
};

// Stage failures are rethrown as StageError naming the stage.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Labeled, repeat-averaged reports produced by the report stage.
struct RunResult {
  RunManifest manifest;
  std::vector<MetricsReport> reports;
  ComparisonTable comparison;
};

// Every stage reads its inputs from the artifacts of earlier stages in the
// output directory and records its own outputs in manifest.json there, so
// stages can run in separate processes.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig cfg, PipelineOptions opts = {});

  void Prepare();
  void Estimate();
  void Allocate();
  void Attack();
  void Defend();
  // Orders override the config when non-empty.
  void Correlate(const std::vector<int>& orders = {});
  RunResult Report();
  // prepare, estimate, allocate, attack, defend (if configured), report.
  RunResult Run();

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& output_dir() const { return cfg_.output_dir; }
  std::string cache_dir() const;

 private:
  template <typename Fn>
  void RunStage(const std::string& name, Fn&& body);
  std::string Path(const std::string& rel) const;
  void Record(StageRecord record);
  void Log(const std::string& line) const;

  ExperimentConfig cfg_;
  PipelineOptions opts_;
};

// Report stage over one or more finished runs: averages every per-repeat
// report sharing a label and compares the averages.
RunResult ReportRuns(const std::vector<std::string>& out_dirs);

}  // namespace ubalab

#endif  // UBALAB_PIPELINE_HPP_
