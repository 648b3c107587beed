#include "ubalab/uplift.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ubalab {

std::string ToString(EstimatorKind kind) {
  return kind == EstimatorKind::kSimulated ? "simulated" : "proxy";
}

EstimatorKind ParseEstimatorKind(const std::string& s) {
  if (s == "simulated") return EstimatorKind::kSimulated;
  if (s == "proxy") return EstimatorKind::kProxy;
  throw ContractError("unknown estimator '" + s + "'");
}

void UpliftTable::Validate() const {
  if (max_budget < 0) throw ContractError("H must be >= 0");
  if (target_user_ids.size() != values.size())
    throw ContractError("uplift table row/user mismatch");
  for (const auto& row : values) {
    if (row.size() != static_cast<std::size_t>(max_budget) + 1)
      throw ContractError("uplift table needs H + 1 columns");
    for (double y : row)
      if (!(y >= 0.0 && y <= 1.0))
        throw ContractError("uplift entries must lie in [0, 1]");
  }
}

std::uint64_t UpliftTable::ContentHash() const {
  std::ostringstream body;
  body << ToString(estimator) << '\n' << max_budget << '\n';
  for (const auto& [k, v] : metadata) body << k << '\t' << v << '\n';
  for (std::size_t r = 0; r < values.size(); ++r) {
    body << target_user_ids[r];
    for (double y : values[r]) body << '\t' << FormatDouble(y);
    body << '\n';
  }
  Fnv1a64 h;
  h.Update(body.str());
  return h.digest();
}

double Uplift(const UpliftTable& table, std::size_t row, int t) {
  if (t < 1) throw ContractError("uplift is defined for t >= 1");
  if (row >= table.num_users() || t > table.max_budget)
    throw IndexError("uplift index out of range");
  return table.values[row][static_cast<std::size_t>(t)] - table.values[row][0];
}

// ---------------------------------------------------------------------------

UpliftTable EstimateSimulated(const InteractionMatrix& accessible,
                              const TargetSpec& spec,
                              const AttackerConfig& attacker,
                              const TrainConfig& surrogate,
                              const SimulationOptions& opts) {
  if (opts.repeats < 1) throw ContractError("E must be >= 1");
  if (opts.max_budget < 0) throw ContractError("H must be >= 0");
  if (opts.top_k < 1) throw ContractError("K must be >= 1");
  surrogate.Validate();
  spec.Validate(accessible);

  const std::size_t n_targets = spec.target_users.size();
  const std::size_t n_budgets = static_cast<std::size_t>(opts.max_budget) + 1;
  const std::size_t n_repeats = static_cast<std::size_t>(opts.repeats);
  // hits[(t * E + e) * n_targets + row]
  std::vector<char> hits(n_budgets * n_repeats * n_targets, 0);

  ParallelFor(
      n_budgets * n_repeats,
      [&](std::size_t cell) {
        const std::size_t t = cell / n_repeats, e = cell % n_repeats;
        try {
          AttackerConfig probe = attacker;
          probe.seed = DeriveSeed(opts.base_seed, "sim-attack", {t, e});
          Allocation alloc;
          alloc.budgets.assign(n_targets, static_cast<int>(t));
          alloc.total_budget = static_cast<int>(t * n_targets);
          const auto fakes = GenerateFakeUsers(probe, alloc, spec, accessible);
          const auto train_matrix = StackFakes(accessible, fakes);
          TrainConfig cfg = surrogate;
          cfg.seed = DeriveSeed(opts.base_seed, "sim-train", {t, e});
          const auto model = Train(train_matrix, cfg);
          for (std::size_t r = 0; r < n_targets; ++r) {
            const UserIndex u = spec.target_users[r];
            const std::size_t rank =
                RankOf(model, u, spec.target_item, accessible.row(u));
            hits[cell * n_targets + r] = rank >= 1 && rank <= opts.top_k;
          }
        } catch (const DivergenceError& err) {
          throw DivergenceError(std::string("surrogate diverged at t=") +
                                    std::to_string(t) + ", e=" +
                                    std::to_string(e + 1) + ": " + err.what(),
                                err.epoch());
        }
      },
      opts.threads);

  UpliftTable table;
  table.estimator = EstimatorKind::kSimulated;
  table.max_budget = opts.max_budget;
  for (UserIndex u : spec.target_users)
    table.target_user_ids.push_back(accessible.user_ids()[u]);
  table.values.assign(n_targets, std::vector<double>(n_budgets, 0.0));
  for (std::size_t r = 0; r < n_targets; ++r) {
    for (std::size_t t = 0; t < n_budgets; ++t) {
      int count = 0;
      for (std::size_t e = 0; e < n_repeats; ++e)
        count += hits[(t * n_repeats + e) * n_targets + r];
      table.values[r][t] =
          static_cast<double>(count) / static_cast<double>(opts.repeats);
    }
  }
  table.metadata["E"] = std::to_string(opts.repeats);
  table.metadata["K"] = std::to_string(opts.top_k);
  table.metadata["base_seed"] = std::to_string(opts.base_seed);
  table.metadata["attacker"] = ToString(attacker.kind);
  table.metadata["profile_size"] = std::to_string(attacker.profile_size);
  table.metadata["surrogate"] = ToString(surrogate.model_kind) + "/" +
                                ToString(surrogate.loss) + "/d" +
                                std::to_string(surrogate.embedding_dim) + "/ep" +
                                std::to_string(surrogate.epochs);
  table.metadata["target_item"] = accessible.item_ids()[spec.target_item];
  return table;
}

UpliftTable EstimateProxy(const InteractionMatrix& accessible,
                          const TargetSpec& spec, int max_budget,
                          const ProxyParams& params, int profile_size) {
  if (max_budget < 0) throw ContractError("H must be >= 0");
  params.Validate();
  spec.Validate(accessible);

  const std::size_t n_budgets = static_cast<std::size_t>(max_budget) + 1;
  std::vector<std::vector<double>> raw(spec.target_users.size(),
                                       std::vector<double>(n_budgets, 0.0));
  double normalizer = 0.0;
  for (std::size_t r = 0; r < spec.target_users.size(); ++r) {
    const UserIndex u = spec.target_users[r];
    PathQuery q;
    q.pairs = {{u, spec.target_item}};
    q.order = 3;
    for (std::size_t t = 0; t < n_budgets; ++t) {
      const auto fakes = MaxSimilarityProfiles(u, static_cast<int>(t), spec,
                                               accessible, profile_size);
      const auto count = AugmentedPathCounts(accessible, fakes, q).front();
      raw[r][t] = ProxyRaw(count, params);
      normalizer = std::max(normalizer, raw[r][t]);
    }
  }
  const double scale = normalizer > 0.0 ? normalizer : 1.0;

  UpliftTable table;
  table.estimator = EstimatorKind::kProxy;
  table.max_budget = max_budget;
  for (UserIndex u : spec.target_users)
    table.target_user_ids.push_back(accessible.user_ids()[u]);
  table.values = raw;
  for (auto& row : table.values)
    for (double& y : row) y = std::min(1.0, y / scale);
  table.metadata["alpha"] = FormatDouble(params.alpha);
  table.metadata["beta"] = FormatDouble(params.beta);
  table.metadata["normalizer"] = FormatDouble(scale);
  table.metadata["profile_size"] = std::to_string(profile_size);
  table.metadata["target_item"] = accessible.item_ids()[spec.target_item];
  return table;
}

// ---------------------------------------------------------------------------

namespace {

std::string TableBody(const UpliftTable& table) {
  std::ostringstream out;
  out << kUpliftMagic << '\n';
  out << "estimator\t" << ToString(table.estimator) << '\n';
  out << "H\t" << table.max_budget << '\n';
  out << "users\t" << table.values.size() << '\n';
  for (const auto& [k, v] : table.metadata) out << "meta\t" << k << '\t' << v << '\n';
  for (std::size_t r = 0; r < table.values.size(); ++r) {
    out << "row\t" << table.target_user_ids[r];
    for (double y : table.values[r]) out << '\t' << FormatDouble(y);
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  return out;
}

}  // namespace

void WriteUpliftTable(const UpliftTable& table, std::ostream& out) {
  table.Validate();
  out << TableBody(table) << "hash\t" << HashToHex(table.ContentHash()) << '\n';
}

void WriteUpliftTableFile(const UpliftTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  WriteUpliftTable(table, out);
}

UpliftTable ReadUpliftTable(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kUpliftMagic)
    throw ParseError("missing header '" + std::string(kUpliftMagic) + "'", 1);
  UpliftTable table;
  std::size_t expected_users = 0;
  std::string stored_hash;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = SplitTabs(line);
    if (f[0] == "estimator" && f.size() == 2) {
      table.estimator = ParseEstimatorKind(f[1]);
    } else if (f[0] == "H" && f.size() == 2) {
      table.max_budget = std::stoi(f[1]);
    } else if (f[0] == "users" && f.size() == 2) {
      expected_users = std::stoul(f[1]);
    } else if (f[0] == "meta" && f.size() >= 2) {
      table.metadata[f[1]] = f.size() > 2 ? f[2] : "";
    } else if (f[0] == "row" && f.size() >= 3) {
      table.target_user_ids.push_back(f[1]);
      std::vector<double> row;
      for (std::size_t k = 2; k < f.size(); ++k) row.push_back(std::stod(f[k]));
      table.values.push_back(std::move(row));
    } else if (f[0] == "hash" && f.size() == 2) {
      stored_hash = f[1];
    } else {
      throw ParseError("unrecognized uplift table line", line_no);
    }
  }
  if (table.values.size() != expected_users)
    throw ParseError("uplift table row count mismatch", line_no);
  table.Validate();
  if (stored_hash != HashToHex(table.ContentHash()))
    throw IoError("uplift table content hash mismatch");
  return table;
}

UpliftTable ReadUpliftTableFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return ReadUpliftTable(in);
}

void WriteUpliftCurves(const UpliftTable& table, std::ostream& out,
                       char separator) {
  out << "user_id" << separator << "budget" << separator << "y\n";
  for (std::size_t r = 0; r < table.values.size(); ++r)
    for (std::size_t t = 0; t < table.values[r].size(); ++t)
      out << table.target_user_ids[r] << separator << t << separator
          << FormatDouble(table.values[r][t]) << '\n';
}

}  // namespace ubalab
