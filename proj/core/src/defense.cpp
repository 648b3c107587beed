#include "ubalab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>

namespace ubalab {

std::string ToString(DetectorKind kind) {
  return kind == DetectorKind::kPca ? "pca" : "fap";
}

DetectorKind ParseDetectorKind(const std::string& s) {
  if (s == "pca") return DetectorKind::kPca;
  if (s == "fap") return DetectorKind::kFap;
  throw ContractError("unknown detector '" + s + "'");
}

void DetectionResult::AttachGroundTruth(std::size_t num_real) {
  if (num_real > scores.size()) throw ContractError("more real users than scored users");
  ConfusionCounts c;
  std::vector<char> flag(scores.size(), 0);
  for (UserIndex u : flagged) flag.at(u) = 1;
  for (std::size_t u = 0; u < scores.size(); ++u) {
    const bool fake = u >= num_real;
    if (flag[u]) (fake ? c.tp : c.fp)++;
    else (fake ? c.fn : c.tn)++;
  }
  confusion = c;
}

std::string ToString(PcaStandardize s) {
  return s == PcaStandardize::kUsers ? "users" : "items";
}

PcaStandardize ParsePcaStandardize(const std::string& s) {
  if (s == "users") return PcaStandardize::kUsers;
  if (s == "items") return PcaStandardize::kItems;
  throw ContractError("unknown pca standardization '" + s + "'");
}

namespace {

void CheckFlagCount(const InteractionMatrix& stacked, std::size_t n_flag) {
  if (n_flag > 0 && n_flag >= stacked.num_users())
    throw ContractError("n_flag must be below the user count");
}

// Indices of the n_flag extreme scores, ties to the lower index, ascending.
std::vector<UserIndex> PickFlags(const std::vector<double>& scores,
                                 std::size_t n_flag, bool largest) {
  std::vector<UserIndex> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](UserIndex a, UserIndex b) {
    return largest ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  order.resize(n_flag);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

DetectionResult PcaDetect(const InteractionMatrix& stacked, std::size_t n_flag,
                          const PcaOptions& opts) {
  if (opts.n_components < 1) throw ContractError("n_components must be >= 1");
  CheckFlagCount(stacked, n_flag);
  const std::size_t n = stacked.num_users();

  DetectionResult result;
  result.kind = DetectorKind::kPca;
  result.params["n_components"] = std::to_string(opts.n_components);
  result.params["item_cap"] = std::to_string(opts.item_cap);
  result.params["flag"] = opts.flag_largest ? "largest" : "smallest";
  result.params["standardize"] = ToString(opts.standardize);
  result.scores.assign(n, 0.0);

  // Most popular items first, ties by index; constant columns carry no
  // variance and are dropped.
  const auto degrees = stacked.ItemDegrees();
  std::vector<ItemIndex> items;
  for (ItemIndex i = 0; i < degrees.size(); ++i)
    if (degrees[i] > 0 && degrees[i] < n) items.push_back(i);
  std::stable_sort(items.begin(), items.end(),
                   [&](ItemIndex a, ItemIndex b) { return degrees[a] > degrees[b]; });
  if (items.size() > opts.item_cap) items.resize(opts.item_cap);
  std::sort(items.begin(), items.end());
  const std::size_t d = items.size();
  result.params["items_used"] = std::to_string(d);

  int components = opts.n_components;
  if (d > 0 && n > 1) {
    std::vector<std::int64_t> column(stacked.num_items(), -1);
    for (std::size_t c = 0; c < d; ++c) column[items[c]] = static_cast<std::int64_t>(c);

    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(d));
    for (std::size_t u = 0; u < n; ++u)
      for (ItemIndex i : stacked.row(static_cast<UserIndex>(u)))
        if (column[i] >= 0) z(static_cast<Eigen::Index>(u), column[i]) = 1.0;
    if (opts.standardize == PcaStandardize::kItems) {
      for (std::size_t c = 0; c < d; ++c) {
        const double p = static_cast<double>(degrees[items[c]]) / static_cast<double>(n);
        const double sd = std::sqrt(p * (1.0 - p));
        auto col = z.col(static_cast<Eigen::Index>(c));
        col = (col.array() - p) / sd;
      }
    } else {
      // Empty or full rows carry no variance and stay at zero.
      for (std::size_t u = 0; u < n; ++u) {
        auto row = z.row(static_cast<Eigen::Index>(u));
        const double p = row.sum() / static_cast<double>(d);
        const double sd = std::sqrt(p * (1.0 - p));
        if (sd > 0.0) row = (row.array() - p) / sd;
        else row.setZero();
      }
    }

    // The nonzero spectrum of Z^T Z equals that of Z Z^T; decompose the
    // smaller one. With Z Z^T w = lambda w, the projection of user u on the
    // matching item direction is sqrt(lambda) w_u.
    const bool by_users = n <= d;
    Eigen::MatrixXd gram = by_users ? Eigen::MatrixXd(z * z.transpose())
                                    : Eigen::MatrixXd(z.transpose() * z);
    gram /= static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw Error("eigen-decomposition failed");
    const auto& values = solver.eigenvalues();  // ascending
    const auto& vectors = solver.eigenvectors();
    const Eigen::Index dim = values.size();
    const double tol = 1e-9 * std::max(1.0, values(dim - 1));
    int rank = 0;
    for (Eigen::Index k = 0; k < dim; ++k)
      if (values(k) > tol) ++rank;
    components = std::min(components, rank);

    for (int c = 0; c < components; ++c) {
      const Eigen::Index k = dim - 1 - c;
      Eigen::VectorXd proj;
      if (by_users)
        proj = vectors.col(k) * std::sqrt(values(k) * static_cast<double>(n - 1));
      else
        proj = z * vectors.col(k);
      for (std::size_t u = 0; u < n; ++u) {
        const double v = proj(static_cast<Eigen::Index>(u));
        result.scores[u] += v * v;
      }
    }
  } else {
    components = 0;
  }
  if (components < opts.n_components) result.warning = true;
  result.params["components_used"] = std::to_string(components);
  result.flagged = PickFlags(result.scores, n_flag, opts.flag_largest);
  return result;
}

DetectionResult FapDetect(const InteractionMatrix& stacked,
                          ItemIndex target_item_hint, std::size_t n_flag,
                          const FapOptions& opts, std::vector<double>* max_change) {
  CheckFlagCount(stacked, n_flag);
  if (!(opts.damping > 0.0 && opts.damping < 1.0))
    throw ContractError("damping must lie in (0, 1)");
  if (opts.max_iters < 1) throw ContractError("max_iters must be >= 1");
  if (target_item_hint >= stacked.num_items()) throw IndexError("hint item out of range");

  const std::size_t n = stacked.num_users();
  const auto columns = stacked.ItemColumns();
  std::vector<double> item_belief(stacked.num_items(), 0.0);
  std::vector<double> user_belief(n, 0.0);
  item_belief[target_item_hint] = 1.0;
  if (max_change) max_change->clear();

  bool converged = false;
  int iters = 0;
  while (iters < opts.max_iters) {
    ++iters;
    double change = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      const auto row = stacked.row(static_cast<UserIndex>(u));
      double b = 0.0;
      if (!row.empty()) {
        for (ItemIndex i : row) b += item_belief[i];
        b = opts.damping * b / static_cast<double>(row.size());
      }
      change = std::max(change, std::abs(b - user_belief[u]));
      user_belief[u] = b;
    }
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i == target_item_hint) continue;
      double b = 0.0;
      if (!columns[i].empty()) {
        for (UserIndex u : columns[i]) b += user_belief[u];
        b = opts.damping * b / static_cast<double>(columns[i].size());
      }
      change = std::max(change, std::abs(b - item_belief[i]));
      item_belief[i] = b;
    }
    if (max_change) max_change->push_back(change);
    if (change < opts.tol) {
      converged = true;
      break;
    }
  }

  DetectionResult result;
  result.kind = DetectorKind::kFap;
  result.params["damping"] = FormatDouble(opts.damping);
  result.params["max_iters"] = std::to_string(opts.max_iters);
  result.params["tol"] = FormatDouble(opts.tol);
  result.params["iterations"] = std::to_string(iters);
  result.params["hint_item"] = stacked.item_ids()[target_item_hint];
  result.warning = !converged;
  result.scores = std::move(user_belief);
  result.flagged = PickFlags(result.scores, n_flag, true);
  return result;
}

MetricsReport FilterAndEvaluate(const InteractionMatrix& real,
                                const FakeUserBlock& fakes,
                                const DetectionResult& detection,
                                const TargetSpec& spec, const TrainConfig& victim,
                                const std::vector<std::size_t>& ks,
                                std::uint64_t seed) {
  if (detection.flagged.empty()) {
    auto report = Evaluate(real, fakes, spec, victim, ks, seed);
    report.metadata()["defense"] = ToString(detection.kind);
    report.metadata()["flagged"] = "0";
    return report;
  }
  if (!fakes.rows.empty()) fakes.Validate();
  const auto stacked = StackFakes(real, fakes);
  if (detection.scores.size() != stacked.num_users())
    throw ContractError("detection was computed over a different matrix");

  std::vector<char> removed(stacked.num_users(), 0);
  for (UserIndex u : detection.flagged) removed.at(u) = 1;
  std::vector<UserIndex> keep;
  std::vector<std::int64_t> rows(real.num_users(), -1);
  std::size_t fakes_removed = 0;
  for (std::size_t u = 0; u < stacked.num_users(); ++u) {
    if (removed[u]) {
      if (u >= real.num_users()) ++fakes_removed;
      continue;
    }
    if (u < real.num_users()) rows[u] = static_cast<std::int64_t>(keep.size());
    keep.push_back(static_cast<UserIndex>(u));
  }
  const auto filtered = stacked.SelectUsers(keep);
  auto report = EvaluateAgainst(real, filtered, rows, spec, victim, ks, seed);
  report.metadata()["fake_users"] = std::to_string(fakes.size());
  report.metadata()["defense"] = ToString(detection.kind);
  report.metadata()["flagged"] = std::to_string(detection.flagged.size());
  report.metadata()["flagged_fake"] = std::to_string(fakes_removed);
  report.metadata()["flagged_real"] =
      std::to_string(detection.flagged.size() - fakes_removed);
  return report;
}

void WriteDetection(const DetectionResult& result,
                    const InteractionMatrix& stacked, std::ostream& out,
                    char separator) {
  if (result.scores.size() != stacked.num_users())
    throw ContractError("detection does not match matrix");
  std::vector<char> flag(result.scores.size(), 0);
  for (UserIndex u : result.flagged) flag.at(u) = 1;
  const std::size_t num_real =
      result.confusion ? result.scores.size() - (result.confusion->tp + result.confusion->fn)
                       : 0;
  out << "user_id" << separator << "score" << separator << "flagged" << separator
      << "is_fake\n";
  for (std::size_t u = 0; u < result.scores.size(); ++u) {
    out << stacked.user_ids()[u] << separator << FormatDouble(result.scores[u])
        << separator << static_cast<int>(flag[u]) << separator;
    if (result.confusion) out << (u >= num_real ? 1 : 0);
    out << '\n';
  }
}

}  // namespace ubalab
