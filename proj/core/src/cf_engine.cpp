#include "ubalab/cf_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include <Eigen/SparseCore>

namespace ubalab {

namespace {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Symmetric-normalized bipartite propagation, layer-averaged. The operator
// is self-adjoint, so the same routine back-propagates gradients.
class Propagator {
 public:
  explicit Propagator(const InteractionMatrix& m) {
    const auto n_users = static_cast<Eigen::Index>(m.num_users());
    const auto n_items = static_cast<Eigen::Index>(m.num_items());
    const auto item_deg = m.ItemDegrees();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(m.num_interactions());
    for (std::size_t u = 0; u < m.num_users(); ++u) {
      auto row = m.row(static_cast<UserIndex>(u));
      const double du = static_cast<double>(row.size());
      for (ItemIndex i : row)
        triplets.emplace_back(
            static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i),
            1.0 / std::sqrt(du * static_cast<double>(item_deg[i])));
    }
    ui_.resize(n_users, n_items);
    ui_.setFromTriplets(triplets.begin(), triplets.end());
    iu_ = ui_.transpose();
  }

  void Mean(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
            int layers, EmbeddingMatrix& out_users,
            EmbeddingMatrix& out_items) const {
    EmbeddingMatrix cur_u = users, cur_i = items;
    out_users = users;
    out_items = items;
    for (int l = 0; l < layers; ++l) {
      EmbeddingMatrix next_u = ui_ * cur_i;
      EmbeddingMatrix next_i = iu_ * cur_u;
      cur_u.swap(next_u);
      cur_i.swap(next_i);
      out_users += cur_u;
      out_items += cur_i;
    }
    const double scale = 1.0 / static_cast<double>(layers + 1);
    out_users *= scale;
    out_items *= scale;
  }

 private:
  SparseRows ui_, iu_;
};

void CheckFinite(const EmbeddingMatrix& m, int epoch) {
  if (!m.allFinite())
    throw DivergenceError("non-finite embedding during training", epoch);
}

// Per-sample loss and gradient with respect to the scoring embeddings.
// Gradients are accumulated into the given rows.
template <typename RowU, typename GetItem, typename AddItemGrad>
double SampleLossAndGrad(const TrainingSample& s, LossKind loss, const RowU& eu,
                         GetItem&& item_row, Eigen::VectorXd& grad_u,
                         AddItemGrad&& add_item_grad) {
  double value = 0.0;
  const Eigen::VectorXd ep = item_row(s.positive);
  const double sp = eu.dot(ep);
  if (loss == LossKind::kBce) {
    const double gp = Sigmoid(sp) - 1.0;
    value += Softplus(-sp);
    grad_u.noalias() += gp * ep;
    add_item_grad(s.positive, gp * eu);
    for (ItemIndex j : s.negatives) {
      const Eigen::VectorXd ej = item_row(j);
      const double sj = eu.dot(ej);
      const double gj = Sigmoid(sj);
      value += Softplus(sj);
      grad_u.noalias() += gj * ej;
      add_item_grad(j, gj * eu);
    }
  } else {
    for (ItemIndex j : s.negatives) {
      const Eigen::VectorXd ej = item_row(j);
      const double x = sp - eu.dot(ej);
      const double g = -Sigmoid(-x);
      value += Softplus(-x);
      grad_u.noalias() += g * (ep - ej);
      add_item_grad(s.positive, g * eu);
      add_item_grad(j, -g * eu);
    }
  }
  return value;
}

class NegativeSampler {
 public:
  explicit NegativeSampler(const InteractionMatrix& m)
      : m_(m), pick_(0, m.num_items() - 1) {}

  // Uniform over items the user does not like; empty if none exist.
  void Sample(UserIndex u, int count, Rng& rng, std::vector<ItemIndex>& out) {
    out.clear();
    const auto row = m_.row(u);
    if (row.size() >= m_.num_items()) return;
    for (int c = 0; c < count; ++c) {
      ItemIndex j = 0;
      int tries = 0;
      do {
        j = static_cast<ItemIndex>(pick_(rng));
      } while (std::binary_search(row.begin(), row.end(), j) && ++tries < 64);
      if (std::binary_search(row.begin(), row.end(), j)) {
        // Dense row: draw among the complement explicitly.
        std::vector<ItemIndex> free;
        for (ItemIndex i = 0; i < m_.num_items(); ++i)
          if (!std::binary_search(row.begin(), row.end(), i)) free.push_back(i);
        std::uniform_int_distribution<std::size_t> any(0, free.size() - 1);
        j = free[any(rng)];
      }
      out.push_back(j);
    }
  }

 private:
  const InteractionMatrix& m_;
  std::uniform_int_distribution<std::size_t> pick_;
};

std::vector<TrainingSample> EpochSamples(const InteractionMatrix& m,
                                         const TrainConfig& cfg,
                                         NegativeSampler& sampler, Rng& rng) {
  std::vector<TrainingSample> samples;
  samples.reserve(m.num_interactions());
  for (std::size_t u = 0; u < m.num_users(); ++u)
    for (ItemIndex i : m.row(static_cast<UserIndex>(u)))
      samples.push_back({static_cast<UserIndex>(u), i, {}});
  std::shuffle(samples.begin(), samples.end(), rng);
  for (auto& s : samples)
    sampler.Sample(s.user, cfg.negatives_per_positive, rng, s.negatives);
  return samples;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string ToString(LossKind loss) {
  return loss == LossKind::kBce ? "bce" : "bpr";
}

std::string ToString(ModelKind kind) {
  return kind == ModelKind::kMf ? "mf" : "lightgcn";
}

LossKind ParseLossKind(const std::string& s) {
  if (s == "bce" || s == "BCE") return LossKind::kBce;
  if (s == "bpr" || s == "BPR") return LossKind::kBpr;
  throw ContractError("unknown loss '" + s + "'");
}

ModelKind ParseModelKind(const std::string& s) {
  if (s == "mf" || s == "MF") return ModelKind::kMf;
  if (s == "lightgcn" || s == "LightGCN") return ModelKind::kLightGcn;
  throw ContractError("unknown model kind '" + s + "'");
}

void TrainConfig::Validate() const {
  if (embedding_dim < 1) throw ContractError("embedding_dim must be >= 1");
  if (epochs < 0) throw ContractError("epochs must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ContractError("learning_rate must be > 0");
  if (!(l2_reg >= 0.0) || !std::isfinite(l2_reg))
    throw ContractError("l2_reg must be >= 0");
  if (negatives_per_positive < 1)
    throw ContractError("negatives_per_positive must be >= 1");
  if (lightgcn_layers < 0) throw ContractError("lightgcn_layers must be >= 0");
  if (lightgcn_batch < 1) throw ContractError("lightgcn_batch must be >= 1");
}

std::uint64_t TrainConfig::Hash() const {
  Fnv1a64 h;
  h.UpdateValue(embedding_dim)
      .UpdateValue(epochs)
      .UpdateValue(learning_rate)
      .UpdateValue(l2_reg)
      .UpdateValue(negatives_per_positive)
      .UpdateValue(static_cast<int>(loss))
      .UpdateValue(static_cast<int>(model_kind))
      .UpdateValue(lightgcn_layers)
      .UpdateValue(lightgcn_batch)
      .UpdateValue(seed);
  return h.digest();
}

TrainedModel::TrainedModel(TrainConfig config, EmbeddingMatrix user_base,
                           EmbeddingMatrix item_base,
                           std::uint64_t training_fingerprint)
    : config_(config),
      user_base_(std::move(user_base)),
      item_base_(std::move(item_base)),
      user_final_(user_base_),
      item_final_(item_base_),
      training_fingerprint_(training_fingerprint) {}

void TrainedModel::Refresh(const InteractionMatrix& graph) {
  if (config_.model_kind == ModelKind::kMf) {
    user_final_ = user_base_;
    item_final_ = item_base_;
    return;
  }
  if (graph.num_users() != num_users() || graph.num_items() != num_items())
    throw ContractError("graph does not match model dimensions");
  Propagator(graph).Mean(user_base_, item_base_, config_.lightgcn_layers,
                         user_final_, item_final_);
}

void TrainedModel::SetScoringEmbeddings(EmbeddingMatrix users,
                                        EmbeddingMatrix items) {
  user_final_ = std::move(users);
  item_final_ = std::move(items);
}

std::uint64_t TrainedModel::Fingerprint() const {
  Fnv1a64 h;
  h.UpdateValue(config_.Hash()).UpdateValue(training_fingerprint_);
  for (const auto* m : {&user_base_, &item_base_, &user_final_, &item_final_}) {
    h.UpdateValue(static_cast<std::int64_t>(m->rows()))
        .UpdateValue(static_cast<std::int64_t>(m->cols()));
    h.Update(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  return h.digest();
}

// ---------------------------------------------------------------------------

BatchGradient ComputeBatchGradient(const TrainedModel& model,
                                   const InteractionMatrix& graph,
                                   std::span<const TrainingSample> batch,
                                   LossKind loss, double l2_reg) {
  const auto& fu = model.user_embeddings();
  const auto& fi = model.item_embeddings();
  const auto& bu = model.user_base();
  const auto& bi = model.item_base();
  const int d = model.dim();

  BatchGradient out;
  EmbeddingMatrix gu = EmbeddingMatrix::Zero(fu.rows(), d);
  EmbeddingMatrix gi = EmbeddingMatrix::Zero(fi.rows(), d);
  EmbeddingMatrix l2u = EmbeddingMatrix::Zero(fu.rows(), d);
  EmbeddingMatrix l2i = EmbeddingMatrix::Zero(fi.rows(), d);
  Eigen::VectorXd grad_u(d);
  for (const auto& s : batch) {
    grad_u.setZero();
    const Eigen::VectorXd eu = fu.row(s.user).transpose();
    out.loss += SampleLossAndGrad(
        s, loss, eu,
        [&](ItemIndex i) -> Eigen::VectorXd { return fi.row(i).transpose(); },
        grad_u, [&](ItemIndex i, const Eigen::VectorXd& g) {
          gi.row(i) += g.transpose();
        });
    gu.row(s.user) += grad_u.transpose();
    if (l2_reg > 0) {
      out.loss += 0.5 * l2_reg * bu.row(s.user).squaredNorm();
      l2u.row(s.user) += l2_reg * bu.row(s.user);
      out.loss += 0.5 * l2_reg * bi.row(s.positive).squaredNorm();
      l2i.row(s.positive) += l2_reg * bi.row(s.positive);
      for (ItemIndex j : s.negatives) {
        out.loss += 0.5 * l2_reg * bi.row(j).squaredNorm();
        l2i.row(j) += l2_reg * bi.row(j);
      }
    }
  }
  if (model.kind() == ModelKind::kLightGcn) {
    Propagator(graph).Mean(gu, gi, model.config().lightgcn_layers,
                           out.user_grad, out.item_grad);
  } else {
    out.user_grad = std::move(gu);
    out.item_grad = std::move(gi);
  }
  out.user_grad += l2u;
  out.item_grad += l2i;
  return out;
}

namespace {

// Per-sample SGD on the base embeddings (MF).
double MfEpoch(EmbeddingMatrix& users, EmbeddingMatrix& items,
               std::span<const TrainingSample> samples, const TrainConfig& cfg) {
  const int d = cfg.embedding_dim;
  const double lr = cfg.learning_rate, l2 = cfg.l2_reg;
  double total = 0.0;
  Eigen::VectorXd grad_u(d);
  std::vector<std::pair<ItemIndex, Eigen::VectorXd>> item_grads;
  for (const auto& s : samples) {
    grad_u.setZero();
    item_grads.clear();
    const Eigen::VectorXd eu = users.row(s.user).transpose();
    total += SampleLossAndGrad(
        s, cfg.loss, eu,
        [&](ItemIndex i) -> Eigen::VectorXd { return items.row(i).transpose(); },
        grad_u, [&](ItemIndex i, const Eigen::VectorXd& g) {
          item_grads.emplace_back(i, g);
        });
    if (l2 > 0) {
      total += 0.5 * l2 * eu.squaredNorm();
      grad_u.noalias() += l2 * eu;
      total += 0.5 * l2 * items.row(s.positive).squaredNorm();
      item_grads.emplace_back(s.positive, l2 * items.row(s.positive).transpose());
      for (ItemIndex j : s.negatives) {
        total += 0.5 * l2 * items.row(j).squaredNorm();
        item_grads.emplace_back(j, l2 * items.row(j).transpose());
      }
    }
    users.row(s.user) -= lr * grad_u.transpose();
    for (const auto& [i, g] : item_grads) items.row(i) -= lr * g.transpose();
  }
  return total;
}

}  // namespace

TrainedModel TrainWithHistory(const InteractionMatrix& m,
                              const TrainConfig& cfg, TrainHistory& history) {
  cfg.Validate();
  if (m.num_users() == 0 || m.num_items() == 0 || m.empty())
    throw EmptyMatrixError("cannot train on an empty matrix");

  Rng rng(DeriveSeed(cfg.seed, "train"));
  const int d = cfg.embedding_dim;
  const double half_width = 0.1 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> init(-half_width, half_width);
  EmbeddingMatrix users(static_cast<Eigen::Index>(m.num_users()), d);
  EmbeddingMatrix items(static_cast<Eigen::Index>(m.num_items()), d);
  for (Eigen::Index r = 0; r < users.rows(); ++r)
    for (int c = 0; c < d; ++c) users(r, c) = init(rng);
  for (Eigen::Index r = 0; r < items.rows(); ++r)
    for (int c = 0; c < d; ++c) items(r, c) = init(rng);

  TrainedModel model(cfg, std::move(users), std::move(items), m.Fingerprint());
  model.Refresh(m);
  if (cfg.epochs == 0) return model;

  NegativeSampler sampler(m);
  EmbeddingMatrix ub = model.user_base(), ib = model.item_base();
  const double n_pos = static_cast<double>(m.num_interactions());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto samples = EpochSamples(m, cfg, sampler, rng);
    double total = 0.0;
    if (cfg.model_kind == ModelKind::kMf) {
      total = MfEpoch(ub, ib, samples, cfg);
    } else {
      const std::size_t batch = static_cast<std::size_t>(cfg.lightgcn_batch);
      for (std::size_t start = 0; start < samples.size(); start += batch) {
        const std::size_t len = std::min(batch, samples.size() - start);
        model = TrainedModel(cfg, ub, ib, model.training_fingerprint());
        model.Refresh(m);
        auto grad = ComputeBatchGradient(
            model, m, std::span(samples).subspan(start, len), cfg.loss,
            cfg.l2_reg);
        total += grad.loss;
        ub -= cfg.learning_rate * grad.user_grad;
        ib -= cfg.learning_rate * grad.item_grad;
      }
    }
    const double mean = total / n_pos;
    if (!std::isfinite(mean))
      throw DivergenceError("non-finite training loss", epoch);
    CheckFinite(ub, epoch);
    CheckFinite(ib, epoch);
    history.epoch_loss.push_back(mean);
  }
  TrainedModel out(cfg, std::move(ub), std::move(ib), m.Fingerprint());
  out.Refresh(m);
  return out;
}

TrainedModel Train(const InteractionMatrix& m, const TrainConfig& cfg) {
  TrainHistory ignored;
  return TrainWithHistory(m, cfg, ignored);
}

// ---------------------------------------------------------------------------

double Predict(const TrainedModel& model, UserIndex u, ItemIndex i) {
  if (u >= model.num_users()) throw IndexError("user index out of range");
  if (i >= model.num_items()) throw IndexError("item index out of range");
  return model.user_embeddings().row(u).dot(model.item_embeddings().row(i));
}

std::vector<ItemIndex> TopK(const TrainedModel& model, UserIndex u,
                            std::size_t k, std::span<const ItemIndex> exclude) {
  if (k == 0) throw ContractError("K must be >= 1");
  if (u >= model.num_users()) throw IndexError("user index out of range");
  const Eigen::VectorXd scores =
      model.item_embeddings() * model.user_embeddings().row(u).transpose();
  std::vector<ItemIndex> candidates;
  candidates.reserve(model.num_items());
  std::size_t e = 0;
  for (ItemIndex i = 0; i < model.num_items(); ++i) {
    while (e < exclude.size() && exclude[e] < i) ++e;
    if (e < exclude.size() && exclude[e] == i) continue;
    candidates.push_back(i);
  }
  const std::size_t take = std::min(k, candidates.size());
  auto better = [&](ItemIndex a, ItemIndex b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(),
                    candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);
  candidates.resize(take);
  return candidates;
}

std::vector<ItemIndex> TopK(const TrainedModel& model,
                            const InteractionMatrix& training, UserIndex u,
                            std::size_t k) {
  return TopK(model, u, k, training.row(u));
}

std::size_t RankOf(const TrainedModel& model, UserIndex u, ItemIndex item,
                   std::span<const ItemIndex> exclude) {
  if (u >= model.num_users()) throw IndexError("user index out of range");
  if (item >= model.num_items()) throw IndexError("item index out of range");
  if (std::binary_search(exclude.begin(), exclude.end(), item)) return 0;
  const Eigen::VectorXd scores =
      model.item_embeddings() * model.user_embeddings().row(u).transpose();
  const double target = scores[item];
  std::size_t rank = 1;
  std::size_t e = 0;
  for (ItemIndex i = 0; i < model.num_items(); ++i) {
    while (e < exclude.size() && exclude[e] < i) ++e;
    if (e < exclude.size() && exclude[e] == i) continue;
    if (scores[i] > target || (scores[i] == target && i < item)) ++rank;
  }
  return rank;
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {

template <typename T>
void PutRaw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T GetRaw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated model snapshot");
  return v;
}

void PutMatrix(std::ostream& out, const EmbeddingMatrix& m) {
  PutRaw<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  PutRaw<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

EmbeddingMatrix GetMatrix(std::istream& in) {
  const auto rows = GetRaw<std::uint64_t>(in);
  const auto cols = GetRaw<std::uint64_t>(in);
  if (rows > (1u << 28) || cols > 4096) throw IoError("implausible matrix shape");
  EmbeddingMatrix m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw IoError("truncated model snapshot");
  return m;
}

}  // namespace

void WriteModel(const TrainedModel& model, std::ostream& out) {
  out << kModelMagic << '\n';
  const auto& c = model.config();
  PutRaw<std::int32_t>(out, c.embedding_dim);
  PutRaw<std::int32_t>(out, c.epochs);
  PutRaw<double>(out, c.learning_rate);
  PutRaw<double>(out, c.l2_reg);
  PutRaw<std::int32_t>(out, c.negatives_per_positive);
  PutRaw<std::int32_t>(out, static_cast<std::int32_t>(c.loss));
  PutRaw<std::int32_t>(out, static_cast<std::int32_t>(c.model_kind));
  PutRaw<std::int32_t>(out, c.lightgcn_layers);
  PutRaw<std::int32_t>(out, c.lightgcn_batch);
  PutRaw<std::uint64_t>(out, c.seed);
  PutRaw<std::uint64_t>(out, model.training_fingerprint());
  PutMatrix(out, model.user_base());
  PutMatrix(out, model.item_base());
}

TrainedModel ReadModel(std::istream& in, const InteractionMatrix& graph) {
  std::string magic;
  if (!std::getline(in, magic) || magic != kModelMagic)
    throw IoError("missing model header '" + std::string(kModelMagic) + "'");
  TrainConfig c;
  c.embedding_dim = GetRaw<std::int32_t>(in);
  c.epochs = GetRaw<std::int32_t>(in);
  c.learning_rate = GetRaw<double>(in);
  c.l2_reg = GetRaw<double>(in);
  c.negatives_per_positive = GetRaw<std::int32_t>(in);
  c.loss = static_cast<LossKind>(GetRaw<std::int32_t>(in));
  c.model_kind = static_cast<ModelKind>(GetRaw<std::int32_t>(in));
  c.lightgcn_layers = GetRaw<std::int32_t>(in);
  c.lightgcn_batch = GetRaw<std::int32_t>(in);
  c.seed = GetRaw<std::uint64_t>(in);
  c.Validate();
  const auto fingerprint = GetRaw<std::uint64_t>(in);
  auto users = GetMatrix(in);
  auto items = GetMatrix(in);
  TrainedModel model(c, std::move(users), std::move(items), fingerprint);
  model.Refresh(graph);
  return model;
}

}  // namespace ubalab
