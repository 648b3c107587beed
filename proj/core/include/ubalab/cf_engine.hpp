#ifndef UBALAB_CF_ENGINE_HPP_
#define UBALAB_CF_ENGINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ubalab/common.hpp"
#include "ubalab/dataset.hpp"

namespace ubalab {

enum class LossKind { kBce, kBpr };
enum class ModelKind { kMf, kLightGcn };

std::string ToString(LossKind loss);
std::string ToString(ModelKind kind);
LossKind ParseLossKind(const std::string& s);
ModelKind ParseModelKind(const std::string& s);

struct TrainConfig {
  int embedding_dim = 32;
  int epochs = 50;
  double learning_rate = 0.05;
  double l2_reg = 1e-4;
  int negatives_per_positive = 4;
  LossKind loss = LossKind::kBce;
  ModelKind model_kind = ModelKind::kMf;
  int lightgcn_layers = 2;
  // LightGCN only: samples per propagated mini-batch.
  int lightgcn_batch = 1024;
  std::uint64_t seed = 0;

  void Validate() const;
  std::uint64_t Hash() const;
};

using EmbeddingMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class TrainedModel {
 public:
  TrainedModel() = default;
  TrainedModel(TrainConfig config, EmbeddingMatrix user_base,
               EmbeddingMatrix item_base, std::uint64_t training_fingerprint);

  const TrainConfig& config() const { return config_; }
  ModelKind kind() const { return config_.model_kind; }
  std::size_t num_users() const {
    return static_cast<std::size_t>(user_base_.rows());
  }
  std::size_t num_items() const {
    return static_cast<std::size_t>(item_base_.rows());
  }
  int dim() const { return static_cast<int>(user_base_.cols()); }

  // Trainable parameters.
  const EmbeddingMatrix& user_base() const { return user_base_; }
  const EmbeddingMatrix& item_base() const { return item_base_; }
  // Scoring embeddings: equal to the base for MF, layer-averaged
  // propagation for LightGCN.
  const EmbeddingMatrix& user_embeddings() const { return user_final_; }
  const EmbeddingMatrix& item_embeddings() const { return item_final_; }

  std::uint64_t training_fingerprint() const { return training_fingerprint_; }
  std::uint64_t Fingerprint() const;

  // Recomputes the scoring embeddings from the base ones. `graph` must be the
  // training matrix (used by LightGCN only).
  void Refresh(const InteractionMatrix& graph);

  // Direct construction of scoring embeddings, for tests and snapshots.
  void SetScoringEmbeddings(EmbeddingMatrix users, EmbeddingMatrix items);

 private:
  TrainConfig config_;
  EmbeddingMatrix user_base_, item_base_;
  EmbeddingMatrix user_final_, item_final_;
  std::uint64_t training_fingerprint_ = 0;
};

TrainedModel Train(const InteractionMatrix& m, const TrainConfig& cfg);

// Mean per-positive loss of each epoch, in order. Filled by TrainWithHistory.
struct TrainHistory {
  std::vector<double> epoch_loss;
};
TrainedModel TrainWithHistory(const InteractionMatrix& m,
                              const TrainConfig& cfg, TrainHistory& history);

double Predict(const TrainedModel& model, UserIndex u, ItemIndex i);

// Items sorted by score (desc, ties by ascending index), skipping `exclude`
// (which must be sorted), truncated to K.
std::vector<ItemIndex> TopK(const TrainedModel& model, UserIndex u,
                            std::size_t k, std::span<const ItemIndex> exclude);
// Excludes the user's training likes.
std::vector<ItemIndex> TopK(const TrainedModel& model,
                            const InteractionMatrix& training, UserIndex u,
                            std::size_t k);

// 1-based rank of `item` among all non-excluded items (same ordering as
// TopK), or 0 if the item itself is excluded.
std::size_t RankOf(const TrainedModel& model, UserIndex u, ItemIndex item,
                   std::span<const ItemIndex> exclude);

// One training sample: a positive (user, item) with its sampled negatives.
struct TrainingSample {
  UserIndex user = 0;
  ItemIndex positive = 0;
  std::vector<ItemIndex> negatives;
};

// Summed loss (with L2 on the touched base rows) of a batch of samples, and
// its gradient with respect to the base embeddings. For LightGCN the
// gradient is back-propagated through the linear propagation. `model` must
// have fresh scoring embeddings for `graph`.
struct BatchGradient {
  double loss = 0.0;
  EmbeddingMatrix user_grad, item_grad;
};
BatchGradient ComputeBatchGradient(const TrainedModel& model,
                                   const InteractionMatrix& graph,
                                   std::span<const TrainingSample> batch,
                                   LossKind loss, double l2_reg);

// Snapshot: "UBALAB-MODEL v1\n", then little-endian binary config echo and
// both base matrices; scoring embeddings are recomputed on load.
inline constexpr const char* kModelMagic = "UBALAB-MODEL v1";
void WriteModel(const TrainedModel& model, std::ostream& out);
TrainedModel ReadModel(std::istream& in, const InteractionMatrix& graph);

}  // namespace ubalab

#endif  // UBALAB_CF_ENGINE_HPP_
