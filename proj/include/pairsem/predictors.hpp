#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pairsem/types.hpp"

namespace pairsem {

/// L-layer perceptron: Linear, then (ReLU, Linear) x (L-1). Hidden width
/// equals the output width.
class Mlp {
  public:
    Mlp() = default;
    /// He-uniform weights from `seed`, zero biases.
    Mlp(std::size_t input_dim, std::size_t output_dim, std::size_t layers, std::uint64_t seed);

    /// One layer, identity weights, zero bias.
    static Mlp identity(std::size_t dim);

    std::size_t input_dim() const { return weights_.empty() ? 0 : weights_.front().cols(); }
    std::size_t output_dim() const { return weights_.empty() ? 0 : weights_.back().rows(); }
    std::size_t layers() const { return weights_.size(); }

    Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
    /// Columns of `x` are examples.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

    struct Cache {
        std::vector<Eigen::MatrixXd> inputs;  // input of every layer
        std::vector<Eigen::MatrixXd> pre;     // pre-activation of every layer
    };
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

    struct Gradient {
        std::vector<Eigen::MatrixXd> weights;
        std::vector<Eigen::VectorXd> biases;
    };
    /// Gradient of a scalar loss given dLoss/dOutput for the cached batch.
    Gradient backward(const Cache& cache, const Eigen::MatrixXd& d_output) const;
    /// Same, reusing the storage already held by `out`.
    void backward(const Cache& cache, const Eigen::MatrixXd& d_output, Gradient& out) const;

    std::size_t parameter_count() const;
    /// Weights (column-major) then bias, layer by layer.
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> values);
    static std::vector<double> flatten(const Gradient& g);

    std::vector<Eigen::MatrixXd>& weights() { return weights_; }
    std::vector<Eigen::VectorXd>& biases() { return biases_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

    /// Rounds every parameter to single precision (the storage format).
    void round_to_float();
    bool all_finite() const;

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

  private:
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-per-id embedding matrix.
class EmbeddingTable {
  public:
    EmbeddingTable() = default;
    EmbeddingTable(std::vector<std::string> ids, const std::vector<Vector>& vectors);

    const std::vector<std::string>& ids() const { return ids_; }
    const RowMatrix& matrix() const { return rows_; }
    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }
    std::optional<std::size_t> index(const std::string& id) const;
    std::span<const double> row(std::size_t i) const
    {
        return {rows_.data() + i * dim(), dim()};
    }
    std::span<const double> row(const std::string& id) const;

  private:
    std::vector<std::string> ids_;
    RowMatrix rows_;
    std::unordered_map<std::string, std::size_t> pos_;
};

/// sigma(e_e . f(e_d)).
double entity_score(const Mlp& f, std::span<const double> doc, std::span<const double> entity);
/// sigma(e_a . g(e_d : e_e)).
double aspect_score(const Mlp& g, std::span<const double> doc, std::span<const double> entity,
                    std::span<const double> aspect);

/// sigma clamped to [1e-12, 1 - 1e-12].
double clamped_sigmoid(double z);

/// Relevance of one owner to every entity, as a batched matrix-vector product.
RelevanceVector relevance_vector(const Mlp& f, const std::string& owner_id,
                                 std::span<const double> owner_embedding,
                                 const EmbeddingTable& entities);
/// Same values computed one entity at a time.
RelevanceVector relevance_vector_looped(const Mlp& f, const std::string& owner_id,
                                        std::span<const double> owner_embedding,
                                        const EmbeddingTable& entities);

/// ŷ_{·,a|e} for every aspect.
std::vector<double> aspect_relevance(const Mlp& g, std::span<const double> owner_embedding,
                                     std::span<const double> entity_embedding,
                                     const EmbeddingTable& aspects);

// --- training -------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    std::uint64_t seed = 13;
    std::size_t layers = 2;
    /// Negatives per example. 0 means all non-positives; -1 picks all when the
    /// label set has at most `full_negatives_limit` members, else `sampled_negatives`.
    long negatives = -1;
    std::size_t full_negatives_limit = 5000;
    std::size_t sampled_negatives = 200;
    std::size_t patience = 5;
    /// Relative improvement below which an epoch counts as a plateau.
    double min_rel_improvement = 1e-4;
    /// An epoch that raises the corpus loss is undone and the learning rate halved.
    bool backtrack = true;
};

/// One training example: an input vector index plus its positive labels
/// (label index, target weight). Every other label is a negative with target 0.
struct Example {
    std::size_t input = 0;
    std::vector<std::pair<std::size_t, double>> positives;
};

/// Inputs as columns, labels as embedding rows. The loss is
/// -sum_x [ sum_pos y log ŷ + sum_neg log(1 - ŷ) ].
struct TrainingSet {
    Eigen::MatrixXd inputs;  // input_dim x n_inputs
    RowMatrix labels;        // n_labels x output_dim
    std::vector<Example> examples;
};

struct LossAndGradient {
    double loss = 0.0;
    Mlp::Gradient gradient;
};

/// Loss over `batch` (example indices) with all negatives, or with
/// `negatives_per_example` sampled negatives rescaled to stay unbiased.
LossAndGradient loss_and_gradient(const Mlp& model, const TrainingSet& data,
                                  std::span<const std::size_t> batch,
                                  std::size_t negatives_per_example, std::uint64_t sample_seed,
                                  bool want_gradient = true);

struct TrainingReport {
    std::vector<double> epoch_losses;
    std::size_t epochs_run = 0;
    /// Epochs undone by backtracking.
    std::size_t rejected_epochs = 0;
    double final_learning_rate = 0.0;
    bool early_stopped = false;
    std::size_t negatives_per_example = 0;  // 0 = all
};

/// Mini-batch Adam on the summed loss. Deterministic for a fixed seed.
Mlp train_mlp(const TrainingSet& data, std::size_t output_dim, const TrainConfig& cfg,
              TrainingReport* report = nullptr);

std::size_t resolve_negatives(const TrainConfig& cfg, std::size_t n_labels);

/// Entity predictor data: one example per document, positives weighted by
/// soft labels. Documents without a label map weight every positive 1.
TrainingSet entity_training_set(const std::vector<std::string>& doc_ids,
                                const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                                const std::map<std::string, SoftLabels>& soft_labels,
                                const EmbeddingTable& entity_embeddings);

/// Aspect predictor data: one example per (document, entity of its pairs) with
/// input e_d : e_e and hard positives {a : (e, a) in P_d}.
TrainingSet aspect_training_set(const std::vector<std::string>& doc_ids,
                                const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                                const EmbeddingTable& entity_embeddings,
                                const EmbeddingTable& aspect_embeddings);

Mlp train_entity_predictor(const TrainingSet& data, const TrainConfig& cfg,
                           TrainingReport* report = nullptr);
Mlp train_aspect_predictor(const TrainingSet& data, const TrainConfig& cfg,
                           TrainingReport* report = nullptr);

/// Mean over documents of |top-k predicted entities ∩ E_d| / k.
double entity_precision_at_k(const Mlp& f, const std::vector<std::string>& doc_ids,
                             const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                             const EmbeddingTable& entity_embeddings, std::size_t k = 10);

/// Mean over documents of |top-k aspects ∩ A_d| / k, an aspect scoring
/// max over e in E_d of ŷ_{d,a|e}.
double aspect_precision_at_k(const Mlp& g, const std::vector<std::string>& doc_ids,
                             const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                             const EmbeddingTable& entity_embeddings,
                             const EmbeddingTable& aspect_embeddings, std::size_t k = 10);

}  // namespace pairsem
