#include "pairsem/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "pairsem/errors.hpp"
#include "pairsem/jsonl.hpp"
#include "pairsem/random.hpp"
#include "pairsem/vector_ops.hpp"

namespace pairsem {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

using ConstMap = Eigen::Map<const VectorXd>;

ConstMap as_map(std::span<const double> v) { return {v.data(), static_cast<Index>(v.size())}; }

// log(1 + e^z) without overflow.
double softplus(double z)
{
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

// --- Mlp ------------------------------------------------------------------------

Mlp::Mlp(std::size_t input_dim, std::size_t output_dim, std::size_t layers, std::uint64_t seed)
{
    if (layers == 0 || input_dim == 0 || output_dim == 0) {
        throw precondition_error("mlp needs at least one layer and positive dimensions");
    }
    Rng rng(seed);
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < layers; ++l) {
        double limit = std::sqrt(6.0 / static_cast<double>(in));
        MatrixXd w(output_dim, in);
        for (Index c = 0; c < w.cols(); ++c) {
            for (Index r = 0; r < w.rows(); ++r) {
                w(r, c) = (2.0 * uniform_unit(rng) - 1.0) * limit;
            }
        }
        weights_.push_back(std::move(w));
        biases_.push_back(VectorXd::Zero(static_cast<Index>(output_dim)));
        in = output_dim;
    }
}

Mlp Mlp::identity(std::size_t dim)
{
    Mlp m;
    m.weights_.push_back(MatrixXd::Identity(static_cast<Index>(dim), static_cast<Index>(dim)));
    m.biases_.push_back(VectorXd::Zero(static_cast<Index>(dim)));
    return m;
}

VectorXd Mlp::forward(const VectorXd& x) const
{
    if (static_cast<std::size_t>(x.size()) != input_dim()) {
        throw precondition_error("mlp input has dimension " + std::to_string(x.size()) +
                                 ", expected " + std::to_string(input_dim()));
    }
    VectorXd h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (l > 0) {
            h = h.cwiseMax(0.0);
        }
        h = weights_[l] * h + biases_[l];
    }
    return h;
}

MatrixXd Mlp::forward(const MatrixXd& x) const
{
    Cache unused;
    return forward(x, unused);
}

MatrixXd Mlp::forward(const MatrixXd& x, Cache& cache) const
{
    if (static_cast<std::size_t>(x.rows()) != input_dim()) {
        throw precondition_error("mlp input has dimension " + std::to_string(x.rows()) +
                                 ", expected " + std::to_string(input_dim()));
    }
    const std::size_t n = weights_.size();
    cache.inputs.resize(n);
    cache.pre.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
        if (l == 0) {
            cache.inputs[l] = x;
        } else {
            cache.inputs[l] = cache.pre[l - 1].cwiseMax(0.0);
        }
        cache.pre[l].resize(weights_[l].rows(), x.cols());
        cache.pre[l].noalias() = weights_[l] * cache.inputs[l];
        cache.pre[l].colwise() += biases_[l];
    }
    return cache.pre.back();
}

Mlp::Gradient Mlp::backward(const Cache& cache, const MatrixXd& d_output) const
{
    Gradient g;
    backward(cache, d_output, g);
    return g;
}

void Mlp::backward(const Cache& cache, const MatrixXd& d_output, Gradient& g) const
{
    const std::size_t n = weights_.size();
    g.weights.resize(n);
    g.biases.resize(n);
    MatrixXd delta = d_output;
    MatrixXd back;
    for (std::size_t l = n; l-- > 0;) {
        g.weights[l].resize(weights_[l].rows(), weights_[l].cols());
        if (delta.cols() == 1) {
            g.weights[l].noalias() = delta.col(0) * cache.inputs[l].col(0).transpose();
        } else {
            g.weights[l].noalias() = delta * cache.inputs[l].transpose();
        }
        g.biases[l] = delta.rowwise().sum();
        if (l > 0) {
            back.resize(weights_[l].cols(), delta.cols());
            back.noalias() = weights_[l].transpose() * delta;
            delta = back.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
}

std::size_t Mlp::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    }
    return n;
}

std::vector<double> Mlp::flat_parameters() const
{
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.insert(out.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
        out.insert(out.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return out;
}

void Mlp::set_flat_parameters(std::span<const double> values)
{
    if (values.size() != parameter_count()) {
        throw precondition_error("parameter vector has the wrong length");
    }
    std::size_t at = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        std::copy_n(values.data() + at, weights_[l].size(), weights_[l].data());
        at += static_cast<std::size_t>(weights_[l].size());
        std::copy_n(values.data() + at, biases_[l].size(), biases_[l].data());
        at += static_cast<std::size_t>(biases_[l].size());
    }
}

std::vector<double> Mlp::flatten(const Gradient& g)
{
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
        out.insert(out.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
    }
    return out;
}

void Mlp::round_to_float()
{
    auto round = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] = weights_[l].unaryExpr(round);
        biases_[l] = biases_[l].unaryExpr(round);
    }
}

bool Mlp::all_finite() const
{
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
            return false;
        }
    }
    return true;
}

nlohmann::json Mlp::to_json() const
{
    json layers = json::array();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const auto& w = weights_[l];
        json rows = json::array();
        for (Index r = 0; r < w.rows(); ++r) {
            std::vector<float> row(static_cast<std::size_t>(w.cols()));
            for (Index c = 0; c < w.cols(); ++c) {
                row[static_cast<std::size_t>(c)] = static_cast<float>(w(r, c));
            }
            rows.push_back(std::move(row));
        }
        std::vector<float> bias(biases_[l].data(), biases_[l].data() + biases_[l].size());
        layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weight", std::move(rows)},
                          {"bias", std::move(bias)}});
    }
    return {{"format", "pairsem-mlp"},
            {"version", 1},
            {"input_dim", input_dim()},
            {"output_dim", output_dim()},
            {"num_layers", layers.size()},
            {"activation", "relu"},
            {"layers", std::move(layers)}};
}

Mlp Mlp::from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format") != "pairsem-mlp" || j.at("version") != 1) {
            throw format_error("not a pairsem-mlp v1 model");
        }
        if (j.at("activation") != "relu") {
            throw format_error("unsupported activation");
        }
        Mlp m;
        std::size_t expected_in = j.at("input_dim");
        std::size_t prev = expected_in;
        for (const auto& layer : j.at("layers")) {
            Index rows = layer.at("rows");
            Index cols = layer.at("cols");
            if (static_cast<std::size_t>(cols) != prev) {
                throw format_error("layer shapes do not chain");
            }
            const auto& w = layer.at("weight");
            const auto& b = layer.at("bias");
            if (static_cast<Index>(w.size()) != rows || static_cast<Index>(b.size()) != rows) {
                throw format_error("layer data does not match its shape header");
            }
            MatrixXd weight(rows, cols);
            VectorXd bias(rows);
            for (Index r = 0; r < rows; ++r) {
                const auto& row = w[static_cast<std::size_t>(r)];
                if (static_cast<Index>(row.size()) != cols) {
                    throw format_error("layer data does not match its shape header");
                }
                for (Index c = 0; c < cols; ++c) {
                    weight(r, c) = row[static_cast<std::size_t>(c)].get<double>();
                }
                bias(r) = b[static_cast<std::size_t>(r)].get<double>();
            }
            m.weights_.push_back(std::move(weight));
            m.biases_.push_back(std::move(bias));
            prev = static_cast<std::size_t>(rows);
        }
        if (m.weights_.empty() || m.weights_.size() != j.at("num_layers").get<std::size_t>() ||
            m.output_dim() != j.at("output_dim").get<std::size_t>()) {
            throw format_error("model header does not match its layers");
        }
        if (!m.all_finite()) {
            throw format_error("model has non-finite parameters");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bad model file: ") + e.what());
    }
}

void Mlp::save(const std::string& path) const { save_json(path, to_json()); }

Mlp Mlp::load(const std::string& path) { return from_json(load_json(path)); }

// --- EmbeddingTable ----------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::vector<std::string> ids, const std::vector<Vector>& vectors)
    : ids_(std::move(ids))
{
    if (ids_.size() != vectors.size()) {
        throw precondition_error("embedding table ids and vectors differ in length");
    }
    std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
    rows_.resize(static_cast<Index>(ids_.size()), static_cast<Index>(dim));
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (vectors[i].size() != dim) {
            throw precondition_error("embedding for '" + ids_[i] + "' has dimension " +
                                     std::to_string(vectors[i].size()) + ", expected " +
                                     std::to_string(dim));
        }
        if (!pos_.emplace(ids_[i], i).second) {
            throw precondition_error("duplicate embedding id '" + ids_[i] + "'");
        }
        std::copy(vectors[i].begin(), vectors[i].end(), rows_.row(static_cast<Index>(i)).data());
    }
}

std::optional<std::size_t> EmbeddingTable::index(const std::string& id) const
{
    auto it = pos_.find(id);
    if (it == pos_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const double> EmbeddingTable::row(const std::string& id) const
{
    auto i = index(id);
    if (!i) {
        throw precondition_error("no embedding for '" + id + "'");
    }
    return row(*i);
}

// --- scoring --------------------------------------------------------------------

double clamped_sigmoid(double z)
{
    return std::clamp(sigmoid(z), 1e-12, 1.0 - 1e-12);
}

double entity_score(const Mlp& f, std::span<const double> doc, std::span<const double> entity)
{
    if (doc.size() != f.input_dim() || entity.size() != f.output_dim()) {
        throw precondition_error("entity_score dimension mismatch");
    }
    VectorXd out = f.forward(VectorXd(as_map(doc)));
    return clamped_sigmoid(as_map(entity).dot(out));
}

double aspect_score(const Mlp& g, std::span<const double> doc, std::span<const double> entity,
                    std::span<const double> aspect)
{
    if (doc.size() + entity.size() != g.input_dim() || aspect.size() != g.output_dim()) {
        throw precondition_error("aspect_score dimension mismatch");
    }
    VectorXd x(static_cast<Index>(doc.size() + entity.size()));
    x << as_map(doc), as_map(entity);
    VectorXd out = g.forward(x);
    return clamped_sigmoid(as_map(aspect).dot(out));
}

namespace {

std::shared_ptr<const std::vector<std::string>> shared_keys(const EmbeddingTable& t)
{
    return std::make_shared<const std::vector<std::string>>(t.ids());
}

}  // namespace

RelevanceVector relevance_vector(const Mlp& f, const std::string& owner_id,
                                 std::span<const double> owner_embedding,
                                 const EmbeddingTable& entities)
{
    if (owner_embedding.size() != f.input_dim() || entities.dim() != f.output_dim()) {
        throw precondition_error("relevance_vector dimension mismatch");
    }
    VectorXd out = f.forward(VectorXd(as_map(owner_embedding)));
    RelevanceVector rv{owner_id, shared_keys(entities), std::vector<double>(entities.size())};
    for (std::size_t i = 0; i < entities.size(); ++i) {
        rv.values[i] = clamped_sigmoid(as_map(entities.row(i)).dot(out));
    }
    return rv;
}

RelevanceVector relevance_vector_looped(const Mlp& f, const std::string& owner_id,
                                        std::span<const double> owner_embedding,
                                        const EmbeddingTable& entities)
{
    RelevanceVector rv{owner_id, shared_keys(entities), {}};
    rv.values.reserve(entities.size());
    for (std::size_t i = 0; i < entities.size(); ++i) {
        rv.values.push_back(entity_score(f, owner_embedding, entities.row(i)));
    }
    return rv;
}

std::vector<double> aspect_relevance(const Mlp& g, std::span<const double> owner_embedding,
                                     std::span<const double> entity_embedding,
                                     const EmbeddingTable& aspects)
{
    if (owner_embedding.size() + entity_embedding.size() != g.input_dim() ||
        aspects.dim() != g.output_dim()) {
        throw precondition_error("aspect_relevance dimension mismatch");
    }
    VectorXd x(static_cast<Index>(g.input_dim()));
    x << as_map(owner_embedding), as_map(entity_embedding);
    VectorXd out = g.forward(x);
    std::vector<double> values(aspects.size());
    for (std::size_t i = 0; i < aspects.size(); ++i) {
        values[i] = clamped_sigmoid(as_map(aspects.row(i)).dot(out));
    }
    return values;
}

// --- loss -----------------------------------------------------------------------

namespace {

/// Buffers reused across optimizer steps.
struct Workspace {
    MatrixXd x, z, dz, d_out;
    Mlp::Cache cache;
    std::vector<char> is_positive;
};

double loss_into(const Mlp& model, const TrainingSet& data, std::span<const std::size_t> batch,
                 std::size_t negatives_per_example, std::uint64_t sample_seed,
                 Mlp::Gradient* gradient, Workspace& ws)
{
    const Index n_labels = data.labels.rows();
    MatrixXd& x = ws.x;
    x.resize(data.inputs.rows(), static_cast<Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        x.col(static_cast<Index>(b)) = data.inputs.col(static_cast<Index>(data.examples[batch[b]].input));
    }
    const MatrixXd& out = model.forward(x, ws.cache);
    MatrixXd& z = ws.z;
    z.resize(n_labels, out.cols());
    z.noalias() = data.labels * out;  // n_labels x batch
    MatrixXd& dz = ws.dz;
    dz.setZero(n_labels, z.cols());

    Rng rng(sample_seed);
    double loss = 0.0;
    std::vector<char>& is_positive = ws.is_positive;
    is_positive.resize(static_cast<std::size_t>(n_labels));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Example& ex = data.examples[batch[b]];
        const Index col = static_cast<Index>(b);
        std::fill(is_positive.begin(), is_positive.end(), 0);
        for (auto [label, y] : ex.positives) {
            is_positive[label] = 1;
            double zi = z(static_cast<Index>(label), col);
            loss += y * softplus(-zi);
            dz(static_cast<Index>(label), col) = -y * sigmoid(-zi);
        }
        std::size_t n_neg = static_cast<std::size_t>(n_labels) - ex.positives.size();
        if (n_neg == 0) {
            continue;
        }
        if (negatives_per_example == 0 || negatives_per_example >= n_neg) {
            for (Index j = 0; j < n_labels; ++j) {
                if (!is_positive[static_cast<std::size_t>(j)]) {
                    loss += softplus(z(j, col));
                    dz(j, col) = sigmoid(z(j, col));
                }
            }
        } else {
            std::vector<std::size_t> negatives;
            negatives.reserve(n_neg);
            for (std::size_t j = 0; j < static_cast<std::size_t>(n_labels); ++j) {
                if (!is_positive[j]) {
                    negatives.push_back(j);
                }
            }
            double scale = static_cast<double>(n_neg) / static_cast<double>(negatives_per_example);
            for (std::size_t k : sample_without_replacement(rng, n_neg, negatives_per_example)) {
                Index j = static_cast<Index>(negatives[k]);
                loss += scale * softplus(z(j, col));
                dz(j, col) = scale * sigmoid(z(j, col));
            }
        }
    }
    if (gradient) {
        ws.d_out.resize(data.labels.cols(), dz.cols());
        ws.d_out.noalias() = data.labels.transpose() * dz;
        model.backward(ws.cache, ws.d_out, *gradient);
    }
    return loss;
}

}  // namespace

LossAndGradient loss_and_gradient(const Mlp& model, const TrainingSet& data,
                                  std::span<const std::size_t> batch,
                                  std::size_t negatives_per_example, std::uint64_t sample_seed,
                                  bool want_gradient)
{
    Workspace ws;
    LossAndGradient result;
    result.loss = loss_into(model, data, batch, negatives_per_example, sample_seed,
                            want_gradient ? &result.gradient : nullptr, ws);
    return result;
}

// --- training -------------------------------------------------------------------

std::size_t resolve_negatives(const TrainConfig& cfg, std::size_t n_labels)
{
    if (cfg.negatives >= 0) {
        return static_cast<std::size_t>(cfg.negatives);
    }
    return n_labels <= cfg.full_negatives_limit ? 0 : cfg.sampled_negatives;
}

namespace {

struct Adam {
    explicit Adam(const Mlp& model)
    {
        for (std::size_t l = 0; l < model.layers(); ++l) {
            mw.push_back(MatrixXd::Zero(model.weights()[l].rows(), model.weights()[l].cols()));
            mb.push_back(VectorXd::Zero(model.biases()[l].size()));
        }
        vw = mw;
        vb = mb;
    }
    std::vector<MatrixXd> mw, vw;
    std::vector<VectorXd> mb, vb;
    std::size_t t = 0;

    template <typename P, typename G, typename S>
    static void update(P& p, const G& grad, S& m, S& v, double step, double c2, double wd)
    {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        auto g = grad.array() + wd * p.array();
        m.array() = beta1 * m.array() + (1.0 - beta1) * g;
        v.array() = beta2 * v.array() + (1.0 - beta2) * g.square();
        p.array() -= step * m.array() / ((v.array() / c2).sqrt() + eps);
    }

    void step(Mlp& model, const Mlp::Gradient& grad, double lr, double wd)
    {
        ++t;
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
        for (std::size_t l = 0; l < model.layers(); ++l) {
            update(model.weights()[l], grad.weights[l], mw[l], vw[l], lr / c1, c2, wd);
            update(model.biases()[l], grad.biases[l], mb[l], vb[l], lr / c1, c2, wd);
        }
    }
};

bool all_finite(const Mlp::Gradient& g)
{
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        if (!g.weights[l].allFinite() || !g.biases[l].allFinite()) {
            return false;
        }
    }
    return true;
}

double corpus_loss(const Mlp& model, const TrainingSet& data, std::size_t negatives,
                   std::uint64_t seed, Workspace& ws)
{
    std::vector<std::size_t> all(data.examples.size());
    std::iota(all.begin(), all.end(), 0);
    double total = 0.0;
    constexpr std::size_t chunk = 256;
    for (std::size_t at = 0; at < all.size(); at += chunk) {
        std::size_t n = std::min(chunk, all.size() - at);
        total += loss_into(model, data, std::span(all).subspan(at, n), negatives, seed + at,
                           nullptr, ws);
    }
    return total;
}

}  // namespace

Mlp train_mlp(const TrainingSet& data, std::size_t output_dim, const TrainConfig& cfg,
              TrainingReport* report)
{
    if (cfg.epochs == 0 || cfg.batch_size == 0) {
        throw precondition_error("epochs and batch size must be positive");
    }
    if (data.examples.empty()) {
        throw precondition_error("no training examples");
    }
    if (static_cast<std::size_t>(data.labels.cols()) != output_dim) {
        throw precondition_error("label embeddings do not match the output dimension");
    }
    Mlp model(static_cast<std::size_t>(data.inputs.rows()), output_dim, cfg.layers, cfg.seed);
    const std::size_t negatives = resolve_negatives(cfg, static_cast<std::size_t>(data.labels.rows()));
    Adam adam(model);
    Workspace ws;
    Mlp::Gradient gradient;
    Rng rng(cfg.seed ^ 0x5eedULL);

    TrainingReport local;
    local.negatives_per_example = negatives;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::vector<std::size_t> order(data.examples.size());
    std::iota(order.begin(), order.end(), 0);
    double lr = cfg.learning_rate;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::optional<std::pair<Mlp, Adam>> snapshot;
        if (cfg.backtrack && epoch > 0) {
            snapshot.emplace(model, adam);
        }
        shuffle(order, rng);
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::size_t n = std::min(cfg.batch_size, order.size() - at);
            auto batch = std::span(order).subspan(at, n);
            double batch_loss = loss_into(model, data, batch, negatives, rng(), &gradient, ws);
            if (!std::isfinite(batch_loss) || !all_finite(gradient)) {
                std::ostringstream msg;
                msg << "training diverged: non-finite loss at epoch " << epoch + 1 << ", batch "
                    << at / cfg.batch_size << " (lr " << lr << ")";
                throw error(msg.str());
            }
            adam.step(model, gradient, lr, cfg.weight_decay);
        }
        double loss = corpus_loss(model, data, negatives, cfg.seed, ws);
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "training diverged: non-finite corpus loss after epoch " << epoch + 1 << " (lr "
                << lr << ")";
            throw error(msg.str());
        }
        if (snapshot && loss > best) {
            model = std::move(snapshot->first);
            adam = std::move(snapshot->second);
            loss = best;
            lr *= 0.5;
            ++local.rejected_epochs;
        }
        local.epoch_losses.push_back(loss);
        local.epochs_run = epoch + 1;
        if (loss < best * (1.0 - cfg.min_rel_improvement)) {
            stale = 0;
        } else if (++stale >= cfg.patience) {
            local.early_stopped = epoch + 1 < cfg.epochs;
            break;
        }
        best = std::min(best, loss);
    }
    local.final_learning_rate = lr;
    model.round_to_float();
    if (report) {
        *report = std::move(local);
    }
    return model;
}

TrainingSet entity_training_set(const std::vector<std::string>& doc_ids,
                                const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                                const std::map<std::string, SoftLabels>& soft_labels,
                                const EmbeddingTable& entity_embeddings)
{
    std::vector<std::string> ids = doc_ids;
    std::sort(ids.begin(), ids.end());
    TrainingSet data;
    data.inputs.resize(static_cast<Index>(doc_embeddings.dim()), static_cast<Index>(ids.size()));
    data.labels = entity_embeddings.matrix();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        data.inputs.col(static_cast<Index>(i)) = as_map(doc_embeddings.row(ids[i]));
        Example ex{i, {}};
        auto pit = final_pairs.find(ids[i]);
        if (pit != final_pairs.end()) {
            const SoftLabels* labels = nullptr;
            if (auto sit = soft_labels.find(ids[i]); sit != soft_labels.end()) {
                labels = &sit->second;
            }
            for (const auto& e : pit->second.entities()) {
                auto idx = entity_embeddings.index(e);
                if (!idx) {
                    throw precondition_error("entity '" + e + "' of '" + ids[i] +
                                             "' has no embedding");
                }
                double y = 1.0;
                if (labels) {
                    auto lit = labels->labels.find(e);
                    if (lit == labels->labels.end()) {
                        throw precondition_error("no soft label for ('" + ids[i] + "', '" + e + "')");
                    }
                    y = lit->second;
                }
                ex.positives.emplace_back(*idx, y);
            }
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

TrainingSet aspect_training_set(const std::vector<std::string>& doc_ids,
                                const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                                const EmbeddingTable& entity_embeddings,
                                const EmbeddingTable& aspect_embeddings)
{
    std::vector<std::string> ids = doc_ids;
    std::sort(ids.begin(), ids.end());
    const Index dim = static_cast<Index>(doc_embeddings.dim());
    std::vector<VectorXd> columns;
    TrainingSet data;
    data.labels = aspect_embeddings.matrix();
    for (const auto& id : ids) {
        auto pit = final_pairs.find(id);
        if (pit == final_pairs.end()) {
            continue;
        }
        for (const auto& e : pit->second.entities()) {
            Example ex{columns.size(), {}};
            std::set<std::size_t> seen;
            for (const auto& p : pit->second.pairs()) {
                if (p.entity != e) {
                    continue;
                }
                auto idx = aspect_embeddings.index(p.aspect);
                if (!idx) {
                    throw precondition_error("aspect '" + p.aspect + "' has no embedding");
                }
                if (seen.insert(*idx).second) {
                    ex.positives.emplace_back(*idx, 1.0);
                }
            }
            VectorXd x(2 * dim);
            x << as_map(doc_embeddings.row(id)), as_map(entity_embeddings.row(e));
            columns.push_back(std::move(x));
            data.examples.push_back(std::move(ex));
        }
    }
    data.inputs.resize(2 * dim, static_cast<Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) {
        data.inputs.col(static_cast<Index>(i)) = columns[i];
    }
    return data;
}

Mlp train_entity_predictor(const TrainingSet& data, const TrainConfig& cfg, TrainingReport* report)
{
    return train_mlp(data, static_cast<std::size_t>(data.labels.cols()), cfg, report);
}

Mlp train_aspect_predictor(const TrainingSet& data, const TrainConfig& cfg, TrainingReport* report)
{
    return train_mlp(data, static_cast<std::size_t>(data.labels.cols()), cfg, report);
}

// --- precision ------------------------------------------------------------------

namespace {

/// Indices of the k largest scores; ties by lower index.
std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k)
{
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                      });
    idx.resize(k);
    return idx;
}

double precision_of(const std::vector<std::size_t>& top, const std::vector<std::string>& keys,
                    const std::vector<std::string>& gold, std::size_t k)
{
    std::set<std::string> g(gold.begin(), gold.end());
    std::size_t hits = 0;
    for (auto i : top) {
        hits += g.count(keys[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace

double entity_precision_at_k(const Mlp& f, const std::vector<std::string>& doc_ids,
                             const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                             const EmbeddingTable& entity_embeddings, std::size_t k)
{
    if (doc_ids.empty() || k == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& id : doc_ids) {
        auto rv = relevance_vector(f, id, doc_embeddings.row(id), entity_embeddings);
        auto pit = final_pairs.find(id);
        std::vector<std::string> gold;
        if (pit != final_pairs.end()) {
            gold = pit->second.entities();
        }
        total += precision_of(top_k(rv.values, k), entity_embeddings.ids(), gold, k);
    }
    return total / static_cast<double>(doc_ids.size());
}

double aspect_precision_at_k(const Mlp& g, const std::vector<std::string>& doc_ids,
                             const EmbeddingTable& doc_embeddings, const PairSetMap& final_pairs,
                             const EmbeddingTable& entity_embeddings,
                             const EmbeddingTable& aspect_embeddings, std::size_t k)
{
    if (doc_ids.empty() || k == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& id : doc_ids) {
        auto pit = final_pairs.find(id);
        std::vector<double> best(aspect_embeddings.size(), 0.0);
        std::vector<std::string> gold;
        if (pit != final_pairs.end()) {
            gold = pit->second.aspects();
            for (const auto& e : pit->second.entities()) {
                auto scores = aspect_relevance(g, doc_embeddings.row(id), entity_embeddings.row(e),
                                               aspect_embeddings);
                for (std::size_t i = 0; i < scores.size(); ++i) {
                    best[i] = std::max(best[i], scores[i]);
                }
            }
        }
        total += precision_of(top_k(best, k), aspect_embeddings.ids(), gold, k);
    }
    return total / static_cast<double>(doc_ids.size());
}

}  // namespace pairsem
