#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/errors.hpp>
#include <pairsem/predictors.hpp>

#include <cmath>
#include <numeric>

using namespace pairsem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::noise;
using testing::rel_error;

namespace {

/// Element-by-element forward pass.
std::vector<double> naive_forward(const Mlp& m, const std::vector<double>& x)
{
    std::vector<double> h = x;
    for (std::size_t l = 0; l < m.layers(); ++l) {
        const auto& w = m.weights()[l];
        const auto& b = m.biases()[l];
        std::vector<double> out(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            double s = b(i);
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                s += w(i, j) * h[static_cast<std::size_t>(j)];
            }
            out[static_cast<std::size_t>(i)] = (l + 1 < m.layers()) ? std::max(0.0, s) : s;
        }
        h = out;
    }
    return h;
}

double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TrainingSet random_set(Rng& rng, std::size_t n_inputs, std::size_t in_dim, std::size_t n_labels,
                       std::size_t out_dim)
{
    TrainingSet t;
    t.inputs = MatrixXd(in_dim, n_inputs);
    for (Eigen::Index i = 0; i < t.inputs.size(); ++i) {
        t.inputs.data()[i] = noise(rng);
    }
    t.labels = RowMatrix(n_labels, out_dim);
    for (Eigen::Index i = 0; i < t.labels.size(); ++i) {
        t.labels.data()[i] = noise(rng);
    }
    for (std::size_t i = 0; i < n_inputs; ++i) {
        Example ex;
        ex.input = i;
        for (std::size_t k : sample_without_replacement(rng, n_labels, 1 + uniform_below(rng, 2))) {
            ex.positives.emplace_back(k, 0.2 + 0.8 * uniform_unit(rng));
        }
        t.examples.push_back(ex);
    }
    return t;
}

/// Loss written directly from its definition.
double naive_loss(const Mlp& m, const TrainingSet& t)
{
    double loss = 0;
    for (const auto& ex : t.examples) {
        std::vector<double> x(t.inputs.col(ex.input).data(),
                              t.inputs.col(ex.input).data() + t.inputs.rows());
        auto out = naive_forward(m, x);
        for (Eigen::Index j = 0; j < t.labels.rows(); ++j) {
            double z = 0;
            for (std::size_t k = 0; k < out.size(); ++k) {
                z += t.labels(j, static_cast<Eigen::Index>(k)) * out[k];
            }
            double y = 0;
            bool pos = false;
            for (auto [label, w] : ex.positives) {
                if (static_cast<Eigen::Index>(label) == j) {
                    pos = true;
                    y = w;
                }
            }
            loss += pos ? -y * std::log(naive_sigmoid(z)) : -std::log(1 - naive_sigmoid(z));
        }
    }
    return loss;
}

std::vector<std::size_t> all_examples(const TrainingSet& t)
{
    std::vector<std::size_t> v(t.examples.size());
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

TEST_SUITE("predictors")
{
    TEST_CASE("identity model scores")
    {
        Mlp id = Mlp::identity(2);
        std::vector<double> d{0.0, 0.0}, e{1.0, 0.0};
        CHECK(entity_score(id, d, e) == doctest::Approx(0.5).epsilon(1e-15));
        std::vector<double> d1{1.0, 0.0};
        CHECK(entity_score(id, d1, e) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
        CHECK(clamped_sigmoid(-1000) == 1e-12);
        CHECK(clamped_sigmoid(1000) == 1 - 1e-12);
    }

    TEST_CASE("forward pass matches the element-wise oracle")
    {
        Rng rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            std::size_t in = uniform_int(rng, 1, 9), out = uniform_int(rng, 1, 7);
            std::size_t layers = uniform_int(rng, 1, 3);
            Mlp m(in, out, layers, rng());
            CHECK(m.layers() == layers);
            CHECK(m.input_dim() == in);
            CHECK(m.output_dim() == out);
            VectorXd x(in);
            for (auto& v : x) {
                v = noise(rng);
            }
            auto got = m.forward(x);
            auto want = naive_forward(m, std::vector<double>(x.data(), x.data() + x.size()));
            for (std::size_t i = 0; i < out; ++i) {
                CHECK(std::abs(got(static_cast<Eigen::Index>(i)) - want[i]) < 1e-12);
            }
        }
    }

    TEST_CASE("He-uniform initialization is bounded and seeded")
    {
        Mlp a(64, 32, 2, 9), b(64, 32, 2, 9), c(64, 32, 2, 10);
        CHECK(a.flat_parameters() == b.flat_parameters());
        CHECK(a.flat_parameters() != c.flat_parameters());
        double bound0 = std::sqrt(6.0 / 64.0), bound1 = std::sqrt(6.0 / 32.0);
        CHECK(a.weights()[0].cwiseAbs().maxCoeff() <= bound0);
        CHECK(a.weights()[1].cwiseAbs().maxCoeff() <= bound1);
        CHECK(a.biases()[0].isZero());
        CHECK(a.parameter_count() == 64 * 32 + 32 + 32 * 32 + 32);
    }

    TEST_CASE("loss matches the definition and gradient matches finite differences")
    {
        Rng rng(77);
        for (int trial = 0; trial < 10; ++trial) {
            auto data = random_set(rng, 3, 5, 4, 3);
            Mlp m(5, 3, 2, rng());
            auto batch = all_examples(data);
            auto lg = loss_and_gradient(m, data, batch, 0, 1);
            CHECK(rel_error(lg.loss, naive_loss(m, data)) < 1e-12);

            auto theta = m.flat_parameters();
            auto grad = Mlp::flatten(lg.gradient);
            REQUIRE(grad.size() == theta.size());
            std::vector<double> fd(theta.size());
            const double h = 1e-5;
            for (std::size_t i = 0; i < theta.size(); ++i) {
                auto p = theta;
                p[i] += h;
                m.set_flat_parameters(p);
                double up = loss_and_gradient(m, data, batch, 0, 1, false).loss;
                p[i] -= 2 * h;
                m.set_flat_parameters(p);
                double down = loss_and_gradient(m, data, batch, 0, 1, false).loss;
                fd[i] = (up - down) / (2 * h);
            }
            m.set_flat_parameters(theta);
            double num = 0, den = 0;
            for (std::size_t i = 0; i < fd.size(); ++i) {
                num += (fd[i] - grad[i]) * (fd[i] - grad[i]);
                den += fd[i] * fd[i] + grad[i] * grad[i];
            }
            CHECK(std::sqrt(num) / std::sqrt(den) < 1e-4);
        }
    }

    TEST_CASE("zero model starts at ln 2 per label")
    {
        TrainingSet t;
        t.inputs = MatrixXd::Ones(2, 1);
        t.labels = RowMatrix::Identity(2, 2);
        t.examples = {Example{0, {{0, 1.0}}}};
        Mlp m(2, 2, 2, 1);
        m.set_flat_parameters(std::vector<double>(m.parameter_count(), 0.0));
        std::vector<std::size_t> batch{0};
        CHECK(loss_and_gradient(m, t, batch, 0, 1).loss == doctest::Approx(2 * std::log(2.0)));
    }

    TEST_CASE("sampled negatives are unbiased")
    {
        Rng rng(8);
        auto data = random_set(rng, 4, 4, 30, 4);
        Mlp m(4, 4, 2, 3);
        auto batch = all_examples(data);
        double full = loss_and_gradient(m, data, batch, 0, 1, false).loss;
        CHECK(loss_and_gradient(m, data, batch, 1000, 1, false).loss == doctest::Approx(full));
        double sum = 0;
        const int n = 4000;
        for (int s = 0; s < n; ++s) {
            sum += loss_and_gradient(m, data, batch, 5, static_cast<std::uint64_t>(s), false).loss;
        }
        CHECK(rel_error(sum / n, full) < 0.02);
    }

    TEST_CASE("batched relevance equals the looped computation")
    {
        Rng rng(12);
        std::vector<std::string> ids;
        std::vector<Vector> vecs;
        for (int i = 0; i < 25; ++i) {
            ids.push_back("e" + std::to_string(i));
            Vector v(6);
            for (auto& x : v) {
                x = noise(rng);
            }
            vecs.push_back(v);
        }
        EmbeddingTable table(ids, vecs);
        Mlp f(8, 6, 2, 4);
        std::vector<double> doc(8);
        for (auto& x : doc) {
            x = noise(rng);
        }
        auto a = relevance_vector(f, "d", doc, table);
        auto b = relevance_vector_looped(f, "d", doc, table);
        REQUIRE(a.values.size() == 25);
        for (std::size_t i = 0; i < 25; ++i) {
            CHECK(std::abs(a.values[i] - b.values[i]) < 1e-12);
            CHECK(a.values[i] == doctest::Approx(entity_score(f, doc, table.row(i))).epsilon(1e-12));
        }
        CHECK(*a.keys == ids);
    }

    TEST_CASE("aspect relevance uses the concatenated input")
    {
        Rng rng(3);
        std::vector<Vector> vecs{{1, 0, 0}, {0, 1, 0}, {0.5, 0.5, 0.5}};
        EmbeddingTable aspects({"a0", "a1", "a2"}, vecs);
        Mlp g(4, 3, 2, 6);
        std::vector<double> d{0.3, -0.2}, e{0.9, 0.1};
        auto rel = aspect_relevance(g, d, e, aspects);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(rel[i] == doctest::Approx(aspect_score(g, d, e, aspects.row(i))).epsilon(1e-12));
        }
    }

    TEST_CASE("one optimizer step lowers the loss and training is deterministic")
    {
        Rng rng(31);
        auto data = random_set(rng, 20, 6, 12, 6);
        TrainConfig cfg;
        cfg.learning_rate = 1e-2;
        cfg.epochs = 1;
        cfg.batch_size = 20;
        cfg.seed = 4;
        Mlp init(6, 6, cfg.layers, cfg.seed);
        auto batch = all_examples(data);
        double before = loss_and_gradient(init, data, batch, 0, 1, false).loss;
        TrainingReport report;
        Mlp trained = train_mlp(data, 6, cfg, &report);
        CHECK(loss_and_gradient(trained, data, batch, 0, 1, false).loss < before);
        CHECK(report.epochs_run == 1);

        cfg.epochs = 20;
        cfg.batch_size = 4;
        TrainingReport r1, r2;
        Mlp x = train_mlp(data, 6, cfg, &r1);
        Mlp y = train_mlp(data, 6, cfg, &r2);
        CHECK(x.flat_parameters() == y.flat_parameters());
        CHECK(r1.epoch_losses == r2.epoch_losses);
        CHECK(r1.epoch_losses.back() < r1.epoch_losses.front());
        for (double p : x.flat_parameters()) {
            CHECK(static_cast<double>(static_cast<float>(p)) == p);
        }
    }

    TEST_CASE("negative count resolution")
    {
        TrainConfig cfg;
        CHECK(resolve_negatives(cfg, 100) == 0);
        CHECK(resolve_negatives(cfg, 6000) == 200);
        cfg.negatives = 7;
        CHECK(resolve_negatives(cfg, 100) == 7);
        cfg.negatives = 0;
        CHECK(resolve_negatives(cfg, 6000) == 0);
    }

    TEST_CASE("model save and load round-trip exactly")
    {
        testing::TempDir dir("mlp");
        Mlp m(5, 4, 2, 99);
        m.round_to_float();
        m.save(dir.str() + "/m.json");
        Mlp back = Mlp::load(dir.str() + "/m.json");
        CHECK(back.flat_parameters() == m.flat_parameters());
        CHECK(back.layers() == 2);
        CHECK_THROWS_AS(Mlp::load(dir.str() + "/missing.json"), io_error);
    }

    TEST_CASE("training sets from pairs")
    {
        EmbeddingTable docs({"d1", "d2"}, {Vector{1, 0}, Vector{0, 1}});
        EmbeddingTable ents({"e1", "e2", "e3"}, {Vector{1, 0}, Vector{0, 1}, Vector{1, 1}});
        EmbeddingTable asps({"a1", "a2"}, {Vector{1, 0}, Vector{0, 1}});
        PairSetMap pairs;
        PairSet p("d1", PairStage::final);
        p.add({"e1", "a1"});
        p.add({"e1", "a2"});
        p.add({"e3", "a2"});
        pairs.emplace("d1", p);
        std::map<std::string, SoftLabels> soft;
        soft["d1"] = SoftLabels{"d1", {{"e1", 0.5}}};
        CHECK_THROWS_AS(entity_training_set({"d1"}, docs, pairs, soft, ents), precondition_error);
        soft["d1"].labels["e3"] = 0.75;

        auto et = entity_training_set({"d1", "d2"}, docs, pairs, soft, ents);
        REQUIRE(et.examples.size() == 2);
        auto pos = et.examples[0].positives;
        REQUIRE(pos.size() == 2);
        CHECK(pos[0] == std::pair<std::size_t, double>{0, 0.5});
        CHECK(pos[1] == std::pair<std::size_t, double>{2, 0.75});
        CHECK(et.examples[1].positives.empty());

        auto at = aspect_training_set({"d1", "d2"}, docs, pairs, ents, asps);
        REQUIRE(at.examples.size() == 2);
        CHECK(at.inputs.rows() == 4);
        CHECK(at.examples[0].positives.size() == 2);
        CHECK(at.examples[1].positives.size() == 1);
    }
}
