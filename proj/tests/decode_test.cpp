#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "neurodec/dataset.hpp"
#include "neurodec/decode.hpp"
#include "neurodec/errors.hpp"
#include "neurodec/features.hpp"
#include "neurodec/rng.hpp"

using namespace neurodec;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) x(r, c) = rng.normal();
    return x;
}

// Reference classifier that memorizes the score rows it was fitted on and
// answers with a one-hot vector of the stored label of the nearest row.
class OracleClassifier final : public ProbClassifier {
public:
    Matrix keys;
    IntVector key_labels;
    int classes = 0;

    int n_classes() const override { return classes; }
    Index n_features() const override { return keys.cols(); }
    Vector predict_proba(const Eigen::Ref<const Vector>& x) const override {
        Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index r = 0; r < keys.rows(); ++r) {
            const double d = (keys.row(r).transpose() - x).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        Vector p = Vector::Zero(classes);
        p[key_labels[best]] = 1.0;
        return p;
    }
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<OracleClassifier>(*this);
    }
    Index parameter_count() const override { return keys.size(); }
    std::string kind() const override { return "oracle"; }
};

StageClassifierFactory oracle_factory(int ql) {
    return [ql](const StageFitContext& context) -> std::unique_ptr<ProbClassifier> {
        auto model = std::make_unique<OracleClassifier>();
        const Index t = context.scores_train.rows();
        const Index v = context.scores_validation.rows();
        model->keys.resize(t + v, context.scores_train.cols());
        model->keys.topRows(t) = context.scores_train;
        model->keys.bottomRows(v) = context.scores_validation;
        model->key_labels.resize(t + v);
        model->key_labels.head(t) = context.labels_train;
        model->key_labels.tail(v) = context.labels_validation;
        model->classes = ql;
        return model;
    };
}

FoldSplit simple_split(Index n, double val_fraction, double test_fraction) {
    FoldSplit split;
    const Index test = std::max<Index>(1, static_cast<Index>(test_fraction * n));
    const Index val = std::max<Index>(1, static_cast<Index>(val_fraction * n));
    split.train.push_back({0, n - test - val});
    split.validation = {n - test - val, n - test};
    split.test = {n - test, n};
    return split;
}

double mse(const Eigen::Ref<const Matrix>& truth, const Eigen::Ref<const Matrix>& predicted) {
    return (truth - predicted).squaredNorm() / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("two uniform levels over [0,1] give the textbook quantizer") {
    Vector y(4);
    y << 0.0, 1.0, 0.2, 0.8;
    const auto q = quantizer_fit(y, 2, QuantizerKind::uniform);
    REQUIRE(q.edges.size() == 1);
    REQUIRE(q.centers.size() == 2);
    CHECK(q.edges[0] == 0.5);
    CHECK(q.centers[0] == 0.25);
    CHECK(q.centers[1] == 0.75);
    CHECK(q.input_min == 0.0);
    CHECK(q.input_max == 1.0);
}

TEST_CASE("constant targets cannot be quantized") {
    const Vector y = Vector::Constant(50, 3.7);
    CHECK_THROWS_AS(quantizer_fit(y, 2, QuantizerKind::uniform), DegenerateTargetError);

    Vector three(60);
    for (Index i = 0; i < 60; ++i) three[i] = static_cast<double>(i % 3);
    CHECK_THROWS_AS(quantizer_fit(three, 4, QuantizerKind::uniform), DegenerateTargetError);
}

TEST_CASE("encoding maps every value to its nearest center") {
    Rng rng(7);
    Vector y(200);
    for (Index i = 0; i < 200; ++i) y[i] = rng.normal();
    const auto q = quantizer_fit(y, 16, QuantizerKind::uniform);
    const IntVector codes = quantizer_encode(q, y);
    for (Index i = 0; i < y.size(); ++i) {
        Index nearest = 0;
        (q.centers.array() - y[i]).abs().minCoeff(&nearest);
        CHECK(codes[i] == static_cast<int>(nearest));
    }
}

TEST_CASE("round-trip error obeys the half-bin bound on a dense grid") {
    Rng rng(8);
    Vector y(500);
    for (Index i = 0; i < 500; ++i) y[i] = 3.0 * rng.normal() + 1.0;

    for (int ql : {8, 32, 128}) {
        const auto q = quantizer_fit(y, ql, QuantizerKind::uniform);
        const double span = q.input_max - q.input_min;
        const double bound = span / (2.0 * static_cast<double>(ql)) + 1e-12;
        const Index grid = 10001;
        Vector probe(grid);
        for (Index i = 0; i < grid; ++i)
            probe[i] = q.input_min + span * static_cast<double>(i) / static_cast<double>(grid - 1);
        const IntVector codes = quantizer_encode(q, probe);
        for (Index i = 0; i < grid; ++i)
            CHECK(std::abs(probe[i] - q.centers[codes[i]]) <= bound);
    }
}

TEST_CASE("out-of-range values clamp to the end bins") {
    Vector y(10);
    for (Index i = 0; i < 10; ++i) y[i] = static_cast<double>(i);
    const auto q = quantizer_fit(y, 4, QuantizerKind::uniform);
    Vector probe(2);
    probe << -100.0, 100.0;
    const IntVector codes = quantizer_encode(q, probe);
    CHECK(codes[0] == 0);
    CHECK(codes[1] == 3);
}

TEST_CASE("expectation decoding honors one-hot and symmetric inputs") {
    Vector y(9);
    for (Index i = 0; i < 9; ++i) y[i] = static_cast<double>(i - 4);
    const auto q = quantizer_fit(y, 8, QuantizerKind::uniform);

    for (int k = 0; k < 8; ++k) {
        Matrix one_hot = Matrix::Zero(1, 8);
        one_hot(0, k) = 1.0;
        const Vector value = quantizer_decode_expect(q, one_hot);
        CHECK(value[0] == q.centers[k]);
    }

    const Matrix uniform = Matrix::Constant(1, 8, 1.0 / 8.0);
    CHECK(std::abs(quantizer_decode_expect(q, uniform)[0]) <= 1e-12);

    const Matrix wrong = Matrix::Constant(1, 5, 0.2);
    CHECK_THROWS_AS(quantizer_decode_expect(q, wrong), ShapeError);
}

TEST_CASE("quantile bins track a skewed distribution") {
    Rng rng(9);
    Vector y(400);
    for (Index i = 0; i < 400; ++i) y[i] = rng.exponential(1.0);
    const auto q = quantizer_fit(y, 8, QuantizerKind::quantile);
    REQUIRE(q.edges.size() == 7);
    for (Index i = 1; i < q.edges.size(); ++i) CHECK(q.edges[i] > q.edges[i - 1]);
    for (Index k = 1; k + 1 < q.centers.size(); ++k) {
        CHECK(q.centers[k] > q.edges[k - 1]);
        CHECK(q.centers[k] < q.edges[k]);
    }
    const IntVector codes = quantizer_encode(q, y);
    CHECK(codes.minCoeff() == 0);
    CHECK(codes.maxCoeff() == 7);

    Vector tied(100);
    for (Index i = 0; i < 100; ++i) tied[i] = i < 80 ? 0.0 : static_cast<double>(i);
    CHECK_THROWS_AS(quantizer_fit(tied, 8, QuantizerKind::quantile), DegenerateTargetError);
}

TEST_CASE("an oracle stage lands within the quantization bound") {
    const int ql = 16;
    const Matrix x = random_matrix(240, 4, 10);
    const Matrix y = random_matrix(240, 3, 11);
    const auto split = simple_split(240, 0.15, 0.15);

    CCBRConfig config;
    config.ql = ql;
    config.pc = PcSelector::fixed(4);
    config.max_stages = 1;
    config.factory = oracle_factory(ql);

    const auto models = ccbr_fit(x, y, split, config);
    REQUIRE(models.size() == 3);

    const Matrix x_train = gather_rows(x, split.train);
    const Matrix y_train = gather_rows(y, split.train);
    const Matrix predicted = ccbr_predict(models, x_train);
    for (Index k = 0; k < 3; ++k) {
        const double span = y_train.col(k).maxCoeff() - y_train.col(k).minCoeff();
        const double bound = span / (2.0 * static_cast<double>(ql));
        const double stage_mse = (y_train.col(k) - predicted.col(k)).squaredNorm() /
                                 static_cast<double>(y_train.rows());
        CHECK(stage_mse <= bound * bound + 1e-12);
        CHECK(models[static_cast<size_t>(k)].stages.size() == 1);
    }
}

TEST_CASE("a second oracle stage refines the first") {
    const int ql = 16;
    const Matrix x = random_matrix(240, 4, 12);
    const Matrix y = random_matrix(240, 1, 13);
    const auto split = simple_split(240, 0.15, 0.15);
    const Matrix x_train = gather_rows(x, split.train);
    const Matrix y_train = gather_rows(y, split.train);

    CCBRConfig config;
    config.ql = ql;
    config.pc = PcSelector::fixed(4);
    config.factory = oracle_factory(ql);

    config.max_stages = 1;
    const auto one = ccbr_fit(x, y, split, config);
    config.max_stages = 2;
    const auto two = ccbr_fit(x, y, split, config);

    const double mse_one = mse(y_train, ccbr_predict(one, x_train));
    const double mse_two = mse(y_train, ccbr_predict(two, x_train));
    REQUIRE(two[0].stages.size() == 2);
    CHECK(mse_two <= mse_one + 1e-15);
}

TEST_CASE("the validation trace grows by at least the acceptance gain") {
    const Matrix x = random_matrix(300, 5, 14);
    const Matrix y = random_matrix(300, 1, 15);
    const auto split = simple_split(300, 0.2, 0.1);

    CCBRConfig config;
    config.ql = 8;
    config.pc = PcSelector::fixed(5);
    config.max_stages = 5;
    config.factory = oracle_factory(8);

    const auto models = ccbr_fit(x, y, split, config);
    const auto& trace = models[0].validation_trace;
    REQUIRE(trace.size() == models[0].stages.size());
    REQUIRE(!trace.empty());
    CHECK(trace.size() <= 5);
    for (size_t s = 1; s < trace.size(); ++s)
        CHECK(trace[s] - trace[s - 1] >= config.min_gain);
}

TEST_CASE("degenerate stages stop the cascade cleanly after stage one") {
    const Matrix x = random_matrix(200, 3, 16);
    const Matrix y = random_matrix(200, 1, 17);
    const auto split = simple_split(200, 0.2, 0.1);

    CCBRConfig config;
    config.ql = 8;
    config.pc = PcSelector::fixed(3);
    config.max_stages = 4;
    config.factory = [](const StageFitContext& context) -> std::unique_ptr<ProbClassifier> {
        if (context.stage_index >= 1) throw DegenerateLabelsError("synthetic stop");
        return oracle_factory(8)(context);
    };
    const auto models = ccbr_fit(x, y, split, config);
    CHECK(models[0].stages.size() == 1);

    CCBRConfig failing = config;
    failing.factory = [](const StageFitContext&) -> std::unique_ptr<ProbClassifier> {
        throw DegenerateLabelsError("stage zero failure");
    };
    CHECK_THROWS_AS(ccbr_fit(x, y, split, failing), DegenerateLabelsError);

    const Matrix constant = Matrix::Constant(200, 1, 2.0);
    CHECK_THROWS_AS(ccbr_fit(x, constant, split, config), DegenerateTargetError);
}

TEST_CASE("a single-stage model predicts the stage-one expectation exactly") {
    Rng rng(18);
    const Matrix x = random_matrix(300, 4, 19);
    Matrix y(300, 1);
    for (Index i = 0; i < 300; ++i) y(i, 0) = x(i, 0) + 0.5 * x(i, 1) + 0.1 * rng.normal();
    const auto split = simple_split(300, 0.15, 0.15);

    CCBRConfig config;
    config.ql = 8;
    config.pc = PcSelector::fixed(4);
    config.max_stages = 1;
    const auto models = ccbr_fit(x, y, split, config);
    REQUIRE(models[0].stages.size() == 1);

    const Matrix x_test = gather_rows(x, split.test);
    const Matrix scores = pca_transform(models[0].pca, models[0].standardizer.apply(x_test));
    const Vector manual = quantizer_decode_expect(
        models[0].stages[0].quantizer,
        models[0].stages[0].classifier->predict_proba_batch(scores));
    const Vector direct = models[0].predict(x_test);
    CHECK((manual - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("permuting prediction rows permutes predictions") {
    Rng rng(20);
    const Matrix x = random_matrix(250, 4, 21);
    Matrix y(250, 2);
    for (Index i = 0; i < 250; ++i) {
        y(i, 0) = x(i, 0) - x(i, 2) + 0.1 * rng.normal();
        y(i, 1) = 0.5 * x(i, 1) + 0.1 * rng.normal();
    }
    const auto split = simple_split(250, 0.15, 0.15);

    CCBRConfig config;
    config.ql = 8;
    config.pc = PcSelector::fixed(4);
    config.max_stages = 2;
    const auto models = ccbr_fit(x, y, split, config);

    const Matrix probe = random_matrix(40, 4, 22);
    const Matrix base = ccbr_predict(models, probe);
    Matrix shuffled(40, 4);
    std::vector<Index> perm(40);
    for (Index i = 0; i < 40; ++i) perm[static_cast<size_t>(i)] = (i * 11 + 5) % 40;
    for (Index i = 0; i < 40; ++i) shuffled.row(i) = probe.row(perm[static_cast<size_t>(i)]);
    const Matrix moved = ccbr_predict(models, shuffled);
    for (Index i = 0; i < 40; ++i)
        CHECK((moved.row(i) - base.row(perm[static_cast<size_t>(i)])).cwiseAbs().maxCoeff() <=
              1e-12);
}

TEST_CASE("affine feature rescaling leaves predictions unchanged") {
    Rng rng(23);
    const Matrix x = random_matrix(400, 5, 24);
    Matrix y(400, 1);
    for (Index i = 0; i < 400; ++i)
        y(i, 0) = std::tanh(x(i, 0)) + 0.4 * x(i, 3) + 0.05 * rng.normal();
    const auto split = simple_split(400, 0.15, 0.15);

    Vector alpha(5), beta(5);
    alpha << 2.0, 0.5, 4.0, 1.5, 3.0;
    beta << 1.0, -2.0, 7.0, 0.0, 3.0;
    Matrix x_scaled = x;
    for (Index j = 0; j < 5; ++j)
        x_scaled.col(j) = alpha[j] * x.col(j).array() + beta[j];

    CCBRConfig config;
    config.ql = 8;
    config.pc = PcSelector::fixed(3);
    config.max_stages = 2;
    const auto base = ccbr_fit(x, y, split, config);
    const auto scaled = ccbr_fit(x_scaled, y, split, config);

    const Matrix probe = random_matrix(60, 5, 25);
    Matrix probe_scaled = probe;
    for (Index j = 0; j < 5; ++j)
        probe_scaled.col(j) = alpha[j] * probe.col(j).array() + beta[j];

    const Matrix a = ccbr_predict(base, probe);
    const Matrix b = ccbr_predict(scaled, probe_scaled);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("the cascade beats the Wiener filter on synthetic cosine tuning") {
    SynthConfig cfg;
    cfg.n_units = 100;
    cfg.duration_s = 800.0;
    cfg.tuning.modulation_depth_hz = 10.0;
    cfg.noise_seed = 1;
    const auto ds = generate_synthetic(cfg);

    const double bin = 0.1;
    const Matrix counts = bin_spike_counts(ds, bin);
    const Matrix kin = bin_kinematics(ds, bin);
    const auto fm = lag_embed(counts, 4, 0, bin, FeatureSource::spike_count);
    const Matrix targets = trim_to_lags(kin, 4, 0);

    const auto folds = make_folds(fm.values.rows(), 10, 0.1);
    const auto& fold = folds[0];
    const Matrix x_train = gather_rows(fm.values, fold.train);
    const Matrix y_train = gather_rows(targets, fold.train);
    const Matrix x_test = gather_rows(fm.values, fold.test);
    const Matrix y_test = gather_rows(targets, fold.test);

    const auto wf = wiener_fit(x_train, y_train);
    const double wf_r2 = r_squared(y_test, wiener_predict(wf, x_test)).mean;

    CCBRConfig config;
    config.pc = PcSelector::fixed(20);
    const auto models = ccbr_fit(fm.values, targets, fold, config);
    const double ccbr_r2 = r_squared(y_test, ccbr_predict(models, x_test)).mean;

    CHECK(ccbr_r2 >= wf_r2);
    CHECK(ccbr_r2 >= 0.7);
}

TEST_CASE("the Wiener filter recovers an exact affine map") {
    const Matrix x = random_matrix(120, 1, 26);
    Matrix y(120, 1);
    y.col(0) = 2.0 * x.col(0).array() + 1.0;

    const auto model = wiener_fit(x, y, 0.0);
    CHECK(model.weights(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(model.weights(1, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK_FALSE(model.ridge_fallback);

    const auto score = r_squared(y, wiener_predict(model, x));
    CHECK(score.mean >= 1.0 - 1e-12);
}

TEST_CASE("independent noise is undecodable") {
    const Matrix x_train = random_matrix(2000, 5, 27);
    const Matrix y_train = random_matrix(2000, 1, 28);
    const Matrix x_test = random_matrix(2000, 5, 29);
    const Matrix y_test = random_matrix(2000, 1, 30);

    const auto model = wiener_fit(x_train, y_train, 0.0);
    const auto score = r_squared(y_test, wiener_predict(model, x_test));
    CHECK(score.mean <= 0.05);
}

TEST_CASE("least squares matches an independent pseudo-inverse") {
    const Matrix x = random_matrix(20, 3, 31);
    const Matrix y = random_matrix(20, 2, 32);

    Matrix design(20, 4);
    design.col(0).setOnes();
    design.rightCols(3) = x;
    const Matrix reference = design.completeOrthogonalDecomposition().pseudoInverse() * y;

    const auto model = wiener_fit(x, y, 0.0);
    CHECK((model.weights - reference).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("the fitted weights satisfy the normal equations") {
    const Matrix x = random_matrix(100, 4, 33);
    const Matrix y = random_matrix(100, 2, 34);
    const double lambda = 0.5;

    const auto model = wiener_fit(x, y, lambda);
    Matrix design(100, 5);
    design.col(0).setOnes();
    design.rightCols(4) = x;
    Matrix penalty = Matrix::Zero(5, 5);
    penalty.diagonal().tail(4).setConstant(lambda);
    const Matrix residual =
        (design.transpose() * design + penalty) * model.weights - design.transpose() * y;
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("a cubic cascade captures a cubic response") {
    Rng rng(35);
    Matrix x(300, 1);
    for (Index i = 0; i < 300; ++i) x(i, 0) = rng.uniform(-1.0, 1.0);
    Matrix y(300, 1);
    y.col(0) = (2.0 * x.col(0).array()).cube();

    const auto model = wiener_cascade_fit(x, y, 3, 0.0);
    const auto score = r_squared(y, wiener_predict(model, x));
    CHECK(score.mean >= 0.999);
}

TEST_CASE("a degree-one cascade equals the plain filter") {
    const Matrix x = random_matrix(300, 4, 36);
    Matrix y(300, 2);
    y.col(0) = x.col(0) - 0.5 * x.col(2);
    y.col(1) = x.col(1) + x.col(3);
    y += 0.1 * random_matrix(300, 2, 37);

    const Matrix x_test = random_matrix(100, 4, 38);

    const auto wf = wiener_fit(x.topRows(200), y.topRows(200), 0.0);
    const auto wc = wiener_cascade_fit(x.topRows(200), y.topRows(200), 1, 0.0);
    const Matrix a = wiener_predict(wf, x_test);
    const Matrix b = wiener_predict(wc, x_test);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("the cascade keeps pace with the filter under saturating tuning") {
    SynthConfig cfg;
    cfg.n_units = 60;
    cfg.duration_s = 400.0;
    cfg.tuning.modulation_depth_hz = 10.0;
    cfg.nonlinearity = RateNonlinearity::saturating;
    cfg.noise_seed = 2;
    const auto ds = generate_synthetic(cfg);

    const double bin = 0.1;
    const Matrix counts = bin_spike_counts(ds, bin);
    const Matrix kin = bin_kinematics(ds, bin);
    const auto fm = lag_embed(counts, 4, 0, bin, FeatureSource::spike_count);
    const Matrix targets = trim_to_lags(kin, 4, 0);

    const auto folds = make_folds(fm.values.rows(), 5, 0.1);
    const Matrix x_train = gather_rows(fm.values, folds[0].train);
    const Matrix y_train = gather_rows(targets, folds[0].train);
    const Matrix x_test = gather_rows(fm.values, folds[0].test);
    const Matrix y_test = gather_rows(targets, folds[0].test);

    const auto wf = wiener_fit(x_train, y_train);
    const auto wc = wiener_cascade_fit(x_train, y_train, 3);
    const double wf_r2 = r_squared(y_test, wiener_predict(wf, x_test)).mean;
    const double wc_r2 = r_squared(y_test, wiener_predict(wc, x_test)).mean;
    CHECK(wc_r2 >= wf_r2 - 0.01);
}

TEST_CASE("r squared follows its definition") {
    Matrix truth(3, 1), predicted(3, 1);
    truth << 1, 2, 3;
    predicted << 1, 2, 2;
    const auto hand = r_squared(truth, predicted);
    CHECK(std::abs(hand.mean - 0.5) <= 1e-12);

    const Matrix y = random_matrix(50, 3, 39);
    const auto identity = r_squared(y, y);
    CHECK(identity.mean == 1.0);
    for (Index k = 0; k < 3; ++k) CHECK(identity.per_dim[k] == 1.0);

    Matrix mean_pred(50, 3);
    for (Index k = 0; k < 3; ++k) mean_pred.col(k).setConstant(y.col(k).mean());
    const auto zero = r_squared(y, mean_pred);
    CHECK(std::abs(zero.mean) <= 1e-12);
}

TEST_CASE("constant truth dimensions are rejected by name") {
    Matrix truth = random_matrix(20, 3, 40);
    truth.col(1).setConstant(4.0);
    const Matrix predicted = random_matrix(20, 3, 41);
    try {
        r_squared(truth, predicted);
        FAIL("expected MetricError");
    } catch (const MetricError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }

    CHECK_THROWS_AS(r_squared(truth.topRows(1), predicted.topRows(1)), MetricError);
    CHECK_THROWS_AS(r_squared(truth, predicted.leftCols(2)), ShapeError);
}
