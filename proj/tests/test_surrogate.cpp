#include <catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>

#include "curekit/surrogate.hpp"

using namespace curekit;
using Catch::Matchers::ContainsSubstring;

namespace {

const Dataset& shared_dataset() {
    static const Dataset d = [] {
        GenerateOptions opt;
        opt.n = 600;
        opt.seed = 31;
        return generate(opt, reference_thermoset());
    }();
    return d;
}

TrainConfig small_config() {
    TrainConfig c;
    c.hidden = {32, 32};
    c.epochs = 100;
    c.batch_size = 32;
    c.learning_rate = 3e-3;
    c.final_learning_rate = 3e-4;
    c.seed = 4;
    return c;
}

const TraceRegressor& shared_regressor() {
    static const TraceRegressor r = TraceRegressor::train(shared_dataset(), reference_thermoset(), small_config()).first;
    return r;
}

const FeasibilityClassifier& shared_classifier() {
    static const FeasibilityClassifier c =
        FeasibilityClassifier::train(shared_dataset(), shared_dataset().provenance.specs, small_config()).first;
    return c;
}

nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    nn::Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-1.0, 1.0);
    }
    return m;
}

// Scalar squared-error loss evaluated directly from the definition.
double reference_mse(const nn::Matrix& Y, const nn::Matrix& T) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
        for (Eigen::Index i = 0; i < Y.rows(); ++i) s += (Y(i, j) - T(i, j)) * (Y(i, j) - T(i, j));
    }
    return s / static_cast<double>(Y.cols());
}

double reference_cross_entropy(const nn::Matrix& Z, const std::vector<int>& labels) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        double denom = 0.0;
        for (Eigen::Index i = 0; i < Z.rows(); ++i) denom += std::exp(Z(i, j));
        s -= Z(labels[static_cast<std::size_t>(j)], j) - std::log(denom);
    }
    return s / static_cast<double>(Z.cols());
}

// Worst relative gap between backward() and a central difference of `loss`.
template <class F>
double finite_difference_gap(nn::Mlp net, const nn::Matrix& X, const nn::Matrix& dY, F&& loss) {
    std::vector<nn::Matrix> tape;
    net.forward(X, tape);
    const auto g = net.backward(tape, dY);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        auto probe = [&](double& p, double analytic) {
            const double saved = p;
            p = saved + h;
            const double up = loss(net.forward(X));
            p = saved - h;
            const double down = loss(net.forward(X));
            p = saved;
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
        };
        auto& W = net.weights()[l];
        for (Eigen::Index i = 0; i < W.size(); ++i) probe(W.data()[i], g.dW[l].data()[i]);
        auto& b = net.biases()[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) probe(b(i), g.db[l](i));
    }
    return worst;
}

std::vector<InputVector> inside_inputs(std::size_t n, std::uint64_t seed) {
    return sample_input_vectors(n, ParameterRanges{}, seed);
}

double max_abs_diff(const TemperatureTrace& a, const TemperatureTrace& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) worst = std::max(worst, std::abs(a.values[k] - b.values[k]));
    return worst;
}

}  // namespace

TEST_CASE("backpropagated gradients match finite differences") {
    Rng rng(8);
    nn::Mlp net({8, 12, 9, 5}, rng);
    const auto X = random_matrix(8, 10, rng);
    const auto T = random_matrix(5, 10, rng);
    const auto Y = net.forward(X);

    CHECK(nn::mse(Y, T).value == Catch::Approx(reference_mse(Y, T)).epsilon(1e-12));
    const double gap_mse =
        finite_difference_gap(net, X, nn::mse(Y, T).grad, [&](const nn::Matrix& out) { return reference_mse(out, T); });
    CHECK(gap_mse < 1e-5);
    const auto check_mse = nn::gradient_check(net, X, [&](const nn::Matrix& out) { return nn::mse(out, T); });
    CHECK(check_mse.block_relative < 1e-5);
    CHECK(check_mse.component_relative < 1e-5);

    nn::Mlp cls({8, 12, 9, 2}, rng);
    std::vector<int> labels(10);
    for (std::size_t j = 0; j < labels.size(); ++j) labels[j] = static_cast<int>(j % 3 == 0);
    const auto Z = cls.forward(X);
    CHECK(nn::softmax_cross_entropy(Z, labels).value == Catch::Approx(reference_cross_entropy(Z, labels)).epsilon(1e-12));
    const double gap_ce = finite_difference_gap(cls, X, nn::softmax_cross_entropy(Z, labels).grad,
                                                [&](const nn::Matrix& out) { return reference_cross_entropy(out, labels); });
    CHECK(gap_ce < 1e-5);
    const auto check_ce =
        nn::gradient_check(cls, X, [&](const nn::Matrix& out) { return nn::softmax_cross_entropy(out, labels); });
    CHECK(check_ce.block_relative < 1e-5);
    CHECK(check_ce.component_relative < 1e-5);

    // A loss that reports a gradient 0.1% off its value must be caught.
    const auto skewed = nn::gradient_check(net, X, [&](const nn::Matrix& out) {
        auto l = nn::mse(out, T);
        l.grad *= 1.001;
        return l;
    });
    CHECK(skewed.block_relative > 5e-4);
}

TEST_CASE("small-step gradient descent never raises the loss") {
    Rng rng(12);
    nn::Mlp net({8, 16, 16, 4}, rng);
    const auto X = random_matrix(8, 64, rng);
    const auto T = random_matrix(4, 64, rng);
    double previous = nn::mse(net.forward(X), T).value;
    const double first = previous;
    for (int it = 0; it < 300; ++it) {
        std::vector<nn::Matrix> tape;
        const auto Y = net.forward(X, tape);
        const auto g = net.backward(tape, nn::mse(Y, T).grad);
        for (std::size_t l = 0; l < net.layers(); ++l) {
            net.weights()[l] -= 1e-3 * g.dW[l];
            net.biases()[l] -= 1e-3 * g.db[l];
        }
        const double now = nn::mse(net.forward(X), T).value;
        CHECK(now <= previous + 1e-14);
        previous = now;
    }
    CHECK(previous < first);
}

TEST_CASE("a constant-target dataset is reproduced") {
    Dataset d;
    d.provenance.ranges = ParameterRanges{};
    d.time_grid = dataset_time_grid(60.0, 2.0);
    d.inputs = inside_inputs(500, 3);
    const std::size_t g = d.grid_size();
    d.part.assign(d.rows() * g, 75.0);
    d.tool.assign(d.rows() * g, 60.0);
    d.max_part_temperature.assign(d.rows(), 75.0);
    d.rate_at_final_hold.assign(d.rows(), 2.0);
    d.pass.assign(d.rows(), 1);

    TrainConfig c = small_config();
    c.hidden = {16};
    c.epochs = 200;
    c.learning_rate = 1e-2;
    c.final_learning_rate = 1e-3;
    c.baseline = BaselineKind::none;
    const auto [reg, report] = TraceRegressor::train(d, reference_thermoset(), c);
    CHECK(report.converged);
    CHECK(reg.max_error() <= 0.1);
    const auto xs = inside_inputs(50, 77);
    std::vector<CureCycle> cycles;
    for (const auto& x : xs) cycles.push_back(sample_from_inputs(x, d.provenance.ranges).cycle);
    const auto p = reg.predict_inputs(xs, cycles);
    double worst = 0.0;
    for (const auto& tr : p.traces) {
        for (double v : tr.part_center.values) worst = std::max(worst, std::abs(v - 75.0));
        for (double v : tr.tool_bottom.values) worst = std::max(worst, std::abs(v - 60.0));
    }
    CHECK(worst <= 0.1);
}

TEST_CASE("the residual fit meets the error bound on held-out rows") {
    const auto& d = shared_dataset();
    const auto& reg = shared_regressor();
    CHECK(reg.time_grid() == d.time_grid);
    CHECK(reg.max_part_error() <= 2.0);
    CHECK(reg.max_tool_error() <= 2.0);

    std::vector<std::size_t> train, held_out;
    detail::split_rows(d.rows(), 0.3, small_config().seed, train, held_out);
    REQUIRE(held_out.size() == 180);
    std::vector<InputVector> xs;
    std::vector<CureCycle> cycles;
    for (std::size_t i : held_out) {
        xs.push_back(d.inputs[i]);
        cycles.push_back(sample_from_inputs(d.inputs[i], d.provenance.ranges).cycle);
    }
    const auto p = reg.predict_inputs(xs, cycles);
    CHECK(p.warnings.empty());
    double part = 0.0, tool = 0.0;
    for (std::size_t k = 0; k < held_out.size(); ++k) {
        const auto fp = d.part_trace(held_out[k]);
        const auto ft = d.tool_trace(held_out[k]);
        for (std::size_t t = 0; t < d.grid_size(); ++t) {
            part = std::max(part, std::abs(p.traces[k].part_center.values[t] - fp[t]));
            tool = std::max(tool, std::abs(p.traces[k].tool_bottom.values[t] - ft[t]));
        }
    }
    CHECK(part == Catch::Approx(reg.max_part_error()).epsilon(1e-9));
    CHECK(tool == Catch::Approx(reg.max_tool_error()).epsilon(1e-9));
}

TEST_CASE("a batch of one matches batched inference") {
    const auto& reg = shared_regressor();
    const auto& cls = shared_classifier();
    const auto xs = inside_inputs(64, 19);
    std::vector<CureCycle> cycles;
    for (const auto& x : xs) cycles.push_back(sample_from_inputs(x, ParameterRanges{}).cycle);
    const auto batch = reg.predict_inputs(xs, cycles);
    const auto P = cls.probabilities(xs);
    for (std::size_t i : {0u, 17u, 63u}) {
        const auto one = reg.predict_inputs(std::span(xs).subspan(i, 1), std::span(cycles).subspan(i, 1));
        CHECK(max_abs_diff(one.traces[0].part_center, batch.traces[i].part_center) <= 1e-10);
        CHECK(max_abs_diff(one.traces[0].tool_bottom, batch.traces[i].tool_bottom) <= 1e-10);
        const auto p1 = cls.probabilities(std::span(xs).subspan(i, 1));
        CHECK(std::abs(p1(0, 0) - P(0, static_cast<Eigen::Index>(i))) <= 1e-12);
    }
}

TEST_CASE("feasibility labels follow check_specs") {
    const auto& d = shared_dataset();
    const ProcessSpecs specs;
    const auto labels = feasibility_labels(d, specs);
    for (std::size_t i = 0; i < d.rows(); ++i) {
        CHECK((labels[i] == 0) == check_specs(d.metrics(i), specs).pass);
        CHECK((labels[i] == 0) == static_cast<bool>(d.pass[i]));
    }
    const auto& cls = shared_classifier();
    CHECK(cls.validation_accuracy() > 0.8);
    const auto P = cls.probabilities(inside_inputs(20, 2));
    for (Eigen::Index j = 0; j < P.cols(); ++j) CHECK(P(0, j) + P(1, j) == Catch::Approx(1.0));
}

TEST_CASE("loose specs give a single-class classifier that passes everything") {
    const ProcessSpecs loose{1000.0, -100.0, 100.0};
    const auto labels = feasibility_labels(shared_dataset(), loose);
    CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
    TrainConfig c = small_config();
    c.epochs = 10;
    const auto cls = FeasibilityClassifier::train(shared_dataset(), loose, c).first;
    CHECK(cls.validation_accuracy() == 1.0);
    const auto P = cls.probabilities(inside_inputs(200, 6));
    CHECK(P.row(0).minCoeff() > 0.5);
}

TEST_CASE("swapping the labels mirrors the probabilities") {
    Rng rng(2);
    nn::Mlp net({8, 6, 2}, rng);
    const auto X = random_matrix(8, 30, rng);
    std::vector<int> labels(30), swapped(30);
    for (std::size_t j = 0; j < 30; ++j) {
        labels[j] = static_cast<int>(j % 2);
        swapped[j] = 1 - labels[j];
    }
    nn::Mlp mirrored = net;
    mirrored.weights().back().row(0).swap(mirrored.weights().back().row(1));
    std::swap(mirrored.biases().back()(0), mirrored.biases().back()(1));
    const auto a = nn::softmax_cross_entropy(net.forward(X), labels);
    const auto b = nn::softmax_cross_entropy(mirrored.forward(X), swapped);
    CHECK(a.value == Catch::Approx(b.value).epsilon(1e-14));
    const auto pa = nn::softmax(net.forward(X));
    const auto pb = nn::softmax(mirrored.forward(X));
    CHECK((pa.row(0) - pb.row(1)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("classify agrees per element with single queries") {
    const auto& cls = shared_classifier();
    const auto samples = sample_inputs(30, ParameterRanges{}, 44);
    std::vector<ThermalStack> stacks;
    std::vector<CureCycle> cycles;
    for (std::size_t i = 0; i < 5; ++i) stacks.push_back(samples[i].stack);
    for (std::size_t i = 5; i < 30; ++i) cycles.push_back(samples[i].cycle);
    const auto m = cls.classify(stacks, cycles, nullptr, 7);
    REQUIRE(m.stacks == 5);
    REQUIRE(m.cycles == 25);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 25; ++j) {
            const auto x = input_vector(stacks[i], cycles[j]);
            const auto P = cls.probabilities(std::span(&x, 1));
            CHECK(std::abs(m.probability(i, j) - P(0, 0)) <= 1e-12);
            CHECK(m.at(i, j) == cls.decide(P(0, 0)));
        }
    }
    const auto whole = cls.classify(stacks, cycles);
    CHECK(whole.pass == m.pass);
    for (std::size_t k = 0; k < m.pass_probability.size(); ++k) {
        CHECK(std::abs(whole.pass_probability[k] - m.pass_probability[k]) <= 1e-12);
    }
}

TEST_CASE("inference throughput") {
    const auto& reg = shared_regressor();
    const auto xs = inside_inputs(256, 9);
    std::vector<CureCycle> cycles;
    for (const auto& x : xs) cycles.push_back(sample_from_inputs(x, ParameterRanges{}).cycle);
    auto t0 = std::chrono::steady_clock::now();
    const auto p = reg.predict_inputs(xs, cycles);
    const double reg_rate = 256.0 / std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    INFO("regressor " << reg_rate << " predictions/s");
    CHECK(p.traces.size() == 256);
    CHECK(reg_rate >= 300.0);

    const auto many = inside_inputs(4096, 10);
    t0 = std::chrono::steady_clock::now();
    const auto P = shared_classifier().probabilities(many);
    const double cls_rate = 4096.0 / std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    INFO("classifier " << cls_rate << " queries/s");
    CHECK(P.cols() == 4096);
    CHECK(cls_rate >= 17500.0);
}

TEST_CASE("models round-trip through files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto rpath = (dir / "curekit_test_regressor.bin").string();
    const auto cpath = (dir / "curekit_test_classifier.bin").string();
    save_model(shared_regressor(), rpath);
    save_model(shared_classifier(), cpath);
    const auto reg = load_regressor(rpath);
    const auto cls = load_classifier(cpath);
    CHECK(reg == shared_regressor());
    CHECK(cls == shared_classifier());
    CHECK(serialize(reg) == serialize(shared_regressor()));

    const auto xs = inside_inputs(100, 13);
    std::vector<CureCycle> cycles;
    for (const auto& x : xs) cycles.push_back(sample_from_inputs(x, ParameterRanges{}).cycle);
    const auto a = reg.predict_inputs(xs, cycles);
    const auto b = shared_regressor().predict_inputs(xs, cycles);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(a.traces[i].part_center.values == b.traces[i].part_center.values);
        CHECK(a.traces[i].tool_bottom.values == b.traces[i].tool_bottom.values);
    }
    CHECK(cls.probabilities(xs) == shared_classifier().probabilities(xs));
    std::filesystem::remove(rpath);
    std::filesystem::remove(cpath);
}

TEST_CASE("damaged or mismatched model files are rejected") {
    const auto bytes = serialize(shared_classifier());

    const std::vector<std::byte> truncated(bytes.begin(), bytes.end() - 64);
    CHECK_THROWS_AS(deserialize_classifier(truncated), corruption_error);

    auto flipped = bytes;
    flipped[bytes.size() - 40] ^= std::byte{0x10};
    CHECK_THROWS_AS(deserialize_classifier(flipped), corruption_error);

    auto newer = bytes;
    newer[model_magic.size()] = std::byte{7};
    try {
        deserialize_classifier(newer);
        FAIL("expected a version error");
    } catch (const version_error& e) {
        CHECK(e.found() == 7);
        CHECK(e.supported() == 1);
    }

    try {
        deserialize_regressor(bytes);
        FAIL("expected a kind mismatch");
    } catch (const parse_error& e) {
        CHECK(e.key_path() == "kind");
    }
    CHECK(detail::model_kind(bytes) == "feasibility_classifier");
}

TEST_CASE("training needs enough rows") {
    GenerateOptions opt;
    opt.n = 50;
    opt.seed = 1;
    const auto d = generate(opt, reference_thermoset());
    CHECK_THROWS_WITH(TraceRegressor::train(d, reference_thermoset(), small_config()), ContainsSubstring("at least 500"));
    CHECK_THROWS_AS(FeasibilityClassifier::train(d, ProcessSpecs{}, small_config()), domain_error);
}

TEST_CASE("training is reproducible") {
    TrainConfig c = small_config();
    c.epochs = 5;
    const auto a = TraceRegressor::train(shared_dataset(), reference_thermoset(), c);
    const auto b = TraceRegressor::train(shared_dataset(), reference_thermoset(), c);
    CHECK(a.first == b.first);
    CHECK(a.second.loss_history == b.second.loss_history);
    CHECK(a.second.loss_history.size() == 5);
    CHECK(serialize(a.first) == serialize(b.first));
}

TEST_CASE("the surrogate backend honours the backend contract") {
    const SurrogateBackend backend(shared_regressor(), shared_classifier());
    CHECK(backend.name() == "surrogate");
    const auto samples = sample_inputs(6, ParameterRanges{}, 71);
    std::vector<ThermalStack> stacks;
    for (const auto& s : samples) stacks.push_back(s.stack);
    const auto cycle = samples[0].cycle;

    const auto traces = backend.predict_traces(stacks, cycle);
    REQUIRE(traces.size() == 6);
    const auto metrics = backend.predict_metrics(stacks, cycle);
    for (std::size_t i = 0; i < 6; ++i) {
        REQUIRE(traces[i].ok());
        REQUIRE(metrics[i].ok());
        CHECK(traces[i].value->part_center.times == shared_regressor().time_grid());
        const auto& v = traces[i].value->part_center.values;
        CHECK(metrics[i].value->max_part_temperature == *std::max_element(v.begin(), v.end()));
    }
    CHECK(backend.predict_traces({}, cycle).empty());

    std::vector<CureCycle> cycles;
    for (const auto& s : samples) cycles.push_back(s.cycle);
    const auto fm = backend.feasibility(stacks, cycles, ProcessSpecs{});
    CHECK(fm == shared_classifier().classify(stacks, cycles));
    CHECK(backend.warnings().empty());

    const auto odd = CureCycle(20.0, {Ramp{2, 150}, Dwell{5}, Ramp{1, 100}}, 3.5);
    const auto failed = backend.predict_traces(stacks, odd);
    CHECK_FALSE(failed[0].ok());
    CHECK_THROWS_AS(backend.feasibility(stacks, std::vector<CureCycle>{odd}, ProcessSpecs{}), domain_error);
}

TEST_CASE("out-of-range queries warn instead of failing") {
    const SurrogateBackend backend(shared_regressor(), shared_classifier());
    const std::vector<ThermalStack> wide{{150, 50, 0.004, 0.002}, {150, 50, 0.004, 0.002}};
    const auto hot = two_hold(2, 2, 130, 60, 190, 120, 3.5, 20);
    const auto out = backend.predict_traces(wide, hot);
    REQUIRE(out[0].ok());
    const auto w = backend.warnings();
    CHECK(std::any_of(w.begin(), w.end(), [](const std::string& s) { return s.find("h1") != std::string::npos; }));
    CHECK(std::any_of(w.begin(), w.end(), [](const std::string& s) { return s.find("T2_C") != std::string::npos; }));
    const auto before = w.size();
    backend.predict_traces(wide, hot);
    CHECK(backend.warnings().size() == before);

    backend.feasibility(wide, std::vector<CureCycle>{hot}, ProcessSpecs{180, 1, 3});
    const auto after = backend.warnings();
    CHECK(std::any_of(after.begin(), after.end(),
                      [](const std::string& s) { return s.find("different process specs") != std::string::npos; }));
}
