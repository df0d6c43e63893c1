#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fedpall/errors.hpp"
#include "fedpall/losses.hpp"
#include "fedpall/mlp.hpp"
#include "fedpall/rng.hpp"
#include "support/gradcheck.hpp"

using namespace fedpall;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data) {
        v = rng.normal();
    }
    return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<int> labels(n);
    for (int& y : labels) {
        y = static_cast<int>(rng.uniform_index(k));
    }
    return labels;
}

DenseMatrix random_probs(std::size_t rows, std::size_t cols, Rng& rng) {
    return softmax_rows(random_matrix(rows, cols, rng));
}

}  // namespace

TEST_CASE("cross entropy on perfect and uniform predictions") {
    DenseMatrix perfect(2, 3);
    perfect(0, 0) = 1.0;
    perfect(1, 2) = 1.0;
    const std::vector<int> labels{0, 2};
    CHECK(cross_entropy_loss(perfect, labels).value <= 1e-9);

    DenseMatrix uniform(4, 10, 0.1);
    const std::vector<int> labels10{0, 3, 7, 9};
    CHECK(cross_entropy_loss(uniform, labels10).value ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy matches a straight-line recomputation") {
    Rng rng(51);
    const DenseMatrix probs = random_probs(4, 3, rng);
    const std::vector<int> labels = random_labels(4, 3, rng);
    double expected = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        expected -= std::log(probs(i, static_cast<std::size_t>(labels[i])));
    }
    expected /= 4.0;
    CHECK(cross_entropy_loss(probs, labels).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    const DenseMatrix probs(2, 3, 1.0 / 3.0);
    CHECK_THROWS_AS(cross_entropy_loss(probs, std::vector<int>{0, 3}), DomainError);
    CHECK_THROWS_AS(cross_entropy_loss(probs, std::vector<int>{-1, 0}), DomainError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(600 + seed);
        const DenseMatrix probs = random_probs(5, 4, rng);
        const std::vector<int> labels = random_labels(5, 4, rng);
        const LossOutput out = cross_entropy_loss(probs, labels);
        const auto f = [&](std::span<const double> data) {
            DenseMatrix p = probs;
            std::copy(data.begin(), data.end(), p.data.begin());
            return cross_entropy_loss(p, labels).value;
        };
        CHECK(gradcheck::max_grad_rel_err(f, probs.data, out.grad.data) <= gradcheck::kRelTol);
    }
}

TEST_CASE("kl uniform loss analytic values") {
    const DenseMatrix uniform(3, 4, 0.25);
    CHECK(kl_uniform_loss(uniform).value == doctest::Approx(0.0).epsilon(1e-12));

    DenseMatrix onehot(1, 4);
    onehot(0, 1) = 1.0;
    CHECK(kl_uniform_loss(onehot).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    DenseMatrix half(1, 4);
    half(0, 0) = 0.5;
    half(0, 1) = 0.5;
    CHECK(kl_uniform_loss(half).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl uniform loss is nonnegative, zero only at uniform rows") {
    Rng rng(53);
    const DenseMatrix probs = random_probs(10, 5, rng);
    const double v = kl_uniform_loss(probs).value;
    CHECK(v >= 0.0);
    CHECK(v > 1e-9);  // random rows are not uniform
}

TEST_CASE("kl uniform loss is invariant under column permutation") {
    Rng rng(57);
    const DenseMatrix probs = random_probs(6, 4, rng);
    DenseMatrix permuted(6, 4);
    const std::size_t perm[4] = {2, 0, 3, 1};
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            permuted(i, j) = probs(i, perm[j]);
        }
    }
    CHECK(kl_uniform_loss(permuted).value ==
          doctest::Approx(kl_uniform_loss(probs).value).epsilon(1e-12));
}

TEST_CASE("kl uniform loss rejects fewer than two columns") {
    CHECK_THROWS_AS(kl_uniform_loss(DenseMatrix(3, 1, 1.0)), DomainError);
}

TEST_CASE("kl uniform gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(700 + seed);
        const DenseMatrix probs = random_probs(4, 6, rng);
        const LossOutput out = kl_uniform_loss(probs);
        const auto f = [&](std::span<const double> data) {
            DenseMatrix p = probs;
            std::copy(data.begin(), data.end(), p.data.begin());
            return kl_uniform_loss(p).value;
        };
        CHECK(gradcheck::max_grad_rel_err(f, probs.data, out.grad.data) <= gradcheck::kRelTol);
    }
}

TEST_CASE("info nce analytic values for the orthogonal-prototype setup") {
    DenseMatrix protos(2, 2);
    protos(0, 0) = 1.0;  // class 0 prototype [1, 0]
    protos(1, 1) = 1.0;  // class 1 prototype [0, 1]
    DenseMatrix features(1, 2);
    features(0, 0) = 1.0;  // equals its own class prototype
    const std::vector<int> labels{0};

    InfoNceOptions opts;
    opts.tau = 1.0;
    opts.include_positive_in_denominator = false;
    CHECK(info_nce_loss(features, labels, protos, opts).value ==
          doctest::Approx(-1.0).epsilon(1e-12));

    opts.include_positive_in_denominator = true;
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(info_nce_loss(features, labels, protos, opts).value ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.313261687).epsilon(1e-8));
}

TEST_CASE("info nce symmetric case gives ln 2 for K=3 exclusive") {
    // A feature with equal cosine to all three prototypes: prototypes are
    // the standard basis vectors, the feature is all-ones.
    DenseMatrix protos(3, 3);
    protos(0, 0) = 1.0;
    protos(1, 1) = 1.0;
    protos(2, 2) = 1.0;
    DenseMatrix features(1, 3, 1.0);
    InfoNceOptions opts;
    opts.tau = 0.37;  // any tau: numerator equals each denominator term
    opts.include_positive_in_denominator = false;
    for (int y = 0; y < 3; ++y) {
        const std::vector<int> labels{y};
        CHECK(info_nce_loss(features, labels, protos, opts).value ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("info nce exclusive form can be negative") {
    DenseMatrix protos(2, 2);
    protos(0, 0) = 1.0;
    protos(1, 0) = -1.0;  // antipodal prototype
    DenseMatrix features(1, 2);
    features(0, 0) = 1.0;
    InfoNceOptions opts;
    opts.tau = 1.0;
    const double v = info_nce_loss(features, std::vector<int>{0}, protos, opts).value;
    CHECK(v == doctest::Approx(-2.0).epsilon(1e-12));  // -(1 - (-1))/tau
}

TEST_CASE("info nce requires at least two classes") {
    const DenseMatrix protos(1, 2, 1.0);
    const DenseMatrix features(1, 2, 1.0);
    InfoNceOptions opts;
    CHECK_THROWS_AS(info_nce_loss(features, std::vector<int>{0}, protos, opts), DomainError);
}

TEST_CASE("info nce is invariant under common positive rescaling") {
    Rng rng(61);
    const DenseMatrix features = random_matrix(5, 8, rng);
    const DenseMatrix protos = random_matrix(4, 8, rng);
    const std::vector<int> labels = random_labels(5, 4, rng);
    InfoNceOptions opts;
    opts.tau = 0.1;
    const double base = info_nce_loss(features, labels, protos, opts).value;
    for (double s : {0.001, 7.5, 4000.0}) {
        DenseMatrix fs = features;
        DenseMatrix ps = protos;
        for (double& v : fs.data) {
            v *= s;
        }
        for (double& v : ps.data) {
            v *= s;
        }
        CHECK(info_nce_loss(fs, labels, ps, opts).value == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("info nce zero-norm feature contributes zero gradient") {
    DenseMatrix protos(2, 2);
    protos(0, 0) = 1.0;
    protos(1, 1) = 1.0;
    DenseMatrix features(1, 2);  // zero vector: all similarities 0
    InfoNceOptions opts;
    opts.tau = 1.0;
    const LossOutput out = info_nce_loss(features, std::vector<int>{0}, protos, opts);
    CHECK(out.value == doctest::Approx(0.0).epsilon(1e-12));  // -log(e^0 / e^0)
    for (double g : out.grad.data) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("info nce gradients match finite differences in both variants") {
    for (int inclusive = 0; inclusive < 2; ++inclusive) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(800 + seed);
            const DenseMatrix features = random_matrix(4, 6, rng);
            const DenseMatrix protos = random_matrix(3, 6, rng);
            const std::vector<int> labels = random_labels(4, 3, rng);
            InfoNceOptions opts;
            opts.tau = 0.5;
            opts.include_positive_in_denominator = (inclusive == 1);
            const LossOutput out = info_nce_loss(features, labels, protos, opts);
            const auto f = [&](std::span<const double> data) {
                DenseMatrix fv = features;
                std::copy(data.begin(), data.end(), fv.data.begin());
                return info_nce_loss(fv, labels, protos, opts).value;
            };
            CHECK(gradcheck::max_grad_rel_err(f, features.data, out.grad.data) <=
                  gradcheck::kRelTol);
        }
    }
}

TEST_CASE("combined loss with zero weights is bit-equivalent to cross entropy") {
    Rng rng(67);
    const MlpSpec cls_spec{{8, 6, 4}, OutputHead::softmax};
    const MlpParams classifier = init_params(cls_spec, rng);
    const DenseMatrix features = random_matrix(5, 8, rng);
    const std::vector<int> labels = random_labels(5, 4, rng);

    LocalLossWeights weights;
    weights.mu = 0.0;
    weights.delta = 0.0;
    // Amplifier and prototypes deliberately empty: zero weights must skip them.
    const LocalLossBreakdown out =
        combined_local_loss(features, labels, classifier, MlpParams{}, DenseMatrix{}, weights);

    ForwardCache cache;
    const DenseMatrix probs = forward_mlp(classifier, features, &cache);
    const LossOutput ce = cross_entropy_loss(probs, labels);
    CHECK(out.total == ce.value);
    CHECK(out.ce == ce.value);
    CHECK(out.kl == 0.0);
    CHECK(out.nce == 0.0);
    const BackwardResult back = backward_mlp(classifier, cache, ce.grad);
    CHECK(out.feature_grad == back.input_gradient);
}

TEST_CASE("combined loss with uniform amplifier output adds an exactly-zero kl term") {
    Rng rng(71);
    const MlpSpec cls_spec{{8, 6, 4}, OutputHead::softmax};
    const MlpParams classifier = init_params(cls_spec, rng);
    // Zero amplifier parameters: logits all zero, softmax uniform over N=4.
    const MlpParams amplifier = zero_params(MlpSpec{{8, 5, 4}, OutputHead::softmax});
    const DenseMatrix features = random_matrix(5, 8, rng);
    const std::vector<int> labels = random_labels(5, 4, rng);

    LocalLossWeights weights;
    weights.mu = 1.0;
    weights.delta = 0.0;
    const LocalLossBreakdown out =
        combined_local_loss(features, labels, classifier, amplifier, DenseMatrix{}, weights);
    const double ce =
        cross_entropy_loss(forward_mlp(classifier, features), labels).value;
    CHECK(out.kl == 0.0);
    CHECK(out.total == ce);
}

TEST_CASE("combined loss equals the weighted component sum") {
    Rng rng(73);
    const MlpSpec cls_spec{{8, 6, 4}, OutputHead::softmax};
    const MlpParams classifier = init_params(cls_spec, rng);
    const MlpParams amplifier = init_params(MlpSpec{{8, 5, 3}, OutputHead::softmax}, rng);
    const DenseMatrix protos = random_matrix(4, 8, rng);
    const DenseMatrix features = random_matrix(6, 8, rng);
    const std::vector<int> labels = random_labels(6, 4, rng);

    LocalLossWeights weights;
    weights.mu = 0.1;
    weights.delta = 0.1;
    weights.nce.tau = 0.5;
    const LocalLossBreakdown out =
        combined_local_loss(features, labels, classifier, amplifier, protos, weights);

    const double ce = cross_entropy_loss(forward_mlp(classifier, features), labels).value;
    const double kl = kl_uniform_loss(forward_mlp(amplifier, features)).value;
    const double nce = info_nce_loss(features, labels, protos, weights.nce).value;
    CHECK(out.total == doctest::Approx(ce + 0.1 * kl + 0.1 * nce).epsilon(1e-12));
    CHECK(out.ce == doctest::Approx(ce).epsilon(1e-12));
    CHECK(out.kl == doctest::Approx(kl).epsilon(1e-12));
    CHECK(out.nce == doctest::Approx(nce).epsilon(1e-12));
}

TEST_CASE("combined loss feature gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(900 + seed);
        const MlpSpec cls_spec{{6, 5, 3}, OutputHead::softmax};
        const MlpParams classifier = init_params(cls_spec, rng);
        const MlpParams amplifier = init_params(MlpSpec{{6, 4, 3}, OutputHead::softmax}, rng);
        const DenseMatrix protos = random_matrix(3, 6, rng);
        const DenseMatrix features = random_matrix(4, 6, rng);
        const std::vector<int> labels = random_labels(4, 3, rng);

        LocalLossWeights weights;
        weights.mu = 0.3;
        weights.delta = 0.2;
        weights.nce.tau = 0.5;
        const LocalLossBreakdown out =
            combined_local_loss(features, labels, classifier, amplifier, protos, weights);
        const auto f = [&](std::span<const double> data) {
            DenseMatrix fv = features;
            std::copy(data.begin(), data.end(), fv.data.begin());
            return combined_local_loss(fv, labels, classifier, amplifier, protos, weights).total;
        };
        CHECK(gradcheck::max_grad_rel_err(f, features.data, out.feature_grad.data) <=
              gradcheck::kRelTol);
    }
}

TEST_CASE("combined loss classifier gradient matches finite differences") {
    Rng rng(79);
    const MlpSpec cls_spec{{6, 5, 3}, OutputHead::softmax};
    const MlpParams classifier = init_params(cls_spec, rng);
    const DenseMatrix features = random_matrix(4, 6, rng);
    const std::vector<int> labels = random_labels(4, 3, rng);
    LocalLossWeights weights;
    weights.mu = 0.0;
    weights.delta = 0.0;
    const LocalLossBreakdown out =
        combined_local_loss(features, labels, classifier, MlpParams{}, DenseMatrix{}, weights);

    const std::vector<double> flat = flatten_params(classifier);
    const std::vector<double> analytic = flatten_params(out.classifier_grad);
    MlpParams probe = classifier;
    const auto f = [&](std::span<const double> theta) {
        unflatten_params(probe, theta);
        return combined_local_loss(features, labels, probe, MlpParams{}, DenseMatrix{}, weights)
            .total;
    };
    CHECK(gradcheck::max_grad_rel_err(f, flat, analytic) <= gradcheck::kRelTol);
}
