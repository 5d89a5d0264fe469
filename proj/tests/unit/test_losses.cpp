// Loss semantics: trivial values, independent oracles, endpoint identities,
// and the documented gradient formula of the pretraining objective.

#include "doctest.h"
#include "sgt/losses.hpp"
#include "sgt/ops.hpp"
#include "sgt/rng.hpp"

#include <cmath>
#include <vector>

using sgt::Dissimilarity;
using sgt::Tensor;
using Td = sgt::TensorT<double>;

namespace {

Td random_maps(sgt::Rng& rng, sgt::Shape shape, double lo = 0.0, double hi = 1.0) {
  Td t = Td::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("cross_entropy trivial values") {
  CHECK(sgt::cross_entropy(Tensor::from_list({1, 2}, {0, 0}), {0}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(sgt::cross_entropy(Tensor::from_list({1, 2}, {0, 0}), {1}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(sgt::cross_entropy(Tensor::from_list({1, 2}, {20, -20}), {0}).item() < 1e-6);
  CHECK_THROWS_AS(sgt::cross_entropy(Tensor::zeros({1, 2}), {2}), std::invalid_argument);
  CHECK_THROWS_AS(sgt::cross_entropy(Tensor::zeros({2, 2}), {0}), std::invalid_argument);
}

TEST_CASE("cross_entropy matches a per-sample -log-softmax oracle") {
  sgt::Rng rng(31);
  Td logits = random_maps(rng, {5, 2}, -3.0, 3.0);
  std::vector<int> labels = {0, 1, 1, 0, 1};
  double acc = 0.0;
  for (int n = 0; n < 5; ++n) {
    const double a = logits.at({n, 0}), b = logits.at({n, 1});
    const double z = labels[static_cast<std::size_t>(n)] == 0 ? a : b;
    acc += std::log(std::exp(a) + std::exp(b)) - z;
  }
  CHECK(sgt::cross_entropy(logits, labels).item() == doctest::Approx(acc / 5.0).epsilon(1e-6));
}

TEST_CASE("salience_dissimilarity values") {
  sgt::Rng rng(37);
  Td p = random_maps(rng, {2, 1, 3, 3});
  CHECK(sgt::salience_dissimilarity(p, p, Dissimilarity::mse).item() == 0.0);
  CHECK(sgt::salience_dissimilarity(p, p, Dissimilarity::l1).item() == 0.0);

  Td zeros = Td::zeros({2, 1, 2, 2});
  Td ones = Td::full({2, 1, 2, 2}, 1.0);
  CHECK(sgt::salience_dissimilarity(zeros, ones, Dissimilarity::mse).item() ==
        doctest::Approx(1.0));
  CHECK(sgt::salience_dissimilarity(zeros, ones, Dissimilarity::l1).item() ==
        doctest::Approx(1.0));

  // Loop oracle.
  Td a = random_maps(rng, {3, 1, 4, 4});
  Td b = random_maps(rng, {3, 1, 4, 4});
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a.at_flat(i) - b.at_flat(i);
    acc += d * d;
  }
  CHECK(sgt::salience_dissimilarity(a, b, Dissimilarity::mse).item() ==
        doctest::Approx(acc / static_cast<double>(a.size())).epsilon(1e-7));

  CHECK_THROWS_AS(sgt::salience_dissimilarity(a, Td::zeros({3, 1, 2, 2}), Dissimilarity::mse),
                  std::invalid_argument);
}

TEST_CASE("joint_loss endpoints are exact and interior is affine") {
  sgt::Rng rng(41);
  Td logits = random_maps(rng, {3, 2}, -2.0, 2.0);
  std::vector<int> labels = {0, 1, 1};
  Td ms = random_maps(rng, {3, 1, 2, 2});
  Td hs = random_maps(rng, {3, 1, 2, 2});

  const double ce = sgt::cross_entropy(logits, labels).item();
  const double ds = sgt::salience_dissimilarity(ms, hs, Dissimilarity::mse).item();

  // Endpoints: bit-exact equality.
  CHECK(sgt::joint_loss(logits, labels, ms, hs, 1.0).item() == ce);
  CHECK(sgt::joint_loss(logits, labels, ms, hs, 0.0).item() == ds);

  // Interior: alpha-affine combination.
  CHECK(sgt::joint_loss(logits, labels, ms, hs, 0.3).item() ==
        doctest::Approx(0.3 * ce + 0.7 * ds).epsilon(1e-12));

  CHECK_THROWS_AS(sgt::joint_loss(logits, labels, ms, hs, 1.5), std::invalid_argument);
}

TEST_CASE("joint_loss alpha=0.5 with component values (0.6, 0.2) gives 0.4") {
  // Craft logits so the cross-entropy term is exactly 0.6: with logits (0,t)
  // and label 0, CE = log(1 + e^t); solve for t.
  const double t = std::log(std::exp(0.6) - 1.0);
  Td logits = Td::from_list({1, 2}, {0.0, t});
  // And maps whose MSE is exactly 0.2: constant difference sqrt(0.2).
  Td ms = Td::full({1, 1, 2, 2}, std::sqrt(0.2));
  Td hs = Td::zeros({1, 1, 2, 2});
  CHECK(sgt::joint_loss(logits, {0}, ms, hs, 0.5).item() == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("saliency_pretrain_loss conventions") {
  sgt::Rng rng(43);
  Td p = random_maps(rng, {4, 1, 3, 3});
  CHECK(sgt::saliency_pretrain_loss(p, p).item() == 0.0);

  // Single 2x2 map pair differing by 0.5 everywhere: per-pixel-mean gives 0.25.
  Td a = Td::full({1, 1, 2, 2}, 0.75);
  Td b = Td::full({1, 1, 2, 2}, 0.25);
  CHECK(sgt::saliency_pretrain_loss(a, b).item() == doctest::Approx(0.25));
  // Raw variant: sum of squared norms / K = 0.25 * 4 pixels.
  CHECK(sgt::saliency_pretrain_loss(a, b, false).item() == doctest::Approx(1.0));

  // Identity with the mse dissimilarity for arbitrary inputs.
  Td h = random_maps(rng, {4, 1, 3, 3});
  CHECK(sgt::saliency_pretrain_loss(p, h).item() ==
        doctest::Approx(sgt::salience_dissimilarity(p, h, Dissimilarity::mse).item())
            .epsilon(1e-7));

  CHECK_THROWS_AS(sgt::saliency_pretrain_loss(p, Td::zeros({4, 1, 2, 2})),
                  std::invalid_argument);
}

TEST_CASE("pretrain gradient equals 2(p-h)/(K*P)") {
  sgt::Rng rng(47);
  Td p = random_maps(rng, {2, 1, 3, 3});
  p.set_requires_grad(true);
  Td h = random_maps(rng, {2, 1, 3, 3});
  sgt::TapeT<double> tape;
  {
    sgt::TapeScopeT<double> scope(tape);
    sgt::backward(sgt::saliency_pretrain_loss(p, h));
  }
  const double kp = static_cast<double>(p.size());  // K * P
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double expect = 2.0 * (p.at_flat(i) - h.at_flat(i)) / kp;
    CHECK(p.grad()[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("losses are nonnegative on valid inputs") {
  sgt::Rng rng(53);
  for (int i = 0; i < 5; ++i) {
    Td logits = random_maps(rng, {4, 2}, -4.0, 4.0);
    Td ms = random_maps(rng, {4, 1, 2, 2});
    Td hs = random_maps(rng, {4, 1, 2, 2});
    std::vector<int> labels = {0, 1, 0, 1};
    CHECK(sgt::cross_entropy(logits, labels).item() >= 0.0);
    CHECK(sgt::salience_dissimilarity(ms, hs, Dissimilarity::l1).item() >= 0.0);
    CHECK(sgt::joint_loss(logits, labels, ms, hs, 0.5).item() >= 0.0);
    CHECK(sgt::saliency_pretrain_loss(ms, hs).item() >= 0.0);
  }
}

TEST_CASE("LossConfig validation and parsing") {
  sgt::LossConfig c;
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(sgt::dissimilarity_from_string("mse") == Dissimilarity::mse);
  CHECK(sgt::dissimilarity_from_string("l1") == Dissimilarity::l1);
  CHECK_THROWS_AS(sgt::dissimilarity_from_string("cosine"), std::invalid_argument);
}
