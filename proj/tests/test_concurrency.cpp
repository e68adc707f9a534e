#include <catch2/catch_amalgamated.hpp>

#include <thread>
#include <vector>

#include "mlh/dataio.hpp"
#include "mlh/losses.hpp"
#include "mlh/trainer.hpp"
#include "support/moh_reference.hpp"

using namespace mlh;
using mlh_test::random_tensor;

TEST_CASE("distinct graphs run concurrently on distinct threads") {
  // Serial reference gradients for four independent problems.
  auto make_problem = [](std::uint64_t seed) {
    Rng rng(seed);
    return std::pair{random_tensor(rng, 4, 6), random_tensor(rng, 6, 8)};
  };
  auto run_problem = [](const Tensor& feats, const Tensor& weights) {
    auto w = parameter(weights);
    auto u = matmul(constant(feats), w);
    auto loss = mean_all(hadamard(softplus(u), row_l2_normalize(u)));
    backward(loss);
    return w->grad;
  };

  std::vector<Tensor> serial(4);
  for (int i = 0; i < 4; ++i) {
    auto [f, w] = make_problem(100 + i);
    serial[i] = run_problem(f, w);
  }

  std::vector<Tensor> parallel(4);
  std::vector<std::thread> workers;
  for (int i = 0; i < 4; ++i)
    workers.emplace_back([&, i]() {
      auto [f, w] = make_problem(100 + i);
      parallel[i] = run_problem(f, w);
    });
  for (auto& t : workers) t.join();

  for (int i = 0; i < 4; ++i) REQUIRE(serial[i] == parallel[i]);
}

TEST_CASE("a frozen model is safely shared across encoding threads") {
  FeatureDataset data = synth_clusters(3, 10, 12, 0.2, 8);
  Codebook cb = generate_centers(HashConfig{8, 3}, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.moh.expert_count = 4;
  cfg.moh.activation_ratio = 0.5;
  TrainResult res = train(data, cb, cfg);

  Tensor serial_c = encode(res.model, data.features, Branch::Center);
  Tensor serial_p = encode(res.model, data.features, Branch::Pairwise);

  std::vector<Tensor> outs(6);
  std::vector<std::thread> workers;
  for (int i = 0; i < 6; ++i)
    workers.emplace_back([&, i]() {
      Branch b = i % 2 == 0 ? Branch::Center : Branch::Pairwise;
      outs[i] = encode(res.model, data.features, b);
    });
  for (auto& t : workers) t.join();

  for (int i = 0; i < 6; ++i)
    REQUIRE(outs[i] == (i % 2 == 0 ? serial_c : serial_p));
}
