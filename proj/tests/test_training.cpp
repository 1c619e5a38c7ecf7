#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "moodseq/training.hpp"

using namespace moodseq;
using moodseq::testing::gradcheck;

namespace {

// minimal linear model over a (B,1,F) audio batch
struct ToyModel : IModel<double> {
  Dense<double> dense;
  ParamList<double> params;

  ToyModel(std::size_t in, std::size_t out, std::mt19937_64& rng) : dense(in, out, rng) {
    dense.collect(params, "dense");
  }
  Tensor<double> forward(const Batch<double>& batch, bool, std::mt19937_64&) override {
    return dense.forward(slice_time(batch.audio, 0));
  }
  ParamList<double>& parameters() override { return params; }
  std::size_t num_classes() const override { return dense.out; }
};

Dataset<double> blobs(std::size_t per_class, std::mt19937_64& rng) {
  Dataset<double> ds;
  ds.audio_steps = 1;
  ds.audio_feats = 4;
  const double centers[3][4] = {{3, 0, 0, -3}, {0, 3, -3, 0}, {-3, -3, 3, 3}};
  std::normal_distribution<double> noise{0.0, 0.3};
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      typename Dataset<double>::Item it;
      for (int f = 0; f < 4; ++f) it.audio.push_back(centers[k][f] + noise(rng));
      it.label = k;
      ds.items.push_back(std::move(it));
    }
  return ds;
}

}  // namespace

TEST_CASE("cross entropy of uniform logits is ln K") {
  Tensor<double> logits({2, 5}, std::vector<double>(10, 0.7));
  CHECK(cross_entropy(logits, {0, 4}).item() == doctest::Approx(std::log(5.0)));
}

TEST_CASE("cross entropy of a confident correct prediction is near zero") {
  Tensor<double> logits({1, 3}, {50, 0, 0});
  CHECK(cross_entropy(logits, {0}).item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("cross entropy validates labels and shapes") {
  Tensor<double> logits({1, 3}, {0, 0, 0});
  CHECK_THROWS_WITH_AS(cross_entropy(logits, {3}), doctest::Contains("out of range"),
                       UsageError);
  CHECK_THROWS_AS(cross_entropy(logits, {0, 1}), UsageError);
  Tensor<double> bad({3}, {0, 0, 0});
  CHECK_THROWS_AS(cross_entropy(bad, {0}), DimensionError);
}

TEST_CASE("cross entropy is stable for extreme logits") {
  Tensor<double> logits({1, 3}, {1000, -1000, 0});
  auto v = cross_entropy(logits, {1}).item();
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(2000.0).epsilon(1e-6));
}

TEST_CASE("cross entropy gradient matches finite differences") {
  std::mt19937_64 rng(1);
  for (int seed = 0; seed < 10; ++seed) {
    auto logits = Tensor<double>::uniform({4, 5}, -3, 3, rng, true);
    std::vector<int> labels = {0, 2, 4, 1};
    auto res = gradcheck<double>([&] { return cross_entropy(logits, labels); }, {logits});
    CHECK(res.ok(1e-4));
  }
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  Tensor<double> w({3}, {1.0, -2.0, 0.5}, true);
  ParamList<double> params = {{"w", w, true}};
  Adam<double> adam(params);
  sum_all(mul(w, Tensor<double>::zeros({3}))).backward();
  REQUIRE(w.has_grad());
  adam.step();
  CHECK(w.data()[0] == 1.0);
  CHECK(w.data()[1] == -2.0);
  CHECK(w.data()[2] == 0.5);
}

TEST_CASE("adam: first step moves each coordinate by ~lr in the sign direction") {
  Tensor<double> w({2}, {0.0, 0.0}, true);
  ParamList<double> params = {{"w", w, true}};
  Adam<double> adam(params, 1e-3);
  Tensor<double> g({2}, {4.0, -0.25});
  sum_all(mul(w, g)).backward();
  adam.step();
  CHECK(w.data()[0] == doctest::Approx(-1e-3).epsilon(1e-3));
  CHECK(w.data()[1] == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("adam: missing gradient names the parameter") {
  Tensor<double> w({2}, {0.0, 0.0}, true);
  ParamList<double> params = {{"head.W", w, true}};
  Adam<double> adam(params);
  CHECK_THROWS_WITH_AS(adam.step(), doctest::Contains("head.W"), UsageError);
}

TEST_CASE("adam minimizes a quadratic") {
  Tensor<double> w({1}, {-4.0}, true);
  ParamList<double> params = {{"w", w, true}};
  Adam<double> adam(params, 0.1);
  for (int i = 0; i < 200; ++i) {
    zero_grads(params);
    auto diff = sub(w, Tensor<double>::full({1}, 3.0));
    sum_all(mul(diff, diff)).backward();
    adam.step();
  }
  CHECK(std::abs(w.data()[0] - 3.0) < 0.05);
}

TEST_CASE("global norm clipping caps the gradient norm and keeps direction") {
  Tensor<double> a({2}, {0.0, 0.0}, true);
  Tensor<double> b({1}, {0.0}, true);
  ParamList<double> params = {{"a", a, true}, {"b", b, true}};
  add(sum_all(mul(a, Tensor<double>({2}, {3.0, 4.0}))),
      sum_all(mul(b, Tensor<double>({1}, {12.0}))))
      .backward();
  clip_global_norm(params, 6.5);  // norm is 13
  CHECK(a.grad()[0] == doctest::Approx(1.5));
  CHECK(a.grad()[1] == doctest::Approx(2.0));
  CHECK(b.grad()[0] == doctest::Approx(6.0));
  // already under the cap: untouched
  clip_global_norm(params, 100.0);
  CHECK(b.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("fit solves a separable problem and reports a sane history") {
  std::mt19937_64 rng(7);
  auto train = blobs(20, rng);
  auto val = blobs(6, rng);
  ToyModel model(4, 3, rng);
  FitOptions opts;
  opts.max_epochs = 60;
  opts.batch_size = 16;
  opts.learning_rate = 0.05;
  opts.seed = 42;
  auto hist = fit<double>(model, train, val, opts);
  REQUIRE(!hist.epochs.empty());
  CHECK(hist.epochs.back().train_acc > 0.95);
  // best epoch is the argmin of validation loss
  int best = 0;
  for (std::size_t i = 1; i < hist.epochs.size(); ++i)
    if (hist.epochs[i].val_loss < hist.epochs[best].val_loss) best = int(i);
  CHECK(hist.best_epoch == best);
  // early stopping: never more than patience epochs past the best
  CHECK(int(hist.epochs.size()) - 1 - hist.best_epoch <= opts.early.patience);
}

TEST_CASE("fit restores the best weights") {
  std::mt19937_64 rng(8);
  auto train = blobs(20, rng);
  auto val = blobs(6, rng);
  ToyModel model(4, 3, rng);
  FitOptions opts;
  opts.max_epochs = 40;
  opts.batch_size = 16;
  opts.learning_rate = 0.05;
  opts.seed = 9;
  auto hist = fit<double>(model, train, val, opts);
  // re-evaluating with the restored weights must reproduce the best val loss
  std::mt19937_64 eval_rng(0);
  double loss_sum = 0;
  for (std::size_t start = 0; start < val.size(); start += opts.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(val.size(), start + opts.batch_size); ++i)
      idx.push_back(i);
    auto batch = val.make_batch(idx);
    loss_sum +=
        cross_entropy(model.forward(batch, false, eval_rng), batch.labels).item() * idx.size();
  }
  CHECK(loss_sum / val.size() ==
        doctest::Approx(hist.epochs[hist.best_epoch].val_loss).epsilon(1e-9));
}

TEST_CASE("fit is bitwise deterministic for a fixed seed") {
  auto run = [](std::uint64_t model_seed) {
    std::mt19937_64 rng(model_seed);
    auto train = blobs(15, rng);
    auto val = blobs(5, rng);
    ToyModel model(4, 3, rng);
    FitOptions opts;
    opts.max_epochs = 10;
    opts.batch_size = 8;
    opts.learning_rate = 0.05;
    opts.seed = 3;
    auto hist = fit<double>(model, train, val, opts);
    auto w = model.params[0].tensor.data();
    return std::make_pair(history_csv(hist), std::vector<double>(w.begin(), w.end()));
  };
  auto [csv1, w1] = run(21);
  auto [csv2, w2] = run(21);
  CHECK(csv1 == csv2);
  CHECK(std::equal(w1.begin(), w1.end(), w2.begin()));
}

TEST_CASE("fit aborts with a divergence error on non-finite loss") {
  std::mt19937_64 rng(10);
  auto train = blobs(5, rng);
  auto val = blobs(2, rng);
  ToyModel model(4, 3, rng);
  model.params[0].tensor.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  FitOptions opts;
  opts.max_epochs = 2;
  CHECK_THROWS_AS(fit<double>(model, train, val, opts), DivergenceError);
}

TEST_CASE("history csv has the expected header and row count") {
  TrainingHistory h;
  h.epochs.push_back({0, 1.5, 0.5, 1.2, 0.6});
  h.epochs.push_back({1, 1.1, 0.7, 1.0, 0.8});
  auto csv = history_csv(h);
  CHECK(csv.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("the per-epoch dataset hook runs once per epoch") {
  std::mt19937_64 rng(11);
  auto train = blobs(5, rng);
  auto val = blobs(2, rng);
  ToyModel model(4, 3, rng);
  FitOptions opts;
  opts.max_epochs = 4;
  opts.early.patience = 100;
  int calls = 0;
  fit<double>(model, train, val, opts,
              [&](Dataset<double>&, std::mt19937_64&) { ++calls; });
  CHECK(calls == 4);
}
