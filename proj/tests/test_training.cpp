#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mdl/ad/optim.hpp"
#include "mdl/eval/metrics.hpp"
#include "mdl/model/checkpoint.hpp"
#include "mdl/train/trainer.hpp"
#include "mdl/train/window.hpp"

using namespace mdl;
using namespace mdl::train;
namespace fs = std::filesystem;

namespace {

data::PairSequence random_song(std::mt19937_64& rng, std::size_t frames, std::string id) {
  data::PairSequence s;
  s.song_id = std::move(id);
  s.genre = "g";
  s.features.values = RowMatrix<float>(frames, audio::kFeatureDim);
  for (auto& v : s.features.values.data()) v = static_cast<float>(0.1 + 0.8 * ad::uniform01(rng));
  s.poses.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (auto& q : s.poses[t].q) q = static_cast<float>(3.0 * ad::uniform01(rng));
    s.poses[t].timestamp = audio::frame_timestamp(t);
  }
  return s;
}

model::ModelConfig mini(model::Variant v, std::size_t window) {
  model::ModelConfig c;
  c.variant = v;
  c.layers = 2;
  c.embed_dim = 16;
  c.heads = 4;
  c.ff_dim = 32;
  c.dropout = 0.0;
  c.window = window;
  return c;
}

// Small corpus of synthetic songs, built once.
const TrainData& synth_data() {
  static const TrainData data = [] {
    std::vector<data::PairSequence> train, val;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto s = data::synth_pair(100 + i, 3.0, i % 2);
      auto p = data::pair_sequences(audio::extract_features(s.audio), s.poses, "s" + std::to_string(i), "g");
      (i < 2 ? val : train).push_back(std::move(p));
    }
    return prepare_data(std::move(train), std::move(val));
  }();
  return data;
}

}  // namespace

TEST_CASE("window at t = 0 and t >= K - 1") {
  std::mt19937_64 rng(1);
  const auto s = random_song(rng, 30, "a");
  const auto w0 = make_window(s.features, s.poses, 0, 8);
  CHECK(w0.valid_len == 1);
  CHECK(w0.start == 0);
  for (std::size_t i = 1; i < 8; ++i) {
    for (std::size_t d = 0; d < audio::kFeatureDim; ++d) CHECK(w0.audio(i, d) == 0.0f);
  }
  const auto w = make_window(s.features, s.poses, 20, 8);
  CHECK(w.valid_len == 8);
  CHECK(w.start == 13);
}

TEST_CASE("window contents agree with direct indexing; shift identity") {
  std::mt19937_64 rng(2);
  std::vector<data::PairSequence> corpus{random_song(rng, 15, "a"), random_song(rng, 40, "b")};
  for (int trial = 0; trial < 200; ++trial) {
    const auto w = sample_window(corpus, 10, rng);
    const auto& s = corpus[w.song];
    const std::size_t t = w.start + w.valid_len - 1;
    CHECK(w.valid_len == std::min<std::size_t>(t + 1, 10));
    for (std::size_t i = 0; i < w.valid_len; ++i) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(w.target(i, j) == static_cast<float>(s.poses[w.start + i].q[j]));
      CHECK(w.audio(i, 7) == s.features.values(w.start + i, 7));
    }
    for (std::size_t j = 0; j < 4; ++j) CHECK(w.shifted(0, j) == 0.0f);
    for (std::size_t i = 0; i + 1 < w.valid_len; ++i) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(w.shifted(i + 1, j) == w.target(i, j));
    }
  }
}

TEST_CASE("input positions: audio start + i + 1, pose start token 0") {
  std::mt19937_64 rng(3);
  const auto s = random_song(rng, 30, "a");
  const std::vector<TrainingWindow> batch{make_window(s.features, s.poses, 12, 4)};
  const auto in = make_input<double>(batch);
  CHECK(in.audio_positions == std::vector<std::size_t>{10, 11, 12, 13});
  CHECK(in.pose_positions == std::vector<std::size_t>{0, 10, 11, 12});
  CHECK(in.audio.shape() == ad::Shape{1, 4, audio::kFeatureDim});
}

TEST_CASE("l2 loss: zero, constant offset, masking") {
  std::mt19937_64 rng(4);
  ad::Tensor<double> target({2, 5, 4});
  for (auto& v : target.data()) v = ad::uniform01(rng);
  CHECK(l2_loss(target, target, {5, 3}).item() == 0.0);

  auto shifted = target.clone();
  for (auto& v : shifted.data()) v += 0.1;
  CHECK(l2_loss(shifted, target, {5, 3}).item() == doctest::Approx(0.01).epsilon(1e-12));

  const double base = l2_loss(shifted, target, {1, 2}).item();
  auto junk = target.clone();
  for (std::size_t i = 4; i < 20; ++i) junk[i] = 100.0;       // row 0, slots 1..4
  for (std::size_t i = 28; i < 40; ++i) junk[i] = -50.0;      // row 1, slots 2..4
  auto shifted_junk = shifted.clone();
  for (std::size_t i = 4; i < 20; ++i) shifted_junk[i] = 7.0;
  CHECK(l2_loss(shifted_junk, junk, {1, 2}).item() == base);

  CHECK_THROWS_AS(l2_loss(shifted, target, {0, 2}), InvariantError);
  CHECK_THROWS_AS(l2_loss(shifted, target, {6, 2}), InvariantError);
}

TEST_CASE("loss on a fixed synthetic batch strictly decreases over 50 steps") {
  const auto& data = synth_data();
  for (auto v : {model::Variant::kTransformer, model::Variant::kMamba}) {
    auto cfg = mini(v, v == model::Variant::kMamba ? 24 : 12);
    cfg.position_vocab = data.longest_song + 1;
    auto m = model::make_model<float>(cfg, 0);
    std::mt19937_64 rng(5);
    std::vector<TrainingWindow> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(sample_window(data.train, cfg.window, rng));
    const auto in = make_input<float>(batch);
    const auto target = make_targets<float>(batch);
    auto params = m->parameters().tensors();
    for (auto& p : params) p.set_requires_grad(true);
    ad::Adam<float> opt(params, {.lr = 1e-4});
    double previous = INFINITY;
    for (int step = 0; step < 50; ++step) {
      const auto loss = l2_loss(m->forward(in, false, nullptr), target, in.valid_len);
      const double value = loss.item();
      CHECK(value < previous);
      previous = value;
      ad::backward(loss);
      opt.step();
      opt.zero_grad();
    }
  }
}

TEST_CASE("equal seeds give identical loss curves; resume continues the same curve") {
  const auto& data = synth_data();
  TrainConfig cfg;
  cfg.updates = 12;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.validate_every = 6;
  cfg.seed = 9;
  cfg.model = mini(model::Variant::kTransformer, 8);
  cfg.model.dropout = 0.1;
  cfg.manifest = "unused.json";

  const auto a = train::train(cfg, data, {});
  const auto b = train::train(cfg, data, {});
  CHECK(a.losses.size() == 12);
  CHECK(a.losses == b.losses);
  cfg.seed = 10;
  CHECK(train::train(cfg, data, {}).losses != a.losses);
  cfg.seed = 9;

  const auto dir = fs::temp_directory_path() / "mdl_test_resume";
  fs::remove_all(dir);
  auto half = cfg;
  half.updates = 6;
  const auto first = train::train(half, data, {dir, false, nullptr});
  const auto rest = train::train(cfg, data, {dir, true, nullptr});
  CHECK(first.steps == 6);
  CHECK(rest.steps == 12);
  std::vector<double> joined = first.losses;
  joined.insert(joined.end(), rest.losses.begin(), rest.losses.end());
  CHECK(joined == a.losses);

  // metrics.csv: header plus one row per validation point.
  std::ifstream csv(dir / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "step,train_loss,val_AJE,val_FID");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 2);
  CHECK(fs::exists(dir / "best.mdlc"));
  CHECK(fs::exists(dir / "latest.mdlc"));

  // A saved checkpoint reproduces the validation AJE.
  const auto ck = model::load_checkpoint(dir / "latest.mdlc");
  const auto report = eval::evaluate_split(*ck.model, data.validation);
  const auto again = eval::evaluate_split(*model::load_checkpoint(dir / "latest.mdlc").model, data.validation);
  CHECK(report.aje_mean == again.aje_mean);
  CHECK(ck.normalizer == data.normalizer);
  fs::remove_all(dir);
}

TEST_CASE("normalizer is fitted on training songs only") {
  std::mt19937_64 rng(6);
  auto train_song = random_song(rng, 20, "t");
  auto val_song = random_song(rng, 20, "v");
  for (auto& v : val_song.features.values.data()) v += 10.0f;
  const auto raw_train = train_song.features;
  const auto d = prepare_data({train_song}, {val_song});
  CHECK(d.normalizer == audio::fit_normalizer(raw_train));
  for (float v : d.validation[0].features.values.data()) CHECK(v == 0.9f);
  CHECK(d.longest_song == 20);
}

TEST_CASE("a non-finite loss stops training with the step and batch songs") {
  std::mt19937_64 rng(7);
  auto song = random_song(rng, 20, "bad-song");
  song.poses[3].q[0] = std::nan("");
  const auto d = prepare_data({song}, {random_song(rng, 20, "v")});
  TrainConfig cfg;
  cfg.updates = 50;
  cfg.batch = 8;
  cfg.validate_every = 50;
  cfg.model = mini(model::Variant::kMamba, 8);
  cfg.manifest = "unused.json";
  try {
    train::train(cfg, d, {});
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("bad-song") != std::string::npos);
  }
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  c.manifest = "m.json";
  CHECK_NOTHROW(c.validate());
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), InvariantError);
  const auto j = nlohmann::json::parse(R"({"manifest": "corpus/m.json", "variant": "mamba", "updates": 10})");
  const auto parsed = TrainConfig::from_json(j, "/data");
  CHECK(parsed.manifest == fs::path("/data/corpus/m.json"));
  CHECK(parsed.model.variant == model::Variant::kMamba);
  CHECK(parsed.model.window == 120);
  CHECK(parsed.updates == 10);
  CHECK(parsed.batch == 16);
  CHECK(parsed.lr == 1e-4);
}
