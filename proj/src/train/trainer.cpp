#include "mdl/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "mdl/ad/ops.hpp"
#include "mdl/ad/optim.hpp"
#include "mdl/binary_io.hpp"
#include "mdl/eval/metrics.hpp"
#include "mdl/model/checkpoint.hpp"
#include "mdl/train/window.hpp"

namespace mdl::train {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvariantError(std::string("train config: ") + what);
  };
  require(updates > 0, "updates must be positive");
  require(batch > 0, "batch must be positive");
  require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require(validate_every > 0, "validate_every must be positive");
  require(jobs > 0, "jobs must be positive");
  require(!manifest.empty(), "manifest path is required");
}

json TrainConfig::to_json() const {
  return {{"updates", updates},
          {"batch", batch},
          {"lr", lr},
          {"validate_every", validate_every},
          {"seed", seed},
          {"variant", model::to_string(model.variant)},
          {"window", model.window},
          {"model", model.to_json()},
          {"manifest", manifest.generic_string()},
          {"split", data::to_string(split)},
          {"fold", fold},
          {"jobs", jobs}};
}

TrainConfig TrainConfig::from_json(const json& j, const fs::path& base_dir) {
  TrainConfig c;
  try {
    json m = j.contains("model") ? j.at("model") : json::object();
    if (j.contains("variant")) m["variant"] = j.at("variant");
    if (!m.contains("variant")) m["variant"] = "transformer";
    if (j.contains("window")) m["window"] = j.at("window");
    c.model = model::ModelConfig::from_json(m);
    c.updates = j.value("updates", c.updates);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.seed = j.value("seed", c.seed);
    c.fold = j.value("fold", c.fold);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("split")) c.split = data::parse_split_mode(j.at("split").get<std::string>());
    if (j.contains("manifest")) {
      fs::path p = j.at("manifest").get<std::string>();
      c.manifest = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw InputError("train config " + path.string() + ": invalid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

TrainData prepare_data(std::vector<data::PairSequence> train_songs, std::vector<data::PairSequence> validation_songs) {
  if (train_songs.empty()) throw InputError("training split has no songs");
  if (validation_songs.empty()) throw InputError("validation split has no songs");
  TrainData d;
  audio::NormalizerFit fit(train_songs.front().features.values.cols());
  for (const auto& s : train_songs) fit.add(s.features);
  d.normalizer = fit.finish();
  for (auto* set : {&train_songs, &validation_songs}) {
    for (auto& s : *set) {
      s.features = d.normalizer.apply(s.features);
      d.longest_song = std::max(d.longest_song, s.frames());
    }
  }
  d.train = std::move(train_songs);
  d.validation = std::move(validation_songs);
  return d;
}

TrainData prepare_data(const TrainConfig& cfg) {
  const auto manifest = data::Manifest::load(cfg.manifest);
  const auto splits = data::cross_validation_splits(manifest.songs, cfg.split);
  if (cfg.fold >= splits.size()) {
    throw InputError("fold " + std::to_string(cfg.fold) + " out of range: split mode " + data::to_string(cfg.split) +
                     " yields " + std::to_string(splits.size()) + " folds");
  }
  const auto& split = splits[cfg.fold];
  std::vector<data::PairSequence> train_songs, validation_songs;
  for (const auto& id : split.train_ids) train_songs.push_back(data::load_song(manifest.find(id)));
  for (const auto& id : split.validation_ids) validation_songs.push_back(data::load_song(manifest.find(id)));
  return prepare_data(std::move(train_songs), std::move(validation_songs));
}

namespace {

constexpr const char* kStateFile = "trainer_state.bin";
constexpr const char* kLatestFile = "latest.mdlc";
constexpr const char* kBestFile = "best.mdlc";
constexpr const char* kMetricsFile = "metrics.csv";
constexpr const char* kMetricsHeader = "step,train_loss,val_AJE,val_FID";

struct TrainerState {
  std::uint64_t step = 0;
  double best_aje = std::numeric_limits<double>::infinity();
  std::uint64_t best_step = 0;
  std::string rng;
  std::vector<ad::AdamMoments> moments;
};

std::vector<std::uint8_t> encode_state(const TrainerState& s) {
  io::ByteWriter w;
  w.put_magic("MDLT");
  w.put(std::uint32_t{1});
  w.put(s.step);
  w.put(s.best_aje);
  w.put(s.best_step);
  w.put_string(s.rng);
  w.put(static_cast<std::uint32_t>(s.moments.size()));
  for (const auto& m : s.moments) {
    w.put(static_cast<std::uint64_t>(m.m.size()));
    w.put_span<double>(m.m);
    w.put_span<double>(m.v);
  }
  return w.release();
}

TrainerState decode_state(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MDLT");
  const auto at = r.offset();
  if (r.get<std::uint32_t>() != 1) throw DecodeError("unsupported trainer state version", at);
  TrainerState s;
  s.step = r.get<std::uint64_t>();
  s.best_aje = r.get<double>();
  s.best_step = r.get<std::uint64_t>();
  s.rng = r.get_string();
  s.moments.resize(r.get<std::uint32_t>());
  for (auto& m : s.moments) {
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining()) throw DecodeError("trainer state: moment block too large", r.offset());
    m.m.resize(n);
    m.v.resize(n);
    r.get_span<double>(m.m);
    r.get_span<double>(m.v);
  }
  return s;
}

std::string format_row(std::size_t step, double loss, const eval::EvaluationReport& r) {
  std::ostringstream os;
  os << std::setprecision(9) << step << ',' << loss << ',' << r.aje_mean << ',' << r.fid;
  return os.str();
}

// Keeps the header and rows up to `step`, so a resumed run does not duplicate lines.
std::vector<std::string> read_metric_rows(const fs::path& path, std::uint64_t step) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == kMetricsHeader) continue;
    if (std::stoull(line.substr(0, line.find(','))) <= step) rows.push_back(line);
  }
  return rows;
}

void write_metric_rows(const fs::path& path, const std::vector<std::string>& rows) {
  std::string text = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) text += r + "\n";
  io::write_text_file(path, text);
}

}  // namespace

TrainOutcome train(const TrainConfig& cfg_in, const TrainData& data, const TrainOptions& options) {
  TrainConfig cfg = cfg_in;
  if (cfg.model.variant == model::Variant::kTransformer && cfg.model.position_vocab == 0) {
    cfg.model.position_vocab = data.longest_song + 1;
  }
  cfg.model.feature_dim = data.normalizer.dim();
  cfg.model.validate();
  if (cfg.updates == 0 || cfg.batch == 0 || cfg.validate_every == 0) {
    throw InvariantError("train config: updates, batch and validate_every must be positive");
  }
  if (data.train.empty() || data.validation.empty()) throw InputError("train: empty train or validation set");

  auto model = model::make_model<float>(cfg.model, cfg.seed);
  ad::Adam<float> adam(model->parameters().tensors(), ad::AdamConfig{.lr = cfg.lr});
  std::mt19937_64 rng(cfg.seed);
  TrainerState state;
  std::vector<std::string> metric_rows;
  const bool write = !options.out_dir.empty();

  if (write) fs::create_directories(options.out_dir);
  if (options.resume) {
    if (!write) throw InputError("resume requires an output directory");
    const auto latest = options.out_dir / kLatestFile;
    const auto state_path = options.out_dir / kStateFile;
    if (!fs::exists(latest) || !fs::exists(state_path)) {
      throw InputError("nothing to resume in " + options.out_dir.string() + " (no " + kLatestFile + " / " +
                       kStateFile + ")");
    }
    auto ck = model::load_checkpoint(latest);
    if (!(ck.model->config() == cfg.model)) throw InputError("resume: checkpoint architecture differs from config");
    model->load_values(ck.model->parameters());
    state = decode_state(io::read_file(state_path));
    if (state.moments.size() != model->parameters().named().size()) {
      throw InputError("resume: trainer state does not match the model");
    }
    std::istringstream(state.rng) >> rng;
    adam.restore(state.step, state.moments);
    metric_rows = read_metric_rows(options.out_dir / kMetricsFile, state.step);
  }

  TrainOutcome outcome;
  outcome.best_aje = state.best_aje;
  outcome.best_step = state.best_step;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  std::vector<TrainingWindow> batch(cfg.batch);

  for (std::size_t step = state.step + 1; step <= cfg.updates; ++step) {
    for (auto& w : batch) w = sample_window(data.train, cfg.model.window, rng);
    const auto input = make_input<float>(batch);
    const auto pred = model->forward(input, true, &rng);
    auto loss = l2_loss(pred, make_targets<float>(batch), input.valid_len);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::string ids;
      for (const auto& w : batch) ids += (ids.empty() ? "" : ",") + data.train[w.song].song_id;
      ad::Tape<float>::current().clear();
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step) + " (batch songs: " + ids + ")");
    }
    ad::backward(loss);
    adam.step();
    adam.zero_grad();
    outcome.losses.push_back(value);
    outcome.last_loss = value;
    outcome.steps = step;
    loss_sum += value;
    ++loss_count;

    if (step % cfg.validate_every == 0 || step == cfg.updates) {
      const auto report = eval::evaluate_split(*model, data.validation, cfg.jobs);
      const double mean_loss = loss_sum / static_cast<double>(loss_count);
      loss_sum = 0.0;
      loss_count = 0;
      const bool improved = report.aje_mean < state.best_aje;
      if (improved) {
        state.best_aje = report.aje_mean;
        state.best_step = step;
      }
      outcome.best_aje = state.best_aje;
      outcome.best_step = state.best_step;
      metric_rows.push_back(format_row(step, mean_loss, report));
      if (options.log) {
        *options.log << "step " << step << "  loss " << mean_loss << "  val AJE " << report.aje_mean << "  val FID "
                     << report.fid << (improved ? "  (best)" : "") << std::endl;
      }
      if (write) {
        const json meta = {{"step", step}, {"val_aje", report.aje_mean}, {"val_fid", report.fid},
                           {"train", cfg.to_json()}};
        model::save_checkpoint(options.out_dir / kLatestFile, *model, data.normalizer, meta);
        if (improved) model::save_checkpoint(options.out_dir / kBestFile, *model, data.normalizer, meta);
        state.step = step;
        std::ostringstream rs;
        rs << rng;
        state.rng = rs.str();
        state.moments = adam.moments();
        io::write_file(options.out_dir / kStateFile, encode_state(state));
        write_metric_rows(options.out_dir / kMetricsFile, metric_rows);
        io::write_text_file(options.out_dir / "config.json", cfg.to_json().dump(2) + "\n");
      }
    }
  }
  return outcome;
}

}  // namespace mdl::train
