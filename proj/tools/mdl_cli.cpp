// mdl: command-line entry point for the music-to-dance pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdl/audio/features.hpp"
#include "mdl/audio/normalizer.hpp"
#include "mdl/audio/wav.hpp"
#include "mdl/binary_io.hpp"
#include "mdl/data/dataset.hpp"
#include "mdl/error.hpp"
#include "mdl/eval/metrics.hpp"
#include "mdl/model/checkpoint.hpp"
#include "mdl/pose/geometry.hpp"
#include "mdl/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace mdl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw InputError(std::string(what) + " not found: " + p.string());
}

int run_extract_features(const fs::path& audio_path, const fs::path& out, const std::optional<fs::path>& norm_path) {
  require_file(audio_path, "audio file");
  std::optional<audio::Normalizer> norm;
  if (norm_path) {
    require_file(*norm_path, "normalizer");
    norm = audio::load_normalizer(*norm_path);
  }
  auto features = audio::extract_features(audio::load_wav(audio_path));
  if (norm) {
    if (norm->dim() != features.values.cols()) throw InputError("normalizer dimension does not match features");
    features = norm->apply(features);
  }
  audio::save_feature_file(out, features);
  std::cout << out.string() << ": " << features.frames() << " frames x " << features.values.cols() << "\n";
  return kExitOk;
}

int run_extract_poses(const fs::path& keypoints_path, const fs::path& out) {
  require_file(keypoints_path, "keypoints file");
  std::vector<pose::JointPose> poses;
  for (const auto& k : pose::load_keypoints(keypoints_path)) poses.push_back(pose::keypoints_to_pose(k));
  pose::save_pose_file(out, poses);
  std::cout << out.string() << ": " << poses.size() << " poses\n";
  return kExitOk;
}

int run_sync(const fs::path& features_path, const fs::path& poses_path, const fs::path& out, const std::string& id,
             const std::string& genre) {
  require_file(features_path, "feature file");
  require_file(poses_path, "pose file");
  const auto poses = pose::load_pose_file(poses_path);
  const auto pair = data::pair_sequences(audio::load_feature_file(features_path), poses,
                                         id.empty() ? features_path.stem().string() : id, genre);
  data::save_pair_file(out, pair);
  std::cout << out.string() << ": " << pair.frames() << " paired frames\n";
  return kExitOk;
}

int run_synth(const GlobalOptions& g, const fs::path& out, std::size_t songs, double duration, double difficulty) {
  if (!(duration > 0.0)) throw InputError("--duration must be positive");
  if (songs == 0) throw InputError("--songs must be positive");
  const auto m = data::write_synth_corpus(out, g.seed, duration, songs, difficulty);
  std::cout << (out / "manifest.json").string() << ": " << m.songs.size() << " songs\n";
  return kExitOk;
}

struct TrainOverrides {
  std::optional<std::size_t> updates, batch, validate_every, window, fold;
  std::optional<double> lr;
  std::optional<std::string> variant, manifest, split;
  bool seed_given = false;
  bool jobs_given = false;
};

int run_train(const GlobalOptions& g, const fs::path& config_path, const fs::path& out, bool resume,
              const TrainOverrides& o) {
  require_file(config_path, "train config");
  auto j = nlohmann::json::parse(io::read_text_file(config_path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InputError("train config " + config_path.string() + ": invalid JSON");
  // Flags override the file; the file overrides built-in defaults.
  if (o.variant) j["variant"] = *o.variant;
  if (o.window) j["window"] = *o.window;
  if (o.updates) j["updates"] = *o.updates;
  if (o.batch) j["batch"] = *o.batch;
  if (o.validate_every) j["validate_every"] = *o.validate_every;
  if (o.lr) j["lr"] = *o.lr;
  if (o.fold) j["fold"] = *o.fold;
  if (o.split) j["split"] = *o.split;
  if (o.seed_given) j["seed"] = g.seed;
  if (o.jobs_given) j["jobs"] = g.jobs;
  auto cfg = train::TrainConfig::from_json(j, config_path.parent_path());
  if (o.manifest) cfg.manifest = *o.manifest;
  cfg.validate();
  require_file(cfg.manifest, "manifest");
  const auto data = train::prepare_data(cfg);
  std::cout << "training " << model::to_string(cfg.model.variant) << " on " << data.train.size() << " songs, validating on "
            << data.validation.size() << "\n";
  const auto outcome = train::train(cfg, data, {out, resume, &std::cout});
  std::cout << "done: " << outcome.steps << " steps, best validation AJE " << outcome.best_aje << " at step "
            << outcome.best_step << "\n";
  return kExitOk;
}

int run_translate(const fs::path& checkpoint_path, const fs::path& audio_path, const fs::path& out) {
  require_file(checkpoint_path, "checkpoint");
  require_file(audio_path, "audio file");
  const auto ck = model::load_checkpoint(checkpoint_path);
  const auto features = ck.normalizer.apply(audio::extract_features(audio::load_wav(audio_path)));
  const auto poses = eval::translate(*ck.model, features);
  pose::save_pose_file(out, poses);
  std::cout << out.string() << ": " << poses.size() << " poses\n";
  return kExitOk;
}

int run_evaluate(const GlobalOptions& g, const fs::path& checkpoint_path, const fs::path& manifest_path,
                 const fs::path& split_path, const fs::path& out, const std::optional<fs::path>& config_path,
                 const std::optional<fs::path>& generated_dir) {
  require_file(checkpoint_path, "checkpoint");
  require_file(manifest_path, "manifest");
  require_file(split_path, "split file");
  const auto ck = model::load_checkpoint(checkpoint_path);
  if (config_path) {
    require_file(*config_path, "train config");
    const auto cfg = train::TrainConfig::load(*config_path);
    if (cfg.model.window != ck.model->config().window) {
      throw InputError("window mismatch: config " + config_path->string() + " has K=" +
                       std::to_string(cfg.model.window) + " but checkpoint " + checkpoint_path.string() +
                       " was trained with K=" + std::to_string(ck.model->config().window));
    }
    if (cfg.model.variant != ck.model->config().variant) {
      throw InputError("variant mismatch: config says " + model::to_string(cfg.model.variant) + ", checkpoint is " +
                       model::to_string(ck.model->config().variant));
    }
  }
  const auto manifest = data::Manifest::load(manifest_path);
  const auto split = data::load_split(split_path);
  if (split.validation_ids.empty()) throw InputError("split " + split_path.string() + " has no validation songs");
  std::vector<data::PairSequence> songs;
  for (const auto& id : split.validation_ids) {
    auto s = data::load_song(manifest.find(id));
    s.features = ck.normalizer.apply(s.features);
    songs.push_back(std::move(s));
  }
  std::vector<std::vector<pose::JointPose>> generated;
  const auto report = eval::evaluate_split(*ck.model, songs, g.jobs, &generated);
  io::write_text_file(out, report.to_json().dump(2) + "\n");
  if (generated_dir) {
    for (std::size_t i = 0; i < songs.size(); ++i) {
      pose::save_pose_file(*generated_dir / (songs[i].song_id + ".mdlp"), generated[i]);
    }
  }
  std::cout << out.string() << ": AJE " << report.aje_mean << " +/- " << report.aje_std << ", FID " << report.fid
            << " over " << songs.size() << " songs\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mdl: music-to-dance feature extraction, training and generation"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for all randomness (default 0)");
  auto* jobs_opt = app.add_option("--jobs", g.jobs, "Songs processed in parallel (default 1)")->check(CLI::PositiveNumber);

  fs::path audio_path, out, keypoints_path, features_path, poses_path, config_path, checkpoint_path, manifest_path,
      split_path;
  std::optional<fs::path> normalizer_path, eval_config, generated_dir;

  auto* ef = app.add_subcommand("extract-features", "WAV -> 438-dim feature frames at 60 Hz (MDLF)");
  ef->add_option("--audio", audio_path, "Input WAV file")->required();
  ef->add_option("--out", out, "Output feature file")->required();
  ef->add_option("--normalizer", normalizer_path, "Apply this normalizer (MDLN) to the frames before writing");

  auto* ep = app.add_subcommand("extract-poses", "Keypoints JSON-lines -> joint angles (MDLP)");
  ep->add_option("--keypoints", keypoints_path, "Input keypoints JSONL")->required();
  ep->add_option("--out", out, "Output pose file")->required();

  std::string pair_id, pair_genre;
  auto* sy = app.add_subcommand("sync", "Pair feature frames with nearest-in-time poses");
  sy->add_option("--features", features_path, "Feature file (MDLF)")->required();
  sy->add_option("--poses", poses_path, "Pose file (MDLP)")->required();
  sy->add_option("--out", out, "Output pair file (MDLS)")->required();
  sy->add_option("--id", pair_id, "Song id stored in the pair (default: feature file stem)");
  sy->add_option("--genre", pair_genre, "Genre tag stored in the pair");

  std::size_t songs = 12;
  double duration = 30.0, difficulty = 0.5;
  auto* sn = app.add_subcommand("synth", "Write a synthetic corpus: WAVs, keypoints and manifest.json");
  sn->add_option("--out", out, "Output directory")->required();
  sn->add_option("--songs", songs, "Number of songs (genres alternate)")->capture_default_str();
  sn->add_option("--duration", duration, "Seconds per song")->capture_default_str();
  sn->add_option("--difficulty", difficulty, "Percussion noise level in [0, 1]")->capture_default_str();

  bool resume = false;
  TrainOverrides ov;
  auto* tr = app.add_subcommand("train",
                                "Train a model. Precedence: flag > config file > built-in default.");
  tr->add_option("--config", config_path, "Training config JSON")->required();
  tr->add_option("--out", out, "Output directory for checkpoints and metrics.csv")->required();
  tr->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");
  tr->add_option("--variant", ov.variant, "transformer or mamba");
  tr->add_option("--window", ov.window, "Window length K");
  tr->add_option("--updates", ov.updates, "Number of optimizer steps");
  tr->add_option("--batch", ov.batch, "Windows per step");
  tr->add_option("--lr", ov.lr, "Adam learning rate");
  tr->add_option("--validate-every", ov.validate_every, "Steps between validations");
  tr->add_option("--manifest", ov.manifest, "Corpus manifest");
  tr->add_option("--split", ov.split, "per-genre, all-genre or k-fold");
  tr->add_option("--fold", ov.fold, "Which split fold to train");

  auto* tl = app.add_subcommand("translate", "Generate a choreography for one WAV");
  tl->add_option("--checkpoint", checkpoint_path, "Model checkpoint (MDLC)")->required();
  tl->add_option("--audio", audio_path, "Input WAV file")->required();
  tl->add_option("--out", out, "Output pose file (MDLP)")->required();

  auto* ev = app.add_subcommand("evaluate", "Translate validation songs and report AJE / FID");
  ev->add_option("--checkpoint", checkpoint_path, "Model checkpoint (MDLC)")->required();
  ev->add_option("--manifest", manifest_path, "Corpus manifest")->required();
  ev->add_option("--split", split_path, "Split JSON {\"train\": [...], \"validation\": [...]}")->required();
  ev->add_option("--out", out, "Output report JSON")->required();
  ev->add_option("--config", eval_config, "Training config to check against the checkpoint");
  ev->add_option("--generated", generated_dir, "Also write generated poses here as <id>.mdlp");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }
  ov.seed_given = seed_opt->count() > 0;
  ov.jobs_given = jobs_opt->count() > 0;

  try {
    if (ef->parsed()) return run_extract_features(audio_path, out, normalizer_path);
    if (ep->parsed()) return run_extract_poses(keypoints_path, out);
    if (sy->parsed()) return run_sync(features_path, poses_path, out, pair_id, pair_genre);
    if (sn->parsed()) return run_synth(g, out, songs, duration, difficulty);
    if (tr->parsed()) return run_train(g, config_path, out, resume, ov);
    if (tl->parsed()) return run_translate(checkpoint_path, audio_path, out);
    if (ev->parsed()) return run_evaluate(g, checkpoint_path, manifest_path, split_path, out, eval_config, generated_dir);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const StructuralError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
