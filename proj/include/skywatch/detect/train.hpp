#pragma once

#include <skywatch/detect/detection.hpp>
#include <skywatch/detect/inference.hpp>
#include <skywatch/detect/model.hpp>
#include <skywatch/detect/sampling.hpp>
#include <skywatch/imagery/png_io.hpp>
#include <skywatch/net/adam.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace skywatch::detect {

struct TrainConfig {
  int batch_size = 256;
  int iterations_per_epoch = 3000;
  double lr = 1e-4;
  int patience = 10;    // N
  int max_epochs = 50;  // M
  double match_radius = kMatchRadius;
  DetectOptions detect;
  SamplingConfig sampling;
  std::uint64_t rng_seed = 0;
  int jobs = 1;  // scenes evaluated concurrently after each epoch

  void validate() const
  {
    require(batch_size > 0 && iterations_per_epoch > 0 && lr > 0 && patience > 0 && max_epochs > 0 &&
                match_radius > 0 && jobs > 0,
            ErrorCode::invalid_argument, "training parameters must be positive");
    require(sampling.neg_ratio == 2, ErrorCode::invalid_argument, "training uses a 1:2 positive:negative ratio");
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;  // mean batch loss
  EvalReport report;
  bool saved = false;
  int hard_negatives = 0;  // negatives replaced after this epoch
  double seconds = 0;
};

struct TrainResult {
  net::FcnModel<float> model;  // best saved model
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_score = 0;
  bool diverged = false;
  std::string divergence_message;
  std::int64_t adam_step = 0;  // optimizer step at the saved epoch
};

using EpochCallback = std::function<void(const EpochRecord&, const net::FcnModel<float>&)>;

/// Replaces up to half of the negatives, chosen at random, with patches
/// centered on false-alarm detections (those not flagged in `true_positive`).
/// Detections whose patch would leave the image are ignored. Returns the
/// number of replaced samples; the positive:negative ratio is unchanged.
inline int replace_hard_negatives(SampleSet& set, std::span<const imagery::SceneImage> scenes,
                                  const std::vector<Detection>& detections, const std::vector<bool>& true_positive,
                                  std::mt19937_64& rng)
{
  require(detections.size() == true_positive.size(), ErrorCode::shape, "one flag per detection");
  const auto index = scene_index(scenes);
  std::vector<PatchSample> hard;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (true_positive[i])
      continue;
    const auto it = index.find(detections[i].image_id);
    if (it == index.end())
      continue;
    const auto& sc = scenes[it->second];
    const int x = static_cast<int>(std::lround(detections[i].x));
    const int y = static_cast<int>(std::lround(detections[i].y));
    if (patch_fits(x, y, sc.height(), sc.width()))
      hard.push_back({it->second, x, y, false, SampleOrigin::hard_negative});
  }
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < set.samples.size(); ++i)
    if (!set.samples[i].positive)
      negatives.push_back(i);
  const std::size_t n = std::min(hard.size(), negatives.size() / 2);
  std::shuffle(hard.begin(), hard.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);
  for (std::size_t i = 0; i < n; ++i)
    set.samples[negatives[i]] = hard[i];
  return static_cast<int>(n);
}

/// Save/stop bookkeeping: the first observation is always saved, later ones
/// only on a strict score increase; stop after `patience` unsaved epochs.
class PatienceTracker {
 public:
  explicit PatienceTracker(int patience) : patience_(patience) {}

  bool observe(double score)
  {
    if (!any_ || score > best_) {
      any_ = true;
      best_ = score;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool exhausted() const { return stale_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int stale_ = 0;
  bool any_ = false;
  double best_ = 0;
};

namespace train_detail {

inline double run_epoch(net::FcnModel<float>& model, net::AdamState<float>& adam,
                        std::span<const imagery::SceneImage> scenes, const SampleSet& set, const TrainConfig& cfg,
                        std::mt19937_64& rng)
{
  std::uniform_int_distribution<std::size_t> pick(0, set.samples.size() - 1);
  std::uniform_int_distribution<int> symmetry(0, 7);
  std::vector<PatchSample> batch(cfg.batch_size);
  std::vector<int> sym(cfg.batch_size);
  std::vector<float> labels(cfg.batch_size);
  double total = 0;
  for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch[b] = set.samples[pick(rng)];
      sym[b] = symmetry(rng);
      labels[b] = batch[b].positive ? 1.0f : 0.0f;
    }
    const auto tensor = assemble_batch(scenes, batch, sym);
    total += net::backward_and_step<float>(model, tensor, labels, adam);
  }
  return total / cfg.iterations_per_epoch;
}

/// Seeds batchnorm running statistics with the statistics of one training
/// batch. Starting from the (0, 1) prior instead leaves a 0.99^k share of it
/// after k steps, which dwarfs the tiny activation variances of early layers at
/// desk-scale epoch lengths and breaks eval-mode inference.
inline void warm_start_batchnorm(net::FcnModel<float>& model, std::span<const imagery::SceneImage> scenes,
                                 const SampleSet& set, const TrainConfig& cfg, std::mt19937_64& rng)
{
  std::uniform_int_distribution<std::size_t> pick(0, set.samples.size() - 1);
  std::vector<PatchSample> batch(cfg.batch_size);
  std::vector<int> sym(cfg.batch_size, 0);
  for (auto& b : batch)
    b = set.samples[pick(rng)];
  net::ForwardCache<float> cache;
  net::forward(model, assemble_batch(scenes, batch, sym), net::Mode::train, net::Padding::valid, &cache);
  net::update_running_stats(model, cache, 0.0);
}

}  // namespace train_detail

/// Training loop with patience-based early stopping and hard-negative mining.
/// Each epoch runs `iterations_per_epoch` Adam steps on random augmented
/// batches, detects over all training scenes and scores DR * (1 - FDR). The
/// first epoch is always saved, later ones only on a strict score increase.
/// Training stops after `patience` epochs without a save or at `max_epochs`.
/// A non-finite loss or gradient ends training with the last saved model.
inline TrainResult train(std::span<const imagery::SceneImage> scenes,
                         const std::vector<imagery::Annotation>& annotations, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}, std::optional<net::FcnModel<float>> initial = {})
{
  cfg.validate();
  require(!annotations.empty(), ErrorCode::invalid_argument, "training needs at least one annotation");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.rng_seed), static_cast<std::uint32_t>(cfg.rng_seed >> 32),
                    0x74726eu};
  std::mt19937_64 rng(seq);

  SampleSet set = sample_initial(scenes, annotations, cfg.sampling, rng);
  require(set.positives() > 0, ErrorCode::invalid_argument,
          "no annotation lies far enough inside its image to yield training patches");

  const bool fresh = !initial;
  net::FcnModel<float> model = fresh ? build_model(cfg.rng_seed) : std::move(*initial);
  if (fresh && cfg.batch_size > 1)
    train_detail::warm_start_batchnorm(model, scenes, set, cfg, rng);
  auto adam = net::AdamState<float>::for_model(model, cfg.lr);

  TrainResult result;
  PatienceTracker patience(cfg.patience);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      rec.loss = train_detail::run_epoch(model, adam, scenes, set, cfg, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric)
        throw;
      result.diverged = true;
      result.divergence_message = e.what();
      break;
    }
    const auto detections = detect_scenes(model, scenes, cfg.detect, cfg.jobs);
    const auto match = match_detections(detections, annotations, cfg.match_radius);
    rec.report = match.report;
    if (patience.observe(rec.report.score)) {
      rec.saved = true;
      result.model = model;
      result.best_epoch = epoch;
      result.best_score = rec.report.score;
      result.adam_step = adam.step;
    }
    rec.hard_negatives = replace_hard_negatives(set, scenes, detections, match.true_positive, rng);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch)
      on_epoch(rec, model);
    if (patience.exhausted())
      break;
  }
  if (result.best_epoch == 0)
    fail(ErrorCode::numeric, "training diverged before the first epoch completed: " + result.divergence_message);
  return result;
}

inline std::string history_csv(const std::vector<EpochRecord>& history)
{
  std::ostringstream out;
  out.precision(10);
  out << "epoch,loss,tp,fa,fn,dr,fdr,score,saved\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.loss << ',' << r.report.tp << ',' << r.report.fa << ',' << r.report.fn << ','
        << r.report.dr << ',' << r.report.fdr << ',' << r.report.score << ',' << (r.saved ? 1 : 0) << '\n';
  return out.str();
}

inline void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history)
{
  const std::string text = history_csv(history);
  imagery::write_file_bytes(path, text.data(), text.size());
}

}  // namespace skywatch::detect
