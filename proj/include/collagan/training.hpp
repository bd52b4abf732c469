#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <memory>
#include <vector>

#include "collagan/adam.hpp"
#include "collagan/checkpoint.hpp"
#include "collagan/config.hpp"
#include "collagan/data.hpp"
#include "collagan/evaluation.hpp"
#include "collagan/losses.hpp"
#include "collagan/models.hpp"

namespace collagan {

// Calls made during the most recent joint step.
struct StepCounters {
  std::size_t generator_calls = 0;
  std::size_t cycle_reconstructions = 0;
  std::size_t discriminator_forwards = 0;
};

// Discriminator forwards per joint step: real images and detached fakes in
// the discriminator update, fakes again in the generator update.
inline constexpr std::size_t kDiscriminatorForwardsPerStep = 3;

enum class ClsfTerm { real, fake };

// Called for every classification loss the trainer evaluates, with whether
// the classified batch was produced by the generator.
using ClsfHook = std::function<void(ClsfTerm term, bool on_generated)>;

struct MetricsRow {
  std::uint64_t step = 0;
  std::string domain;  // domain index, or "all" for the mean over domains
  double nmse = 0.0;
  double ssim = 0.0;
  LossReport losses;
};

inline constexpr const char* kMetricsHeader =
    "step,domain,nmse,ssim,loss_mcc,loss_mcc_ssim,loss_gan_gen,loss_gan_dsc,loss_clsf_real,loss_clsf_fake";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct TrainResult {
  // One "all" row per evaluation.
  std::vector<MetricsRow> metrics;
  // One row per domain per evaluation.
  std::vector<MetricsRow> domain_metrics;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);
  // Restores the full training state. `overrides` is `key = value` text
  // applied to the stored config (e.g. a larger joint_steps).
  static Trainer from_checkpoint(const Checkpoint& ckpt, const std::string& overrides = "");

  Checkpoint checkpoint() const;

  // Minimizes the real-image classification loss over `epochs` passes of
  // every (sample, domain) pair. Only the discriminator changes.
  void pretrain_classifier(const std::vector<const DomainSample*>& train, std::size_t epochs);
  double last_pretrain_loss() const { return last_pretrain_loss_; }

  // One discriminator update followed by one generator update on `batch`.
  LossReport joint_step(const std::vector<const DomainSample*>& batch);

  // Generator update only, for a fixed target and null sets. The
  // discriminator runs in eval mode and is not updated.
  LossReport generator_step(const std::vector<const DomainSample*>& batch, std::size_t target,
                            const std::vector<std::vector<std::size_t>>& null_sets);

  // Pretraining (unless already done), then joint steps until
  // config().joint_steps, evaluating every eval_interval steps. When `out_dir`
  // is non-empty, writes metrics.csv, metrics_domains.csv, interval
  // checkpoints checkpoint_<step>.clgn and final.clgn there.
  TrainResult train(const std::vector<DomainSample>& dataset, const std::filesystem::path& out_dir = {});

  const TrainConfig& config() const { return config_; }
  Generator<float>& generator() { return generator_; }
  const Generator<float>& generator() const { return generator_; }
  Discriminator<float>& discriminator() { return discriminator_; }
  const Discriminator<float>& discriminator() const { return discriminator_; }
  std::mt19937_64& rng() { return rng_; }
  std::uint64_t step() const { return step_; }
  bool pretrain_done() const { return pretrain_done_; }
  const StepCounters& last_counters() const { return counters_; }
  void set_clsf_hook(ClsfHook hook) { clsf_hook_ = std::move(hook); }

 private:
  struct Generation;

  Tensor generate(const Tensor& input);
  DiscriminatorOutput<float> discriminate(const Tensor& images, nn::Mode mode);
  Tensor classification_term(ClsfTerm term, const Tensor& images, const Tensor& probs,
                             const std::vector<std::size_t>& labels);
  Generation generate_all(const std::vector<const DomainSample*>& batch, std::size_t target,
                          const std::vector<std::vector<std::size_t>>& null_sets);
  void update_generator(Graph<float>& graph, const Generation& gen, nn::Mode d_mode, LossParts& parts);
  std::vector<const DomainSample*> sample_batch(const std::vector<const DomainSample*>& pool);

  TrainConfig config_;
  Generator<float> generator_;
  Discriminator<float> discriminator_;
  Adam<float> adam_g_;
  Adam<float> adam_d_;
  std::mt19937_64 rng_;
  std::uint64_t step_ = 0;
  bool pretrain_done_ = false;
  double last_pretrain_loss_ = 0.0;
  LossReport last_report_;
  StepCounters counters_;
  ClsfHook clsf_hook_;
  // Kept alive so addresses cannot be reused within a step.
  std::vector<std::shared_ptr<TensorImpl<float>>> generated_;
};

// Generator rebuilt from a checkpoint's config and "G/" tensors.
Generator<float> load_generator(const Checkpoint& ckpt);

// Eval-mode imputation of `target` for one sample, clamped to [0,1].
Tensor impute(const Generator<float>& generator, const DomainSample& sample, std::size_t target,
              const std::vector<std::size_t>& null_set = {});

Predictor generator_predictor(const Generator<float>& generator);

}  // namespace collagan
