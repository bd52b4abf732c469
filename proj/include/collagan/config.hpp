#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "collagan/adam.hpp"
#include "collagan/losses.hpp"
#include "collagan/models.hpp"

namespace collagan {

// Which generated images feed the adversarial and fake-classification terms.
//   forward: the imputed target-domain image.
//   cycle:   the N-1 cycle reconstructions, each labelled with its own domain.
//   both:    all of the above.
enum class AdversarialTarget { forward, cycle, both };

std::string to_string(AdversarialTarget target);
AdversarialTarget parse_adversarial_target(const std::string& name);

struct TrainConfig {
  std::size_t n_domains = 4;
  std::size_t in_channels = 1;
  std::size_t image_size = 32;

  GeneratorArch generator_arch = GeneratorArch::plain_unet;
  std::size_t generator_width = 8;
  std::size_t generator_depth = 3;
  std::size_t residual_blocks = 2;
  std::size_t discriminator_width = 16;
  std::size_t discriminator_downsamples = 4;
  bool multi_scale = false;
  double discriminator_dropout = 0.3;

  LossWeights weights;
  AdamConfig adam;

  std::size_t batch_size = 4;
  std::size_t classifier_pretrain_epochs = 10;
  std::size_t joint_steps = 2000;
  double input_dropout_rate = 0.3;
  // Also null inputs of the cycle re-generations (never the fake slot).
  bool cycle_input_dropout = false;
  AdversarialTarget adversarial_target = AdversarialTarget::forward;
  std::uint64_t seed = 1;

  std::size_t eval_interval = 200;
  // 0 disables intermediate checkpoints.
  std::size_t checkpoint_interval = 0;
  std::array<double, 3> split = {0.8, 0.1, 0.1};

  void validate() const;
  GeneratorSpec generator_spec() const;
  DiscriminatorSpec discriminator_spec() const;

  // Sets one field from its text form; throws ConfigError for unknown keys
  // and malformed values.
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;
  std::string get(const std::string& key) const;

  // One `key = value` line per field in a fixed order. Doubles are written
  // with 17 significant digits so parsing the text restores every bit.
  std::string to_text() const;
  // Parses `key = value` lines on top of the defaults. Blank lines and lines
  // starting with '#' are ignored.
  static TrainConfig from_text(const std::string& text);
  void apply_text(const std::string& text);
};

TrainConfig load_config_file(const std::string& path);

}  // namespace collagan
