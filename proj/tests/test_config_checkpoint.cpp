#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "collagan/checkpoint.hpp"
#include "collagan/config.hpp"
#include "collagan/training.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace collagan;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config_text = TrainConfig{}.to_text();
  c.tensors.push_back({"G/a.weight", Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6.5f})});
  c.tensors.push_back({"D/b", Tensor::scalar(-1.25f)});
  c.tensors.push_back({"optG/m/a.weight", Tensor(Shape{2, 1, 1, 1}, {0.125f, -3})});
  c.adam_g_steps = 17;
  c.adam_d_steps = 19;
  c.rng_state = "1 2 3";
  c.step = 42;
  c.pretrain_done = true;
  return c;
}

std::string decode_error(const std::vector<unsigned char>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("config text round trip restores every field") {
  TrainConfig c;
  c.n_domains = 3;
  c.adam.lr = 0.0013;
  c.weights.mcc = 7.25;
  c.adversarial_target = AdversarialTarget::both;
  c.generator_arch = GeneratorArch::inception_unet;
  c.multi_scale = true;
  c.split = {0.7, 0.2, 0.1};
  c.discriminator_dropout = 1.0 / 3.0;
  const TrainConfig back = TrainConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.adam.lr == c.adam.lr);
  CHECK(back.discriminator_dropout == c.discriminator_dropout);
  CHECK(back.adversarial_target == AdversarialTarget::both);
  for (const auto& key : c.keys()) CHECK(back.get(key) == c.get(key));
}

TEST_CASE("config defaults") {
  const TrainConfig c;
  CHECK(c.adam.lr == 1e-5);
  CHECK(c.adam.beta1 == 0.9);
  CHECK(c.adam.beta2 == 0.999);
  CHECK(c.weights.mcc == 10.0);
  CHECK(c.weights.mcc_ssim == 1.0);
  CHECK(c.input_dropout_rate == 0.3);
  CHECK(c.classifier_pretrain_epochs == 10);
  CHECK(c.eval_interval == 200);
  CHECK(c.adversarial_target == AdversarialTarget::forward);
  CHECK(c.generator_spec().depth == 3);
  CHECK(c.generator_spec().base_width == 8);
  CHECK(c.discriminator_spec().n_downsamples == 4);
  CHECK(c.discriminator_spec().base_width == 16);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config parsing rejects bad input") {
  CHECK_THROWS_AS(TrainConfig::from_text("not_a_key = 3"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("batch_size = three"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("batch_size 3"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("adversarial_target = sideways"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("batch_size = 0").validate(), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("input_dropout_rate = 1").validate(), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("split_train = 0.5").validate(), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("lambda_gan = -1").validate(), ConfigError);
  CHECK_THROWS_AS(Trainer(TrainConfig::from_text("batch_size = 0")), ConfigError);
  const TrainConfig c = TrainConfig::from_text("# comment\n\n  batch_size = 2  \njoint_steps=5\n");
  CHECK(c.batch_size == 2);
  CHECK(c.joint_steps == 5);
}

TEST_CASE("config file loading") {
  const fs::path p = fs::temp_directory_path() / "collagan_test_config.txt";
  {
    std::ofstream out(p);
    out << "n_domains = 3\nseed = 77\n";
  }
  const TrainConfig c = load_config_file(p.string());
  CHECK(c.n_domains == 3);
  CHECK(c.seed == 77);
  fs::remove(p);
  CHECK_THROWS_AS(load_config_file(p.string()), ConfigError);
}

TEST_CASE("checkpoint encoding is a fixpoint") {
  const Checkpoint c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.config_text == c.config_text);
  CHECK(back.step == 42);
  CHECK(back.adam_g_steps == 17);
  CHECK(back.adam_d_steps == 19);
  CHECK(back.rng_state == "1 2 3");
  CHECK(back.pretrain_done);
  CHECK(testing::same_bytes(back.tensor("G/a.weight"), c.tensors[0].tensor));
  CHECK(back.tensor("D/b").shape() == Shape{});
  CHECK_THROWS(back.tensor("G/nothing"));

  const fs::path p = fs::temp_directory_path() / "collagan_test.clgn";
  save_checkpoint(p, c);
  const Checkpoint loaded = load_checkpoint(p);
  save_checkpoint(p, loaded);
  std::ifstream in(p, std::ios::binary);
  const std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)), {});
  CHECK(file == bytes);
  fs::remove(p);
}

TEST_CASE("checkpoint header layout") {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CLGN");
  CHECK(bytes[4] == kCheckpointVersion);
  CHECK(bytes[5] == 0);
  const std::string config = sample_checkpoint().config_text;
  const std::uint32_t len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | std::uint32_t(bytes[11]) << 24;
  CHECK(len == config.size());
  CHECK(std::string(bytes.begin() + 12, bytes.begin() + 12 + len) == config);
}

TEST_CASE("corrupt checkpoints are rejected with an offset") {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic).find("offset 0") != std::string::npos);

  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK(decode_error(bad_version).find("offset 4") != std::string::npos);

  for (std::size_t cut : {std::size_t(3), std::size_t(20), bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<unsigned char> truncated(bytes.begin(), bytes.begin() + cut);
    CHECK(decode_error(truncated).find("offset") != std::string::npos);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK(decode_error(trailing).find("offset") != std::string::npos);

  CHECK_THROWS_AS(load_checkpoint(fs::temp_directory_path() / "collagan_no_such_file.clgn"), DataError);
}
