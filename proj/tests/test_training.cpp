#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "collagan/synth.hpp"
#include "collagan/training.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace collagan;

namespace {

TrainConfig tiny_config(std::size_t n = 4) {
  TrainConfig c;
  c.n_domains = n;
  c.image_size = 8;
  c.generator_width = 4;
  c.generator_depth = 1;
  c.discriminator_width = 4;
  c.discriminator_downsamples = 2;
  c.batch_size = 2;
  c.classifier_pretrain_epochs = 1;
  c.joint_steps = 4;
  c.eval_interval = 2;
  c.adam.lr = 1e-3;
  c.seed = 3;
  return c;
}

std::vector<const DomainSample*> pointers(const std::vector<DomainSample>& samples, std::size_t count) {
  std::vector<const DomainSample*> out;
  for (std::size_t i = 0; i < count && i < samples.size(); ++i) out.push_back(&samples[i]);
  return out;
}

std::vector<unsigned char> checkpoint_bytes(const Trainer& t) { return encode_checkpoint(t.checkpoint()); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("collagan_train_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("one joint step calls the generator N times with N-1 reconstructions") {
  for (std::size_t n : {3u, 4u, 5u}) {
    for (auto mode : {AdversarialTarget::forward, AdversarialTarget::cycle, AdversarialTarget::both}) {
      TrainConfig c = tiny_config(n);
      c.adversarial_target = mode;
      Trainer t(c);
      const auto ds = synth_dataset(4, n, 8, 8, 1);
      const LossReport r = t.joint_step(pointers(ds.samples, 2));
      CHECK(t.last_counters().generator_calls == n);
      CHECK(t.last_counters().cycle_reconstructions == n - 1);
      CHECK(t.last_counters().discriminator_forwards == kDiscriminatorForwardsPerStep);
      CHECK(std::isfinite(r.total_gen));
      CHECK(r.total_dsc == doctest::Approx(r.gan_dsc + r.clsf_real));
    }
  }
}

TEST_CASE("classifier pretraining touches only the discriminator") {
  const auto ds = synth_dataset(6, 4, 8, 8, 2);
  Trainer t(tiny_config());
  const auto g0 = testing::fingerprint(t.generator().params());
  const auto d0 = testing::fingerprint(t.discriminator().params());
  t.pretrain_classifier(pointers(ds.samples, 6), 0);
  CHECK(testing::fingerprint(t.discriminator().params()) == d0);
  t.pretrain_classifier(pointers(ds.samples, 6), 2);
  CHECK(testing::fingerprint(t.generator().params()) == g0);
  CHECK(testing::fingerprint(t.discriminator().params()) != d0);
  const auto gan_head = t.discriminator().params().get("gan_head.weight").clone();
  t.pretrain_classifier(pointers(ds.samples, 6), 1);
  CHECK(testing::same_bytes(gan_head, t.discriminator().params().get("gan_head.weight")));
  CHECK_THROWS_AS(t.pretrain_classifier({}, 1), DataError);
}

TEST_CASE("discriminator and generator updates leave each other untouched") {
  const auto ds = synth_dataset(4, 4, 8, 8, 3);
  Trainer t(tiny_config());
  const auto g_before = testing::fingerprint(t.generator().params());
  const auto d_before = testing::fingerprint(t.discriminator().params());
  std::uint64_t g_between = 0, d_between = 0;
  t.set_clsf_hook([&](ClsfTerm term, bool) {
    // the fake term is evaluated after the discriminator update and before
    // the generator update
    if (term == ClsfTerm::fake) {
      g_between = testing::fingerprint(t.generator().params());
      d_between = testing::fingerprint(t.discriminator().params());
    }
  });
  t.joint_step(pointers(ds.samples, 2));
  CHECK(g_between == g_before);
  CHECK(d_between != d_before);
  CHECK(testing::fingerprint(t.discriminator().params()) == d_between);
  CHECK(testing::fingerprint(t.generator().params()) != g_between);

  const auto d_now = testing::fingerprint(t.discriminator().params());
  t.generator_step(pointers(ds.samples, 2), 1, {{}, {}});
  CHECK(testing::fingerprint(t.discriminator().params()) == d_now);
}

TEST_CASE("real-image classification never sees generated images") {
  const auto ds = synth_dataset(6, 4, 8, 8, 4);
  for (auto mode : {AdversarialTarget::forward, AdversarialTarget::cycle, AdversarialTarget::both}) {
    TrainConfig c = tiny_config();
    c.adversarial_target = mode;
    c.joint_steps = 3;
    Trainer t(c);
    std::size_t real_calls = 0, fake_calls = 0;
    t.set_clsf_hook([&](ClsfTerm term, bool on_generated) {
      if (term == ClsfTerm::real) {
        ++real_calls;
        CHECK_FALSE(on_generated);
      } else {
        ++fake_calls;
        CHECK(on_generated);
      }
    });
    t.train(ds.samples);
    CHECK(real_calls > 3);
    CHECK(fake_calls == 3);
  }
}

TEST_CASE("joint step input requirements") {
  auto ds = synth_dataset(3, 4, 8, 8, 5);
  Trainer t(tiny_config());
  CHECK_THROWS_AS(t.joint_step({}), DataError);
  ds.samples[0].available[2] = false;
  CHECK_THROWS_AS(t.joint_step(pointers(ds.samples, 2)), DataError);

  auto poisoned = synth_dataset(3, 4, 8, 8, 5);
  for (auto& img : poisoned.samples[0].images) img[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.joint_step(pointers(poisoned.samples, 2));
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

// Frozen batch, fixed target and null sets, discriminator held fixed.
TEST_CASE("repeated generator-only updates descend") {
  const auto ds = synth_dataset(4, 4, 8, 8, 6);
  TrainConfig c = tiny_config();
  Trainer t(c);
  const auto batch = pointers(ds.samples, 2);
  t.pretrain_classifier(pointers(ds.samples, 4), 2);
  std::vector<double> totals;
  for (int i = 0; i < 50; ++i) totals.push_back(t.generator_step(batch, 2, {{}, {1}}).total_gen);
  std::vector<double> smooth;
  for (std::size_t i = 4; i < totals.size(); ++i) {
    smooth.push_back((totals[i] + totals[i - 1] + totals[i - 2] + totals[i - 3] + totals[i - 4]) / 5);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] < smooth[i - 1]);
  CHECK(t.last_counters().generator_calls == 4);
}

TEST_CASE("training without joint steps equals the pretrained checkpoint") {
  const auto ds = synth_dataset(5, 4, 8, 8, 7);
  TrainConfig c = tiny_config();
  c.joint_steps = 0;
  Trainer a(c);
  const auto result = a.train(ds.samples);
  CHECK(result.metrics.size() == 1);

  Trainer b(c);
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.subject_id);
  const auto split = split_by_subject(ids, c.split, c.seed);
  b.pretrain_classifier(select_subjects(ds.samples, split.train), c.classifier_pretrain_epochs);
  const Checkpoint ca = a.checkpoint();
  Checkpoint cb = b.checkpoint();
  cb.pretrain_done = true;
  CHECK(encode_checkpoint(ca) == encode_checkpoint(cb));
}

TEST_CASE("identical runs give identical checkpoints and metrics") {
  const auto ds = synth_dataset(6, 4, 8, 8, 8);
  const fs::path d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
  Trainer a(tiny_config()), b(tiny_config());
  a.train(ds.samples, d1);
  b.train(ds.samples, d2);
  CHECK(read_text(d1 / "final.clgn") == read_text(d2 / "final.clgn"));
  CHECK(read_text(d1 / "metrics.csv") == read_text(d2 / "metrics.csv"));
  CHECK(read_text(d1 / "metrics_domains.csv") == read_text(d2 / "metrics_domains.csv"));

  TrainConfig other = tiny_config();
  other.seed = 4;
  Trainer c(other);
  c.train(ds.samples);
  CHECK(encode_checkpoint(c.checkpoint()) != checkpoint_bytes(a));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("metrics log has one row per evaluation") {
  const auto ds = synth_dataset(5, 4, 8, 8, 9);
  for (auto [steps, interval] : {std::pair{5u, 2u}, std::pair{6u, 3u}, std::pair{3u, 5u}}) {
    TrainConfig c = tiny_config();
    c.joint_steps = steps;
    c.eval_interval = interval;
    c.checkpoint_interval = 2;
    const fs::path dir = scratch_dir("rows");
    Trainer t(c);
    const auto result = t.train(ds.samples, dir);
    const std::size_t expected = steps / interval + 1;
    CHECK(result.metrics.size() == expected);
    CHECK(result.domain_metrics.size() == expected * 4);

    std::ifstream in(dir / "metrics.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == kMetricsHeader);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows == expected);
    CHECK(fs::exists(dir / "final.clgn"));
    CHECK(fs::exists(dir / "checkpoint_2.clgn"));
    CHECK(fs::exists(dir / "checkpoint_4.clgn") == (steps >= 4));
    fs::remove_all(dir);
  }
}

TEST_CASE("resuming from a checkpoint reproduces uninterrupted training") {
  const auto ds = synth_dataset(6, 4, 8, 8, 10);
  TrainConfig c = tiny_config();
  c.joint_steps = 6;
  Trainer full(c);
  full.train(ds.samples);

  TrainConfig first = c;
  first.joint_steps = 3;
  Trainer part(first);
  part.train(ds.samples);
  const Checkpoint mid = decode_checkpoint(encode_checkpoint(part.checkpoint()));
  CHECK(mid.step == 3);
  Trainer resumed = Trainer::from_checkpoint(mid, "joint_steps = 6");
  CHECK(resumed.step() == 3);
  CHECK(resumed.pretrain_done());
  const auto rows = resumed.train(ds.samples);
  CHECK(rows.metrics.size() == 2);
  CHECK(checkpoint_bytes(resumed) == checkpoint_bytes(full));
}

TEST_CASE("a checkpoint with a wrong tensor is refused as a whole") {
  Trainer t(tiny_config());
  Checkpoint ckpt = t.checkpoint();
  ckpt.tensors.back().tensor = Tensor(Shape{1});
  CHECK_THROWS_AS(Trainer::from_checkpoint(ckpt), DataError);
  Checkpoint missing = t.checkpoint();
  missing.tensors.erase(missing.tensors.begin());
  CHECK_THROWS_AS(Trainer::from_checkpoint(missing), DataError);
  CHECK_THROWS_AS(load_generator(missing), DataError);
  CHECK_THROWS_AS(Trainer::from_checkpoint(t.checkpoint(), "n_domains = 3"), DataError);
}

TEST_CASE("imputation is clamped, deterministic and shaped like a domain image") {
  const auto ds = synth_dataset(6, 4, 8, 8, 11);
  TrainConfig c = tiny_config();
  c.joint_steps = 4;
  Trainer t(c);
  t.train(ds.samples);
  const Generator<float> g = load_generator(t.checkpoint());
  CHECK(testing::fingerprint(g.params()) == testing::fingerprint(t.generator().params()));

  const DomainSample& s = ds.samples[0];
  const Tensor a = impute(g, s, 1);
  const Tensor b = impute(g, s, 1);
  CHECK(a.shape() == s.image_shape());
  CHECK(testing::same_bytes(a, b));
  for (float v : a.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // the mask alone changes the trained model's output
  const Tensor to_one = impute(g, s, 1, {2});
  const Tensor to_two = impute(g, s, 2, {1});
  CHECK(testing::max_abs_diff(to_one, to_two) > 0.0);

  DomainSample lonely = s;
  lonely.available = {false, true, false, false};
  CHECK_THROWS_AS(impute(g, lonely, 1), DataError);
  CHECK_NOTHROW(impute(g, lonely, 0));
}

TEST_CASE("metrics csv layout") {
  MetricsRow row;
  row.step = 7;
  row.domain = "all";
  row.nmse = 0.25;
  row.ssim = 0.5;
  row.losses.mcc = 1.5;
  const fs::path p = fs::temp_directory_path() / "collagan_metrics.csv";
  write_metrics_csv(p, {row});
  const std::string text = read_text(p);
  CHECK(text.rfind(std::string(kMetricsHeader) + "\n7,all,", 0) == 0);
  fs::remove(p);
}
