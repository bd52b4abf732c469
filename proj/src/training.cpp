#include "collagan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "collagan/errors.hpp"
#include "collagan/ops.hpp"

namespace collagan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string rng_to_text(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_text(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 rng;
  in >> rng;
  if (!in) throw DataError("checkpoint: malformed RNG state");
  return rng;
}

// Restores requires_grad on the discriminator even when an update throws.
class FreezeGuard {
 public:
  explicit FreezeGuard(nn::ParameterStore<float>& store) : store_(store) { store_.set_trainable(false); }
  ~FreezeGuard() { store_.set_trainable(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  nn::ParameterStore<float>& store_;
};

bool is_complete(const DomainSample& s) {
  return std::all_of(s.available.begin(), s.available.end(), [](bool v) { return v; });
}

void append_named(std::vector<NamedTensor>& out, const std::string& prefix, const nn::ParameterStore<float>& store) {
  for (const auto& e : store.entries()) out.push_back({prefix + e.name, e.tensor.clone()});
}

void append_moments(std::vector<NamedTensor>& out, const std::string& prefix, const nn::ParameterStore<float>& store,
                    const Adam<float>& adam) {
  const auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) out.push_back({prefix + "m/" + entries[i].name, adam.first_moments()[i].clone()});
  for (std::size_t i = 0; i < entries.size(); ++i) out.push_back({prefix + "v/" + entries[i].name, adam.second_moments()[i].clone()});
}

const Tensor& find_tensor(const Checkpoint& ckpt, const std::string& name, const Shape& shape) {
  const Tensor& t = ckpt.tensor(name);
  if (t.shape() != shape) {
    throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape()) + ", model expects " +
                    shape_str(shape));
  }
  return t;
}

void copy_into(Tensor& dst, const Tensor& src) {
  auto s = src.data();
  std::copy(s.begin(), s.end(), dst.data().begin());
}

std::string format_row(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%llu,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<unsigned long long>(r.step), r.domain.c_str(), r.nmse, r.ssim, r.losses.mcc,
                r.losses.mcc_ssim, r.losses.gan_gen, r.losses.gan_dsc, r.losses.clsf_real, r.losses.clsf_fake);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) out << format_row(r) << "\n";
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

struct Trainer::Generation {
  std::size_t target = 0;
  Tensor forward;                        // (B,C,H,W) imputed target domain
  std::vector<std::size_t> cycle_domains;  // every domain but the target
  std::vector<Tensor> reconstructions;   // aligned with cycle_domains
  std::vector<Tensor> originals;         // aligned with cycle_domains
  std::size_t batch = 0;
};

Trainer::Trainer(TrainConfig config)
    : config_((config.validate(), config)),
      generator_(config_.generator_spec(), splitmix64(config_.seed ^ 0x47)),
      discriminator_(config_.discriminator_spec(), splitmix64(config_.seed ^ 0x44)),
      adam_g_(generator_.params().tensors(), config_.adam),
      adam_d_(discriminator_.params().tensors(), config_.adam),
      rng_(splitmix64(config_.seed ^ 0x52)) {}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt, const std::string& overrides) {
  TrainConfig config = TrainConfig::from_text(ckpt.config_text);
  config.apply_text(overrides);
  Trainer t(config);
  // Validate every tensor before touching the model.
  auto& gs = t.generator_.params();
  auto& ds = t.discriminator_.params();
  for (const auto& e : gs.entries()) {
    find_tensor(ckpt, "G/" + e.name, e.tensor.shape());
    find_tensor(ckpt, "optG/m/" + e.name, e.tensor.shape());
    find_tensor(ckpt, "optG/v/" + e.name, e.tensor.shape());
  }
  for (const auto& e : ds.entries()) {
    find_tensor(ckpt, "D/" + e.name, e.tensor.shape());
    find_tensor(ckpt, "optD/m/" + e.name, e.tensor.shape());
    find_tensor(ckpt, "optD/v/" + e.name, e.tensor.shape());
  }
  const std::size_t expected = 3 * (gs.entries().size() + ds.entries().size());
  if (ckpt.tensors.size() != expected) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                    std::to_string(expected));
  }
  std::mt19937_64 rng = rng_from_text(ckpt.rng_state);

  for (std::size_t i = 0; i < gs.entries().size(); ++i) {
    const auto& name = gs.entries()[i].name;
    Tensor p = gs.entries()[i].tensor;
    copy_into(p, ckpt.tensor("G/" + name));
    copy_into(t.adam_g_.first_moments()[i], ckpt.tensor("optG/m/" + name));
    copy_into(t.adam_g_.second_moments()[i], ckpt.tensor("optG/v/" + name));
  }
  for (std::size_t i = 0; i < ds.entries().size(); ++i) {
    const auto& name = ds.entries()[i].name;
    Tensor p = ds.entries()[i].tensor;
    copy_into(p, ckpt.tensor("D/" + name));
    copy_into(t.adam_d_.first_moments()[i], ckpt.tensor("optD/m/" + name));
    copy_into(t.adam_d_.second_moments()[i], ckpt.tensor("optD/v/" + name));
  }
  t.adam_g_.set_steps(ckpt.adam_g_steps);
  t.adam_d_.set_steps(ckpt.adam_d_steps);
  t.rng_ = rng;
  t.step_ = ckpt.step;
  t.pretrain_done_ = ckpt.pretrain_done;
  return t;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = config_.to_text();
  append_named(c.tensors, "G/", generator_.params());
  append_named(c.tensors, "D/", discriminator_.params());
  append_moments(c.tensors, "optG/", generator_.params(), adam_g_);
  append_moments(c.tensors, "optD/", discriminator_.params(), adam_d_);
  c.adam_g_steps = adam_g_.steps();
  c.adam_d_steps = adam_d_.steps();
  c.rng_state = rng_to_text(rng_);
  c.step = step_;
  c.pretrain_done = pretrain_done_;
  return c;
}

Tensor Trainer::generate(const Tensor& input) {
  ++counters_.generator_calls;
  Tensor out = generator_.forward(input);
  generated_.push_back(out.impl_ptr());
  return out;
}

DiscriminatorOutput<float> Trainer::discriminate(const Tensor& images, nn::Mode mode) {
  ++counters_.discriminator_forwards;
  return discriminator_.forward(images, mode, &rng_);
}

Tensor Trainer::classification_term(ClsfTerm term, const Tensor& images, const Tensor& probs,
                                    const std::vector<std::size_t>& labels) {
  const bool on_generated = std::any_of(generated_.begin(), generated_.end(),
                                        [&](const auto& p) { return p == images.impl_ptr(); });
  if (clsf_hook_) clsf_hook_(term, on_generated);
  if (term == ClsfTerm::real && on_generated) {
    throw std::logic_error("real-image classification loss evaluated on generated images");
  }
  if (term == ClsfTerm::fake && !on_generated) {
    throw std::logic_error("fake-image classification loss evaluated on real images");
  }
  return clsf_loss(probs, labels);
}

void Trainer::pretrain_classifier(const std::vector<const DomainSample*>& train, std::size_t epochs) {
  if (train.empty()) throw DataError("pretrain: empty training set");
  const std::size_t n = config_.n_domains;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng_)]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config_.batch_size);
      std::vector<Tensor> images;
      std::vector<std::size_t> labels;
      for (std::size_t i = begin; i < end; ++i) {
        const DomainSample& s = *train[order[i]];
        for (std::size_t d = 0; d < n; ++d) {
          if (!s.available[d]) continue;
          Shape shape = s.image_shape();
          shape.insert(shape.begin(), 1);
          images.push_back(s.images[d].reshape(shape));
          labels.push_back(d);
        }
      }
      if (images.empty()) continue;
      generated_.clear();
      const Tensor real = ops::concat(images, 0);
      Graph<float> graph;
      GraphScope<float> scope(graph);
      const Tensor probs = discriminator_.classify(real, nn::Mode::train, &rng_);
      const Tensor loss = classification_term(ClsfTerm::real, real, probs, labels);
      if (!std::isfinite(loss.item())) throw NumericalError("pretrain: non-finite classification loss");
      graph.backward(loss);
      adam_d_.step();
      last_pretrain_loss_ = loss.item();
    }
  }
}

Trainer::Generation Trainer::generate_all(const std::vector<const DomainSample*>& batch, std::size_t target,
                                          const std::vector<std::vector<std::size_t>>& null_sets) {
  const std::size_t n = config_.n_domains;
  Generation gen;
  gen.target = target;
  gen.batch = batch.size();
  gen.forward = generate(assemble_batch(batch, target, null_sets));

  Shape slot_shape = batch[0]->image_shape();
  slot_shape.insert(slot_shape.begin(), batch.size());
  std::vector<Tensor> originals(n);
  for (std::size_t d = 0; d < n; ++d) originals[d] = stack_domain(batch, d);

  for (std::size_t back = 0; back < n; ++back) {
    if (back == target) continue;
    std::vector<std::optional<Tensor>> slots(n);
    for (std::size_t d = 0; d < n; ++d) {
      if (d == back) continue;
      slots[d] = d == target ? gen.forward : originals[d];
    }
    if (config_.cycle_input_dropout) {
      for (std::size_t d : input_dropout_sample(rng_, n, back, config_.input_dropout_rate)) {
        if (d != target) slots[d].reset();
      }
    }
    gen.reconstructions.push_back(generate(assemble_slots(slots, back, slot_shape)));
    gen.cycle_domains.push_back(back);
    gen.originals.push_back(originals[back]);
    ++counters_.cycle_reconstructions;
  }
  return gen;
}

namespace {

struct FakeBatch {
  Tensor images;
  std::vector<std::size_t> labels;
};

FakeBatch fake_batch(const Trainer& trainer, const Tensor& forward, std::size_t target,
                     const std::vector<Tensor>& reconstructions, const std::vector<std::size_t>& cycle_domains,
                     std::size_t batch) {
  const AdversarialTarget mode = trainer.config().adversarial_target;
  std::vector<Tensor> parts;
  FakeBatch fb;
  if (mode != AdversarialTarget::cycle) {
    parts.push_back(forward);
    fb.labels.insert(fb.labels.end(), batch, target);
  }
  if (mode != AdversarialTarget::forward) {
    for (std::size_t i = 0; i < reconstructions.size(); ++i) {
      parts.push_back(reconstructions[i]);
      fb.labels.insert(fb.labels.end(), batch, cycle_domains[i]);
    }
  }
  fb.images = parts.size() == 1 ? parts[0] : ops::concat(parts, 0);
  return fb;
}

}  // namespace

void Trainer::update_generator(Graph<float>& graph, const Generation& gen, nn::Mode d_mode, LossParts& parts) {
  FakeBatch fake = fake_batch(*this, gen.forward, gen.target, gen.reconstructions, gen.cycle_domains, gen.batch);
  generated_.push_back(fake.images.impl_ptr());
  FreezeGuard freeze(discriminator_.params());
  const auto out = discriminate(fake.images, d_mode);
  const Tensor gan = lsgan_gen_loss(out.patch);
  const Tensor clsf = classification_term(ClsfTerm::fake, fake.images, out.probs, fake.labels);
  const Tensor mcc = mcc_loss(gen.originals, gen.reconstructions);
  const Tensor mcc_ssim = mcc_ssim_loss(gen.originals, gen.reconstructions, SsimConfig{});
  parts.mcc = mcc.item();
  parts.mcc_ssim = mcc_ssim.item();
  parts.gan_gen = gan.item();
  parts.clsf_fake = clsf.item();
  try {
    aggregate(parts, config_.weights);
  } catch (const NumericalError& e) {
    LossReport snapshot;
    snapshot.mcc = parts.mcc;
    snapshot.mcc_ssim = parts.mcc_ssim;
    snapshot.gan_gen = parts.gan_gen;
    snapshot.gan_dsc = parts.gan_dsc;
    snapshot.clsf_real = parts.clsf_real;
    snapshot.clsf_fake = parts.clsf_fake;
    throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step_) + " [" + snapshot.to_string() + "]");
  }
  const auto& w = config_.weights;
  const Tensor total = ops::weighted_sum<float>({mcc, mcc_ssim, gan, clsf},
                                                {static_cast<float>(w.mcc), static_cast<float>(w.mcc_ssim),
                                                 static_cast<float>(w.gan), static_cast<float>(w.clsf)});
  graph.backward(total);
  adam_g_.step();
}

LossReport Trainer::joint_step(const std::vector<const DomainSample*>& batch) {
  if (batch.empty()) throw DataError("joint step: empty batch");
  for (const DomainSample* s : batch) {
    if (!is_complete(*s)) throw DataError("joint step: sample '" + s->subject_id + "' is incomplete");
  }
  const std::size_t n = config_.n_domains;
  counters_ = {};
  generated_.clear();

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t target = pick(rng_);
  std::vector<std::vector<std::size_t>> null_sets;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    null_sets.push_back(input_dropout_sample(rng_, n, target, config_.input_dropout_rate));
  }

  Graph<float> graph;
  GraphScope<float> scope(graph);
  const Generation gen = generate_all(batch, target, null_sets);

  LossParts parts;
  {
    std::vector<Tensor> real_parts;
    std::vector<std::size_t> real_labels;
    for (std::size_t d = 0; d < n; ++d) {
      real_parts.push_back(stack_domain(batch, d));
      real_labels.insert(real_labels.end(), batch.size(), d);
    }
    const Tensor real = ops::concat(real_parts, 0).detach();
    FakeBatch fake = fake_batch(*this, gen.forward, target, gen.reconstructions, gen.cycle_domains, batch.size());
    const Tensor fake_images = fake.images.detach();
    generated_.push_back(fake_images.impl_ptr());

    Graph<float> d_graph;
    GraphScope<float> d_scope(d_graph);
    const auto out_real = discriminate(real, nn::Mode::train);
    const auto out_fake = discriminate(fake_images, nn::Mode::train);
    const Tensor gan_dsc = lsgan_dsc_loss(out_real.patch, out_fake.patch);
    const Tensor clsf_real = classification_term(ClsfTerm::real, real, out_real.probs, real_labels);
    parts.gan_dsc = gan_dsc.item();
    parts.clsf_real = clsf_real.item();
    if (!std::isfinite(parts.gan_dsc) || !std::isfinite(parts.clsf_real)) {
      throw NumericalError("non-finite discriminator loss at step " + std::to_string(step_) +
                           " [gan_dsc=" + std::to_string(parts.gan_dsc) +
                           " clsf_real=" + std::to_string(parts.clsf_real) + "]");
    }
    d_graph.backward(ops::add(gan_dsc, clsf_real));
    adam_d_.step();
  }

  update_generator(graph, gen, nn::Mode::train, parts);
  last_report_ = aggregate(parts, config_.weights);
  return last_report_;
}

LossReport Trainer::generator_step(const std::vector<const DomainSample*>& batch, std::size_t target,
                                   const std::vector<std::vector<std::size_t>>& null_sets) {
  if (batch.empty()) throw DataError("generator step: empty batch");
  if (target >= config_.n_domains) throw DataError("generator step: target out of range");
  counters_ = {};
  generated_.clear();
  Graph<float> graph;
  GraphScope<float> scope(graph);
  const Generation gen = generate_all(batch, target, null_sets);
  LossParts parts;
  update_generator(graph, gen, nn::Mode::eval, parts);
  return aggregate(parts, config_.weights);
}

std::vector<const DomainSample*> Trainer::sample_batch(const std::vector<const DomainSample*>& pool) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t b = std::min(config_.batch_size, pool.size());
  std::vector<const DomainSample*> out;
  // Partial Fisher-Yates: the first b positions form a uniform sample.
  for (std::size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng_)]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

TrainResult Trainer::train(const std::vector<DomainSample>& dataset, const std::filesystem::path& out_dir) {
  if (dataset.empty()) throw DataError("train: empty dataset");
  for (const auto& s : dataset) {
    s.validate();
    if (s.n_domains() != config_.n_domains) {
      throw DataError("train: sample '" + s.subject_id + "' has " + std::to_string(s.n_domains()) +
                      " domains, config expects " + std::to_string(config_.n_domains));
    }
    const Shape expected{config_.in_channels, config_.image_size, config_.image_size};
    if (s.image_shape() != expected) {
      throw DataError("train: sample '" + s.subject_id + "' has image shape " + shape_str(s.image_shape()) +
                      ", config expects " + shape_str(expected));
    }
  }
  std::vector<std::string> ids;
  for (const auto& s : dataset) ids.push_back(s.subject_id);
  const DatasetSplit split = split_by_subject(ids, config_.split, config_.seed);
  if (split.train.empty()) throw DataError("train: the split leaves no training subjects");
  const auto train_set = select_subjects(dataset, split.train);
  auto val_set = select_subjects(dataset, split.validation);
  if (val_set.empty()) val_set = train_set;
  std::vector<const DomainSample*> complete;
  for (const DomainSample* s : train_set) {
    if (is_complete(*s)) complete.push_back(s);
  }

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  if (!pretrain_done_) {
    pretrain_classifier(train_set, config_.classifier_pretrain_epochs);
    pretrain_done_ = true;
    last_report_ = LossReport{};
    last_report_.clsf_real = last_pretrain_loss_;
  }

  TrainResult result;
  auto record = [&]() {
    const auto table = evaluate(generator_predictor(generator_), val_set);
    MetricsRow all;
    all.step = step_;
    all.domain = "all";
    all.losses = last_report_;
    for (const auto& m : table) {
      MetricsRow row;
      row.step = step_;
      row.domain = std::to_string(m.domain);
      row.nmse = m.nmse;
      row.ssim = m.ssim;
      row.losses = last_report_;
      result.domain_metrics.push_back(row);
      all.nmse += m.nmse / static_cast<double>(table.size());
      all.ssim += m.ssim / static_cast<double>(table.size());
    }
    result.metrics.push_back(all);
  };

  if (step_ == 0) record();
  if (step_ < config_.joint_steps && complete.empty()) throw DataError("train: no complete training samples");
  while (step_ < config_.joint_steps) {
    joint_step(sample_batch(complete));
    ++step_;
    if (step_ % config_.eval_interval == 0) record();
    if (!out_dir.empty() && config_.checkpoint_interval > 0 && step_ % config_.checkpoint_interval == 0) {
      save_checkpoint(out_dir / ("checkpoint_" + std::to_string(step_) + ".clgn"), checkpoint());
    }
  }
  if (!out_dir.empty()) {
    save_checkpoint(out_dir / "final.clgn", checkpoint());
    write_metrics_csv(out_dir / "metrics.csv", result.metrics);
    write_metrics_csv(out_dir / "metrics_domains.csv", result.domain_metrics);
  }
  return result;
}

Generator<float> load_generator(const Checkpoint& ckpt) {
  const TrainConfig config = TrainConfig::from_text(ckpt.config_text);
  config.validate();
  Generator<float> g(config.generator_spec(), 0);
  for (const auto& e : g.params().entries()) find_tensor(ckpt, "G/" + e.name, e.tensor.shape());
  for (const auto& e : g.params().entries()) {
    Tensor p = e.tensor;
    copy_into(p, ckpt.tensor("G/" + e.name));
  }
  return g;
}

Tensor impute(const Generator<float>& generator, const DomainSample& sample, std::size_t target,
              const std::vector<std::size_t>& null_set) {
  NoGradScope<float> no_grad;
  const Tensor input = assemble_input(sample, target, null_set);
  const Tensor out = ops::clamp(generator.forward(input), 0.0f, 1.0f);
  return out.reshape(sample.image_shape()).detach();
}

Predictor generator_predictor(const Generator<float>& generator) {
  return [&generator](const DomainSample& sample, std::size_t target, const std::vector<std::size_t>& null_set) {
    return impute(generator, sample, target, null_set);
  };
}

}  // namespace collagan
