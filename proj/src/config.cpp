#include "collagan/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "collagan/errors.hpp"

namespace collagan {

std::string to_string(AdversarialTarget target) {
  switch (target) {
    case AdversarialTarget::forward: return "forward";
    case AdversarialTarget::cycle: return "cycle";
    case AdversarialTarget::both: return "both";
  }
  return "forward";
}

AdversarialTarget parse_adversarial_target(const std::string& name) {
  if (name == "forward") return AdversarialTarget::forward;
  if (name == "cycle") return AdversarialTarget::cycle;
  if (name == "both") return AdversarialTarget::both;
  throw ConfigError("unknown adversarial target '" + name + "' (expected forward, cycle or both)");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + text + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError("config key '" + key + "': expected a finite number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

Field size_field(const char* key, std::size_t TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<std::size_t>(parse_u64(k, v));
          }};
}

Field double_field(const char* key, double TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return format_double(c.*member); },
          [member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); }};
}

template <typename Get, typename Ref>
Field nested_double(const char* key, Get get, Ref ref) {
  return {key, [get](const TrainConfig& c) { return format_double(get(c)); },
          [ref](TrainConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      size_field("n_domains", &TrainConfig::n_domains),
      size_field("in_channels", &TrainConfig::in_channels),
      size_field("image_size", &TrainConfig::image_size),
      {"generator_arch", [](const TrainConfig& c) { return to_string(c.generator_arch); },
       [](TrainConfig& c, const std::string&, const std::string& v) { c.generator_arch = parse_generator_arch(v); }},
      size_field("generator_width", &TrainConfig::generator_width),
      size_field("generator_depth", &TrainConfig::generator_depth),
      size_field("residual_blocks", &TrainConfig::residual_blocks),
      size_field("discriminator_width", &TrainConfig::discriminator_width),
      size_field("discriminator_downsamples", &TrainConfig::discriminator_downsamples),
      {"multi_scale", [](const TrainConfig& c) { return std::string(c.multi_scale ? "true" : "false"); },
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.multi_scale = parse_bool(k, v); }},
      double_field("discriminator_dropout", &TrainConfig::discriminator_dropout),
      nested_double("lambda_mcc", [](const TrainConfig& c) { return c.weights.mcc; },
                    [](TrainConfig& c) -> double& { return c.weights.mcc; }),
      nested_double("lambda_mcc_ssim", [](const TrainConfig& c) { return c.weights.mcc_ssim; },
                    [](TrainConfig& c) -> double& { return c.weights.mcc_ssim; }),
      nested_double("lambda_gan", [](const TrainConfig& c) { return c.weights.gan; },
                    [](TrainConfig& c) -> double& { return c.weights.gan; }),
      nested_double("lambda_clsf", [](const TrainConfig& c) { return c.weights.clsf; },
                    [](TrainConfig& c) -> double& { return c.weights.clsf; }),
      nested_double("lr", [](const TrainConfig& c) { return c.adam.lr; },
                    [](TrainConfig& c) -> double& { return c.adam.lr; }),
      nested_double("beta1", [](const TrainConfig& c) { return c.adam.beta1; },
                    [](TrainConfig& c) -> double& { return c.adam.beta1; }),
      nested_double("beta2", [](const TrainConfig& c) { return c.adam.beta2; },
                    [](TrainConfig& c) -> double& { return c.adam.beta2; }),
      nested_double("eps", [](const TrainConfig& c) { return c.adam.eps; },
                    [](TrainConfig& c) -> double& { return c.adam.eps; }),
      size_field("batch_size", &TrainConfig::batch_size),
      size_field("classifier_pretrain_epochs", &TrainConfig::classifier_pretrain_epochs),
      size_field("joint_steps", &TrainConfig::joint_steps),
      double_field("input_dropout_rate", &TrainConfig::input_dropout_rate),
      {"cycle_input_dropout", [](const TrainConfig& c) { return std::string(c.cycle_input_dropout ? "true" : "false"); },
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.cycle_input_dropout = parse_bool(k, v); }},
      {"adversarial_target", [](const TrainConfig& c) { return to_string(c.adversarial_target); },
       [](TrainConfig& c, const std::string&, const std::string& v) {
         c.adversarial_target = parse_adversarial_target(v);
       }},
      {"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
      size_field("eval_interval", &TrainConfig::eval_interval),
      size_field("checkpoint_interval", &TrainConfig::checkpoint_interval),
      nested_double("split_train", [](const TrainConfig& c) { return c.split[0]; },
                    [](TrainConfig& c) -> double& { return c.split[0]; }),
      nested_double("split_validation", [](const TrainConfig& c) { return c.split[1]; },
                    [](TrainConfig& c) -> double& { return c.split[1]; }),
      nested_double("split_test", [](const TrainConfig& c) { return c.split[2]; },
                    [](TrainConfig& c) -> double& { return c.split[2]; }),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
  generator_spec().validate();
  discriminator_spec().validate();
  weights.validate();
  if (!(adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("eps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(input_dropout_rate >= 0.0 && input_dropout_rate < 1.0)) throw ConfigError("input_dropout_rate must lie in [0, 1)");
  if (eval_interval == 0) throw ConfigError("eval_interval must be at least 1");
  double total = 0.0;
  for (double f : split) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

GeneratorSpec TrainConfig::generator_spec() const {
  GeneratorSpec g;
  g.arch = generator_arch;
  g.n_domains = n_domains;
  g.in_channels = in_channels;
  g.base_width = generator_width;
  g.depth = generator_depth;
  g.residual_blocks = residual_blocks;
  return g;
}

DiscriminatorSpec TrainConfig::discriminator_spec() const {
  DiscriminatorSpec d;
  d.n_domains = n_domains;
  d.in_channels = in_channels;
  d.image_size = image_size;
  d.base_width = discriminator_width;
  d.n_downsamples = discriminator_downsamples;
  d.multi_scale = multi_scale;
  d.dropout_rate = discriminator_dropout;
  return d;
}

void TrainConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, key, trim(value)); }

std::vector<std::string> TrainConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

std::string TrainConfig::get(const std::string& key) const { return find_field(key).get(*this); }

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void TrainConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    }
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  c.apply_text(text);
  return c;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return TrainConfig::from_text(ss.str());
}

}  // namespace collagan
