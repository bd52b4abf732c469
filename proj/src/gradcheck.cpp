#include "collagan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <memory>
#include <random>
#include <type_traits>

#include "collagan/data.hpp"
#include "collagan/errors.hpp"
#include "collagan/layers.hpp"
#include "collagan/losses.hpp"
#include "collagan/models.hpp"
#include "collagan/ops.hpp"

namespace collagan {

namespace {

template <typename T>
std::vector<std::vector<double>> analytic_gradients(const ScalarFn<T>& f, std::vector<BasicTensor<T>>& inputs) {
  for (auto& x : inputs) {
    x.clear_grad();
    x.set_requires_grad(true);
  }
  {
    Graph<T> graph;
    GraphScope<T> scope(graph);
    const BasicTensor<T> loss = f(inputs);
    graph.backward(loss);
  }
  std::vector<std::vector<double>> out;
  for (auto& x : inputs) {
    std::vector<double> g(x.numel(), 0.0);
    if (x.has_grad()) {
      auto src = x.grad();
      for (std::size_t i = 0; i < src.size(); ++i) g[i] = static_cast<double>(src[i]);
    }
    x.clear_grad();
    out.push_back(std::move(g));
  }
  return out;
}

template <typename T, typename R>
double compare(const std::vector<std::vector<double>>& analytic, const ScalarFn<R>& f,
               std::vector<BasicTensor<R>>& inputs, double h) {
  double max_diff = 0.0, max_ref = 0.0;
  NoGradScope<R> no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& x = inputs[k];
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const R saved = x[i];
      x[i] = static_cast<R>(static_cast<double>(saved) + h);
      const double up = static_cast<double>(f(inputs).item());
      x[i] = static_cast<R>(static_cast<double>(saved) - h);
      const double down = static_cast<double>(f(inputs).item());
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[k][i]));
      max_ref = std::max(max_ref, std::abs(numeric));
    }
  }
  return max_ref > 1e-12 ? max_diff / max_ref : max_diff;
}

}  // namespace

template <typename T>
double gradient_error(const ScalarFn<T>& f, std::vector<BasicTensor<T>> inputs, double h) {
  const auto analytic = analytic_gradients(f, inputs);
  return compare<T, T>(analytic, f, inputs, h);
}

double gradient_error_against(const ScalarFn<float>& f, std::vector<Tensor> inputs, const ScalarFn<double>& reference,
                              std::vector<Tensor64> reference_inputs, double h) {
  if (inputs.size() != reference_inputs.size()) throw ShapeError("gradcheck: reference inputs do not mirror inputs");
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].shape() != reference_inputs[k].shape()) {
      throw ShapeError("gradcheck: reference input " + std::to_string(k) + " has a different shape");
    }
  }
  const auto analytic = analytic_gradients(f, inputs);
  return compare<float, double>(analytic, reference, reference_inputs, h);
}

namespace {

template <typename T>
class Suite {
 public:
  Suite(const GradCheckOptions& options) : rng_(options.seed) {
    tolerance_ = options.tolerance > 0.0 ? options.tolerance : (sizeof(T) == 8 ? 1e-5 : 1e-3);
    // Central differences lose accuracy to rounding as h shrinks and to
    // curvature as it grows; these balance both per precision.
    step_ = sizeof(T) == 8 ? 1e-6 : 1e-2;
  }

  BasicTensor<T> uniform(Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng_));
    return t;
  }

  // Values with |v| in [lo, hi] and random sign; keeps inputs off kinks.
  BasicTensor<T> away_from_zero(Shape shape, double lo, double hi) {
    BasicTensor<T> t = uniform(std::move(shape), lo, hi);
    std::bernoulli_distribution flip(0.5);
    for (auto& v : t.data()) {
      if (flip(rng_)) v = -v;
    }
    return t;
  }

  // Projects a tensor output onto a fixed random direction.
  ScalarFn<T> project(std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>&)> g, const Shape& out_shape) {
    BasicTensor<T> dir = uniform(out_shape, -1.0, 1.0);
    return [g, dir](const std::vector<BasicTensor<T>>& in) { return ops::sum(ops::mul(g(in), dir)); };
  }

  void run(const std::string& name, const ScalarFn<T>& f, std::vector<BasicTensor<T>> inputs, bool composite = false) {
    GradCheckResult r;
    r.name = name;
    r.tolerance = tolerance_;
    r.max_rel_error = gradient_error<T>(f, std::move(inputs), composite ? 1e-3 : step_);
    r.passed = r.max_rel_error < tolerance_;
    results_.push_back(r);
  }

  void unary(const std::string& name, BasicTensor<T> (*op)(const BasicTensor<T>&), BasicTensor<T> x) {
    const Shape shape = x.shape();
    run(name, project([op](const auto& in) { return op(in[0]); }, shape), {x});
  }

  void binary(const std::string& name, BasicTensor<T> (*op)(const BasicTensor<T>&, const BasicTensor<T>&),
              BasicTensor<T> a, BasicTensor<T> b) {
    const Shape shape = a.shape();
    run(name, project([op](const auto& in) { return op(in[0], in[1]); }, shape), {a, b});
  }

  std::vector<GradCheckResult> all() {
    ops_cases();
    layer_cases();
    loss_cases();
    composite_cases();
    return results_;
  }

 private:
  void ops_cases() {
    const Shape s{3, 4};
    binary("add", &ops::add<T>, uniform(s, -1, 1), uniform(s, -1, 1));
    binary("sub", &ops::sub<T>, uniform(s, -1, 1), uniform(s, -1, 1));
    binary("mul", &ops::mul<T>, uniform(s, -1, 1), uniform(s, -1, 1));
    binary("div", &ops::div<T>, uniform(s, -1, 1), away_from_zero(s, 0.5, 1.5));
    unary("neg", &ops::neg<T>, uniform(s, -1, 1));
    run("add_scalar", project([](const auto& in) { return ops::add_scalar(in[0], T(0.7)); }, s), {uniform(s, -1, 1)});
    run("mul_scalar", project([](const auto& in) { return ops::mul_scalar(in[0], T(-1.3)); }, s), {uniform(s, -1, 1)});
    unary("square", &ops::square<T>, uniform(s, -1, 1));
    unary("abs", &ops::abs<T>, away_from_zero(s, 0.1, 1.0));
    unary("log", &ops::log<T>, uniform(s, 0.5, 2.0));
    unary("exp", &ops::exp<T>, uniform(s, -1, 1));
    {
      // Keep every element at least 0.1 from the clamp bounds.
      BasicTensor<T> x = uniform(s, -1, 1);
      const std::vector<double> values = {-0.9, -0.6, -0.2, 0.1, 0.3, 0.45, -0.8, 0.75, 0.9, -0.35, 0.05, -0.05};
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<T>(values[i]);
      run("clamp", project([](const auto& in) { return ops::clamp(in[0], T(-0.5), T(0.5)); }, s), {x});
    }
    unary("sigmoid", &ops::sigmoid<T>, uniform(s, -3, 3));
    run("leaky_relu", project([](const auto& in) { return ops::leaky_relu(in[0], T(0.2)); }, s),
        {away_from_zero(s, 0.1, 1.0)});
    run("sum", [](const auto& in) { return ops::sum(ops::square(in[0])); }, {uniform(s, -1, 1)});
    run("mean", [](const auto& in) { return ops::mean(ops::square(in[0])); }, {uniform(s, -1, 1)});
    run("weighted_sum",
        [](const auto& in) {
          return ops::weighted_sum<T>({ops::sum(ops::square(in[0])), ops::mean(in[1])}, {T(2.5), T(-0.5)});
        },
        {uniform(s, -1, 1), uniform(s, -1, 1)});
    run("matmul", project([](const auto& in) { return ops::matmul(in[0], in[1]); }, {3, 5}),
        {uniform({3, 4}, -1, 1), uniform({4, 5}, -1, 1)});
    run("softmax", project([](const auto& in) { return ops::softmax(in[0]); }, {2, 8}), {uniform({2, 8}, -2, 2)});
    run("log_softmax", project([](const auto& in) { return ops::log(ops::softmax(in[0])); }, {1, 8}),
        {uniform({1, 8}, -2, 2)});
    run("pick", project([](const auto& in) { return ops::pick(in[0], {2, 0, 3}); }, {3}), {uniform({3, 4}, -1, 1)});
    run("concat", project([](const auto& in) { return ops::concat<T>({in[0], in[1]}, 1); }, {2, 5, 3}),
        {uniform({2, 2, 3}, -1, 1), uniform({2, 3, 3}, -1, 1)});
    run("slice", project([](const auto& in) { return ops::slice(in[0], 1, 1, 3); }, {2, 2, 3}),
        {uniform({2, 4, 3}, -1, 1)});
    run("flatten", project([](const auto& in) { return ops::flatten(in[0]); }, {2, 12}), {uniform({2, 3, 2, 2}, -1, 1)});
    run("reshape", project([](const auto& in) { return in[0].reshape({4, 3}); }, {4, 3}), {uniform(s, -1, 1)});
  }

  void layer_cases() {
    const Shape x_shape{2, 3, 6, 6};
    run("conv2d_k3_s1_p1",
        project([](const auto& in) { return nn::conv2d(in[0], in[1], in[2], 1, 1); }, {2, 4, 6, 6}),
        {uniform(x_shape, -1, 1), uniform({4, 3, 3, 3}, -0.5, 0.5), uniform({4}, -0.5, 0.5)});
    run("conv2d_k4_s2_p1",
        project([](const auto& in) { return nn::conv2d(in[0], in[1], in[2], 2, 1); }, {2, 4, 3, 3}),
        {uniform(x_shape, -1, 1), uniform({4, 3, 4, 4}, -0.5, 0.5), uniform({4}, -0.5, 0.5)});
    run("conv2d_k4_s4_p0",
        project([](const auto& in) { return nn::conv2d(in[0], in[1], in[2], 4, 0); }, {1, 2, 2, 2}),
        {uniform({1, 3, 8, 8}, -1, 1), uniform({2, 3, 4, 4}, -0.5, 0.5), uniform({2}, -0.5, 0.5)});
    run("conv2d_k1",
        project([](const auto& in) { return nn::conv2d(in[0], in[1], in[2], 1, 0); }, {2, 2, 6, 6}),
        {uniform(x_shape, -1, 1), uniform({2, 3, 1, 1}, -0.5, 0.5), uniform({2}, -0.5, 0.5)});
    run("conv_transpose2d",
        project([](const auto& in) { return nn::conv_transpose2d(in[0], in[1], in[2], 2); }, {2, 2, 6, 6}),
        {uniform({2, 3, 3, 3}, -1, 1), uniform({2, 3, 2, 2}, -0.5, 0.5), uniform({2}, -0.5, 0.5)});
    run("instance_norm",
        project([](const auto& in) { return nn::instance_norm(in[0], in[1], in[2]); }, {2, 3, 4, 4}),
        {uniform({2, 3, 4, 4}, -1, 1), uniform({3}, 0.5, 1.5), uniform({3}, -0.5, 0.5)});
    run("avg_pool2", project([](const auto& in) { return nn::avg_pool2(in[0]); }, {2, 3, 3, 3}),
        {uniform(x_shape, -1, 1)});
    run("dropout",
        project(
            [](const auto& in) {
              std::mt19937_64 fixed(99);  // same mask on every evaluation
              return nn::dropout(in[0], 0.4, nn::Mode::train, fixed);
            },
            {3, 4}),
        {uniform({3, 4}, -1, 1)});
    run("fully_connected",
        project([](const auto& in) { return nn::fully_connected(in[0], in[1], in[2]); }, {2, 3}),
        {uniform({2, 5}, -1, 1), uniform({3, 5}, -0.5, 0.5), uniform({3}, -0.5, 0.5)});
    const std::vector<T> kernel = {T(0.1), T(0.2), T(0.4), T(0.2), T(0.1)};
    run("filter_reflect_rows",
        project([kernel](const auto& in) { return nn::filter_reflect(in[0], kernel, 2); }, {1, 2, 5, 6}),
        {uniform({1, 2, 5, 6}, -1, 1)});
    run("filter_reflect_cols",
        project([kernel](const auto& in) { return nn::filter_reflect(in[0], kernel, 3); }, {1, 2, 5, 6}),
        {uniform({1, 2, 5, 6}, -1, 1)});
  }

  void loss_cases() {
    const SsimConfig cfg;
    const Shape img{1, 1, 12, 12};
    run("ssim_map", project([cfg](const auto& in) { return ssim_map(in[0], in[1], cfg); }, img),
        {uniform(img, 0, 1), uniform(img, 0, 1)});
    run("ssim_loss", [cfg](const auto& in) { return ssim_loss(in[0], in[1], cfg); },
        {uniform(img, 0, 1), uniform(img, 0, 1)});
    const Shape small{2, 1, 6, 6};
    // Reconstructions kept at least 0.05 from the originals so |.| stays smooth.
    auto originals = uniform(small, 0, 1);
    auto recon_a = uniform(small, 0.05, 0.3);
    auto recon_b = uniform(small, 0.05, 0.3);
    for (std::size_t i = 0; i < recon_a.numel(); ++i) {
      recon_a[i] = originals[i] + (i % 2 ? recon_a[i] : -recon_a[i]);
      recon_b[i] = originals[i] + (i % 3 ? -recon_b[i] : recon_b[i]);
    }
    run("mcc_loss", [](const auto& in) { return mcc_loss<T>({in[0], in[1]}, {in[2], in[3]}); },
        {originals, originals.clone(), recon_a, recon_b});
    const Shape ss{1, 1, 12, 12};
    run("mcc_ssim_loss",
        [cfg](const auto& in) { return mcc_ssim_loss<T>({in[0], in[1]}, {in[2], in[3]}, cfg); },
        {uniform(ss, 0, 1), uniform(ss, 0, 1), uniform(ss, 0, 1), uniform(ss, 0, 1)});
    const Shape patch{2, 1, 2, 2};
    run("lsgan_dsc_loss", [](const auto& in) { return lsgan_dsc_loss(in[0], in[1]); },
        {uniform(patch, 0.05, 0.95), uniform(patch, 0.05, 0.95)});
    run("lsgan_gen_loss", [](const auto& in) { return lsgan_gen_loss(in[0]); }, {uniform(patch, 0.05, 0.95)});
    run("clsf_loss", [](const auto& in) { return clsf_loss(ops::softmax(in[0]), {1, 3, 0}); },
        {uniform({3, 4}, -2, 2)});
  }

  void composite_cases() {
    // Redraw until every pre-activation is at least 0.02 from the kink, so a
    // 1e-3 step cannot cross it.
    std::vector<BasicTensor<T>> cnr;
    while (true) {
      cnr = {uniform({1, 2, 5, 5}, -1, 1), uniform({3, 2, 3, 3}, -0.5, 0.5), uniform({3}, -0.1, 0.1),
             uniform({3}, 0.5, 1.5), uniform({3}, -0.5, 0.5)};
      NoGradScope<T> no_grad;
      const auto z = nn::instance_norm(nn::conv2d(cnr[0], cnr[1], cnr[2], 1, 1), cnr[3], cnr[4]);
      const auto values = z.data();
      if (std::all_of(values.begin(), values.end(), [](T v) { return std::abs(v) >= T(0.02); })) break;
    }
    if constexpr (std::is_same_v<T, double>) {
      run("conv_norm_relu", conv_norm_relu_fn<double>(), cnr, true);
    } else {
      std::vector<Tensor64> cnr64;
      for (const auto& t : cnr) cnr64.push_back(cast_tensor<double>(t));
      run_mixed("conv_norm_relu", conv_norm_relu_fn<float>(), cnr, conv_norm_relu_fn<double>(), cnr64);
    }

    GeneratorSpec gs;
    gs.n_domains = 3;
    gs.base_width = 2;
    gs.depth = 1;
    DiscriminatorSpec ds;
    ds.n_domains = 3;
    ds.image_size = 8;
    ds.base_width = 2;
    ds.n_downsamples = 1;
    ds.dropout_rate = 0.0;
    auto generator = std::make_shared<Generator<T>>(gs, 11);
    auto discriminator = std::make_shared<Discriminator<T>>(ds, 12);
    const Shape slot{1, 1, 8, 8};
    std::vector<BasicTensor<T>> images = {uniform(slot, 0.1, 0.9), uniform(slot, 0.1, 0.9), uniform(slot, 0.1, 0.9)};

    if constexpr (std::is_same_v<T, double>) {
      run_network("generator_total_gen", total_gen_fn<double>(generator, discriminator, images),
                  generator->params().tensors());
      run_network("discriminator_total_dsc", total_dsc_fn<double>(discriminator, images),
                  discriminator->params().tensors());
    } else {
      // Numeric gradients come from 64-bit twins holding the same values.
      auto generator64 = std::make_shared<Generator<double>>(gs, 11);
      auto discriminator64 = std::make_shared<Discriminator<double>>(ds, 12);
      copy_params(generator->params(), generator64->params());
      copy_params(discriminator->params(), discriminator64->params());
      std::vector<Tensor64> images64;
      for (const auto& im : images) images64.push_back(cast_tensor<double>(im));
      run_mixed("generator_total_gen", total_gen_fn<float>(generator, discriminator, images),
                generator->params().tensors(), total_gen_fn<double>(generator64, discriminator64, images64),
                generator64->params().tensors());
      run_mixed("discriminator_total_dsc", total_dsc_fn<float>(discriminator, images),
                discriminator->params().tensors(), total_dsc_fn<double>(discriminator64, images64),
                discriminator64->params().tensors());
    }
  }

  template <typename U>
  static ScalarFn<U> conv_norm_relu_fn() {
    return [](const std::vector<BasicTensor<U>>& in) {
      const auto y = nn::conv2d(in[0], in[1], in[2], 1, 1);
      return ops::sum(ops::leaky_relu(nn::instance_norm(y, in[3], in[4]), U(0.2)));
    };
  }

  template <typename U>
  static ScalarFn<U> total_gen_fn(std::shared_ptr<Generator<U>> generator, std::shared_ptr<Discriminator<U>> discriminator,
                                  std::vector<BasicTensor<U>> images) {
    // Generator loss of one imputation step: forward pass, both cycle
    // re-generations and the adversarial and classification terms.
    return [generator, discriminator, images](const std::vector<BasicTensor<U>>&) {
      const std::size_t target = 1;
      const Shape slot = images[0].shape();
      std::vector<std::optional<BasicTensor<U>>> in_slots = {images[0], std::nullopt, images[2]};
      const auto forward = generator->forward(assemble_slots(in_slots, target, slot));
      std::vector<BasicTensor<U>> originals, recon;
      for (std::size_t back : {std::size_t{0}, std::size_t{2}}) {
        std::vector<std::optional<BasicTensor<U>>> s(3);
        for (std::size_t d = 0; d < 3; ++d) {
          if (d != back) s[d] = d == target ? forward : images[d];
        }
        recon.push_back(generator->forward(assemble_slots(s, back, slot)));
        originals.push_back(images[back]);
      }
      const auto out = discriminator->forward(forward, nn::Mode::eval, nullptr);
      return ops::weighted_sum<U>({mcc_loss(originals, recon), mcc_ssim_loss(originals, recon, SsimConfig{}),
                                   lsgan_gen_loss(out.patch), clsf_loss(out.probs, {target})},
                                  {U(10), U(1), U(1), U(1)});
    };
  }

  template <typename U>
  static ScalarFn<U> total_dsc_fn(std::shared_ptr<Discriminator<U>> discriminator, std::vector<BasicTensor<U>> images) {
    return [discriminator, images](const std::vector<BasicTensor<U>>&) {
      const auto real = discriminator->forward(images[0], nn::Mode::eval, nullptr);
      const auto fake = discriminator->forward(images[1], nn::Mode::eval, nullptr);
      return ops::add(lsgan_dsc_loss(real.patch, fake.patch), clsf_loss(real.probs, {0}));
    };
  }

  static void copy_params(const nn::ParameterStore<float>& from, nn::ParameterStore<double>& to) {
    for (std::size_t i = 0; i < from.entries().size(); ++i) {
      Tensor64 dst = to.entries()[i].tensor;
      const auto src = from.entries()[i].tensor.data();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<double>(src[k]);
    }
  }

  // Networks with leaky ReLU need a step small enough not to cross a kink.
  void run_network(const std::string& name, const ScalarFn<T>& f, std::vector<BasicTensor<T>> inputs) {
    GradCheckResult r;
    r.name = name;
    r.tolerance = tolerance_;
    r.max_rel_error = gradient_error<T>(f, std::move(inputs), 1e-7);
    r.passed = r.max_rel_error < tolerance_;
    results_.push_back(r);
  }

  void run_mixed(const std::string& name, const ScalarFn<float>& f, std::vector<Tensor> inputs,
                 const ScalarFn<double>& reference, std::vector<Tensor64> reference_inputs) {
    GradCheckResult r;
    r.name = name;
    r.tolerance = tolerance_;
    r.max_rel_error = gradient_error_against(f, std::move(inputs), reference, std::move(reference_inputs), 1e-7);
    r.passed = r.max_rel_error < tolerance_;
    results_.push_back(r);
  }

  std::mt19937_64 rng_;
  double tolerance_ = 0.0;
  double step_ = 0.0;
  std::vector<GradCheckResult> results_;
};

}  // namespace

template <typename T>
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options) {
  Suite<T> suite(options);
  return suite.all();
}

template double gradient_error<float>(const ScalarFn<float>&, std::vector<Tensor>, double);
template double gradient_error<double>(const ScalarFn<double>&, std::vector<Tensor64>, double);
template std::vector<GradCheckResult> run_gradcheck_suite<float>(const GradCheckOptions&);
template std::vector<GradCheckResult> run_gradcheck_suite<double>(const GradCheckOptions&);

}  // namespace collagan
