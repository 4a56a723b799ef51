// Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Artifacts (CSV, PNG) go to --out.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ge/autoenc.hpp"
#include "ge/began.hpp"
#include "ge/data.hpp"
#include "ge/error.hpp"
#include "ge/evalkit.hpp"
#include "ge/imaging.hpp"
#include "ge/lasso.hpp"
#include "ge/nn.hpp"
#include "ge/solver.hpp"
#include "lasso_oracle.hpp"

namespace fs = std::filesystem;
using namespace ge;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor rand_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(s, std::move(v));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

// ---- 1: gradients ------------------------------------------------------------

Outcome gradient_correctness() {
  Rng rng(101);
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  auto check = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    const double e = grad_check(f, x, 1e-5);
    ++checks;
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  const int instances = 100;
  for (int t = 0; t < instances; ++t) {
    const std::size_t c = pick(rng, 1, 3), f = pick(rng, 1, 3);
    const int k = 2 * static_cast<int>(pick(rng, 0, 1)) + 1, s = static_cast<int>(pick(rng, 1, 2));
    const int p = static_cast<int>(pick(rng, 0, static_cast<std::size_t>(k / 2)));
    const std::size_t h = (pick(rng, 2, 4) - 1) * s + k - 2 * p, w = (pick(rng, 2, 4) - 1) * s + k - 2 * p;
    const std::size_t ku = static_cast<std::size_t>(k);
    Tensor x = rand_tensor({c, h, w}, rng), kern = rand_tensor({f, c, ku, ku}, rng), b = rand_tensor({f}, rng);
    Tensor kt = rand_tensor({c, f, ku, ku}, rng), bt = rand_tensor({f}, rng);
    check("conv2d/input", [&](const Tensor& v) { return sq_l2(conv2d(v, kern, b, s, p)); }, x);
    check("conv2d/kernel", [&](const Tensor& v) { return sq_l2(conv2d(x, v, b, s, p)); }, kern);
    check("conv2d/bias", [&](const Tensor& v) { return sq_l2(conv2d(x, kern, v, s, p)); }, b);
    check("conv2d_transpose/input", [&](const Tensor& v) { return sq_l2(conv2d_transpose(v, kt, bt, s, p)); }, x);
    check("conv2d_transpose/kernel", [&](const Tensor& v) { return sq_l2(conv2d_transpose(x, v, bt, s, p)); }, kt);
    check("conv2d_transpose/bias", [&](const Tensor& v) { return sq_l2(conv2d_transpose(x, kt, v, s, p)); }, bt);

    Tensor x2 = rand_tensor({c, 2 * h, 2 * w}, rng);
    check("upsample_nearest", [&](const Tensor& v) { return sq_l2(tanh(upsample_nearest(v, 2))); }, x);
    check("avgpool", [&](const Tensor& v) { return sq_l2(tanh(avgpool(v, 2))); }, x2);

    const std::size_t in = pick(rng, 1, 6), out = pick(rng, 1, 6), n = pick(rng, 1, 3);
    Tensor d = rand_tensor({n, in}, rng), dw = rand_tensor({in, out}, rng), db = rand_tensor({out}, rng);
    check("dense/input", [&](const Tensor& v) { return sq_l2(dense(v, dw, db)); }, d);
    check("dense/weight", [&](const Tensor& v) { return sq_l2(dense(d, v, db)); }, dw);
    check("dense/bias", [&](const Tensor& v) { return sq_l2(dense(d, dw, v)); }, db);

    Tensor a = rand_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng, -2.0, 2.0);
    Tensor target = rand_tensor(a.shape(), rng, -2.0, 2.0);
    check("elu", [&](const Tensor& v) { return sq_l2(elu(v)); }, a);
    check("tanh", [&](const Tensor& v) { return sq_l2(tanh(v)); }, a);
    check("sigmoid", [&](const Tensor& v) { return sq_l2(sigmoid(v)); }, a);
    check("matmul", [&](const Tensor& v) { return sq_l2(matmul(v, reshape(target, {target.shape()[1], target.shape()[0]}))); }, a);
    check("mul", [&](const Tensor& v) { return sum(mul(v, target)); }, a);
    check("mse", [&](const Tensor& v) { return mse(v, target); }, a);
    check("mean_abs_diff", [&](const Tensor& v) { return mean_abs_diff(v, target); }, a);
    check("sq_l2", [&](const Tensor& v) { return scale(sq_l2(v), 0.37); }, a);

    Tensor mask = rect_mask(2 * h, 2 * w, {pick(rng, 0, 2), pick(rng, 0, 2), 2, 2});
    check("mask_apply", [&](const Tensor& v) { return sq_l2(mask_apply(v, mask)); }, x2);
    AdjustmentOp shrink{AdjustmentKind::resize, {}, {c, h, w}};
    check("resize", [&](const Tensor& v) { return sq_l2(tanh(shrink.apply(v))); }, x2);
  }
  // Whole model objective, as the solver sees it.
  Network g = build_generator(3, 2, 3, {1, 8, 8}, 7).frozen_copy();
  Network en = build_encoder(EncoderVariant::ge1, 2, 2, 4, {1, 8, 8}, 8).frozen_copy();
  for (int t = 0; t < 20; ++t) {
    Tensor z = rand_tensor({3}, rng), m = rand_tensor({4}, rng);
    check("ge_objective", [&](const Tensor& v) { return ge_objective(v, en, g, AdjustmentOp{}, m, 1e-3); }, z);
  }
  return {worst < 1e-5, fmt("%d checks over %d instances, max relative error %.2e (%s)", checks, instances, worst,
                            worst_name.c_str())};
}

// ---- 2: adjoint ----------------------------------------------------------------

Outcome adjoint_property() {
  Rng rng(202);
  double worst = 0.0;
  const int combos = 60;
  for (int t = 0; t < combos; ++t) {
    const int k = 2 * static_cast<int>(pick(rng, 0, 2)) + 1, s = static_cast<int>(pick(rng, 1, 3));
    const int p = static_cast<int>(pick(rng, 0, static_cast<std::size_t>(k / 2)));
    const std::size_t c = pick(rng, 1, 4), f = pick(rng, 1, 4), oh = pick(rng, 1, 5), ow = pick(rng, 1, 5);
    const std::size_t h = (oh - 1) * s + k - 2 * p, w = (ow - 1) * s + k - 2 * p;
    const std::size_t ku = static_cast<std::size_t>(k);
    Tensor kern = rand_tensor({f, c, ku, ku}, rng), u = rand_tensor({c, h, w}, rng), v = rand_tensor({f, oh, ow}, rng);
    Tensor cu = conv2d(u, kern, Tensor::zeros({f}), s, p);
    Tensor tv = conv2d_transpose(v, kern, Tensor::zeros({c}), s, p);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cu.numel(); ++i) lhs += cu[i] * v[i];
    for (std::size_t i = 0; i < u.numel(); ++i) rhs += u[i] * tv[i];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {worst < 1e-10, fmt("%d shape/seed combinations, max |<Cu,v> - <u,C'v>| = %.2e", combos, worst)};
}

// ---- 3: filter rule --------------------------------------------------------------

Outcome architecture_rule() {
  int checked = 0, bad = 0;
  for (int f : {1, 4, 16, 64})
    for (int d = 1; d <= 16; ++d)
      for (auto variant : {EncoderVariant::ge0, EncoderVariant::ge1}) {
        const std::size_t side = std::size_t{1} << ((d + 1) / 2);
        NetworkSpec spec = build_encoder_spec(variant, d, f, 8, {1, side * 2, side * 2});
        int n = 0;
        for (const auto& l : spec.layers) {
          if (l.kind != LayerKind::conv) continue;
          ++n;
          const int want = variant == EncoderVariant::ge1 ? n * f : ((n + 2) / 3) * f;
          ++checked;
          bad += l.filters != want || encoder_filters(variant, n, f) != want;
        }
        bad += n != d;
      }
  return {bad == 0, fmt("%d conv layers checked for d <= 16, %d mismatches", checked, bad)};
}

// ---- 9: lasso oracle ----------------------------------------------------------------

Outcome lasso_equivalence() {
  Rng rng(909);
  const int instances = 50;
  double worst = -1.0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t p = pick(rng, 3, 12), m = pick(rng, 2, 8);
    Tensor a = rand_tensor({m, p}, rng), b = rand_tensor({m}, rng);
    const double alpha = rng.uniform(0.02, 0.5);
    LassoConfig cfg;
    cfg.alpha = alpha;
    cfg.iterations = 200000;
    cfg.tolerance = 1e-15;
    LassoResult r = lasso_solve(a, b, cfg);
    auto exact = ge::testing::exact_lasso(a, b, alpha);
    worst = std::max(worst, std::abs(lasso_objective(a, b, r.beta, alpha) - exact.objective));
  }
  return {worst < 1e-6, fmt("%d instances with p <= 12, max objective gap %.2e", instances, worst)};
}

// ---- 4-8: desk-scale pipeline ------------------------------------------------------

struct Desk {
  std::size_t n_images = 1000, size = 16;
  int max_blobs = 2;
  std::uint64_t seed = 1;

  // GAN
  std::size_t latent = 16;
  int g_layers = 4, g_filters = 16, d_depth = 4, d_filters = 8, d_m = 16;
  std::size_t began_steps = 8000;
  double gamma = 0.7, lambda_k = 0.01, began_lr = 5e-4;
  std::size_t window = 500;

  // AE (GE1)
  int ae_depth = 4, ae_filters = 8, dec_layers = 4, dec_filters = 16;
  std::size_t ae_steps = 10000;
  double ae_lr = 1e-3, fake_ratio = 0.5;

  std::size_t n_eval = 20;
  SolveConfig solve;  // defaults: 500 iterations, 2 restarts, lr 0.1, lambda 1e-3

  // Tasks
  double noise_sigma = 0.4, blur_sigma = 3.0;
  int blur_size = 15, sr_factor = 4;
  Rect hole{4, 4, 8, 8};
  std::size_t jobs = 1;
};

struct DeskOutcome {
  std::map<int, Outcome> criteria;
  std::optional<Outcome> residual;
  std::map<std::string, std::string> csv;  // name -> content
};

std::string began_csv(const std::vector<BeganRecord>& h) {
  std::ostringstream out;
  out << "step,L_real,L_fake,k_t,M\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    out << i << ',' << fmt("%.17g,%.17g,%.17g,%.17g", h[i].l_real, h[i].l_fake, h[i].k, h[i].m) << '\n';
  return out.str();
}

ImageSet first_n(const ImageSet& s, std::size_t n) {
  ImageSet out = s;
  if (out.images.size() > n) out.images.resize(n);
  return out;
}

DeskOutcome run_desk(const Desk& cfg, const fs::path& out, std::ostream& log, const std::set<int>& only) {
  DeskOutcome r;
  auto wanted = [&](int c) { return only.empty() || only.count(c); };
  auto t_all = Clock::now();
  fs::create_directories(out);

  ImageSet data = gen_blobs_dataset(cfg.n_images, cfg.size, cfg.max_blobs, cfg.seed);
  DataSplit split = split_dataset(data, cfg.seed);
  const Shape shape = data.shape();
  ImageSet test = first_n(split.test, cfg.n_eval);

  // BEGAN
  auto t0 = Clock::now();
  BeganConfig bc;
  bc.latent_dim = cfg.latent;
  bc.gamma = cfg.gamma;
  bc.lambda_k = cfg.lambda_k;
  bc.learning_rate = cfg.began_lr;
  bc.steps = cfg.began_steps;
  bc.seed = cfg.seed;
  BeganResult gan = train_began(split.train, build_generator_spec(static_cast<int>(cfg.latent), cfg.g_layers, cfg.g_filters, shape),
                                build_discriminator_spec(cfg.d_depth, cfg.d_filters, cfg.d_m, cfg.dec_layers, shape), bc);
  const Network& g = gan.generator;
  log << fmt("  began: %zu steps in %.0f s\n", cfg.began_steps, seconds_since(t0));
  r.csv["c4_began_history.csv"] = began_csv(gan.history);
  {
    Rng zr(mix_seed(cfg.seed, 77));
    Tensor samples = forward(g, sample_latent(64, cfg.latent, zr));
    std::vector<Tensor> tiles;
    for (std::size_t i = 0; i < 64; ++i) tiles.push_back(reshape(slice_rows(samples, i, i + 1), shape));
    write_png_grid(tiles, 8, out / "began_samples.png");
  }

  // GE1 autoencoders, one per width.
  std::map<std::size_t, AeResult> aes;
  auto ae_for = [&](std::size_t m) -> const AeResult& {
    auto it = aes.find(m);
    if (it != aes.end()) return it->second;
    auto ta = Clock::now();
    AeArchitecture arch;
    arch.depth = cfg.ae_depth;
    arch.filters = cfg.ae_filters;
    arch.m = static_cast<int>(m);
    arch.decoder_layers = cfg.dec_layers;
    arch.decoder_filters = cfg.dec_filters;
    AeConfig ac;
    ac.fake_ratio = cfg.fake_ratio;
    ac.steps = cfg.ae_steps;
    ac.learning_rate = cfg.ae_lr;
    ac.seed = mix_seed(cfg.seed, 100 + m);
    AeResult res = train_ae_pipeline(split.train, &g, arch, ac);
    log << fmt("  ae m=%zu: %zu steps in %.0f s\n", m, cfg.ae_steps, seconds_since(ta));
    return aes.emplace(m, std::move(res)).first->second;
  };

  const AeResult& ae8 = ae_for(8);
  const Network& en = ae8.encoder;
  save_checkpoint(g, out / "generator.gec");
  save_checkpoint(gan.discriminator, out / "discriminator.gec");
  save_checkpoint(en, out / "encoder_m8.gec");
  save_checkpoint(ae8.decoder, out / "decoder_m8.gec");

  if (wanted(4)) {
    const std::size_t w = std::min(cfg.window, gan.history.size() / 2);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
      first += gan.history[i].m;
      last += gan.history[gan.history.size() - w + i].m;
    }
    first /= static_cast<double>(w);
    last /= static_cast<double>(w);
    const double rec = reconstruction_mse(ae8.encoder, ae8.decoder, split.test);
    const double cst = constant_predictor_mse(split.test);
    r.csv["c4_summary.csv"] = fmt("quantity,value\nM_first_window,%.17g\nM_last_window,%.17g\nae_heldout_mse,%.17g\n"
                                  "constant_predictor_mse,%.17g\n",
                                  first, last, rec, cst);
    r.criteria[4] = {last < first && rec < 0.1 * cst,
                     fmt("M window mean %.4f -> %.4f; AE held-out MSE %.5f vs 0.1 x constant %.5f", first, last, rec,
                         0.1 * cst)};
  }

  if (wanted(5)) {
    auto tc = Clock::now();
    SolveConfig sc = cfg.solve;
    sc.jobs = cfg.jobs;
    Decomposition d = error_decomposition(g, en, sc, test, cfg.n_eval, mix_seed(cfg.seed, 5));
    std::string csv = "kind,index,mse\n";
    for (std::size_t i = 0; i < d.fake.size(); ++i) csv += fmt("fake,%zu,%.17g\n", i, d.fake[i]);
    for (std::size_t i = 0; i < d.real.size(); ++i) csv += fmt("real,%zu,%.17g\n", i, d.real[i]);
    r.csv["c5_decomposition.csv"] = csv;
    r.criteria[5] = {d.ratio < 1.0 && d.target_generator_hash == d.solver_generator_hash,
                     fmt("median fake %.5f, real %.5f, ratio %.3f (%.0f s)", d.fake_mse, d.real_mse, d.ratio,
                         seconds_since(tc))};

    // In-range residual with lambda 1e-4.
    SolveConfig sr = cfg.solve;
    sr.lambda = 1e-4;
    Rng zr(mix_seed(cfg.seed, 55));
    Tensor z0 = sample_latent(cfg.n_eval, cfg.latent, zr);
    std::vector<double> ratio(cfg.n_eval);
    for (std::size_t i = 0; i < cfg.n_eval; ++i) {
      Tensor m = forward(en, reshape(forward(g, reshape(slice_rows(z0, i, i + 1), {cfg.latent})), shape));
      sr.seed = mix_seed(cfg.seed, 500 + i);
      SolveResult s = solve_ge(m, en, g, AdjustmentOp{}, sr);
      Tensor diff = sub(forward(en, s.x_hat), m);
      const double res = sq_l2(diff).item();
      const double bound = 1e-3 * sq_l2(m).item() / static_cast<double>(m.numel());
      ratio[i] = res / bound;
    }
    std::string rcsv = "index,residual_over_bound\n";
    for (std::size_t i = 0; i < ratio.size(); ++i) rcsv += fmt("%zu,%.17g\n", i, ratio[i]);
    r.csv["c5_inrange_residual.csv"] = rcsv;
    const auto within = std::count_if(ratio.begin(), ratio.end(), [](double v) { return v < 1.0; });
    r.residual = Outcome{within == static_cast<long>(ratio.size()),
                         fmt("%ld/%zu in-range targets reach residual < 1e-3 |m|^2/dim(m) at lambda 1e-4; median "
                             "residual/bound %.3f",
                             within, ratio.size(), summarize(ratio).median)};
  }

  if (wanted(6)) {
    auto tc = Clock::now();
    Models models{g, extract_encoder(gan.discriminator), en};
    CompareConfig cc;
    cc.solve = cfg.solve;
    cc.seed = mix_seed(cfg.seed, 6);
    cc.jobs = cfg.jobs;
    cc.lasso_m = 4 * 8;
    cc.ga_m = 8;
    EvalReport rep = compare_methods(test, models, cc);
    r.csv["c6_compare.csv"] = rep.csv(false);
    write_comparison_grid(test, rep, out / "c6_grid.png");
    const double ge1 = rep.summary("ge1").median, ga = rep.summary("ga").median, lasso = rep.summary("lasso").median,
                 ge0 = rep.summary("ge0").median;
    r.criteria[6] = {ge1 <= 1.1 * ga && ge1 < lasso,
                     fmt("median MSE ge1 %.5f, ga %.5f, lasso(m=32) %.5f, ge0(m=%zu) %.5f (%.0f s)", ge1, ga, lasso,
                         models.ge0_encoder->spec().output_shape[0], ge0, seconds_since(tc))};
  }

  if (wanted(7)) {
    auto tc = Clock::now();
    EncoderSource source = [&](std::size_t m) { return ae_for(m).encoder; };
    SolveConfig sc = cfg.solve;
    sc.seed = mix_seed(cfg.seed, 7);
    SweepResult sw = sweep_measurements({4, 8, 16}, source, g, test, sc, cfg.jobs);
    std::string csv = "m,median_mse\n";
    bool ok = true;
    std::string pts;
    for (std::size_t i = 0; i < sw.curve.size(); ++i) {
      csv += fmt("%zu,%.17g\n", sw.curve[i].m, sw.curve[i].stats.median);
      pts += fmt(" m=%zu:%.5f", sw.curve[i].m, sw.curve[i].stats.median);
      if (i > 0) ok = ok && sw.curve[i].stats.median <= 1.1 * sw.curve[i - 1].stats.median;
    }
    r.csv["c7_sweep.csv"] = csv + sw.report.csv(false);
    write_file_atomic(out / "c7_sweep.svg", curve_svg(sw.curve, "median MSE by measurement size"));
    r.criteria[7] = {ok, "median MSE" + pts + fmt(" (%.0f s)", seconds_since(tc))};
  }

  if (wanted(8)) {
    auto tc = Clock::now();
    DegradationSpec p;
    p.sigma = cfg.noise_sigma;
    p.blur_sigma = cfg.blur_sigma;
    p.blur_size = cfg.blur_size;
    p.factor = cfg.sr_factor;
    p.mask = rect_mask(cfg.size, cfg.size, cfg.hole);
    p.seed = mix_seed(cfg.seed, 8);
    bool ok = true;
    std::string detail;
    for (Task task : {Task::denoise, Task::deblur, Task::superres, Task::inpaint}) {
      SolveConfig sc = cfg.solve;
      sc.seed = mix_seed(cfg.seed, 80 + static_cast<int>(task));
      EvalReport rep = evaluate_task(test, task, p, g, en, sc, cfg.jobs);
      const auto ge_m = rep.mse_of("ge"), deg = rep.mse_of("degraded");
      std::size_t better = 0;
      for (std::size_t i = 0; i < ge_m.size(); ++i) better += ge_m[i] < deg[i];
      const double frac = static_cast<double>(better) / static_cast<double>(ge_m.size());
      ok = ok && frac >= 0.7;
      detail += fmt("%s %zu/%zu (%.4f vs %.4f); ", to_string(task).c_str(), better, ge_m.size(), summarize(ge_m).median,
                    summarize(deg).median);
      r.csv["c8_" + to_string(task) + ".csv"] = rep.csv(false);
      std::vector<Tensor> tiles;
      const std::size_t cols = std::min<std::size_t>(8, test.size());
      for (std::size_t i = 0; i < cols; ++i) tiles.push_back(test.images[i]);
      for (std::size_t i = 0; i < cols; ++i) tiles.push_back(rep.reconstructions.at("degraded")[i]);
      for (std::size_t i = 0; i < cols; ++i) tiles.push_back(rep.reconstructions.at("ge")[i]);
      write_png_grid(tiles, cols, out / ("c8_" + to_string(task) + ".png"));
    }
    detail += "median MSE restored vs degraded" + fmt(" (%.0f s)", seconds_since(tc));
    r.criteria[8] = {ok, detail};
  }

  for (const auto& [name, content] : r.csv) write_file_atomic(out / name, content);
  log << fmt("  pipeline total %.0f s\n", seconds_since(t_all));
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale acceptance suite"};
  std::string out = "acceptance_out";
  std::vector<int> only_list;
  Desk desk;
  bool skip_repeat = false;
  app.add_option("--out", out, "artifact directory");
  app.add_option("--only", only_list, "run only these criteria")->delimiter(',');
  app.add_option("--began-steps", desk.began_steps);
  app.add_option("--ae-steps", desk.ae_steps);
  app.add_option("--iters", desk.solve.iterations);
  app.add_option("--n-eval", desk.n_eval);
  app.add_option("--jobs", desk.jobs);
  app.add_option("--gamma", desk.gamma);
  app.add_option("--lambda-k", desk.lambda_k);
  app.add_option("--began-lr", desk.began_lr);
  app.add_option("--max-blobs", desk.max_blobs);
  app.add_option("--latent", desk.latent);
  app.add_option("--g-layers", desk.g_layers);
  app.add_option("--g-filters", desk.g_filters);
  app.add_option("--d-filters", desk.d_filters);
  app.add_option("--d-m", desk.d_m);
  app.add_option("--ae-lr", desk.ae_lr);
  app.add_option("--blur-sigma", desk.blur_sigma);
  app.add_option("--blur-size", desk.blur_size);
  app.add_option("--lambda", desk.solve.lambda);
  app.add_flag("--skip-repeat", skip_repeat, "skip the determinism rerun");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> only(only_list.begin(), only_list.end());
  auto wanted = [&](int c) { return only.empty() || only.count(c); };

  std::map<int, Outcome> results;
  std::vector<std::pair<std::string, Outcome>> extra;
  auto timed = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    auto t0 = Clock::now();
    try {
      results[c] = f();
    } catch (const std::exception& e) {
      results[c] = {false, std::string("exception: ") + e.what()};
    }
    results[c].detail += fmt(" [%.1f s]", seconds_since(t0));
  };
  timed(1, gradient_correctness);
  timed(2, adjoint_property);
  timed(3, architecture_rule);
  timed(9, lasso_equivalence);

  const bool pipeline = wanted(4) || wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(10);
  if (pipeline) {
    std::set<int> sub;
    for (int c : only)
      if (c >= 4 && c <= 8) sub.insert(c);
    if (!only.empty() && only.count(10)) sub.clear();
    try {
      std::printf("running desk-scale pipeline\n");
      std::ostringstream log;
      auto t0 = Clock::now();
      DeskOutcome first = run_desk(desk, fs::path(out) / "run1", log, sub);
      std::printf("%s", log.str().c_str());
      for (auto& [c, o] : first.criteria) results[c] = o;
      if (first.residual) extra.emplace_back("in-range residual", *first.residual);
      if (wanted(10) && !skip_repeat) {
        std::ostringstream log2;
        DeskOutcome second = run_desk(desk, fs::path(out) / "run2", log2, sub);
        std::printf("%s", log2.str().c_str());
        std::size_t same = 0;
        std::string diff;
        for (const auto& [name, content] : first.csv) {
          auto it = second.csv.find(name);
          if (it != second.csv.end() && it->second == content)
            ++same;
          else
            diff += " " + name;
        }
        const bool ok = same == first.csv.size() && second.csv.size() == first.csv.size();
        results[10] = {ok, fmt("%zu/%zu CSV files bit-identical across two seeded runs", same, first.csv.size()) +
                               (diff.empty() ? "" : "; differing:" + diff) + fmt(" [%.0f s]", seconds_since(t0))};
      }
    } catch (const std::exception& e) {
      for (int c = 4; c <= 10; ++c)
        if (wanted(c) && c != 9 && !results.count(c)) results[c] = {false, std::string("exception: ") + e.what()};
    }
  }

  const char* names[] = {"",
                         "gradient correctness",
                         "conv2d_transpose adjoint",
                         "encoder filter rule",
                         "pipeline smoke",
                         "in-range recovery",
                         "method ordering",
                         "measurement sweep",
                         "task coverage",
                         "lasso oracle equivalence",
                         "determinism"};
  int failed = 0;
  for (const auto& [c, o] : results) {
    std::printf("criterion %2d %-26s %s  %s\n", c, names[c], o.pass ? "PASS" : "FAIL", o.detail.c_str());
    failed += !o.pass;
  }
  for (const auto& [name, o] : extra) {
    std::printf("aux          %-26s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
