#include "ge/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ge/began.hpp"
#include "ge/error.hpp"
#include "ge/parallel.hpp"
#include "ge/rng.hpp"

namespace ge {

double image_mse(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ShapeError("image_mse: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return mse(reshape(a.detached(), {a.numel()}), reshape(b.detached(), {b.numel()})).item();
}

Summary summarize(std::vector<double> v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / n);
  return s;
}

std::vector<double> EvalReport::mse_of(const std::string& method) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.method == method) out.push_back(r.mse);
  return out;
}

Summary EvalReport::summary(const std::string& method) const { return summarize(mse_of(method)); }

std::vector<std::string> EvalReport::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  return out;
}

std::string EvalReport::csv(bool with_wall_time) const {
  std::ostringstream out;
  out << "image_id,method,m,mse" << (with_wall_time ? ",wall_ms" : "") << '\n';
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.mse);
    out << r.image_id << ',' << r.method << ',' << r.m << ',' << buf;
    if (with_wall_time) {
      std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

void EvalReport::write_csv(const std::filesystem::path& path) const { write_file_atomic(path, csv()); }

nlohmann::json EvalReport::summary_json() const {
  nlohmann::json methods_j = nlohmann::json::object();
  for (const auto& m : methods()) {
    const auto s = summary(m);
    methods_j[m] = {{"count", s.count}, {"median", s.median}, {"mean", s.mean}, {"std", s.stddev}};
  }
  return {{"config_hash", config_hash}, {"config", config}, {"methods", methods_j}};
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json CompareConfig::to_json() const {
  return {{"methods", methods},
          {"ga_m", ga_m},
          {"lasso_m", lasso_m},
          {"solve", solve.to_json()},
          {"lasso", {{"alpha", lasso.alpha}, {"iterations", lasso.iterations}, {"fista", lasso.fista}}},
          {"overcomplete", overcomplete},
          {"seed", seed}};
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EvalReport compare_methods(const ImageSet& test, const Models& models, const CompareConfig& cfg) {
  if (test.size() == 0) throw ContractError("compare_methods: empty test set");
  const Network* ge_ref = models.ge1_encoder ? &*models.ge1_encoder : models.ge0_encoder ? &*models.ge0_encoder : nullptr;
  for (const auto& m : cfg.methods) {
    if (m == "ge0" && !models.ge0_encoder) throw ConfigError("compare_methods: ge0 requested but no GE0 encoder loaded");
    if (m == "ge1" && !models.ge1_encoder) throw ConfigError("compare_methods: ge1 requested but no GE1 encoder loaded");
    if (m != "lasso" && m != "ga" && m != "ge0" && m != "ge1") throw ConfigError("compare_methods: unknown method " + m);
  }
  const std::size_t ge_m = ge_ref ? ge_ref->spec().output_shape.at(0) : 0;
  const std::size_t ga_m = cfg.ga_m ? cfg.ga_m : ge_m;
  const std::size_t lasso_m = cfg.lasso_m ? cfg.lasso_m : 4 * ge_m;
  if ((ga_m == 0 && std::count(cfg.methods.begin(), cfg.methods.end(), "ga")) ||
      (lasso_m == 0 && std::count(cfg.methods.begin(), cfg.methods.end(), "lasso")))
    throw ConfigError("compare_methods: measurement budget for ga/lasso must be given without an encoder");

  const Shape& shape = test.shape();
  const std::size_t n = numel(shape);
  std::optional<Dictionary> dict;
  if (std::count(cfg.methods.begin(), cfg.methods.end(), "lasso"))
    dict = build_dct_dictionary(shape[1], shape[2], cfg.overcomplete, shape[0]);

  const std::size_t n_methods = cfg.methods.size();
  std::vector<EvalRow> rows(test.size() * n_methods);
  std::vector<Tensor> recon(rows.size());

  parallel_for(rows.size(), cfg.jobs, [&](std::size_t k) {
    const std::size_t i = k / n_methods;
    const std::string& method = cfg.methods[k % n_methods];
    const Tensor& x = test.images[i];
    SolveConfig sc = cfg.solve;
    sc.seed = mix_seed(cfg.solve.seed, i);
    sc.jobs = 1;
    const auto t0 = std::chrono::steady_clock::now();
    Tensor xh;
    std::size_t m = 0;
    if (method == "lasso") {
      m = lasso_m;
      Tensor phi = gaussian_sensing_matrix(lasso_m, n, mix_seed(cfg.seed, 2 * i + 1));
      Tensor b = sense(phi, x);
      xh = lasso_solve(compose_sensing(phi, *dict), b, *dict, cfg.lasso).x_hat;
    } else if (method == "ga") {
      m = ga_m;
      Tensor a = gaussian_sensing_matrix(ga_m, n, mix_seed(cfg.seed, 2 * i));
      xh = solve_ga(sense(a, x), a, models.generator, sc).x_hat;
    } else {
      const Network& en = method == "ge0" ? *models.ge0_encoder : *models.ge1_encoder;
      m = en.spec().output_shape.at(0);
      xh = solve_ge(forward(en, x), en, models.generator, AdjustmentOp{}, sc).x_hat;
    }
    rows[k] = {i, method, m, image_mse(xh, x), ms_since(t0)};
    recon[k] = xh;
  });

  EvalReport report;
  report.rows = std::move(rows);
  report.config = cfg.to_json();
  report.config["ge_m"] = ge_m;
  report.config["ga_m"] = ga_m;
  report.config["lasso_m"] = lasso_m;
  report.config["test_images"] = test.size();
  report.config_hash = config_hash(report.config);
  for (std::size_t k = 0; k < recon.size(); ++k) report.reconstructions[cfg.methods[k % n_methods]].push_back(recon[k]);
  return report;
}

void write_comparison_grid(const ImageSet& test, const EvalReport& report, const std::filesystem::path& path,
                           std::size_t max_images) {
  const std::size_t cols = std::min(max_images, test.size());
  std::vector<Tensor> tiles(test.images.begin(), test.images.begin() + static_cast<std::ptrdiff_t>(cols));
  for (const auto& m : report.methods()) {
    const auto& rec = report.reconstructions.at(m);
    for (std::size_t i = 0; i < cols; ++i) tiles.push_back(rec.at(i));
  }
  write_png_grid(tiles, cols, path);
}

Decomposition error_decomposition(const Network& generator, const Network& encoder, const SolveConfig& solve,
                                  const ImageSet& real_test, std::size_t n_fake, std::uint64_t seed) {
  if (n_fake == 0) throw ContractError("error_decomposition: need at least one fake target");
  if (real_test.size() == 0) throw ContractError("error_decomposition: need at least one real target");
  Decomposition d;
  const std::size_t k = generator.spec().input_shape.at(0);
  Rng rng(mix_seed(seed, 7));
  const Tensor z0 = sample_latent(n_fake, k, rng);
  const Tensor fakes = forward(generator, z0);
  d.target_generator_hash = generator.param_hash();

  const std::size_t total = n_fake + real_test.size();
  std::vector<double> errs(total);
  parallel_for(total, solve.jobs, [&](std::size_t t) {
    Tensor x = t < n_fake ? reshape(slice_rows(fakes, t, t + 1), generator.spec().output_shape) : real_test.images[t - n_fake];
    SolveConfig sc = solve;
    sc.seed = mix_seed(solve.seed, t);
    sc.jobs = 1;
    errs[t] = image_mse(solve_ge(forward(encoder, x), encoder, generator, AdjustmentOp{}, sc).x_hat, x);
  });
  d.solver_generator_hash = generator.param_hash();
  d.fake.assign(errs.begin(), errs.begin() + static_cast<std::ptrdiff_t>(n_fake));
  d.real.assign(errs.begin() + static_cast<std::ptrdiff_t>(n_fake), errs.end());
  d.fake_mse = summarize(d.fake).median;
  d.real_mse = summarize(d.real).median;
  if (d.real_mse == 0.0) throw NumericError("error_decomposition: real MSE is zero");
  d.ratio = d.fake_mse / d.real_mse;
  return d;
}

SweepResult sweep_measurements(const std::vector<std::size_t>& budgets, const EncoderSource& encoders,
                               const Network& generator, const ImageSet& test, const SolveConfig& solve,
                               std::size_t jobs) {
  if (budgets.empty()) throw ConfigError("sweep_measurements: no budgets");
  SweepResult out;
  for (std::size_t m : budgets) {
    Network en = encoders(m);
    if (en.spec().output_shape != Shape{m}) throw ConfigError("sweep_measurements: encoder width differs from budget");
    std::vector<EvalRow> rows(test.size());
    parallel_for(test.size(), jobs, [&](std::size_t i) {
      SolveConfig sc = solve;
      sc.seed = mix_seed(solve.seed, i);
      sc.jobs = 1;
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor& x = test.images[i];
      double e = image_mse(solve_ge(forward(en, x), en, generator, AdjustmentOp{}, sc).x_hat, x);
      rows[i] = {i, "ge1", m, e, ms_since(t0)};
    });
    std::vector<double> errs;
    for (const auto& r : rows) errs.push_back(r.mse);
    out.curve.push_back({m, summarize(errs)});
    out.report.rows.insert(out.report.rows.end(), rows.begin(), rows.end());
  }
  out.report.config = {{"budgets", budgets}, {"solve", solve.to_json()}, {"test_images", test.size()}};
  out.report.config_hash = config_hash(out.report.config);
  return out;
}

void write_curve_csv(const std::vector<SweepPoint>& curve, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "m,median_mse,mean_mse,std_mse,count\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu\n", p.m, p.stats.median, p.stats.mean, p.stats.stddev,
                  p.stats.count);
    out << buf;
  }
  write_file_atomic(path, out.str());
}

std::string curve_svg(const std::vector<SweepPoint>& curve, const std::string& title) {
  const double w = 480, h = 320, left = 60, right = 20, top = 30, bottom = 40;
  double ymax = 0.0;
  for (const auto& p : curve) ymax = std::max(ymax, p.stats.median);
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.1;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](std::size_t i) { return left + (curve.size() == 1 ? pw / 2 : pw * i / (curve.size() - 1.0)); };
  auto py = [&](double v) { return top + ph * (1.0 - v / ymax); };
  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = ymax * t / 4;
    s << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << v
      << "</text>\n";
  }
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.size(); ++i) s << px(i) << ',' << py(curve[i].stats.median) << ' ';
  s << "\"/>\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    s << "<circle cx=\"" << px(i) << "\" cy=\"" << py(curve[i].stats.median) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    s << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << curve[i].m << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 6 << "\" text-anchor=\"middle\" font-size=\"12\">m</text>\n";
  s << "<text x=\"14\" y=\"" << top + ph / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << top + ph / 2
    << ")\" text-anchor=\"middle\">median MSE</text>\n";
  s << "</svg>\n";
  return s.str();
}

double measurement_rate(std::size_t m, const Shape& image_shape) {
  return static_cast<double>(m) / static_cast<double>(numel(image_shape));
}

DegradationSpec task_degradation(Task task, DegradationSpec params) {
  switch (task) {
    case Task::cs: params.kind = DegradationKind::none; break;
    case Task::denoise: params.kind = DegradationKind::gaussian_noise; break;
    case Task::deblur: params.kind = DegradationKind::gaussian_blur; break;
    case Task::superres: params.kind = DegradationKind::downsample; break;
    case Task::inpaint: params.kind = DegradationKind::mask; break;
  }
  return params;
}

Restoration restore_degraded(const Tensor& x_dagger, Task task, const DegradationSpec& params,
                             const Network& generator, const Network& encoder, const SolveConfig& solve) {
  Restoration r;
  r.x_dagger = x_dagger;
  r.x_dagger_aligned = task == Task::superres ? bicubic_upsample(x_dagger, params.factor) : x_dagger;
  const AdjustmentOp s = adjustment_for(task, params.mask);
  const Shape& want = generator.spec().output_shape;
  if (r.x_dagger_aligned.shape() != want)
    throw ConfigError("restore: degraded image " + to_string(r.x_dagger_aligned.shape()) + " does not match generator output " +
                      to_string(want));
  const Tensor m = forward(encoder, s.apply(r.x_dagger_aligned));
  r.solve = solve_ge(m, encoder, generator, s, solve);
  return r;
}

Restoration restore(const Tensor& x_star, Task task, const DegradationSpec& params, const Network& generator,
                    const Network& encoder, const SolveConfig& solve) {
  const DegradationSpec d = task_degradation(task, params);
  d.validate(x_star.shape());
  return restore_degraded(degrade(x_star, d), task, d, generator, encoder, solve);
}

EvalReport evaluate_task(const ImageSet& test, Task task, const DegradationSpec& params, const Network& generator,
                         const Network& encoder, const SolveConfig& solve, std::size_t jobs) {
  if (test.size() == 0) throw ContractError("evaluate_task: empty test set");
  const std::size_t m = encoder.spec().output_shape.at(0);
  std::vector<EvalRow> rows(2 * test.size());
  std::vector<Tensor> recon(2 * test.size());
  parallel_for(test.size(), jobs, [&](std::size_t i) {
    DegradationSpec d = params;
    d.seed = mix_seed(params.seed, i);
    SolveConfig sc = solve;
    sc.seed = mix_seed(solve.seed, i);
    sc.jobs = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor& x = test.images[i];
    Restoration r = restore(x, task, d, generator, encoder, sc);
    rows[2 * i] = {i, "ge", m, image_mse(r.solve.x_hat, x), ms_since(t0)};
    rows[2 * i + 1] = {i, "degraded", 0, image_mse(r.x_dagger_aligned, x), 0.0};
    recon[2 * i] = r.solve.x_hat;
    recon[2 * i + 1] = r.x_dagger_aligned;
  });
  EvalReport report;
  report.rows = std::move(rows);
  report.config = {{"task", to_string(task)},
                   {"sigma", params.sigma},
                   {"blur_sigma", params.blur_sigma},
                   {"blur_size", params.blur_size},
                   {"factor", params.factor},
                   {"seed", params.seed},
                   {"solve", solve.to_json()},
                   {"test_images", test.size()}};
  report.config_hash = config_hash(report.config);
  for (std::size_t k = 0; k < recon.size(); ++k) report.reconstructions[k % 2 ? "degraded" : "ge"].push_back(recon[k]);
  return report;
}

}  // namespace ge
