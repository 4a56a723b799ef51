#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
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
#include "ge/solver.hpp"

namespace ge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return numeric;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ContractError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e))
    return config;
  return failure;
}

namespace {

// ---- shared plumbing ---------------------------------------------------------

json effective_options(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    std::vector<std::string> vals = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (vals.empty()) {
      std::string d = opt->get_default_str();
      if (!d.empty()) vals.push_back(d);
    }
    if (vals.empty())
      j[name] = nullptr;
    else if (vals.size() == 1 && opt->get_expected_max() <= 1)
      j[name] = vals[0];
    else
      j[name] = vals;
  }
  return j;
}

std::string command_path(const CLI::App* app) {
  std::string path;
  for (const CLI::App* a = app; a && a->get_parent(); a = a->get_parent())
    path = path.empty() ? a->get_name() : a->get_name() + " " + path;
  return path;
}

// Runs body against a fresh sibling temp directory and renames it onto out
// only on success.
void with_output(const fs::path& out, const CLI::App& app, const std::function<json(const fs::path&)>& body) {
  if (out.empty()) throw ConfigError("--out is required");
  const fs::path target = fs::absolute(out);
  const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".partial");
  fs::create_directories(target.parent_path());
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    json extra = body(tmp);
    json run = {{"command", command_path(&app)}, {"options", effective_options(app)}};
    if (!extra.is_null()) run["timing"] = extra;
    run["wall_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_file_atomic(tmp / "run.json", run.dump(2) + "\n");
    fs::remove_all(target);
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

std::size_t first_image_size(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  if (files.empty()) throw IoError("no PNG images in " + dir.string());
  std::sort(files.begin(), files.end());
  return read_png(files.front()).shape()[1];
}

ImageSet load_split(const fs::path& dir, std::size_t size, std::uint64_t split_seed, const std::string& part,
                    std::size_t limit = 0) {
  ImageSet all = load_image_dir(dir, size ? size : first_image_size(dir));
  if (part == "all") return all;
  DataSplit s = split_dataset(all, split_seed);
  ImageSet out = part == "train" ? s.train : part == "validation" ? s.validation : s.test;
  if (limit && limit < out.size()) out.images.resize(limit);
  if (out.size() == 0) throw ConfigError("the " + part + " split of " + dir.string() + " is empty");
  return out;
}

Network load_frozen(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError("missing " + what + " checkpoint");
  if (!fs::exists(p)) throw ConfigError(what + " checkpoint not found: " + p.string());
  Network n = load_checkpoint(p);
  n.freeze();
  return n;
}

std::vector<Tensor> unstack(const Tensor& batch, const Shape& each) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < batch.shape()[0]; ++i) out.push_back(reshape(slice_rows(batch, i, i + 1), each));
  return out;
}

struct SolveFlags {
  double lambda = 1e-3;
  std::size_t iters = 500, restarts = 2;
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void add(CLI::App* c) {
    c->add_option("--lambda", lambda, "latent regularization weight");
    c->add_option("--iters", iters, "ADAM iterations per restart");
    c->add_option("--restarts", restarts, "random latent initializations");
    c->add_option("--lr", lr, "ADAM learning rate");
    c->add_option("--seed", seed, "seed");
    c->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  }
  SolveConfig config() const {
    SolveConfig s;
    s.lambda = lambda;
    s.iterations = iters;
    s.restarts = restarts;
    s.learning_rate = lr;
    s.seed = seed;
    s.jobs = jobs;
    s.validate();
    return s;
  }
};

struct DataFlags {
  std::string dir;
  std::size_t size = 0;
  std::uint64_t split_seed = 0;

  void add(CLI::App* c) {
    c->add_option("--data", dir, "image directory")->required();
    c->add_option("--size", size, "resize to size x size (0: size of the first image)");
    c->add_option("--split-seed", split_seed, "seed of the train/validation/test split");
  }
};

struct AeFlags {
  std::string generator;
  double fake_ratio = 0.5;
  int m = 8, d = 4, f = 8, dec_layers = 4, dec_filters = 16;
  std::size_t steps = 10000, batch = 16, n_total = 0;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void add(CLI::App* c, bool with_m) {
    c->add_option("--generator", generator, "generator checkpoint supplying fake images");
    c->add_option("--fake-ratio", fake_ratio, "fraction of generated images in the training set");
    if (with_m) c->add_option("--m", m, "bottleneck width");
    c->add_option("--d", d, "encoder depth");
    c->add_option("--f", f, "encoder base filters");
    c->add_option("--dec-layers", dec_layers, "decoder conv layers");
    c->add_option("--dec-filters", dec_filters, "decoder filters");
    c->add_option("--ae-steps", steps, "training steps");
    c->add_option("--ae-batch", batch, "batch size");
    c->add_option("--ae-lr", lr, "ADAM learning rate");
    c->add_option("--ae-n-total", n_total, "augmented set size (0: number of real images)");
    c->add_option("--ae-seed", seed, "seed");
  }
  AeArchitecture arch(int width) const {
    AeArchitecture a;
    a.depth = d;
    a.filters = f;
    a.m = width;
    a.decoder_layers = dec_layers;
    a.decoder_filters = dec_filters;
    return a;
  }
  AeConfig config() const {
    AeConfig c;
    c.fake_ratio = fake_ratio;
    c.steps = steps;
    c.batch_size = batch;
    c.learning_rate = lr;
    c.seed = seed;
    c.validate();
    return c;
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---- commands ----------------------------------------------------------------

void add_gen_data(CLI::App& app) {
  auto* c = app.add_subcommand("gen-data", "write a synthetic Gaussian-blob image set");
  struct F {
    std::size_t n = 1000, size = 16;
    int max_blobs = 2;
    std::uint64_t seed = 0;
    std::string out;
  };
  auto f = std::make_shared<F>();
  c->add_option("--n", f->n, "number of images");
  c->add_option("--size", f->size, "image side length");
  c->add_option("--max-blobs", f->max_blobs, "maximum bumps per image");
  c->add_option("--seed", f->seed, "seed");
  c->add_option("--out", f->out, "output directory")->required();
  c->callback([c, f] {
    if (f->n == 0) throw ConfigError("gen-data: --n must be positive");
    with_output(f->out, *c, [&](const fs::path& dir) {
      ImageSet set = gen_blobs_dataset(f->n, f->size, f->max_blobs, f->seed);
      save_image_set(set, dir, {{"generator", "blobs"}, {"size", f->size}, {"max_blobs", f->max_blobs}, {"seed", f->seed}});
      return json();
    });
  });
}

void add_train_gan(CLI::App& app) {
  auto* c = app.add_subcommand("train-gan", "train a BEGAN generator/discriminator pair");
  struct F {
    DataFlags data;
    BeganConfig cfg;
    int g_layers = 4, g_filters = 16, d_depth = 4, d_filters = 8, d_m = 16, d_layers = 4;
    std::size_t sample_every = 0;
    std::string out;
  };
  auto f = std::make_shared<F>();
  f->cfg.steps = 8000;
  f->cfg.latent_dim = 16;
  f->cfg.gamma = 0.7;
  f->cfg.lambda_k = 0.01;
  f->cfg.learning_rate = 5e-4;
  f->data.add(c);
  c->add_option("--latent-dim", f->cfg.latent_dim, "latent dimension");
  c->add_option("--steps", f->cfg.steps, "training steps");
  c->add_option("--gamma", f->cfg.gamma, "diversity ratio");
  c->add_option("--lambda-k", f->cfg.lambda_k, "gain of the k update");
  c->add_option("--k0", f->cfg.k0, "initial k");
  c->add_option("--lr", f->cfg.learning_rate, "ADAM learning rate");
  c->add_option("--beta1", f->cfg.adam_beta1, "ADAM first-moment decay");
  c->add_option("--batch", f->cfg.batch_size, "batch size");
  c->add_option("--seed", f->cfg.seed, "seed");
  c->add_option("--g-layers", f->g_layers, "generator conv layers");
  c->add_option("--g-filters", f->g_filters, "generator filters");
  c->add_option("--d-depth", f->d_depth, "discriminator encoder depth");
  c->add_option("--d-filters", f->d_filters, "discriminator base filters");
  c->add_option("--d-m", f->d_m, "discriminator bottleneck");
  c->add_option("--d-layers", f->d_layers, "discriminator decoder conv layers");
  c->add_option("--sample-every", f->sample_every, "write a sample grid every N steps (0: only at the end)");
  c->add_option("--out", f->out, "output directory")->required();
  c->callback([c, f] {
    f->cfg.validate();
    ImageSet train = load_split(f->data.dir, f->data.size, f->data.split_seed, "train");
    const Shape shape = train.shape();
    NetworkSpec g = build_generator_spec(static_cast<int>(f->cfg.latent_dim), f->g_layers, f->g_filters, shape);
    NetworkSpec d = build_discriminator_spec(f->d_depth, f->d_filters, f->d_m, f->d_layers, shape);
    with_output(f->out, *c, [&](const fs::path& dir) {
      fs::create_directories(dir / "samples");
      Rng zr(mix_seed(f->cfg.seed, 5));
      const Tensor zfix = sample_latent(16, f->cfg.latent_dim, zr);
      char name[64];
      BeganObserver obs;
      if (f->sample_every > 0) {
        obs = [&](std::size_t step, const Network& gen, const BeganRecord&) {
          if ((step + 1) % f->sample_every) return;
          std::snprintf(name, sizeof name, "step_%07zu.png", step + 1);
          write_png_grid(unstack(forward(gen, zfix), shape), 4, dir / "samples" / name);
        };
      }
      BeganResult r = train_began(train, g, d, f->cfg, obs);
      json meta = {{"began", f->cfg.to_json()}, {"data", f->data.dir}, {"split_seed", f->data.split_seed}};
      save_checkpoint(r.generator, dir / "generator.gec", meta);
      save_checkpoint(r.discriminator, dir / "discriminator.gec", meta);
      write_began_history(r.history, dir / "history.csv");
      write_png_grid(unstack(forward(r.generator, zfix), shape), 4, dir / "samples" / "final.png");
      return json();
    });
  });
}

void add_train_ae(CLI::App& app) {
  auto* c = app.add_subcommand("train-ae", "train the GE1 autoencoder, or extract GE0 from a discriminator");
  struct F {
    DataFlags data;
    AeFlags ae;
    std::string variant = "ge1", discriminator, out;
  };
  auto f = std::make_shared<F>();
  f->data.add(c);
  f->ae.add(c, true);
  c->add_option("--variant", f->variant, "ge1 trains an AE, ge0 extracts the discriminator encoder")
      ->check(CLI::IsMember({"ge0", "ge1"}));
  c->add_option("--discriminator", f->discriminator, "discriminator checkpoint (ge0)");
  c->add_option("--out", f->out, "output directory")->required();
  c->callback([c, f] {
    if (f->variant == "ge0") {
      Network d = load_frozen(f->discriminator, "discriminator");
      with_output(f->out, *c, [&](const fs::path& dir) {
        const std::size_t split = d.spec().encoder_layers;
        Network en = extract_encoder(d);
        Network de = d.slice(split, d.spec().layers.size(), NetworkLabel::decoder).frozen_copy();
        json meta = {{"source", f->discriminator}, {"variant", "ge0"}};
        save_checkpoint(en, dir / "encoder.gec", meta);
        save_checkpoint(de, dir / "decoder.gec", meta);
        return json();
      });
      return;
    }
    const AeConfig cfg = f->ae.config();
    std::optional<Network> g;
    if (cfg.fake_ratio > 0.0) g = load_frozen(f->ae.generator, "generator (needed for --fake-ratio > 0)");
    ImageSet train = load_split(f->data.dir, f->data.size, f->data.split_seed, "train");
    ImageSet val = load_split(f->data.dir, f->data.size, f->data.split_seed, "validation");
    with_output(f->out, *c, [&](const fs::path& dir) {
      const AeArchitecture arch = f->ae.arch(f->ae.m);
      AeResult r = train_ae_pipeline(train, g ? &*g : nullptr, arch, cfg, f->ae.n_total);
      json meta = {{"ae", cfg.to_json()}, {"architecture", arch.to_json()}, {"generator", f->ae.generator}};
      save_checkpoint(r.encoder, dir / "encoder.gec", meta);
      save_checkpoint(r.decoder, dir / "decoder.gec", meta);
      write_loss_history(r.history, dir / "history.csv");
      write_json(dir / "metrics.json", {{"validation_mse", reconstruction_mse(r.encoder, r.decoder, val)},
                                        {"constant_predictor_mse", constant_predictor_mse(val)}});
      return json();
    });
  });
}

Rect parse_rect(const std::vector<int>& v) {
  for (int x : v)
    if (x < 0) throw ConfigError("--mask-rect values must be non-negative");
  return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]), static_cast<std::size_t>(v[2]),
          static_cast<std::size_t>(v[3])};
}

void add_solve(CLI::App& app) {
  auto* c = app.add_subcommand("solve", "restore one image through the generative encoder");
  struct F {
    std::string task = "cs", input, generator, encoder, out, mask_png, sensing = "encoder";
    SolveFlags solve;
    DegradationSpec deg;
    std::vector<int> rect;
    bool no_degrade = false;
  };
  auto f = std::make_shared<F>();
  c->add_option("--task", f->task, "restoration task")
      ->check(CLI::IsMember({"cs", "denoise", "deblur", "superres", "inpaint"}));
  c->add_option("--input", f->input, "input PNG")->required();
  c->add_option("--generator", f->generator, "generator checkpoint")->required();
  c->add_option("--encoder", f->encoder, "encoder checkpoint (encoder sensing)");
  f->solve.add(c);
  c->add_option("--sigma", f->deg.sigma, "noise standard deviation (denoise)");
  c->add_option("--blur-sigma", f->deg.blur_sigma, "Gaussian blur width (deblur)");
  c->add_option("--blur-size", f->deg.blur_size, "odd blur kernel size (deblur)");
  c->add_option("--factor", f->deg.factor, "downsampling factor (superres)");
  c->add_option("--mask-rect", f->rect, "hole as x,y,w,h (inpaint)")->expected(4)->delimiter(',');
  c->add_option("--mask-png", f->mask_png, "mask PNG, black = missing (inpaint)");
  c->add_option("--sensing", f->sensing, "encoder, or gaussian:M for a random Gaussian sensing matrix");
  c->add_flag("--no-degrade", f->no_degrade, "the input is already degraded (low resolution for superres)");
  c->add_option("--out", f->out, "output directory")->required();
  c->callback([c, f] {
    const Task task = task_from_string(f->task);
    const SolveConfig sc = f->solve.config();
    Network g = load_frozen(f->generator, "generator");
    const Shape& gshape = g.spec().output_shape;
    const std::size_t side = gshape[1];

    std::size_t gaussian_m = 0;
    if (f->sensing.rfind("gaussian:", 0) == 0) {
      try {
        gaussian_m = std::stoul(f->sensing.substr(9));
      } catch (const std::exception&) {
        throw ConfigError("--sensing gaussian:M needs a positive integer M");
      }
      if (gaussian_m == 0) throw ConfigError("--sensing gaussian:M needs a positive integer M");
      if (task == Task::inpaint) throw ConfigError("gaussian sensing does not support inpaint");
    } else if (f->sensing != "encoder") {
      throw ConfigError("--sensing must be encoder or gaussian:M");
    }
    std::optional<Network> en;
    if (!gaussian_m) {
      en = load_frozen(f->encoder, "encoder");
      if (en->spec().input_shape != gshape)
        throw ConfigError("encoder input " + to_string(en->spec().input_shape) + " does not match generator output " +
                          to_string(gshape));
    }

    DegradationSpec deg = task_degradation(task, f->deg);
    deg.seed = mix_seed(f->solve.seed, 17);
    if (task == Task::inpaint) {
      if (!f->mask_png.empty())
        deg.mask = mask_from_png(f->mask_png, side, side);
      else if (!f->rect.empty())
        deg.mask = rect_mask(side, side, parse_rect(f->rect));
      else
        deg.mask = rect_mask(side, side, {side / 4, side / 4, side / 2, side / 2});
    }
    if (task == Task::superres && (deg.factor < 1 || side % static_cast<std::size_t>(deg.factor)))
      throw ConfigError("--factor must divide the image size");
    deg.validate(gshape);

    const int channels = static_cast<int>(gshape[0]);
    const std::size_t in_side = f->no_degrade && task == Task::superres ? side / deg.factor : side;
    const Tensor input = fit_square(read_png(f->input, channels), in_side);

    with_output(f->out, *c, [&](const fs::path& dir) {
      const Tensor x_dagger = f->no_degrade ? input : degrade(input, deg);
      json report = {{"task", f->task}, {"solve", sc.to_json()}, {"no_degrade", f->no_degrade}, {"sensing", f->sensing}};
      SolveResult res;
      Tensor aligned;
      if (gaussian_m) {
        aligned = task == Task::superres ? bicubic_upsample(x_dagger, deg.factor) : x_dagger;
        Tensor a = gaussian_sensing_matrix(gaussian_m, numel(gshape), mix_seed(f->solve.seed, 18));
        res = solve_ga(sense(a, aligned), a, g, sc);
        report["m"] = gaussian_m;
      } else {
        Restoration r = restore_degraded(x_dagger, task, deg, g, *en, sc);
        res = r.solve;
        aligned = r.x_dagger_aligned;
        report["m"] = en->spec().output_shape.at(0);
      }
      json rj = res.to_json();
      const double wall = rj["wall_ms"].get<double>();
      rj.erase("wall_ms");
      report["result"] = rj;
      if (!f->no_degrade) {
        report["mse_x_hat"] = image_mse(res.x_hat, input);
        report["mse_x_dagger"] = image_mse(aligned, input);
      }
      write_png(res.x_hat, dir / "x_hat.png");
      write_png(x_dagger, dir / "x_dagger.png");
      write_json(dir / "solve.json", report);
      return json{{"solve_wall_ms", wall}};
    });
  });
}

void add_baseline_lasso(CLI::App& app) {
  auto* c = app.add_subcommand("baseline-lasso", "compressed sensing with a DCT dictionary and ISTA");
  struct F {
    std::string input, out;
    std::size_t m = 32, size = 0;
    LassoConfig lasso;
    int overcomplete = 2;
    std::uint64_t seed = 0;
  };
  auto f = std::make_shared<F>();
  c->add_option("--input", f->input, "input PNG")->required();
  c->add_option("--size", f->size, "resize to size x size (0: keep)");
  c->add_option("--m", f->m, "number of Gaussian measurements");
  c->add_option("--alpha", f->lasso.alpha, "l1 weight");
  c->add_option("--iterations", f->lasso.iterations, "ISTA iterations");
  c->add_flag("--fista", f->lasso.fista, "use monotone FISTA");
  c->add_option("--overcomplete", f->overcomplete, "dictionary overcompleteness per axis");
  c->add_option("--seed", f->seed, "seed");
  c->add_option("--out", f->out, "output directory")->required();
  c->callback([c, f] {
    Tensor x = read_png(f->input);
    if (f->size) x = fit_square(x, f->size);
    if (f->m == 0) throw ConfigError("--m must be positive");
    with_output(f->out, *c, [&](const fs::path& dir) {
      const Shape& s = x.shape();
      Dictionary dict = build_dct_dictionary(s[1], s[2], f->overcomplete, s[0]);
      Tensor phi = gaussian_sensing_matrix(f->m, x.numel(), f->seed);
      LassoResult r = lasso_solve(compose_sensing(phi, dict), sense(phi, x), dict, f->lasso);
      write_png(r.x_hat, dir / "x_hat.png");
      write_json(dir / "solve.json", {{"m", f->m},
                                      {"alpha", f->lasso.alpha},
                                      {"iterations", f->lasso.iterations},
                                      {"fista", f->lasso.fista},
                                      {"overcomplete", f->overcomplete},
                                      {"seed", f->seed},
                                      {"step", r.step},
                                      {"objective", r.objective.back()},
                                      {"mse", image_mse(r.x_hat, x)}});
      return json();
    });
  });
}

void add_eval(CLI::App& app) {
  auto* e = app.add_subcommand("eval", "evaluation drivers");
  e->require_subcommand(1);

  {
    auto* c = e->add_subcommand("compare", "median MSE of lasso, ga, ge0 and ge1 on the test split");
    struct F {
      DataFlags data;
      SolveFlags solve;
      CompareConfig cmp;
      std::string methods = "lasso,ga,ge0,ge1", generator, ge0, ge1, out;
      std::size_t n_test = 0;
    };
    auto f = std::make_shared<F>();
    f->data.add(c);
    f->solve.add(c);
    c->add_option("--generator", f->generator, "generator checkpoint")->required();
    c->add_option("--ge0-encoder", f->ge0, "GE0 encoder checkpoint");
    c->add_option("--ge1-encoder", f->ge1, "GE1 encoder checkpoint");
    c->add_option("--methods", f->methods, "comma separated subset of lasso,ga,ge0,ge1");
    c->add_option("--ga-m", f->cmp.ga_m, "GA measurements (0: GE width)");
    c->add_option("--lasso-m", f->cmp.lasso_m, "lasso measurements (0: 4x GE width)");
    c->add_option("--alpha", f->cmp.lasso.alpha, "lasso l1 weight");
    c->add_option("--lasso-iters", f->cmp.lasso.iterations, "ISTA iterations");
    c->add_option("--overcomplete", f->cmp.overcomplete, "DCT overcompleteness");
    c->add_option("--n-test", f->n_test, "use the first N test images (0: all)");
    c->add_option("--out", f->out, "output directory")->required();
    c->callback([c, f] {
      f->cmp.methods = split_csv(f->methods);
      f->cmp.solve = f->solve.config();
      f->cmp.seed = f->solve.seed;
      f->cmp.jobs = f->solve.jobs;
      Models models{load_frozen(f->generator, "generator"), std::nullopt, std::nullopt};
      for (const auto& m : f->cmp.methods) {
        if (m == "ge0") models.ge0_encoder = load_frozen(f->ge0, "ge0 encoder");
        if (m == "ge1") models.ge1_encoder = load_frozen(f->ge1, "ge1 encoder");
      }
      ImageSet test = load_split(f->data.dir, f->data.size, f->data.split_seed, "test", f->n_test);
      with_output(f->out, *c, [&](const fs::path& dir) {
        EvalReport r = compare_methods(test, models, f->cmp);
        write_file_atomic(dir / "results.csv", r.csv(false));
        write_json(dir / "summary.json", r.summary_json());
        write_comparison_grid(test, r, dir / "grid.png");
        json wall = json::array();
        for (const auto& row : r.rows) wall.push_back(row.wall_ms);
        return json{{"per_row_wall_ms", wall}};
      });
    });
  }
  {
    auto* c = e->add_subcommand("decompose", "in-range (fake) versus real recovery error");
    struct F {
      DataFlags data;
      SolveFlags solve;
      std::string generator, encoder, out;
      std::size_t n_fake = 20, n_test = 20;
    };
    auto f = std::make_shared<F>();
    f->data.add(c);
    f->solve.add(c);
    c->add_option("--generator", f->generator, "generator checkpoint")->required();
    c->add_option("--encoder", f->encoder, "encoder checkpoint")->required();
    c->add_option("--n-fake", f->n_fake, "generated targets");
    c->add_option("--n-test", f->n_test, "real test targets (0: all)");
    c->add_option("--out", f->out, "output directory")->required();
    c->callback([c, f] {
      const SolveConfig sc = f->solve.config();
      Network g = load_frozen(f->generator, "generator");
      Network en = load_frozen(f->encoder, "encoder");
      ImageSet test = load_split(f->data.dir, f->data.size, f->data.split_seed, "test", f->n_test);
      with_output(f->out, *c, [&](const fs::path& dir) {
        Decomposition d = error_decomposition(g, en, sc, test, f->n_fake, f->solve.seed);
        std::ostringstream csv;
        csv << "kind,index,mse\n";
        char buf[64];
        for (std::size_t i = 0; i < d.fake.size(); ++i) {
          std::snprintf(buf, sizeof buf, "fake,%zu,%.17g\n", i, d.fake[i]);
          csv << buf;
        }
        for (std::size_t i = 0; i < d.real.size(); ++i) {
          std::snprintf(buf, sizeof buf, "real,%zu,%.17g\n", i, d.real[i]);
          csv << buf;
        }
        write_file_atomic(dir / "results.csv", csv.str());
        write_json(dir / "decomposition.json", {{"fake_mse", d.fake_mse},
                                                {"real_mse", d.real_mse},
                                                {"ratio", d.ratio},
                                                {"generator_hash", d.solver_generator_hash},
                                                {"solve", sc.to_json()}});
        return json();
      });
    });
  }
  {
    auto* c = e->add_subcommand("sweep", "median GE1 MSE against the measurement budget");
    struct F {
      DataFlags data;
      SolveFlags solve;
      AeFlags ae;
      std::string budgets = "4,8,16", encoder_template, out;
      std::size_t n_test = 0;
    };
    auto f = std::make_shared<F>();
    f->data.add(c);
    f->solve.add(c);
    f->ae.add(c, false);
    c->add_option("--budgets", f->budgets, "comma separated bottleneck widths");
    c->add_option("--encoder-template", f->encoder_template,
                  "load encoders from this path with {m} replaced by the width instead of training");
    c->add_option("--n-test", f->n_test, "use the first N test images (0: all)");
    c->add_option("--out", f->out, "output directory")->required();
    c->callback([c, f] {
      std::vector<std::size_t> budgets;
      for (const auto& b : split_csv(f->budgets)) {
        try {
          budgets.push_back(std::stoul(b));
        } catch (const std::exception&) {
          throw ConfigError("--budgets: not an integer: " + b);
        }
      }
      const SolveConfig sc = f->solve.config();
      Network g = load_frozen(f->ae.generator, "generator");
      ImageSet train = load_split(f->data.dir, f->data.size, f->data.split_seed, "train");
      ImageSet test = load_split(f->data.dir, f->data.size, f->data.split_seed, "test", f->n_test);
      with_output(f->out, *c, [&](const fs::path& dir) {
        EncoderSource source = [&](std::size_t m) {
          if (!f->encoder_template.empty()) {
            std::string p = f->encoder_template;
            const auto at = p.find("{m}");
            if (at == std::string::npos) throw ConfigError("--encoder-template must contain {m}");
            p.replace(at, 3, std::to_string(m));
            return load_frozen(p, "encoder");
          }
          AeResult r = train_ae_pipeline(train, &g, f->ae.arch(static_cast<int>(m)), f->ae.config(), f->ae.n_total);
          const fs::path sub = dir / "encoders" / ("m" + std::to_string(m));
          fs::create_directories(sub);
          save_checkpoint(r.encoder, sub / "encoder.gec", {{"ae", f->ae.config().to_json()}});
          save_checkpoint(r.decoder, sub / "decoder.gec", {{"ae", f->ae.config().to_json()}});
          return r.encoder;
        };
        SweepResult r = sweep_measurements(budgets, source, g, test, sc, f->solve.jobs);
        write_curve_csv(r.curve, dir / "curve.csv");
        write_file_atomic(dir / "curve.svg", curve_svg(r.curve, "GE1 median MSE by measurement size"));
        write_file_atomic(dir / "results.csv", r.report.csv(false));
        json wall = json::array();
        for (const auto& row : r.report.rows) wall.push_back(row.wall_ms);
        return json{{"per_row_wall_ms", wall}};
      });
    });
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generative-encoder image restoration toolkit", "ge"};
  app.option_defaults()->always_capture_default();
  app.fallthrough();
  app.set_config("--config", "", "INI file; [command] or [eval.compare] sections hold key = value pairs");
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.require_subcommand(1);
  add_gen_data(app);
  add_train_gan(app);
  add_train_ae(app);
  add_solve(app);
  add_baseline_lasso(app);
  add_eval(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return ok;
}

}  // namespace ge::cli
