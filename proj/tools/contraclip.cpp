// contraclip command-line front end.
//
// Exit codes: 0 ok, 1 bad configuration or file contents, 2 I/O failure,
// 3 stall, 4 gradient check failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "contraclip/evaluation.hpp"
#include "contraclip/field_map.hpp"
#include "contraclip/io.hpp"
#include "contraclip/testbed.hpp"

namespace fs = std::filesystem;
using namespace contraclip;
using io::Json;

namespace {

enum Exit { kOk = 0, kConfig = 1, kIo = 2, kStall = 3, kGradient = 4 };


std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

SyntheticEncoder load_encoder(const std::string& path) {
  return io::encoder_from_json(io::parse(io::read_file(path), path));
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out = "synth";
  std::string encoder = "linear";
  Index latent_dim = 16;
  Index embedding_dim = 32;
  Index hidden_dim = 64;
  Index num_dipoles = 4;
  double separation = 4.0;
  double beta = 0.5;
  bool orthonormal = true;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthOptions& o) {
  if (o.encoder != "linear" && o.encoder != "mlp") {
    throw InvalidArgument("--encoder must be 'linear' or 'mlp'");
  }
  const SyntheticEncoder enc =
      o.encoder == "linear"
          ? make_linear_encoder(o.latent_dim, o.embedding_dim, o.seed, o.orthonormal)
          : make_mlp_encoder(o.latent_dim, o.hidden_dim, o.embedding_dim, o.seed);
  const auto [bank, truth] = make_ground_truth_dipoles(enc, o.num_dipoles, o.seed + 1, o.separation, o.beta);
  ensure_dir(o.out);
  io::write_file(join(o.out, "encoder.json"), io::dump(io::encoder_to_json(enc)));
  io::write_file(join(o.out, "bank.json"), io::dump(io::bank_to_json(bank)));
  io::write_file(join(o.out, "ground_truth.json"), io::dump(io::ground_truth_to_json(truth)));
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string bank;
  std::string encoder;
  std::string out = "run";
  std::string resume;
  std::string mode = "dipole-field";
  std::optional<double> beta;
  bool normalize = false;
  bool freeze_scales = false;
  bool no_timing = false;
  Index supports_per_path = 4;
  double support_radius = 1.0;
  double initial_gamma = default_initial_gamma(1.0);
  TrainConfig config;
};

int cmd_train(TrainOptions o) {
  o.config.mode = parse_similarity_mode(o.mode);
  o.config.train_scales = !o.freeze_scales;
  o.config.validate();

  DipoleBankd bank = io::load_dipole_bank_file(o.bank, {o.normalize});
  if (o.beta) bank = bank.with_beta(*o.beta);
  const SyntheticEncoder enc = load_encoder(o.encoder);
  if (enc.output_dim() != bank.embedding_dim) {
    throw DimensionMismatch("encoder output dimension differs from the bank's embedding_dim");
  }

  TrainState state;
  if (!o.resume.empty()) {
    std::istringstream src(io::read_file(o.resume));
    state = io::load_checkpoint(src);
    if (state.warper.latent_dim() != enc.input_dim() || state.warper.num_paths() != bank.size()) {
      throw DimensionMismatch("checkpoint does not match the encoder and bank");
    }
  } else {
    state = TrainState::start(init_warper<double>(enc.input_dim(), bank.size(), o.supports_per_path,
                                                  o.config.seed, o.support_radius, o.initial_gamma));
  }

  TrainReport report = fit(state, bank, enc, o.config);
  if (o.no_timing) report.wall_time_seconds = 0.0;

  ensure_dir(o.out);
  std::ostringstream ckpt;
  io::save_checkpoint(state, o.config, ckpt);
  io::write_file(join(o.out, "checkpoint.json"), ckpt.str());
  const std::string rep = io::dump(io::report_to_json(report));
  io::write_file(join(o.out, "report.json"), rep);
  std::cout << rep;
  return report.stalled ? kStall : kOk;
}

// ---------------------------------------------------------------------------

struct TraverseOptions {
  std::string checkpoint;
  std::string encoder;
  std::string bank;
  std::string latents;
  std::string out = "traverse";
  std::optional<double> length;
  std::optional<Index> steps;
  double epsilon = 0.45;
  Index count = 10;
  std::uint64_t seed = 0;
  bool both_signs = false;
  std::vector<Index> paths;
};

Matrix read_latents(const std::string& path, Index d) {
  const Json doc = io::parse(io::read_file(path), path);
  const Json& rows = doc.is_object() && doc.contains("latents") ? doc["latents"] : doc;
  if (!rows.is_array() || rows.empty()) throw FormatError(path + ": expected a list of latents");
  Matrix z(d, static_cast<Index>(rows.size()));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const Json& r = rows[n];
    if (!r.is_array() || static_cast<Index>(r.size()) != d) {
      throw DimensionMismatch(path + ": latent " + std::to_string(n) + " does not have dimension " +
                              std::to_string(d));
    }
    for (Index i = 0; i < d; ++i) {
      if (!r[static_cast<std::size_t>(i)].is_number()) throw FormatError(path + ": non-numeric entry");
      z(i, static_cast<Index>(n)) = r[static_cast<std::size_t>(i)].get<double>();
    }
  }
  return z;
}

int cmd_traverse(const TraverseOptions& o) {
  TraversalConfig tc;
  tc.epsilon = o.epsilon;
  if (o.length && o.steps) throw InvalidArgument("give either --length or --steps, not both");
  if (o.length) tc.steps = steps_for_length(*o.length, o.epsilon);
  if (o.steps) tc.steps = *o.steps;
  tc.validate();

  std::istringstream src(io::read_file(o.checkpoint));
  const TrainState state = io::load_checkpoint(src);
  const LatentWarperd& warper = state.warper;

  std::optional<SyntheticEncoder> enc;
  if (!o.encoder.empty()) {
    enc = load_encoder(o.encoder);
    if (enc->input_dim() != warper.latent_dim()) {
      throw DimensionMismatch("encoder input dimension differs from the checkpoint");
    }
  }
  std::optional<DipoleBankd> bank;
  if (!o.bank.empty()) {
    bank = io::load_dipole_bank_file(o.bank);
    if (bank->size() != warper.num_paths()) throw DimensionMismatch("bank size differs from the path count");
  }

  const Matrix z0 = o.latents.empty() ? sample_latents(warper.latent_dim(), o.count, o.seed)
                                      : read_latents(o.latents, warper.latent_dim());
  std::vector<Index> paths = o.paths;
  if (paths.empty()) {
    for (Index k = 0; k < warper.num_paths(); ++k) paths.push_back(k);
  }
  for (Index k : paths) {
    if (k < 0 || k >= warper.num_paths()) throw InvalidArgument("--path index out of range");
  }
  std::vector<int> signs{+1};
  if (o.both_signs) signs.push_back(-1);

  std::string jsonl;
  Json rows = Json::array();
  Index stalled = 0;
  double align_sum = 0.0;
  Index align_count = 0;
  for (Index k : paths) {
    const std::string name = bank ? (*bank)[k].id : "path" + std::to_string(k);
    for (int sign : signs) {
      TraversalConfig c = tc;
      c.sign = sign;
      for (Index n = 0; n < z0.cols(); ++n) {
        const std::string id = name + (sign > 0 ? "+" : "-") + std::to_string(n);
        TraversalPath p = traverse(warper, k, z0.col(n), c, id);
        if (enc) p = embed_path(std::move(p), *enc);
        jsonl += io::path_to_jsonl(p);
        Json row;
        row["path_id"] = id;
        row["path"] = k;
        row["sign"] = sign;
        row["latent"] = n;
        row["completed_steps"] = p.completed_steps();
        row["length"] = p.length();
        row["stalled"] = p.stalled;
        if (p.stalled) ++stalled;
        if (enc && bank && p.completed_steps() >= 1) {
          const PathMetrics m = path_metrics(p, (*bank)[k]);
          row["alignment"] = m.alignment;
          row["pole_gain"] = m.pole_gain;
          row["smoothness"] = m.smoothness;
          align_sum += m.alignment;
          ++align_count;
        }
        rows.push_back(std::move(row));
      }
    }
  }

  Json metrics;
  metrics["epsilon"] = tc.epsilon;
  metrics["steps"] = tc.steps;
  metrics["length"] = tc.length();
  metrics["stalled_paths"] = stalled;
  metrics["mean_alignment"] = align_count > 0 ? Json(align_sum / double(align_count)) : Json(nullptr);
  metrics["paths"] = std::move(rows);

  ensure_dir(o.out);
  io::write_file(join(o.out, "paths.jsonl"), jsonl);
  io::write_file(join(o.out, "metrics.json"), io::dump(metrics));
  return kOk;
}

// ---------------------------------------------------------------------------

struct FieldMapOptions {
  std::string bank;
  std::string dipole;
  std::string slice;
  std::string out = "field";
  Index resolution = 41;
  double extent = 0.0;
  std::uint64_t seed = 0;
};

int cmd_field_map(const FieldMapOptions& o) {
  const DipoleBankd bank = io::load_dipole_bank_file(o.bank);
  const SemanticDipoled* dipole = &bank[0];
  if (!o.dipole.empty()) {
    dipole = nullptr;
    for (const auto& d : bank.dipoles) {
      if (d.id == o.dipole) dipole = &d;
    }
    if (!dipole) throw InvalidArgument("no dipole with id '" + o.dipole + "'");
  }
  Slice slice;
  if (o.slice.empty()) {
    slice = default_slice(*dipole, o.seed);
  } else {
    const Json doc = io::parse(io::read_file(o.slice), o.slice);
    auto vec = [&](const char* key) {
      if (!doc.is_object() || !doc.contains(key) || !doc[key].is_array()) {
        throw FormatError(o.slice + ": missing array '" + key + "'");
      }
      Vector v(static_cast<Index>(doc[key].size()));
      for (std::size_t i = 0; i < doc[key].size(); ++i) {
        if (!doc[key][i].is_number()) throw FormatError(o.slice + ": non-numeric entry");
        v(static_cast<Index>(i)) = doc[key][i].get<double>();
      }
      return v;
    };
    slice = make_slice(vec("origin"), vec("u"), vec("v"));
  }
  const auto samples = field_map(*dipole, slice, {o.resolution, o.extent});
  const std::string csv = field_map_csv(samples);
  ensure_dir(o.out);
  io::write_file(join(o.out, "field.csv"), csv);
  io::write_file(join(o.out, "field.svg"), render_quiver_svg(csv));
  return kOk;
}

// ---------------------------------------------------------------------------

struct CheckGradOptions {
  std::string encoder = "mlp";
  std::string mode = "dipole-field";
  Index latent_dim = 3;
  Index embedding_dim = 4;
  Index hidden_dim = 5;
  Index supports_per_path = 2;
  Index num_paths = 2;
  Index batch = 2;
  double beta = 0.5;
  double temperature = 0.5;
  double fd_step = kDefaultFdStep;
  double threshold = 1e-5;
  bool freeze_scales = false;
  bool corrupt = false;
  std::uint64_t seed = 0;
};

int cmd_check_grad(const CheckGradOptions& o) {
  if (!(o.fd_step > 0.0)) throw InvalidArgument("--fd-step must be positive");
  if (!(o.threshold > 0.0)) throw InvalidArgument("--threshold must be positive");
  if (o.encoder != "linear" && o.encoder != "mlp") {
    throw InvalidArgument("--encoder must be 'linear' or 'mlp'");
  }
  const SyntheticEncoder enc =
      o.encoder == "linear" ? make_linear_encoder(o.latent_dim, o.embedding_dim, o.seed, false)
                            : make_mlp_encoder(o.latent_dim, o.hidden_dim, o.embedding_dim, o.seed);
  const DipoleBankd bank = make_ground_truth_dipoles(enc, o.num_paths, o.seed + 1, 2.0, o.beta).first;
  const LatentWarperd warper = init_warper<double>(o.latent_dim, o.num_paths, o.supports_per_path, o.seed + 2);
  const Matrix batch = sample_latents(o.latent_dim, o.batch, o.seed + 3);
  std::mt19937_64 rng(o.seed + 4);
  std::uniform_real_distribution<double> uniform(0.1, 0.75);
  Matrix eps(o.batch, o.num_paths);
  for (Index n = 0; n < eps.rows(); ++n) {
    for (Index k = 0; k < eps.cols(); ++k) eps(n, k) = uniform(rng);
  }
  const ContrastiveConfig objective{o.temperature, parse_similarity_mode(o.mode)};
  GradientOptions options;
  options.train_scales = !o.freeze_scales;

  const auto result = loss_and_param_gradients(warper, bank, enc, batch, objective, eps, options);
  Vector analytic = result.gradient.flatten();
  if (o.corrupt) analytic(0) += 1e-3 * (1.0 + std::abs(analytic(0)));
  std::vector<bool> mask(static_cast<std::size_t>(warper.parameter_count()), true);
  if (o.freeze_scales) {
    for (Index k = 0; k < warper.num_paths(); ++k) {
      for (Index i = 0; i < warper.supports_per_path(); ++i) {
        mask[static_cast<std::size_t>(warper.log_scale_offset(k, i))] = false;
      }
    }
  }
  LatentWarperd probe = warper;
  auto loss = [&](const Vector& theta) {
    probe.assign(theta);
    return pipeline_loss(probe, bank, enc, batch, objective, eps, options);
  };
  const FiniteDiffReport rep = finite_diff_check(loss, analytic, warper.flatten(), o.fd_step, mask);

  const bool passed = rep.max_relative_error < o.threshold;
  Json doc;
  doc["loss"] = result.loss;
  doc["max_relative_error"] = rep.max_relative_error;
  doc["worst_parameter_index"] = rep.worst_parameter_index;
  doc["checked_parameters"] = rep.checked_parameters;
  doc["threshold"] = o.threshold;
  doc["passed"] = passed;
  std::cout << io::dump(doc);
  return passed ? kOk : kGradient;
}

int run(int argc, char** argv) {
  CLI::App app{"Contrastive training of latent RBF warpings against semantic dipole fields"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values; flags take precedence");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic encoder, dipole bank and ground truth");
  s->add_option("--out", synth.out, "Output directory")->capture_default_str();
  s->add_option("--encoder", synth.encoder, "linear or mlp")->capture_default_str();
  s->add_option("--latent-dim", synth.latent_dim)->capture_default_str();
  s->add_option("--embedding-dim", synth.embedding_dim)->capture_default_str();
  s->add_option("--hidden-dim", synth.hidden_dim)->capture_default_str();
  s->add_option("--K", synth.num_dipoles, "Number of dipoles")->capture_default_str();
  s->add_option("--separation", synth.separation, "Latent distance between poles")->capture_default_str();
  s->add_option("--beta", synth.beta)->capture_default_str();
  s->add_flag("!--no-orthonormal", synth.orthonormal, "Keep the raw Gaussian linear map");
  s->add_option("--seed", synth.seed)->capture_default_str();

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Fit a latent warper");
  t->add_option("--bank", train.bank, "Dipole bank JSON")->required();
  t->add_option("--encoder", train.encoder, "Encoder JSON")->required();
  t->add_option("--out", train.out, "Output directory")->capture_default_str();
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_option("--mode", train.mode, "dipole-field, linear-difference, single-prompt[-plus|-minus]")
      ->capture_default_str();
  t->add_option("--beta", train.beta, "Override the bank's beta");
  t->add_flag("--normalize", train.normalize, "L2-normalize poles on load");
  t->add_flag("--freeze-scales", train.freeze_scales, "Do not train the RBF scales");
  t->add_flag("--no-timing", train.no_timing, "Report wall time as 0 (reproducible reports)");
  t->add_option("--supports-per-path", train.supports_per_path)->capture_default_str();
  t->add_option("--support-radius", train.support_radius)->capture_default_str();
  t->add_option("--initial-gamma", train.initial_gamma)->capture_default_str();
  t->add_option("--batch-size", train.config.batch_size)->capture_default_str();
  t->add_option("--iterations", train.config.iterations)->capture_default_str();
  t->add_option("--lr", train.config.learning_rate)->capture_default_str();
  t->add_option("--epsilon-min", train.config.epsilon_min)->capture_default_str();
  t->add_option("--epsilon-max", train.config.epsilon_max)->capture_default_str();
  t->add_option("--temperature", train.config.temperature)->capture_default_str();
  t->add_option("--seed", train.config.seed)->capture_default_str();
  t->add_option("--stall-window", train.config.stall_window)->capture_default_str();
  t->add_option("--stall-threshold", train.config.stall_threshold)->capture_default_str();
  t->add_option("--stall-tolerance", train.config.stall_tolerance)->capture_default_str();
  t->add_option("--threads", train.config.threads)->capture_default_str();

  TraverseOptions trav;
  auto* v = app.add_subcommand("traverse", "Follow trained paths and write JSONL steps and metrics");
  v->add_option("--checkpoint", trav.checkpoint)->required();
  v->add_option("--encoder", trav.encoder, "Attach embeddings to each step");
  v->add_option("--bank", trav.bank, "Needed for alignment metrics");
  v->add_option("--latents", trav.latents, "JSON list of starting latents");
  v->add_option("--out", trav.out)->capture_default_str();
  v->add_option("--length", trav.length, "Traversal length L; steps = floor(L / epsilon)");
  v->add_option("--steps", trav.steps);
  v->add_option("--epsilon", trav.epsilon)->capture_default_str();
  v->add_option("--count", trav.count, "Sampled starting latents")->capture_default_str();
  v->add_option("--seed", trav.seed)->capture_default_str();
  v->add_option("--path", trav.paths, "Restrict to these path indices");
  v->add_flag("--both-signs", trav.both_signs);

  FieldMapOptions fm;
  auto* f = app.add_subcommand("field-map", "Sample a dipole field on a 2-D slice (CSV + SVG)");
  f->add_option("--bank", fm.bank)->required();
  f->add_option("--dipole", fm.dipole, "Dipole id (default: the first)");
  f->add_option("--slice", fm.slice, "JSON {origin, u, v}; default passes through both poles");
  f->add_option("--out", fm.out)->capture_default_str();
  f->add_option("--resolution", fm.resolution)->capture_default_str();
  f->add_option("--extent", fm.extent, "Half-width; 0 uses the pole distance")->capture_default_str();
  f->add_option("--seed", fm.seed)->capture_default_str();

  CheckGradOptions cg;
  auto* g = app.add_subcommand("check-grad", "Compare analytic and finite-difference gradients");
  g->add_option("--encoder", cg.encoder)->capture_default_str();
  g->add_option("--mode", cg.mode)->capture_default_str();
  g->add_option("--latent-dim", cg.latent_dim)->capture_default_str();
  g->add_option("--embedding-dim", cg.embedding_dim)->capture_default_str();
  g->add_option("--hidden-dim", cg.hidden_dim)->capture_default_str();
  g->add_option("--supports-per-path", cg.supports_per_path)->capture_default_str();
  g->add_option("--K", cg.num_paths)->capture_default_str();
  g->add_option("--batch-size", cg.batch)->capture_default_str();
  g->add_option("--beta", cg.beta)->capture_default_str();
  g->add_option("--temperature", cg.temperature)->capture_default_str();
  g->add_option("--fd-step", cg.fd_step)->capture_default_str();
  g->add_option("--threshold", cg.threshold)->capture_default_str();
  g->add_flag("--freeze-scales", cg.freeze_scales);
  g->add_option("--seed", cg.seed)->capture_default_str();
  g->add_flag("--corrupt-gradient", cg.corrupt)->group("");  // self-test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (s->parsed()) return cmd_synth(synth);
  if (t->parsed()) return cmd_train(train);
  if (v->parsed()) return cmd_traverse(trav);
  if (f->parsed()) return cmd_field_map(fm);
  return cmd_check_grad(cg);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const Stalled& e) {
    std::cerr << "stalled: " << e.what() << '\n';
    return kStall;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
}
