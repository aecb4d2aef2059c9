#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "headmotion/bandsplit.hpp"
#include "headmotion/checkpoint.hpp"
#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"
#include "headmotion/log.hpp"
#include "headmotion/manifest.hpp"
#include "headmotion/metrics.hpp"
#include "headmotion/simulate.hpp"
#include "headmotion/train.hpp"
#include "headmotion/volume_io.hpp"

namespace headmotion::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = HEADMOTION_VERSION;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::BadMagic:
    case ErrorKind::Truncated:
    case ErrorKind::UnsupportedDatatype:
    case ErrorKind::NonRigidRow:
    case ErrorKind::NonMonotonic:
    case ErrorKind::UnknownSplit:
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Io:
    case ErrorKind::Integrity:
    case ErrorKind::InfiniteLoss:
    case ErrorKind::MissingCache:
      return 1;
    default:
      return 3;
  }
}

// Decimal text that always reads as a real number ("0.0" rather than "0").
std::string real_text(double v) {
  std::string s = detail::format_double(v);
  if (std::isfinite(v) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

// Flat `key = value` echo of every option of `app` (given values, else defaults) plus the
// tool version; it can be fed back through --config.
void echo_config(const CLI::App& app, const std::optional<fs::path>& file, std::ostream& err) {
  std::ostringstream text;
  text << "# headmotion " << kVersion << "\n# command: " << app.get_name() << "\n";
  for (const CLI::Option* opt : app.get_options()) {
    const std::string key = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
    if (key.empty() || key == "help" || key == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
      if (value == "{}" || value == "[]") value.clear();  // unset list
    }
    text << key << " = " << value << "\n";
  }
  if (file) {
    std::ofstream out(*file);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + file->string());
    out << text.str();
    return;
  }
  std::istringstream lines(text.str());
  for (std::string line; std::getline(lines, line);) {
    err << (line.rfind('#', 0) == 0 ? line : "# " + line) << "\n";
  }
}

// Applies a flat `key = value` file to the options of `app` that the command line left unset.
void apply_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::Config, path + " line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(detail::trim(body.substr(0, eq)));
    std::string value(detail::trim(body.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    CLI::Option* opt = key == "help" || key == "config" ? nullptr : app.get_option_no_throw("--" + key);
    if (!opt) throw Error(ErrorKind::Config, path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;  // command line wins
    if (value.empty()) continue;  // left unset
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw Error(ErrorKind::Config, path + ": " + key + ": " + e.what());
    }
  }
}

fs::path sidecar(const fs::path& out) { return fs::path(out.string() + ".config.txt"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

std::vector<std::pair<double, double>> parse_levels(const std::vector<std::string>& items) {
  std::vector<std::pair<double, double>> out;
  for (const auto& item : items) {
    const auto colon = item.find(':');
    const auto lo = colon == std::string::npos ? std::nullopt : detail::parse_double(item.substr(0, colon));
    const auto hi = colon == std::string::npos ? std::nullopt : detail::parse_double(item.substr(colon + 1));
    if (!lo || !hi) throw Error(ErrorKind::Config, "motion level interval must look like LO:HI, got '" + item + "'");
    out.emplace_back(*lo, *hi);
  }
  return out;
}

// `volume,<value>` CSV keyed by volume path, in file order.
std::vector<std::pair<std::string, double>> read_keyed_csv(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<std::pair<std::string, double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (line_no == 1 && fields.size() == 2 && !detail::parse_double(fields[1])) continue;  // header
    if (fields.size() != 2) {
      throw Error(ErrorKind::Parse, path.string() + " line " + std::to_string(line_no) + ": expected 2 fields");
    }
    const auto value = detail::parse_double(fields[1]);
    if (!value) {
      throw Error(ErrorKind::Parse, path.string() + " line " + std::to_string(line_no) + ": bad " + what);
    }
    rows.emplace_back(std::string(detail::trim(fields[0])), *value);
  }
  return rows;
}

struct ScoreArgs {
  std::string log;
  std::vector<double> window;
  double offset = 0.0;
  bool bands = false;
  int order = 4;
  double low = 0.1;
  double high = 0.5;
  double rate = 30.0;
  double radius = 80.0;
};

int cmd_score(const CLI::App& app, const ScoreArgs& a, std::ostream& out, std::ostream& err) {
  echo_config(app, std::nullopt, err);
  const auto traj = io::read_tracking_log(a.log);
  if (traj.empty()) throw Error(ErrorKind::EmptyWindow, a.log + " has no samples");
  rigid::SequenceWindow w;
  if (a.window.empty()) {
    w = rigid::SequenceWindow(traj.samples().front().time - a.offset, traj.samples().back().time - a.offset,
                              a.offset);
  } else {
    w = rigid::SequenceWindow(a.window[0], a.window[1], a.offset);
  }
  rigid::JenkinsonParams jp;
  jp.sphere_radius = a.radius;
  const double score = rigid::sequence_motion_score(traj, w, jp).value;
  out << real_text(score);
  if (a.bands) {
    bands::BandSpec spec;
    spec.order = a.order;
    spec.low_cut = a.low;
    spec.high_cut = a.high;
    spec.sample_rate = a.rate;
    spec.validate();
    const auto b = bands::trajectory_band_targets(traj, spec, w, jp);
    out << ',' << real_text(b.drift.value) << ',' << real_text(b.breathing.value) << ','
        << real_text(b.noisy.value);
  }
  out << "\n";
  return 0;
}

struct SimulateArgs {
  std::size_t n = 240;
  int dims = 32;
  double voxel = 2.0;
  std::uint64_t seed = 0;
  std::string out;
  int segments = 32;
  double duration = 60.0;
  double rate = 30.0;
  std::vector<std::string> levels{"0:1.5"};
  std::vector<std::size_t> split_counts;
  double age_coupling = 0.0;
  bool no_masks = false;
};

int cmd_simulate(const CLI::App& app, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  sim::DatasetOptions o;
  o.n = a.n;
  o.dims = {a.dims, a.dims, a.dims};
  o.voxel_size = {a.voxel, a.voxel, a.voxel};
  o.seed = a.seed;
  o.segments = a.segments;
  o.duration = a.duration;
  o.rate = a.rate;
  o.levels = parse_levels(a.levels);
  if (!a.split_counts.empty()) {
    if (a.split_counts.size() != 3) throw Error(ErrorKind::Config, "--split-counts needs train,validation,test");
    o.split_counts = std::array<std::size_t, 3>{a.split_counts[0], a.split_counts[1], a.split_counts[2]};
  }
  o.age_coupling = a.age_coupling;
  o.write_masks = !a.no_masks;
  o.validate();
  ensure_dir(a.out);
  echo_config(app, fs::path(a.out) / "resolved_config.txt", err);
  sim::build_dataset(o, a.out);
  out << (fs::path(a.out) / "manifest.csv").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string preprocess = "lsb8";
  std::string loss = "softbin_kl";
  std::string target = "motion_score";
  int epochs = 500;
  int batch = 2;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<int> channels{8, 16, 32, 64};
  int head_channels = 64;
  std::string norm = "none";
  double dropout = 0.5;
  int bins = 40;
  double max_score = 3.12;
  double sigma = 0.0;
  bool no_augment = false;
  std::int64_t max_steps = 0;
};

int cmd_train(const CLI::App& app, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  nn::NetConfig net;
  net.block_channels = a.channels;
  net.head_channels = a.head_channels;
  net.norm = nn::parse_norm(a.norm);
  net.dropout_rate = a.dropout;
  net.output_bins = a.bins;
  net.seed = a.seed;
  nn::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.loss = nn::parse_loss(a.loss);
  tc.target = io::parse_target(a.target);
  tc.grid = softbin::BinGrid{0.0, a.max_score, a.bins};
  tc.sigma = a.sigma;
  tc.seed = a.seed;
  tc.augment = !a.no_augment;
  if (a.max_steps > 0) tc.max_steps = a.max_steps;
  tc.on_epoch = [&err](const nn::EpochLog& e) {
    err << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss
        << " val_spearman " << e.val_spearman << "\n";
  };
  prep::AugmentConfig aug;
  aug.seed = a.seed;
  const auto preprocess = prep::parse_preprocess(a.preprocess);
  const auto manifest = io::read_manifest(a.manifest);
  ensure_dir(a.out);
  echo_config(app, fs::path(a.out) / "resolved_config.txt", err);
  const auto result = nn::fit(manifest, net, tc, preprocess, aug);
  const fs::path ckpt = fs::path(a.out) / "model.ckpt";
  nn::write_checkpoint(result.model, ckpt);
  nn::write_loss_log(result.log, fs::path(a.out) / "loss_log.csv");
  out << ckpt.string() << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string volume;
  std::string mask;
  std::string manifest;
  std::string split;
  std::string out;
};

int cmd_predict(const CLI::App& app, const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const std::optional<fs::path> echo =
      a.out.empty() ? std::nullopt : std::optional<fs::path>(sidecar(a.out));
  const auto model = nn::read_checkpoint(a.checkpoint);
  std::vector<std::string> names;
  std::vector<Volume> volumes;
  if (!a.volume.empty()) {
    const Volume v = io::read_nifti(a.volume);
    std::optional<Volume> mask;
    if (model.info.preprocess == prep::Preprocess::Background) {
      mask = io::read_nifti(a.mask.empty() ? nn::head_mask_path(a.volume) : fs::path(a.mask));
    }
    volumes.push_back(prep::apply_preprocess(v, model.info.preprocess, mask ? &*mask : nullptr));
    names.push_back(a.volume);
  } else {
    const auto manifest = io::read_manifest(a.manifest);
    const std::optional<io::Split> only =
        a.split.empty() ? std::nullopt : std::optional<io::Split>(io::parse_split(a.split));
    for (const auto& e : manifest.entries()) {
      if (only && e.split != *only) continue;
      names.push_back(e.volume);
      volumes.push_back(nn::load_preprocessed(manifest.resolve(e.volume), model.info.preprocess));
    }
  }
  echo_config(app, echo, err);
  const auto preds = nn::predict_preprocessed(model, volumes);
  if (a.out.empty() && names.size() == 1) {
    out << real_text(preds[0]) << "\n";
    return 0;
  }
  std::ostringstream csv;
  csv << "volume,prediction\n";
  for (std::size_t i = 0; i < preds.size(); ++i) csv << names[i] << ',' << real_text(preds[i]) << "\n";
  if (a.out.empty()) {
    out << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  return 0;
}

struct EvaluateArgs {
  std::string predictions;
  std::string manifest;
  std::string covariate;
  std::string labels;
  std::string target = "motion_score";
  std::string out;
};

int cmd_evaluate(const CLI::App& app, const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  echo_config(app, a.out.empty() ? std::nullopt : std::optional<fs::path>(sidecar(a.out)), err);
  const auto manifest = io::read_manifest(a.manifest);
  const auto rows = read_keyed_csv(a.predictions, "prediction");
  std::map<std::string, double> pred;
  for (const auto& [name, value] : rows) {
    if (!pred.emplace(name, value).second) throw Error(ErrorKind::DuplicatePath, "duplicate prediction for " + name);
  }
  std::map<std::string, const io::ManifestEntry*> by_volume;
  for (const auto& e : manifest.entries()) by_volume.emplace(e.volume, &e);
  std::vector<std::string> unknown;
  for (const auto& [name, value] : rows) {
    if (!by_volume.count(name)) unknown.push_back(name);
  }
  if (!unknown.empty()) {
    std::string msg = "predictions for volumes not in the manifest:";
    for (const auto& u : unknown) msg += " " + u;
    throw Error(ErrorKind::MissingRows, msg);
  }
  // Scored entries are the manifest rows with a prediction; a whole split without any is
  // skipped, a partially predicted split is an error.
  std::map<io::Split, std::pair<std::size_t, std::size_t>> coverage;
  for (const auto& e : manifest.entries()) {
    auto& c = coverage[e.split];
    ++c.first;
    c.second += pred.count(e.volume);
  }
  std::vector<std::string> missing;
  std::vector<const io::ManifestEntry*> scored;
  for (const auto& e : manifest.entries()) {
    const auto& c = coverage[e.split];
    if (c.second == 0) continue;
    if (!pred.count(e.volume)) {
      missing.push_back(e.volume);
      continue;
    }
    scored.push_back(&e);
  }
  if (!missing.empty()) {
    std::string msg = "no prediction for manifest volumes:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(ErrorKind::MissingRows, msg);
  }
  const io::Target target = io::parse_target(a.target);
  std::vector<double> y, yhat;
  io::DatasetManifest subset({}, manifest.base_dir());
  for (const auto* e : scored) {
    y.push_back(io::resolve_label(manifest, *e, target));
    yhat.push_back(pred.at(e->volume));
    subset.add(*e);
  }
  const std::size_t n = y.size();
  std::vector<metrics::EvalRow> report;
  report.push_back({"r2", metrics::r2(y, yhat), n, 0.0, false});
  const auto sp = metrics::spearman(y, yhat);
  report.push_back({"spearman_rho", sp.rho, n, sp.p, true});
  if (!a.covariate.empty()) {
    const auto fit = metrics::correlate_covariate(yhat, a.covariate, subset);
    report.push_back({"covariate_rho", fit.rho, fit.n, fit.p, true});
    report.push_back({"covariate_slope", fit.slope, fit.n, 0.0, false});
    report.push_back({"covariate_intercept", fit.intercept, fit.n, 0.0, false});
  }
  if (!a.labels.empty()) {
    std::map<std::string, double> cls;
    for (const auto& [name, value] : read_keyed_csv(a.labels, "class label")) cls[name] = value;
    std::vector<double> s;
    std::vector<int> c;
    std::vector<std::string> unlabeled;
    for (const auto* e : scored) {
      const auto it = cls.find(e->volume);
      if (it == cls.end()) {
        unlabeled.push_back(e->volume);
        continue;
      }
      if (it->second != 0.0 && it->second != 1.0) {
        throw Error(ErrorKind::Parse, "class label of " + e->volume + " must be 0 or 1");
      }
      s.push_back(pred.at(e->volume));
      c.push_back(static_cast<int>(it->second));
    }
    if (!unlabeled.empty()) {
      std::string msg = "no class label for:";
      for (const auto& u : unlabeled) msg += " " + u;
      throw Error(ErrorKind::MissingRows, msg);
    }
    const auto sep = metrics::threshold_separation(s, c);
    report.push_back({"auc", sep.auc, s.size(), 0.0, false});
    report.push_back({"threshold", sep.threshold, s.size(), 0.0, false});
    report.push_back({"threshold_accuracy", sep.accuracy, s.size(), 0.0, false});
  }
  const std::string text = metrics::format_report(report);
  if (!a.out.empty()) write_text(a.out, text);
  out << text;
  return 0;
}

int cmd_aes(const CLI::App& app, const std::string& volume, std::ostream& out, std::ostream& err) {
  echo_config(app, std::nullopt, err);
  out << real_text(metrics::aes(io::read_nifti(volume))) << "\n";
  return 0;
}

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("HEADMOTION_THREADS")) {
    const auto n = detail::parse_double(env);
    if (n && *n >= 1.0 && *n == std::floor(*n)) omp_set_num_threads(static_cast<int>(*n));
  }
#endif
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Head motion scores from tracking logs and MR volumes"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.allow_config_extras(false);

  app.option_defaults()->always_capture_default();
  std::map<const CLI::App*, std::string> config_paths;
  std::map<const CLI::App*, std::vector<std::string>> required;
  auto configurable = [&](CLI::App* sub) {
    sub->add_option("--config", config_paths[sub], "Flat key = value file with option defaults")
        ->check(CLI::ExistingFile);
  };

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Motion score of a tracking log");
  configurable(s);
  s->add_option("--log", score.log, "Tracking log CSV")->check(CLI::ExistingFile);
  required[s] = {"--log"};
  s->add_option("--window", score.window, "Sequence start and end on the scanner clock (s)")->expected(2);
  s->add_option("--offset", score.offset, "Camera clock minus scanner clock (s)");
  s->add_flag("--bands", score.bands, "Also emit drift, breathing and noisy band scores");
  s->add_option("--order", score.order, "Butterworth prototype order")->check(CLI::PositiveNumber);
  s->add_option("--low", score.low, "Drift/breathing cutoff (Hz)");
  s->add_option("--high", score.high, "Breathing/noisy cutoff (Hz)");
  s->add_option("--rate", score.rate, "Tracking sample rate (Hz)");
  s->add_option("--radius", score.radius, "Sphere radius (mm)")->check(CLI::PositiveNumber);

  SimulateArgs simulate;
  auto* sm = app.add_subcommand("simulate", "Synthetic phantom dataset with exact motion labels");
  configurable(sm);
  sm->add_option("--n", simulate.n, "Number of subjects")->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
  sm->add_option("--dims", simulate.dims, "Grid extent per axis")->check(CLI::Range(16, 1024));
  sm->add_option("--voxel", simulate.voxel, "Voxel size (mm)")->check(CLI::PositiveNumber);
  sm->add_option("--seed", simulate.seed, "Random seed");
  sm->add_option("--out", simulate.out, "Output directory");
  required[sm] = {"--out"};
  sm->add_option("--segments", simulate.segments, "Phase-encode segments")->check(CLI::PositiveNumber);
  sm->add_option("--duration", simulate.duration, "Trajectory duration (s)")->check(CLI::PositiveNumber);
  sm->add_option("--rate", simulate.rate, "Trajectory sample rate (Hz)")->check(CLI::PositiveNumber);
  sm->add_option("--levels", simulate.levels, "Motion level intervals LO:HI (mm/s)")->delimiter(',');
  sm->add_option("--split-counts", simulate.split_counts, "Train,validation,test counts")->delimiter(',');
  sm->add_option("--age-coupling", simulate.age_coupling, "Weight of motion level in the age covariate")
      ->check(CLI::Range(0.0, 1.0));
  sm->add_flag("--no-masks", simulate.no_masks, "Skip head mask files");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train a motion regressor");
  configurable(tr);
  tr->add_option("--manifest", train.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  tr->add_option("--preprocess", train.preprocess, "none, lsb8, robust or background");
  tr->add_option("--loss", train.loss, "softbin_kl or mse");
  tr->add_option("--target", train.target, "motion_score, drift, breathing or noisy");
  tr->add_option("--epochs", train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch", train.batch, "Batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", train.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--seed", train.seed, "Random seed");
  tr->add_option("--out", train.out, "Output directory");
  required[tr] = {"--manifest", "--out"};
  tr->add_option("--channels", train.channels, "Channels per convolution block")->delimiter(',');
  tr->add_option("--head-channels", train.head_channels, "Channels of the 1x1x1 head")->check(CLI::PositiveNumber);
  tr->add_option("--norm", train.norm, "none or batch");
  tr->add_option("--dropout", train.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.99));
  tr->add_option("--bins", train.bins, "Soft-label bins")->check(CLI::PositiveNumber);
  tr->add_option("--max-score", train.max_score, "Upper end of the bin grid (mm/s)")->check(CLI::PositiveNumber);
  tr->add_option("--sigma", train.sigma, "Soft-label width (mm/s, 0 = one bin)");
  tr->add_flag("--no-augment", train.no_augment, "Disable intensity scaling and flips");
  tr->add_option("--max-steps", train.max_steps, "Stop after this many optimizer steps (0 = no limit)");

  PredictArgs predict;
  auto* pr = app.add_subcommand("predict", "Predict motion scores");
  configurable(pr);
  pr->add_option("--checkpoint", predict.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  required[pr] = {"--checkpoint"};
  auto* pv = pr->add_option("--volume", predict.volume, "Single NIfTI volume")->check(CLI::ExistingFile);
  pr->add_option("--mask", predict.mask, "Head mask for background preprocessing")->check(CLI::ExistingFile);
  auto* pm = pr->add_option("--manifest", predict.manifest, "Predict every manifest volume")->check(CLI::ExistingFile);
  pr->add_option("--split", predict.split, "Restrict --manifest to one split");
  pr->add_option("--out", predict.out, "Prediction CSV");
  pv->excludes(pm);
  pm->excludes(pv);

  EvaluateArgs evaluate;
  auto* ev = app.add_subcommand("evaluate", "Score predictions against manifest labels");
  configurable(ev);
  ev->add_option("--predictions", evaluate.predictions, "volume,prediction CSV")->check(CLI::ExistingFile);
  ev->add_option("--manifest", evaluate.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  required[ev] = {"--predictions", "--manifest"};
  ev->add_option("--covariate", evaluate.covariate, "Covariate to correlate with the predictions");
  ev->add_option("--labels", evaluate.labels, "volume,class CSV for threshold separation")->check(CLI::ExistingFile);
  ev->add_option("--target", evaluate.target, "motion_score, drift, breathing or noisy");
  ev->add_option("--out", evaluate.out, "Report CSV");

  std::string aes_volume;
  auto* ae = app.add_subcommand("aes", "Average edge strength of a volume");
  configurable(ae);
  ae->add_option("--volume", aes_volume, "NIfTI volume")->check(CLI::ExistingFile);
  required[ae] = {"--volume"};

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    for (CLI::App* sub : app.get_subcommands()) {
      if (!config_paths[sub].empty()) apply_config_file(*sub, config_paths[sub]);
      for (const auto& name : required[sub]) {
        if (sub->get_option(name)->count() == 0) throw CLI::RequiredError(name);
      }
    }
    if (pr->parsed() && predict.volume.empty() && predict.manifest.empty()) {
      throw CLI::RequiredError("--volume or --manifest");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  apply_thread_env();
  auto sink = set_warning_sink([&err](const std::string& msg) { err << "warning: " << msg << "\n"; });
  int code = 0;
  try {
    if (s->parsed()) code = cmd_score(*s, score, out, err);
    if (sm->parsed()) code = cmd_simulate(*sm, simulate, out, err);
    if (tr->parsed()) code = cmd_train(*tr, train, out, err);
    if (pr->parsed()) code = cmd_predict(*pr, predict, out, err);
    if (ev->parsed()) code = cmd_evaluate(*ev, evaluate, out, err);
    if (ae->parsed()) code = cmd_aes(*ae, aes_volume, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = 1;
  }
  set_warning_sink(std::move(sink));
  return code;
}

}  // namespace headmotion::cli
