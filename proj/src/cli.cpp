#include "dgan/cli.hpp"

#include "dgan/baselines.hpp"
#include "dgan/config.hpp"
#include "dgan/io.hpp"
#include "dgan/sweep.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <optional>

namespace dgan {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::optional<Index> steps;
  std::optional<Index> epochs;
  std::optional<Index> max_steps;
  std::optional<Index> num_slots;
  std::optional<double> noise_sigma;
  std::optional<std::string> axis;
  std::optional<std::int64_t> window;
};

Json read_config_json(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
}

void set(Json& j, const std::string& section, const std::string& key, const Json& v) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (!j.contains(section)) j[section] = Json::object();
  if (!j[section].is_object()) throw ConfigError(section + ": expected an object");
  j[section][key] = v;
}

RunConfig resolve(const std::string& cmd, const Common& c) {
  Json j = read_config_json(c.config);
  if (c.seed) set(j, cmd == "synth" ? "synth" : "train", "seed", *c.seed);
  if (c.data) set(j, "data", "dir", *c.data);
  if (c.num_slots) set(j, "synth", "num_slots", *c.num_slots);
  if (c.noise_sigma) set(j, "synth", "noise_sigma", *c.noise_sigma);
  if (c.epochs) set(j, "train", "epochs", *c.epochs);
  if (c.max_steps) set(j, "train", "max_steps", *c.max_steps);
  if (c.axis) set(j, "sweep", "axis", *c.axis);
  if (c.steps) set(j, cmd == "sweep" ? "sweep" : cmd == "predict" ? "predict" : "eval", "steps", *c.steps);
  if (c.checkpoint) set(j, cmd == "predict" ? "predict" : "eval", "checkpoint", *c.checkpoint);
  if (c.window) set(j, "predict", "window", *c.window);
  return parse_run_config(j);
}

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out: output directory required");
  fs::create_directories(c.out);
  return c.out;
}

struct Dataset {
  std::shared_ptr<const STSequence> raw;
  std::shared_ptr<const FactorSeries> factors;
};

Dataset load_dataset(const RunConfig& rc) {
  if (rc.data.dir.empty()) throw ConfigError("data.dir: required (or pass --data)");
  Dataset d;
  d.raw = std::make_shared<const STSequence>(read_sequence(rc.data.dir / "sequence.bin"));
  const auto fpath = rc.data.dir / "factors.bin";
  if (fs::exists(fpath)) d.factors = std::make_shared<const FactorSeries>(read_factors(fpath));
  return d;
}

void check_grid(const ArchSpec& arch, const STSequence& seq) {
  if (arch.rows != seq.rows() || arch.cols != seq.cols())
    throw ConfigError("arch.rows: model grid " + std::to_string(arch.rows) + "x" + std::to_string(arch.cols) +
                      " does not match data grid " + std::to_string(seq.rows()) + "x" + std::to_string(seq.cols()));
}

void write_run_record(const RunConfig& rc, const fs::path& dir, const std::string& name) {
  write_json({{"fingerprint", rc.fingerprint()}, {"config", rc.raw}}, dir / name);
}

int cmd_synth(const RunConfig& rc, const Common& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const SynthData d = generate(rc.synth.process, rc.synth.num_slots);
  write_sequence(d.sequence, dir / "sequence.bin");
  write_factors(d.factors, dir / "factors.bin");
  write_json({{"fingerprint", rc.fingerprint()},
              {"process", to_json(rc.synth.process)},
              {"num_slots", rc.synth.num_slots}},
             dir / "synth.json");
  out << "slots " << d.sequence.size() << "\ntotal demand " << format_double(d.sequence.total()) << '\n';
  return kExitOk;
}

int cmd_ingest(const RunConfig& rc, const Common& c, std::ostream& out) {
  if (!rc.grid) throw ConfigError("grid: required for ingest");
  if (!rc.ingest) throw ConfigError("ingest: required for ingest");
  const auto& ic = *rc.ingest;
  const auto start = parse_timestamp(ic.start, ic.columns.time_format);
  if (!start) throw ConfigError("ingest.start: does not match time_format");
  const fs::path dir = out_dir(c);
  const std::int64_t first = hour_slot(*start);
  const ParsedTrips trips = parse_trips(ic.trips, ic.columns);
  const AggregateResult agg = aggregate(trips.records, *rc.grid, first, first + ic.num_slots - 1);
  write_sequence(agg.sequence, dir / "sequence.bin");
  if (!ic.weather.empty()) {
    const FactorSeries f = build_factors(ic.weather, ic.poi, Calendar{}, *rc.grid, first, ic.num_slots,
                                         ic.weather_time_column, ic.columns.time_format);
    write_factors(f, dir / "factors.bin");
  }
  write_json({{"fingerprint", rc.fingerprint()},
              {"rows_read", trips.rows},
              {"malformed", trips.malformed},
              {"kept", agg.kept},
              {"dropped_outside_grid", agg.dropped_outside_grid},
              {"dropped_outside_window", agg.dropped_outside_window}},
             dir / "ingest.json");
  out << "slots " << agg.sequence.size() << "\ntotal demand " << format_double(agg.sequence.total())
      << "\nkept " << agg.kept << "\ndropped outside grid " << agg.dropped_outside_grid
      << "\ndropped outside window " << agg.dropped_outside_window << "\nmalformed rows " << trips.malformed
      << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& rc, const Common& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const Dataset d = load_dataset(rc);
  check_grid(rc.arch, *d.raw);
  const PreparedData p =
      prepare(d.raw, rc.arch.factors_enabled() ? d.factors : nullptr, rc.arch.seq_len, rc.train.train_fraction);
  TrainOptions opt;
  opt.out_dir = dir;
  opt.config_hash = rc.fingerprint();
  const auto res = train(rc.arch, rc.train, p.train, p.scaler, opt);
  write_run_record(rc, dir, "run.json");
  const auto& h = res.state.history;
  out << "steps " << res.state.step << "\nepochs " << res.state.epoch << '\n';
  if (!h.empty())
    out << "final d_loss " << format_double(h.back().d_loss) << "\nfinal recon " << format_double(h.back().recon)
        << '\n';
  out << "checkpoint " << res.checkpoint_path->string() << '\n';
  return kExitOk;
}

struct Split {
  PreparedData p;
  Checkpoint ckpt;
};

Split load_for_eval(const RunConfig& rc, const fs::path& ckpt_path) {
  if (ckpt_path.empty()) throw ConfigError("checkpoint: required (or pass --checkpoint)");
  const Dataset d = load_dataset(rc);
  Split s;
  s.ckpt = load_checkpoint(ckpt_path, {d.raw->rows(), d.raw->cols(), std::nullopt});
  const ArchSpec& arch = s.ckpt.model.arch();
  auto all = window(d.raw, arch.factors_enabled() ? d.factors : nullptr, arch.seq_len);
  auto [tr, te] = split(all, rc.train.train_fraction);
  s.p.raw = d.raw;
  s.p.scaler = s.ckpt.scaler;
  s.p.normalized = std::make_shared<const STSequence>(s.p.scaler.normalize(*d.raw));
  s.p.train = tr.rebind(s.p.normalized);
  s.p.test = te.rebind(s.p.normalized);
  return s;
}

int cmd_eval(const RunConfig& rc, const Common& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  Split s = load_for_eval(rc, rc.eval_checkpoint);
  // every row is scored on the windows that can be rolled out the full horizon
  const EvalData data{rollout_windows(s.p.test, rc.eval.steps), s.p.raw, s.p.scaler};
  Rng rng(rc.train.seed);
  std::vector<MetricRow> rows = rollout_eval(s.ckpt.model, data, rc.eval.steps, rng, rc.eval);
  for (const auto& b : rc.eval.baselines) rows.push_back(evaluate_baseline(baseline_from_string(b), s.p.train, data, rc.eval));
  write_metrics_csv(rows, rc.fingerprint(), dir / "metrics.csv");
  write_json(metrics_json(rows, rc.fingerprint()), dir / "metrics.json");
  for (const auto& r : rows)
    out << r.model << " h" << r.horizon << " rmse " << format_double(r.rmse) << " mae " << format_double(r.mae)
        << '\n';
  return kExitOk;
}

int cmd_predict(const RunConfig& rc, const Common& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  Split s = load_for_eval(rc, rc.predict.checkpoint);
  const auto n = static_cast<std::int64_t>(s.p.test.size());
  const std::int64_t w = rc.predict.window < 0 ? n + rc.predict.window : rc.predict.window;
  if (w < 0 || w >= n)
    throw ConfigError("predict.window: " + std::to_string(rc.predict.window) + " is outside the " +
                      std::to_string(n) + " test windows");
  const auto one = s.p.test.subset(static_cast<std::size_t>(w), static_cast<std::size_t>(w) + 1);
  Rng rng(rc.train.seed);
  const auto preds = s.ckpt.model.predict_windows(one, rc.predict.steps, rng);
  std::vector<GridMatrix<double>> maps;
  for (const auto& step : preds) maps.push_back(s.p.scaler.denormalize(step.front()));
  write_maps_csv(maps, dir / "predictions.csv");
  Json jm = Json::array();
  for (const auto& m : maps) {
    Json rows = Json::array();
    for (Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
      rows.push_back(row);
    }
    jm.push_back(rows);
  }
  write_json({{"fingerprint", rc.fingerprint()},
              {"window", w},
              {"first_slot", s.p.raw->epoch_slot() + static_cast<std::int64_t>(one.target_index(0))},
              {"maps", jm}},
             dir / "predictions.json");
  out << "predicted " << maps.size() << " maps for test window " << w << '\n';
  return kExitOk;
}

int cmd_sweep(const RunConfig& rc, const Common& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const Dataset d = load_dataset(rc);
  check_grid(rc.arch, *d.raw);
  SweepInputs in{d.raw, d.factors, rc.arch, rc.train, rc.eval, rc.fingerprint()};
  const Index steps = rc.sweep.axis == "external_factors" ? rc.eval.steps : rc.sweep.steps;
  const SweepTable t = run_sweep(rc.sweep.axis, in, rc.sweep.lengths, steps);
  write_sweep_csv(t, dir / ("sweep_" + t.axis + ".csv"));
  write_json(sweep_json(t), dir / ("sweep_" + t.axis + ".json"));
  for (const auto& r : t.rows) {
    out << r.label;
    if (r.skipped) out << " skipped: " << r.note;
    else
      for (const auto& m : r.metrics) out << " h" << m.horizon << '=' << format_double(m.rmse);
    out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal demand prediction with a variational GAN"};
  app.require_subcommand(1);
  Common c;
  std::string cmd;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "JSON run configuration");
    sub->add_option("--seed", c.seed, "seed override");
    sub->add_option("--out", c.out, "output directory");
  };
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  common(synth);
  synth->add_option("--num-slots", c.num_slots);
  synth->add_option("--noise-sigma", c.noise_sigma);
  auto* ingest = app.add_subcommand("ingest", "aggregate a trip CSV into grid maps");
  common(ingest);
  auto* train_cmd = app.add_subcommand("train", "train a model");
  common(train_cmd);
  train_cmd->add_option("--data", c.data, "dataset directory");
  train_cmd->add_option("--epochs", c.epochs);
  train_cmd->add_option("--max-steps", c.max_steps);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and baselines");
  common(eval);
  eval->add_option("--data", c.data, "dataset directory");
  eval->add_option("--checkpoint", c.checkpoint);
  eval->add_option("--steps", c.steps, "rollout horizon");
  auto* predict = app.add_subcommand("predict", "predict future maps for one test window");
  common(predict);
  predict->add_option("--data", c.data, "dataset directory");
  predict->add_option("--checkpoint", c.checkpoint);
  predict->add_option("--steps", c.steps);
  predict->add_option("--window", c.window, "test window index; negative counts from the end");
  auto* sweep = app.add_subcommand("sweep", "ablation sweeps");
  common(sweep);
  sweep->add_option("--data", c.data, "dataset directory");
  sweep->add_option("--axis", c.axis, "seq_length | external_factors | rollout_steps");
  sweep->add_option("--steps", c.steps);
  sweep->add_option("--epochs", c.epochs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (auto* sub : app.get_subcommands()) cmd = sub->get_name();

  try {
    const RunConfig rc = resolve(cmd, c);
    if (cmd == "synth") return cmd_synth(rc, c, out);
    if (cmd == "ingest") return cmd_ingest(rc, c, out);
    if (cmd == "train") return cmd_train(rc, c, out);
    if (cmd == "eval") return cmd_eval(rc, c, out);
    if (cmd == "predict") return cmd_predict(rc, c, out);
    return cmd_sweep(rc, c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("dgan");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dgan
