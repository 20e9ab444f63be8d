#include "dgan/config.hpp"

#include <fstream>
#include <set>

namespace dgan {

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(path(key) + ": required");
    T v{};
    read(key, v);
    return v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError("unknown config key '" + path(it.key()) + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
void validated(const std::string& where, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

GridSpec grid_from_json(const Json& j) {
  Fields f(j, "grid");
  GridSpec g;
  g.lat_start = f.require<double>("lat_start");
  g.lon_start = f.require<double>("lon_start");
  g.lat_end = f.require<double>("lat_end");
  g.lon_end = f.require<double>("lon_end");
  g.rows = f.require<Index>("rows");
  g.cols = f.require<Index>("cols");
  f.finish();
  validated("grid", [&] { g.validate(); });
  return g;
}

Json to_json(const GridSpec& g) {
  return {{"lat_start", g.lat_start}, {"lon_start", g.lon_start}, {"lat_end", g.lat_end},
          {"lon_end", g.lon_end},     {"rows", g.rows},           {"cols", g.cols}};
}

IngestConfig ingest_from_json(const Json& j) {
  Fields f(j, "ingest");
  IngestConfig c;
  c.trips = f.require<std::string>("trips");
  f.read("time_column", c.columns.time_column);
  f.read("lat_column", c.columns.lat_column);
  f.read("lon_column", c.columns.lon_column);
  f.read("time_format", c.columns.time_format);
  c.start = f.require<std::string>("start");
  c.num_slots = f.require<Index>("num_slots");
  std::string s;
  f.read("weather", s);
  c.weather = s;
  s.clear();
  f.read("poi", s);
  c.poi = s;
  f.read("weather_time_column", c.weather_time_column);
  f.finish();
  if (c.num_slots < 1) throw ConfigError("ingest.num_slots: must be >= 1");
  if (c.weather.empty() != c.poi.empty()) throw ConfigError("ingest.weather: weather and poi must be given together");
  return c;
}

Json to_json(const IngestConfig& c) {
  return {{"trips", c.trips.string()},
          {"time_column", c.columns.time_column},
          {"lat_column", c.columns.lat_column},
          {"lon_column", c.columns.lon_column},
          {"time_format", c.columns.time_format},
          {"start", c.start},
          {"num_slots", c.num_slots},
          {"weather", c.weather.string()},
          {"poi", c.poi.string()},
          {"weather_time_column", c.weather_time_column}};
}

MlpBaselineConfig mlp_from_json(const Json& j) {
  Fields f(j, "eval.mlp");
  MlpBaselineConfig c;
  f.read("hidden", c.hidden);
  f.read("epochs", c.epochs);
  f.read("batch_size", c.batch_size);
  f.read("learning_rate", c.learning_rate);
  f.read("seed", c.seed);
  f.finish();
  if (c.epochs < 1 || c.batch_size < 1 || !(c.learning_rate > 0.0)) throw ConfigError("eval.mlp: invalid settings");
  for (auto h : c.hidden)
    if (h < 1) throw ConfigError("eval.mlp.hidden: sizes must be >= 1");
  return c;
}

Json to_json(const MlpBaselineConfig& c) {
  return {{"hidden", c.hidden},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed}};
}

}  // namespace

Json to_json(const ArchSpec& a) {
  return {{"rows", a.rows},
          {"cols", a.cols},
          {"seq_len", a.seq_len},
          {"conv_lstm_filters", a.conv_lstm_filters},
          {"conv3d_channels", a.conv3d_channels},
          {"latent_dim", a.latent_dim},
          {"factor_latent_dim", a.factor_latent_dim},
          {"mlp_hidden", a.mlp_hidden},
          {"decoder_seed_steps", a.decoder_seed_steps},
          {"decoder_seed_channels", a.decoder_seed_channels},
          {"dropout", a.dropout},
          {"leaky_slope", a.leaky_slope},
          {"bn_momentum", a.bn_momentum},
          {"bn_eps", a.bn_eps},
          {"factors", {{"poi", a.factors.poi}, {"weekday", a.factors.weekday}, {"weather", a.factors.weather}}},
          {"weather_arity", a.weather_arity},
          {"sample_at_inference", a.sample_at_inference},
          {"init_scale", a.init_scale},
          {"forget_bias", a.forget_bias}};
}

ArchSpec arch_from_json(const Json& j, const std::string& where) {
  Fields f(j, where);
  ArchSpec a;
  f.read("rows", a.rows);
  f.read("cols", a.cols);
  f.read("seq_len", a.seq_len);
  f.read("conv_lstm_filters", a.conv_lstm_filters);
  f.read("conv3d_channels", a.conv3d_channels);
  f.read("latent_dim", a.latent_dim);
  f.read("factor_latent_dim", a.factor_latent_dim);
  f.read("mlp_hidden", a.mlp_hidden);
  f.read("decoder_seed_steps", a.decoder_seed_steps);
  f.read("decoder_seed_channels", a.decoder_seed_channels);
  f.read("dropout", a.dropout);
  f.read("leaky_slope", a.leaky_slope);
  f.read("bn_momentum", a.bn_momentum);
  f.read("bn_eps", a.bn_eps);
  if (f.has("factors")) {
    Fields ff(f.at("factors"), where + ".factors");
    ff.read("poi", a.factors.poi);
    ff.read("weekday", a.factors.weekday);
    ff.read("weather", a.factors.weather);
    ff.finish();
  }
  f.read("weather_arity", a.weather_arity);
  f.read("sample_at_inference", a.sample_at_inference);
  f.read("init_scale", a.init_scale);
  f.read("forget_bias", a.forget_bias);
  f.finish();
  validated(where, [&] { a.validate(); });
  return a;
}

Json to_json(const TrainConfig& t) {
  Json j{{"batch_size", t.batch_size},
         {"learning_rate", t.learning_rate},
         {"epochs", t.epochs},
         {"optimizer", t.optimizer},
         {"momentum", t.momentum},
         {"adam_beta1", t.adam_beta1},
         {"adam_beta2", t.adam_beta2},
         {"adam_eps", t.adam_eps},
         {"train_fraction", t.train_fraction},
         {"seed", t.seed},
         {"d_steps_per_g_step", t.d_steps_per_g_step},
         {"checkpoint_every", t.checkpoint_every},
         {"kl_weight", t.kl_weight},
         {"recon_weight", t.recon_weight},
         {"d_enc_label", t.d_enc_label},
         {"max_steps", t.max_steps},
         {"recalibrate_bn", t.recalibrate_bn}};
  j["grad_clip_norm"] = t.grad_clip_norm ? Json(*t.grad_clip_norm) : Json(nullptr);
  return j;
}

TrainConfig train_from_json(const Json& j, const std::string& where) {
  Fields f(j, where);
  TrainConfig t;
  f.read("batch_size", t.batch_size);
  f.read("learning_rate", t.learning_rate);
  f.read("epochs", t.epochs);
  f.read("optimizer", t.optimizer);
  f.read("momentum", t.momentum);
  f.read("adam_beta1", t.adam_beta1);
  f.read("adam_beta2", t.adam_beta2);
  f.read("adam_eps", t.adam_eps);
  f.read("train_fraction", t.train_fraction);
  f.read("seed", t.seed);
  f.read("d_steps_per_g_step", t.d_steps_per_g_step);
  if (f.has("grad_clip_norm") && !f.at("grad_clip_norm").is_null()) {
    double c = 0.0;
    f.read("grad_clip_norm", c);
    t.grad_clip_norm = c;
  }
  f.read("checkpoint_every", t.checkpoint_every);
  f.read("kl_weight", t.kl_weight);
  f.read("recon_weight", t.recon_weight);
  f.read("d_enc_label", t.d_enc_label);
  f.read("max_steps", t.max_steps);
  f.read("recalibrate_bn", t.recalibrate_bn);
  f.finish();
  validated(where, [&] { t.validate(); });
  return t;
}

Json to_json(const SynthProcess& p) {
  Json bumps = Json::array();
  for (const auto& b : p.bumps) bumps.push_back({{"row", b.row}, {"col", b.col}, {"width", b.width}});
  return {{"rows", p.rows},           {"cols", p.cols},
          {"amplitude", p.amplitude}, {"period", p.period},
          {"bumps", bumps},           {"drift_row", p.drift_row},
          {"drift_col", p.drift_col}, {"noise_sigma", p.noise_sigma},
          {"seed", p.seed}};
}

SynthProcess synth_from_json(const Json& j, const std::string& where) {
  Fields f(j, where);
  SynthProcess p;
  f.read("rows", p.rows);
  f.read("cols", p.cols);
  f.read("amplitude", p.amplitude);
  f.read("period", p.period);
  if (f.has("bumps")) {
    const Json& arr = f.at("bumps");
    if (!arr.is_array()) throw ConfigError(where + ".bumps: expected an array");
    p.bumps.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Fields b(arr[i], where + ".bumps[" + std::to_string(i) + "]");
      Bump bump;
      bump.row = b.require<double>("row");
      bump.col = b.require<double>("col");
      b.read("width", bump.width);
      b.finish();
      p.bumps.push_back(bump);
    }
  }
  f.read("drift_row", p.drift_row);
  f.read("drift_col", p.drift_col);
  f.read("noise_sigma", p.noise_sigma);
  f.read("seed", p.seed);
  f.finish();
  validated(where, [&] { p.validate(); });
  return p;
}

Json to_json(const MinMaxScaler& s) { return {{"data_min", s.data_min}, {"data_max", s.data_max}}; }

MinMaxScaler scaler_from_json(const Json& j) {
  return {j.at("data_min").get<double>(), j.at("data_max").get<double>()};
}

std::string fingerprint(const Json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

std::string RunConfig::fingerprint() const { return dgan::fingerprint(raw); }

RunConfig parse_run_config(const Json& j) {
  Fields top(j, "config");
  RunConfig rc;
  Json canon = Json::object();
  if (top.has("grid")) {
    rc.grid = grid_from_json(top.at("grid"));
    canon["grid"] = to_json(*rc.grid);
  }
  if (top.has("ingest")) {
    rc.ingest = ingest_from_json(top.at("ingest"));
    canon["ingest"] = to_json(*rc.ingest);
  }
  if (top.has("synth")) {
    Json s = top.at("synth");
    if (!s.is_object()) throw ConfigError("synth: expected an object");
    if (s.contains("num_slots")) {
      try {
        rc.synth.num_slots = s["num_slots"].get<Index>();
      } catch (const Json::exception&) {
        throw ConfigError("synth.num_slots: wrong type");
      }
      s.erase("num_slots");
    }
    rc.synth.process = synth_from_json(s, "synth");
    if (rc.synth.num_slots < 1) throw ConfigError("synth.num_slots: must be >= 1");
  }
  canon["synth"] = to_json(rc.synth.process);
  canon["synth"]["num_slots"] = rc.synth.num_slots;

  if (top.has("data")) {
    Fields f(top.at("data"), "data");
    std::string dir;
    f.read("dir", dir);
    rc.data.dir = dir;
    f.finish();
  }
  canon["data"] = {{"dir", rc.data.dir.string()}};

  if (top.has("arch")) rc.arch = arch_from_json(top.at("arch"));
  canon["arch"] = to_json(rc.arch);
  if (top.has("train")) rc.train = train_from_json(top.at("train"));
  canon["train"] = to_json(rc.train);

  if (top.has("eval")) {
    Fields f(top.at("eval"), "eval");
    f.read("steps", rc.eval.steps);
    f.read("baselines", rc.eval.baselines);
    f.read("baseline_k", rc.eval.baseline_k);
    std::string pooling = "pooled";
    f.read("pooling", pooling);
    if (pooling == "pooled") rc.eval.pooling = Pooling::pooled;
    else if (pooling == "per_map") rc.eval.pooling = Pooling::per_map;
    else throw ConfigError("eval.pooling: expected 'pooled' or 'per_map'");
    f.read("signed_mae", rc.eval.signed_mae);
    if (f.has("mlp")) rc.eval.mlp = mlp_from_json(f.at("mlp"));
    std::string ck;
    f.read("checkpoint", ck);
    rc.eval_checkpoint = ck;
    f.finish();
    if (rc.eval.steps < 1) throw ConfigError("eval.steps: must be >= 1");
    if (rc.eval.baseline_k < 1) throw ConfigError("eval.baseline_k: must be >= 1");
    for (const auto& b : rc.eval.baselines)
      if (b != "sma" && b != "wma" && b != "ols" && b != "mlp")
        throw ConfigError("eval.baselines: unknown baseline '" + b + "'");
  }
  canon["eval"] = {{"steps", rc.eval.steps},
                   {"baselines", rc.eval.baselines},
                   {"baseline_k", rc.eval.baseline_k},
                   {"pooling", rc.eval.pooling == Pooling::pooled ? "pooled" : "per_map"},
                   {"signed_mae", rc.eval.signed_mae},
                   {"mlp", to_json(rc.eval.mlp)},
                   {"checkpoint", rc.eval_checkpoint.string()}};

  if (top.has("predict")) {
    Fields f(top.at("predict"), "predict");
    std::string ck;
    f.read("checkpoint", ck);
    rc.predict.checkpoint = ck;
    f.read("steps", rc.predict.steps);
    f.read("window", rc.predict.window);
    f.finish();
    if (rc.predict.steps < 1) throw ConfigError("predict.steps: must be >= 1");
  }
  canon["predict"] = {{"checkpoint", rc.predict.checkpoint.string()},
                      {"steps", rc.predict.steps},
                      {"window", rc.predict.window}};

  if (top.has("sweep")) {
    Fields f(top.at("sweep"), "sweep");
    f.read("axis", rc.sweep.axis);
    f.read("lengths", rc.sweep.lengths);
    f.read("steps", rc.sweep.steps);
    f.finish();
    if (rc.sweep.axis != "seq_length" && rc.sweep.axis != "external_factors" && rc.sweep.axis != "rollout_steps")
      throw ConfigError("sweep.axis: unknown axis '" + rc.sweep.axis + "'");
    if (rc.sweep.steps < 1) throw ConfigError("sweep.steps: must be >= 1");
    for (auto t : rc.sweep.lengths)
      if (t < 1) throw ConfigError("sweep.lengths: lengths must be >= 1");
  }
  canon["sweep"] = {{"axis", rc.sweep.axis}, {"lengths", rc.sweep.lengths}, {"steps", rc.sweep.steps}};
  top.finish();
  rc.raw = std::move(canon);
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace dgan
