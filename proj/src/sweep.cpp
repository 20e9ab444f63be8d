#include "dgan/sweep.hpp"

#include "dgan/io.hpp"

#include <fstream>
#include <stdexcept>

namespace dgan {

namespace {

struct Trained {
  Checkpoint ckpt;
  EvalData data;
};

Trained fit(const SweepInputs& in, const ArchSpec& arch) {
  auto factors = arch.factors_enabled() ? in.factors : nullptr;
  PreparedData p = prepare(in.raw, factors, arch.seq_len, in.train.train_fraction);
  TrainOptions opt;
  opt.config_hash = in.fingerprint;
  auto res = train(arch, in.train, p.train, p.scaler, opt);
  return {std::move(res.state.checkpoint), EvalData{p.test, p.raw, p.scaler}};
}

std::vector<MetricRow> score(Trained& t, const SweepInputs& in, Index steps) {
  Rng rng(in.train.seed);
  EvalData d = t.data;
  d.test = rollout_windows(d.test, steps);
  return rollout_eval(t.ckpt.model, d, steps, rng, in.eval);
}

SweepRow skipped(std::string label, Index T, std::string why) {
  SweepRow r;
  r.label = std::move(label);
  r.seq_len = T;
  r.skipped = true;
  for (char& c : why)
    if (c == ',' || c == '\n') c = ';';
  r.note = std::move(why);
  return r;
}

}  // namespace

SweepTable seq_length_sweep(const SweepInputs& in, const std::vector<Index>& lengths, Index steps) {
  SweepTable table{"seq_length", in.fingerprint, {}};
  for (Index T : lengths) {
    const std::string label = "T=" + std::to_string(T);
    ArchSpec arch = in.arch;
    arch.seq_len = T;
    try {
      Trained t = fit(in, arch);
      table.rows.push_back({label, T, false, "", score(t, in, steps)});
    } catch (const std::invalid_argument& e) {
      table.rows.push_back(skipped(label, T, e.what()));
    }
  }
  return table;
}

SweepTable external_factor_sweep(const SweepInputs& in, Index steps) {
  if (!in.factors || in.factors->empty())
    throw std::invalid_argument("external_factors sweep needs a factor series");
  const std::pair<const char*, FactorSelection> variants[] = {
      {"ExF1", {true, false, false}},
      {"ExF2", {true, true, false}},
      {"ExF3", {true, true, true}},
      {"ExF3_w", {false, false, false}},
  };
  SweepTable table{"external_factors", in.fingerprint, {}};
  for (const auto& [label, sel] : variants) {
    ArchSpec arch = in.arch;
    arch.factors = sel;
    Trained t = fit(in, arch);
    table.rows.push_back({label, arch.seq_len, false, "", score(t, in, steps)});
  }
  return table;
}

SweepTable rollout_steps_sweep(const SweepInputs& in, Index steps) {
  SweepTable table{"rollout_steps", in.fingerprint, {}};
  Trained t = fit(in, in.arch);
  for (auto& m : score(t, in, steps))
    table.rows.push_back({"S=" + std::to_string(m.horizon), in.arch.seq_len, false, "", {m}});
  return table;
}

SweepTable run_sweep(const std::string& axis, const SweepInputs& in, const std::vector<Index>& lengths,
                     Index steps) {
  if (axis == "seq_length") return seq_length_sweep(in, lengths, steps);
  if (axis == "external_factors") return external_factor_sweep(in, steps);
  if (axis == "rollout_steps") return rollout_steps_sweep(in, steps);
  throw std::invalid_argument("unknown sweep axis '" + axis + "'");
}

void write_sweep_csv(const SweepTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# fingerprint " << table.fingerprint << '\n';
  out << "axis,label,seq_len,horizon,rmse,mae,status\n";
  for (const auto& r : table.rows) {
    if (r.skipped) {
      out << table.axis << ',' << r.label << ',' << r.seq_len << ",,,,skipped: " << r.note << '\n';
      continue;
    }
    for (const auto& m : r.metrics)
      out << table.axis << ',' << r.label << ',' << r.seq_len << ',' << m.horizon << ',' << format_double(m.rmse)
          << ',' << format_double(m.mae) << ",ok\n";
  }
}

nlohmann::json sweep_json(const SweepTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json row{{"label", r.label}, {"seq_len", r.seq_len}, {"skipped", r.skipped}};
    if (r.skipped) row["note"] = r.note;
    row["metrics"] = metrics_json(r.metrics, table.fingerprint)["rows"];
    rows.push_back(row);
  }
  return {{"axis", table.axis}, {"fingerprint", table.fingerprint}, {"rows", rows}};
}

}  // namespace dgan
