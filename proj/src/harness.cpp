#include "kqid/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "kqid/errors.hpp"
#include "kqid/io.hpp"
#include "kqid/predictor.hpp"
#include "kqid/rng.hpp"
#include "kqid/util.hpp"

namespace kqid {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* dictionary_kind_name(DictionaryKind kind) {
  switch (kind) {
    case DictionaryKind::identity: return "identity";
    case DictionaryKind::state_tps: return "state_tps";
    case DictionaryKind::kdv_poly: return "kdv_poly";
  }
  return "identity";
}

DictionaryKind dictionary_kind_from(const std::string& name) {
  if (name == "identity") return DictionaryKind::identity;
  if (name == "state_tps") return DictionaryKind::state_tps;
  if (name == "kdv_poly") return DictionaryKind::kdv_poly;
  throw ConfigError("unknown dictionary kind '" + name + "'");
}

const char* quant_mode_name(QuantMode mode) {
  switch (mode) {
    case QuantMode::none: return "none";
    case QuantMode::state_input: return "state_input";
    case QuantMode::observable: return "observable";
  }
  return "none";
}

QuantMode quant_mode_from(const std::string& name) {
  if (name == "none") return QuantMode::none;
  if (name == "state_input") return QuantMode::state_input;
  if (name == "observable") return QuantMode::observable;
  throw ConfigError("unknown quantization mode '" + name + "'");
}

// Typo guard: every key in obj must be one of the named fields.
void reject_unknown_keys(const json& obj, const char* where,
                         std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    bool found = false;
    for (const char* k : known)
      if (item.key() == k) { found = true; break; }
    if (!found)
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
  }
}

Dictionary build_dictionary(const ExperimentConfig& cfg, const PlantModel& plant) {
  switch (cfg.dictionary.kind) {
    case DictionaryKind::identity:
      return make_identity_dictionary(plant.n);
    case DictionaryKind::state_tps: {
      const Eigen::MatrixXd centers =
          draw_centers(plant.n, cfg.dictionary.n_centers, cfg.dictionary.center_lo,
                       cfg.dictionary.center_hi, derive_seed(cfg.master_seed, "centers", 0));
      return make_tps_dictionary(plant.n, centers);
    }
    case DictionaryKind::kdv_poly:
      return make_kdv_dictionary(plant.n);
  }
  throw ConfigError("unhandled dictionary kind");
}

double mean_prediction_error(const TrajectorySet& test, const LinearPredictor& p) {
  double sum = 0.0;
  for (const auto& tr : test.trajectories) {
    const PredictionRun run = make_prediction_run(tr.X, p, tr.U);
    sum += prediction_error(run);
  }
  return sum / static_cast<double>(test.trajectories.size());
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments_of(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return m;
}

SlopeFit slope_or_nan(const std::vector<double>& b_values, const std::vector<double>& means) {
  if (b_values.size() < 3) return {kNaN, kNaN, kNaN};
  for (double e : means)
    if (!(e > 0.0) || !std::isfinite(e)) return {kNaN, kNaN, kNaN};
  return fit_log_slope(b_values, means);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  return out;
}

void check_write(const std::ofstream& out, const std::string& path) {
  if (!out) throw ConfigError("write failed for " + path);
}

// Minimal line chart: one polyline per series over a shared x axis.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<double>& x,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const double W = 640, H = 400, ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = x.front(), xmax = x.back();
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (!(ymin < ymax)) { ymin -= 1.0; ymax += 1.0; }
  if (!(xmin < xmax)) { xmin -= 1.0; xmax += 1.0; }
  const auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
  const auto py = [&](double v) { return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" << title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& [name, ys] = series[s];
    out << "<polyline fill=\"none\" stroke=\"" << palette[s % 4] << "\" stroke-width=\"1.5\" "
           "points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(ys[i])) continue;
      out << px(x[i]) << ',' << py(ys[i]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 16 * (static_cast<double>(s) + 1)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
        << palette[s % 4] << "\">" << name << "</text>\n";
  }
  for (std::size_t i = 0; i < x.size(); ++i)
    out << "<text x=\"" << px(x[i]) << "\" y=\"" << H - mb + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << x[i]
        << "</text>\n";
  out << "<text x=\"" << ml - 8 << "\" y=\"" << py(ymin)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << ymin
      << "</text>\n";
  out << "<text x=\"" << ml - 8 << "\" y=\"" << py(ymax)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << ymax
      << "</text>\n";
  out << "</svg>\n";
  check_write(out, path);
}

}  // namespace

// ============================================================================
// Configuration
// ============================================================================

void ExperimentConfig::validate() const {
  const PlantKind kind = plant_kind_from_name(plant);
  if (word_lengths.empty()) throw ConfigError("word_lengths must be nonempty");
  for (int b : word_lengths)
    if (b < 2 || b > 32) throw ConfigError("word length out of range [2, 32]");
  if (n_monte_carlo < 1) throw ConfigError("n_monte_carlo must be >= 1");
  if (n_traj < 1 || horizon < 1) throw ConfigError("training set sizes must be >= 1");
  if (n_test_traj < 1 || test_horizon < 1) throw ConfigError("test set sizes must be >= 1");
  if (margin < 0.0) throw ConfigError("margin must be >= 0");
  if (has_shared_range && !(shared_hi > shared_lo))
    throw ConfigError("shared range must have positive width");
  const bool kdv_plant = kind == PlantKind::kdv;
  const bool kdv_dict = dictionary.kind == DictionaryKind::kdv_poly;
  if (kdv_plant != kdv_dict)
    throw ConfigError("the mesh-polynomial dictionary pairs with the PDE plant only");
  if (dictionary.kind == DictionaryKind::state_tps) {
    if (dictionary.n_centers < 1) throw ConfigError("n_centers must be >= 1");
    if (!(dictionary.center_hi > dictionary.center_lo))
      throw ConfigError("center box must have positive width");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown_keys(root, "config",
                      {"plant", "dictionary", "training", "test", "sweep", "mpc", "master_seed",
                       "output_dir", "emit_svg"});

  ExperimentConfig cfg;
  cfg.plant = root.value("plant", cfg.plant);

  if (root.contains("dictionary")) {
    const json& d = root.at("dictionary");
    reject_unknown_keys(d, "dictionary", {"kind", "n_centers", "center_lo", "center_hi"});
    cfg.dictionary.kind = dictionary_kind_from(d.value("kind", "state_tps"));
    cfg.dictionary.n_centers = d.value("n_centers", cfg.dictionary.n_centers);
    cfg.dictionary.center_lo = d.value("center_lo", cfg.dictionary.center_lo);
    cfg.dictionary.center_hi = d.value("center_hi", cfg.dictionary.center_hi);
  }
  if (root.contains("training")) {
    const json& t = root.at("training");
    reject_unknown_keys(t, "training", {"n_traj", "horizon"});
    cfg.n_traj = t.value("n_traj", cfg.n_traj);
    cfg.horizon = t.value("horizon", cfg.horizon);
  }
  if (root.contains("test")) {
    const json& t = root.at("test");
    reject_unknown_keys(t, "test", {"n_traj", "horizon"});
    cfg.n_test_traj = t.value("n_traj", cfg.n_test_traj);
    cfg.test_horizon = t.value("horizon", cfg.test_horizon);
  }
  if (root.contains("sweep")) {
    const json& s = root.at("sweep");
    reject_unknown_keys(s, "sweep",
                        {"word_lengths", "n_monte_carlo", "mode", "margin", "shared_range"});
    if (s.contains("word_lengths")) cfg.word_lengths = s.at("word_lengths").get<std::vector<int>>();
    cfg.n_monte_carlo = s.value("n_monte_carlo", cfg.n_monte_carlo);
    cfg.mode = quant_mode_from(s.value("mode", "state_input"));
    cfg.margin = s.value("margin", cfg.margin);
    if (s.contains("shared_range")) {
      const json& r = s.at("shared_range");
      if (!r.is_array() || r.size() != 2) throw ConfigError("shared_range must be [lo, hi]");
      cfg.has_shared_range = true;
      cfg.shared_lo = r[0].get<double>();
      cfg.shared_hi = r[1].get<double>();
    }
  }
  if (root.contains("mpc")) {
    const json& m = root.at("mpc");
    reject_unknown_keys(m, "mpc", {"enabled"});
    cfg.run_mpc = m.value("enabled", cfg.run_mpc);
  }
  cfg.master_seed = root.value("master_seed", cfg.master_seed);
  cfg.output_dir = root.value("output_dir", cfg.output_dir);
  cfg.emit_svg = root.value("emit_svg", cfg.emit_svg);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json root;
  root["plant"] = cfg.plant;
  root["dictionary"] = {{"kind", dictionary_kind_name(cfg.dictionary.kind)},
                        {"n_centers", cfg.dictionary.n_centers},
                        {"center_lo", cfg.dictionary.center_lo},
                        {"center_hi", cfg.dictionary.center_hi}};
  root["training"] = {{"n_traj", cfg.n_traj}, {"horizon", cfg.horizon}};
  root["test"] = {{"n_traj", cfg.n_test_traj}, {"horizon", cfg.test_horizon}};
  json sweep = {{"word_lengths", cfg.word_lengths},
                {"n_monte_carlo", cfg.n_monte_carlo},
                {"mode", quant_mode_name(cfg.mode)},
                {"margin", cfg.margin}};
  if (cfg.has_shared_range) sweep["shared_range"] = {cfg.shared_lo, cfg.shared_hi};
  root["sweep"] = sweep;
  root["mpc"] = {{"enabled", cfg.run_mpc}};
  root["master_seed"] = cfg.master_seed;
  root["output_dir"] = cfg.output_dir;
  root["emit_svg"] = cfg.emit_svg;
  return root.dump(2);
}

void apply_paper_scale(ExperimentConfig& cfg) {
  cfg.n_traj = 200;
  cfg.horizon = 1000;
  cfg.n_monte_carlo = 50;
}

// ============================================================================
// Sweep
// ============================================================================

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const PlantModel plant = make_plant(plant_kind_from_name(cfg.plant));
  const Dictionary dict = build_dictionary(cfg, plant);

  const TrajectorySet train =
      generate_training_set(plant, cfg.n_traj, cfg.horizon, derive_seed(cfg.master_seed, "train", 0));
  const TrajectorySet test = generate_training_set(plant, cfg.n_test_traj, cfg.test_horizon,
                                                   derive_seed(cfg.master_seed, "test", 0));

  SweepResult result;
  result.dt = plant.dt;
  result.config_json = config_to_json(cfg);
  result.config_hash = fnv1a64(result.config_json);

  QuantSetup clean;
  clean.mode = QuantMode::none;
  const SnapshotSet ref_snaps = assemble_snapshots(train, dict, clean, 0);
  const auto [ref_raw, ref_report] = edmd_fit(ref_snaps);
  const LinearPredictor reference = make_predictor(dict, ref_raw.A, ref_raw.B);
  result.reference_prediction_error = mean_prediction_error(test, reference);

  Scenario scenario;
  result.reference_cost = kNaN;
  if (cfg.run_mpc) {
    scenario = default_scenario(plant);
    ClosedLoopResult loop = run_closed_loop(plant, reference, scenario.cfg, scenario.x0,
                                            scenario.duration);
    result.reference_cost = loop.J;
    result.reference_loop = std::move(loop);
  }

  result.records.reserve(cfg.word_lengths.size() * static_cast<std::size_t>(cfg.n_monte_carlo));
  for (int b : cfg.word_lengths) {
    for (int seed = 0; seed < cfg.n_monte_carlo; ++seed) {
      try {
        QuantSetup setup;
        setup.mode = cfg.mode;
        setup.word_length_b = b;
        setup.margin = cfg.margin;
        setup.has_shared_range = cfg.has_shared_range;
        setup.shared_lo = cfg.shared_lo;
        setup.shared_hi = cfg.shared_hi;
        const std::uint64_t dither_seed = derive_seed(
            cfg.master_seed, "dither",
            (static_cast<std::uint64_t>(b) << 16) + static_cast<std::uint64_t>(seed));

        const SnapshotSet snaps = assemble_snapshots(train, dict, setup, dither_seed);
        const auto [fit_raw, fit_report] = edmd_fit(snaps);
        const LinearPredictor fitted = make_predictor(dict, fit_raw.A, fit_raw.B);
        const GapReport gap = estimate_gap(reference, fitted);

        SweepRecord rec;
        rec.word_length = b;
        rec.seed_index = seed;
        rec.rel_a = gap.relA;
        rec.rel_b = gap.relB;
        rec.prediction_error = mean_prediction_error(test, fitted);
        rec.closed_loop_cost = kNaN;
        if (cfg.run_mpc)
          rec.closed_loop_cost =
              run_closed_loop(plant, fitted, scenario.cfg, scenario.x0, scenario.duration).J;
        result.records.push_back(rec);
      } catch (const NumericError& e) {
        throw NumericError("sweep record b=" + std::to_string(b) + " seed=" +
                           std::to_string(seed) + ": " + e.what());
      } catch (const ConfigError& e) {
        throw ConfigError("sweep record b=" + std::to_string(b) + " seed=" +
                          std::to_string(seed) + ": " + e.what());
      }
    }
  }

  std::vector<double> b_values, mean_a, mean_b, mean_pred;
  for (int b : cfg.word_lengths) {
    std::vector<double> va, vb, vp, vc;
    for (const auto& rec : result.records) {
      if (rec.word_length != b) continue;
      va.push_back(rec.rel_a);
      vb.push_back(rec.rel_b);
      vp.push_back(rec.prediction_error);
      if (cfg.run_mpc) vc.push_back(rec.closed_loop_cost);
    }
    Aggregate agg;
    agg.word_length = b;
    const Moments ma = moments_of(va), mb = moments_of(vb), mp = moments_of(vp);
    agg.mean_rel_a = ma.mean;
    agg.std_rel_a = ma.stddev;
    agg.mean_rel_b = mb.mean;
    agg.std_rel_b = mb.stddev;
    agg.mean_pred = mp.mean;
    agg.std_pred = mp.stddev;
    if (cfg.run_mpc) {
      const Moments mc = moments_of(vc);
      agg.mean_cost = mc.mean;
      agg.std_cost = mc.stddev;
    } else {
      agg.mean_cost = kNaN;
      agg.std_cost = kNaN;
    }
    result.aggregates.push_back(agg);
    b_values.push_back(b);
    mean_a.push_back(agg.mean_rel_a);
    mean_b.push_back(agg.mean_rel_b);
    mean_pred.push_back(agg.mean_pred);
  }

  result.slope_a = slope_or_nan(b_values, mean_a);
  result.slope_b = slope_or_nan(b_values, mean_b);
  result.slope_pred = slope_or_nan(b_values, mean_pred);
  return result;
}

SlopeFit fit_log_slope(const std::vector<double>& b_values, const std::vector<double>& errors) {
  if (b_values.size() != errors.size()) throw ConfigError("fit_log_slope: size mismatch");
  if (b_values.size() < 3) throw ConfigError("fit_log_slope: need at least 3 points");
  const auto n = static_cast<double>(b_values.size());

  double sx = 0.0, sy = 0.0;
  std::vector<double> y(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0)) throw ConfigError("fit_log_slope: errors must be positive");
    y[i] = std::log10(errors[i]);
    sx += b_values[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxx += (b_values[i] - mx) * (b_values[i] - mx);
    sxy += (b_values[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_log_slope: all abscissae equal");

  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * b_values[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

// ============================================================================
// Output emission
// ============================================================================

void emit_outputs(const SweepResult& result, const std::string& dir, bool emit_svg) {
  if (result.records.empty()) throw ConfigError("emit_outputs: empty sweep result");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir + ": " + ec.message());

  {
    const std::string path = dir + "/records.csv";
    std::ofstream out = open_out(path);
    out << "word_length,seed,rel_a,rel_b,prediction_error,closed_loop_cost\n";
    for (const auto& r : result.records)
      out << r.word_length << ',' << r.seed_index << ',' << fmt_g17(r.rel_a) << ','
          << fmt_g17(r.rel_b) << ',' << fmt_g17(r.prediction_error) << ','
          << fmt_g17(r.closed_loop_cost) << '\n';
    check_write(out, path);
  }
  {
    const std::string path = dir + "/aggregate.csv";
    std::ofstream out = open_out(path);
    out << "word_length,mean_rel_a,std_rel_a,mean_rel_b,std_rel_b,"
           "mean_prediction_error,std_prediction_error,mean_cost,std_cost\n";
    for (const auto& a : result.aggregates)
      out << a.word_length << ',' << fmt_g17(a.mean_rel_a) << ',' << fmt_g17(a.std_rel_a) << ','
          << fmt_g17(a.mean_rel_b) << ',' << fmt_g17(a.std_rel_b) << ',' << fmt_g17(a.mean_pred)
          << ',' << fmt_g17(a.std_pred) << ',' << fmt_g17(a.mean_cost) << ','
          << fmt_g17(a.std_cost) << '\n';
    check_write(out, path);
  }
  {
    const std::string path = dir + "/error_vs_b.csv";
    std::ofstream out = open_out(path);
    out << "word_length,mean_rel_a,std_rel_a,mean_rel_b,std_rel_b,"
           "mean_prediction_error,std_prediction_error\n";
    for (const auto& a : result.aggregates)
      out << a.word_length << ',' << fmt_g17(a.mean_rel_a) << ',' << fmt_g17(a.std_rel_a) << ','
          << fmt_g17(a.mean_rel_b) << ',' << fmt_g17(a.std_rel_b) << ',' << fmt_g17(a.mean_pred)
          << ',' << fmt_g17(a.std_pred) << '\n';
    check_write(out, path);
  }
  const bool have_costs = result.reference_loop.has_value();
  if (have_costs) {
    const std::string path = dir + "/cost_vs_b.csv";
    std::ofstream out = open_out(path);
    out << "word_length,mean_cost,std_cost,reference_cost\n";
    for (const auto& a : result.aggregates)
      out << a.word_length << ',' << fmt_g17(a.mean_cost) << ',' << fmt_g17(a.std_cost) << ','
          << fmt_g17(result.reference_cost) << '\n';
    check_write(out, path);
    write_closed_loop_csv(*result.reference_loop, result.dt, dir + "/tracking.csv");
  }
  {
    json slope_a = {{"slope", result.slope_a.slope},
                    {"intercept", result.slope_a.intercept},
                    {"r_squared", result.slope_a.r_squared}};
    json slope_b = {{"slope", result.slope_b.slope},
                    {"intercept", result.slope_b.intercept},
                    {"r_squared", result.slope_b.r_squared}};
    json slope_pred = {{"slope", result.slope_pred.slope},
                       {"intercept", result.slope_pred.intercept},
                       {"r_squared", result.slope_pred.r_squared}};
    char hash_hex[24];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(result.config_hash));
    json manifest = {{"config", json::parse(result.config_json)},
                     {"config_hash", hash_hex},
                     {"records", result.records.size()},
                     {"slope_a", slope_a},
                     {"slope_b", slope_b},
                     {"slope_prediction", slope_pred},
                     {"reference_prediction_error", result.reference_prediction_error},
                     {"reference_cost", have_costs ? json(result.reference_cost) : json()}};
    const std::string path = dir + "/manifest.json";
    std::ofstream out = open_out(path);
    out << manifest.dump(2) << '\n';
    check_write(out, path);
  }
  if (emit_svg) {
    std::vector<double> b, la, lb, lp, cost;
    for (const auto& a : result.aggregates) {
      b.push_back(a.word_length);
      la.push_back(a.mean_rel_a > 0 ? std::log10(a.mean_rel_a) : kNaN);
      lb.push_back(a.mean_rel_b > 0 ? std::log10(a.mean_rel_b) : kNaN);
      lp.push_back(a.mean_pred > 0 ? std::log10(a.mean_pred) : kNaN);
      cost.push_back(a.mean_cost);
    }
    write_svg_chart(dir + "/error_vs_b.svg", "log10 mean error vs word length", b,
                    {{"relA", la}, {"relB", lb}, {"prediction", lp}});
    if (have_costs)
      write_svg_chart(dir + "/cost_vs_b.svg", "mean closed-loop cost vs word length", b,
                      {{"cost", cost}});
  }
}

std::vector<SweepRecord> load_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "word_length,seed,rel_a,rel_b,prediction_error,closed_loop_cost")
    throw ConfigError(path + " is not a sweep records file");

  std::vector<SweepRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ConfigError("malformed row in " + path);
    SweepRecord r;
    r.word_length = std::atoi(cells[0].c_str());
    r.seed_index = std::atoi(cells[1].c_str());
    r.rel_a = std::strtod(cells[2].c_str(), nullptr);
    r.rel_b = std::strtod(cells[3].c_str(), nullptr);
    r.prediction_error = std::strtod(cells[4].c_str(), nullptr);
    r.closed_loop_cost = std::strtod(cells[5].c_str(), nullptr);
    records.push_back(r);
  }
  return records;
}

}  // namespace kqid
