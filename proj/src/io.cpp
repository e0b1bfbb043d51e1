#include "kqid/io.hpp"

#include <fstream>
#include <vector>

#include "json.hpp"
#include "kqid/errors.hpp"
#include "kqid/util.hpp"

namespace kqid {

namespace {

using nlohmann::json;

void write_block(std::ofstream& out, const Eigen::MatrixXd& M) {
  out.write(reinterpret_cast<const char*>(M.data()),
            static_cast<std::streamsize>(sizeof(double) * M.size()));
}

Eigen::MatrixXd read_block(std::ifstream& in, Eigen::Index rows, Eigen::Index cols,
                           const std::string& path) {
  Eigen::MatrixXd M(rows, cols);
  in.read(reinterpret_cast<char*>(M.data()),
          static_cast<std::streamsize>(sizeof(double) * M.size()));
  if (!in) throw ConfigError("truncated matrix block in " + path);
  return M;
}

json read_header(std::ifstream& in, const std::string& path, const std::string& expect_format) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("missing header line in " + path);
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded()) throw ConfigError("malformed header in " + path);
  if (header.value("format", "") != expect_format)
    throw ConfigError(path + " is not a " + expect_format + " file");
  if (header.value("version", 0) != 1)
    throw ConfigError("unsupported container version in " + path);
  return header;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

const char* dict_kind_name(DictionaryKind kind) {
  switch (kind) {
    case DictionaryKind::identity: return "identity";
    case DictionaryKind::state_tps: return "state_tps";
    case DictionaryKind::kdv_poly: return "kdv_poly";
  }
  return "identity";
}

DictionaryKind dict_kind_from(const std::string& name, const std::string& path) {
  if (name == "identity") return DictionaryKind::identity;
  if (name == "state_tps") return DictionaryKind::state_tps;
  if (name == "kdv_poly") return DictionaryKind::kdv_poly;
  throw ConfigError("unknown dictionary kind '" + name + "' in " + path);
}

}  // namespace

void save_trajectory_set(const TrajectorySet& set, const std::string& path) {
  if (set.trajectories.empty()) throw ConfigError("save_trajectory_set: empty set");
  const Eigen::Index n = set.trajectories.front().X.rows();
  const Eigen::Index m = set.trajectories.front().U.rows();
  std::vector<std::int64_t> lengths;
  lengths.reserve(set.trajectories.size());
  for (const auto& tr : set.trajectories) {
    if (tr.X.rows() != n || tr.U.rows() != m)
      throw ConfigError("save_trajectory_set: inconsistent dimensions");
    lengths.push_back(tr.U.cols());
  }
  json header = {{"format", "kqid-trajset"}, {"version", 1},       {"plant", set.plant_name},
                 {"dt", set.dt},             {"seed", set.seed},   {"n", n},
                 {"m", m},                   {"lengths", lengths}};
  std::ofstream out = open_out(path);
  out << header.dump() << '\n';
  for (const auto& tr : set.trajectories) {
    write_block(out, tr.X);
    write_block(out, tr.U);
  }
  if (!out) throw ConfigError("write failed for " + path);
}

TrajectorySet load_trajectory_set(const std::string& path) {
  std::ifstream in = open_in(path);
  const json header = read_header(in, path, "kqid-trajset");
  TrajectorySet set;
  set.plant_name = header.value("plant", "");
  set.dt = header.value("dt", 0.0);
  set.seed = header.value("seed", std::uint64_t{0});
  const Eigen::Index n = header.value("n", Eigen::Index{0});
  const Eigen::Index m = header.value("m", Eigen::Index{0});
  if (n < 1 || m < 1) throw ConfigError("bad dimensions in " + path);
  for (const auto& len : header.at("lengths")) {
    const Eigen::Index K = len.get<Eigen::Index>();
    if (K < 1) throw ConfigError("bad trajectory length in " + path);
    Trajectory tr;
    tr.X = read_block(in, n, K + 1, path);
    tr.U = read_block(in, m, K, path);
    set.trajectories.push_back(std::move(tr));
  }
  return set;
}

void save_predictor(const LinearPredictor& p, const std::string& path,
                    const std::string& quant_tag, std::uint64_t dither_seed) {
  if (p.A.rows() != p.A.cols() || p.B.rows() != p.A.rows())
    throw ConfigError("save_predictor: inconsistent matrices");
  json header = {{"format", "kqid-predictor"},
                 {"version", 1},
                 {"N", p.A.rows()},
                 {"m", p.B.cols()},
                 {"n", p.C.rows()},
                 {"dict", dict_kind_name(p.dict.kind)},
                 {"dict_n", p.dict.n},
                 {"dict_N", p.dict.N},
                 {"mesh", p.dict.mesh},
                 {"n_centers", p.dict.centers.cols()},
                 {"quant_tag", quant_tag},
                 {"dither_seed", dither_seed}};
  std::ofstream out = open_out(path);
  out << header.dump() << '\n';
  write_block(out, p.A);
  write_block(out, p.B);
  write_block(out, p.C);
  if (p.dict.centers.size() > 0) write_block(out, p.dict.centers);
  if (!out) throw ConfigError("write failed for " + path);
}

LoadedPredictor load_predictor(const std::string& path) {
  std::ifstream in = open_in(path);
  const json header = read_header(in, path, "kqid-predictor");
  const Eigen::Index N = header.value("N", Eigen::Index{0});
  const Eigen::Index m = header.value("m", Eigen::Index{0});
  const Eigen::Index n = header.value("n", Eigen::Index{0});
  if (N < 1 || m < 1 || n < 1) throw ConfigError("bad dimensions in " + path);

  LoadedPredictor loaded;
  loaded.quant_tag = header.value("quant_tag", "");
  loaded.dither_seed = header.value("dither_seed", std::uint64_t{0});
  LinearPredictor& p = loaded.predictor;
  p.A = read_block(in, N, N, path);
  p.B = read_block(in, N, m, path);
  p.C = read_block(in, n, N, path);

  const DictionaryKind kind = dict_kind_from(header.value("dict", ""), path);
  const int dict_n = header.value("dict_n", 0);
  const int mesh = header.value("mesh", 0);
  const Eigen::Index n_centers = header.value("n_centers", Eigen::Index{0});
  switch (kind) {
    case DictionaryKind::identity:
      p.dict = make_identity_dictionary(dict_n);
      break;
    case DictionaryKind::state_tps: {
      const Eigen::MatrixXd centers = read_block(in, dict_n, n_centers, path);
      p.dict = make_tps_dictionary(dict_n, centers);
      break;
    }
    case DictionaryKind::kdv_poly:
      p.dict = make_kdv_dictionary(mesh);
      break;
  }
  if (p.dict.N != header.value("dict_N", 0))
    throw ConfigError("dictionary dimension mismatch in " + path);
  return loaded;
}

void write_prediction_csv(const PredictionRun& run, double dt, const std::string& path) {
  std::ofstream out = open_out(path);
  const Eigen::Index n = run.true_states.rows();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i) out << ",xhat" << i + 1;
  out << ",rel_error\n";
  for (Eigen::Index t = 0; t < run.true_states.cols(); ++t) {
    out << fmt_g17(t * dt);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt_g17(run.true_states(i, t));
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt_g17(run.predicted_states(i, t));
    out << ',' << (t == 0 ? "0" : fmt_g17(run.per_step_rel_error[t - 1])) << '\n';
  }
  if (!out) throw ConfigError("write failed for " + path);
}

void write_closed_loop_csv(const ClosedLoopResult& result, double dt, const std::string& path) {
  std::ofstream out = open_out(path);
  const Eigen::Index n = result.X.rows();
  const Eigen::Index m = result.U.rows();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << i + 1;
  for (Eigen::Index i = 0; i < m; ++i) out << ",u" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i) out << ",ref" << i + 1;
  out << ",stage_cost\n";
  for (Eigen::Index t = 0; t < result.X.cols(); ++t) {
    out << fmt_g17(t * dt);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt_g17(result.X(i, t));
    const bool has_input = t < result.U.cols();
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << (has_input ? fmt_g17(result.U(i, t)) : "");
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt_g17(result.Ref(i, t));
    out << ',' << fmt_g17(result.stage_cost[t]) << '\n';
  }
  if (!out) throw ConfigError("write failed for " + path);
}

}  // namespace kqid
