#pragma once

#include <string>

#include "kqid/dynamics.hpp"
#include "kqid/ident.hpp"
#include "kqid/mpc.hpp"
#include "kqid/predictor.hpp"

namespace kqid {

// Binary containers: one JSON header line, then raw column-major doubles in
// a fixed block order. Round trips are bit-exact.

void save_trajectory_set(const TrajectorySet& set, const std::string& path);
[[nodiscard]] TrajectorySet load_trajectory_set(const std::string& path);

// quant_tag records how the training data was quantized ("none",
// "state_input_b8", ...); it travels with the predictor for provenance.
void save_predictor(const LinearPredictor& p, const std::string& path,
                    const std::string& quant_tag, std::uint64_t dither_seed);

struct LoadedPredictor {
  LinearPredictor predictor;
  std::string quant_tag;
  std::uint64_t dither_seed = 0;
};
[[nodiscard]] LoadedPredictor load_predictor(const std::string& path);

// Text outputs. Numbers print with 17 significant digits so re-runs of the
// same seeds produce byte-identical files.
void write_prediction_csv(const PredictionRun& run, double dt, const std::string& path);
void write_closed_loop_csv(const ClosedLoopResult& result, double dt, const std::string& path);

}  // namespace kqid
