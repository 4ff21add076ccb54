#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "msv/gradcheck_suite.hpp"

namespace msv::cli {

struct SynthArgs {
  std::size_t count = 0;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t classes = 3;
  std::size_t size = 112;
};

struct TrainArgs {
  std::filesystem::path data;
  std::filesystem::path config;
  std::filesystem::path out;
  bool no_lms = false;
  bool no_aux = false;
  bool no_msaa = false;
  std::optional<std::size_t> steps;
};

struct EvalArgs {
  std::filesystem::path data;
  std::filesystem::path ckpt;
  std::filesystem::path csv;
  std::string split;  // empty: every split in the manifest
};

struct PredictArgs {
  std::filesystem::path image;
  std::filesystem::path ckpt;
  std::filesystem::path mask_out;
};

int run_synth(const SynthArgs& args);
int run_train(const TrainArgs& args);
int run_eval(const EvalArgs& args);
int run_predict(const PredictArgs& args);
int run_gradcheck(bool f64, std::size_t seeds);

/// Double-precision suite, built in its own translation unit.
GradcheckSuiteResult run_gradcheck_f64(
    std::size_t seeds, const std::function<void(const GradcheckCase&)>& on_case);

}  // namespace msv::cli
