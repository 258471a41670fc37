#include "helpers.hpp"

#include "wmrl/core/binary_io.hpp"

namespace testutil {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, wmrl::Rng& rng, double sd) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wmrl_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

wmrl::agents::Hyperparams tiny_hyper() {
  wmrl::agents::Hyperparams h;
  h.hidden = 16;
  h.batch_size = 16;
  return h;
}

wmrl::envs::ReferenceScores pendulum_refs() { return {"pendulum", -1200.0, -150.0, 100, 0}; }

std::string slurp(const std::filesystem::path& path) { return wmrl::read_file(path); }

}  // namespace testutil
