#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmb/common.hpp"

namespace vmb {

// On-disk container: one JSON header line describing the named arrays and
// grid parameters, then the concatenated arrays as little-endian 64-bit
// floats in row-major order.
struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<NamedArray> arrays;

  void add(const std::string& name, std::vector<std::size_t> shape, std::vector<double> data);
  const NamedArray& get(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Dense-operator disk cache keyed by a content string of (grid, model,
// options); a load only succeeds when the stored key matches.
void save_operator_cache(const std::string& path, const std::string& key, const Eigen::VectorXd& nu,
                         const Eigen::MatrixXd& k_sum, const Eigen::MatrixXd& k_diff);
bool load_operator_cache(const std::string& path, const std::string& key, Eigen::VectorXd& nu,
                         Eigen::MatrixXd& k_sum, Eigen::MatrixXd& k_diff);

}  // namespace vmb
