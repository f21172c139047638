#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "tscompress/learners.hpp"
#include "tscompress/random.hpp"

namespace tscompress::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    raw(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
  void mat(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  double f64() { return pod<double>(); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Eigen::VectorXd vec() {
    const auto n = u64();
    need(n * sizeof(double));
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  Eigen::MatrixXd mat() {
    const auto r = u64();
    const auto c = u64();
    need(r * c * sizeof(double));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    std::memcpy(m.data(), bytes_.data() + pos_, r * c * sizeof(double));
    pos_ += r * c * sizeof(double);
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("truncated model bytes");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Per-column centering and scaling; constant columns keep scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd apply_row(std::span<const double> row) const;
};

struct LinearFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;

  double predict(std::span<const double> row) const {
    double s = intercept;
    for (Eigen::Index j = 0; j < coefficients.size(); ++j) s += coefficients(j) * row[static_cast<std::size_t>(j)];
    return s;
  }
};

struct KernelFit {
  Kernel kernel = Kernel::rbf;
  double bandwidth = 1.0;
  int degree = 2;
  Standardizer standardizer;
  Eigen::MatrixXd support;  // standardized rows
  Eigen::VectorXd dual;
  double offset = 0.0;
};

struct KnnFit {
  std::size_t k = 1;
  Standardizer standardizer;
  Eigen::MatrixXd points;  // standardized rows
  Eigen::VectorXd targets;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // leaf mean, or leaf model index for model trees
};

struct TreeFit {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> row) const;
  std::size_t leaf_of(std::span<const double> row) const;
};

struct ForestFit {
  std::vector<TreeFit> trees;
};

struct ModelTreeFit {
  TreeFit structure;  // leaf `value` indexes leaf_models
  std::vector<LinearFit> leaf_models;
};

struct ModelState {
  std::variant<LinearFit, KernelFit, KnnFit, TreeFit, ForestFit, ModelTreeFit> fit;
};

double predict_state(const ModelState& state, std::span<const double> row);

// Fitting entry points. `x` rows are observations.
LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty);
KernelFit fit_kernel_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelRidgeParams& params);
double kernel_predict(const KernelFit& fit, std::span<const double> row);
KnnFit fit_knn(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KnnParams& params);
double knn_predict(const KnnFit& fit, std::span<const double> row);
TreeFit fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TreeParams& params);
ForestFit fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params);
ModelTreeFit fit_model_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelTreeParams& params);

void write_state(ByteWriter& out, const ModelState& state);
ModelState read_state(ByteReader& in);

}  // namespace tscompress::detail
