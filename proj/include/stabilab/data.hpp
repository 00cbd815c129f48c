#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabilab/rng.hpp"
#include "stabilab/vector_ops.hpp"

namespace stabilab {

struct DataPoint {
  Vector x;
  double y = 0.0;

  bool operator==(const DataPoint&) const = default;
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<DataPoint> points;

  std::size_t size() const { return points.size(); }
  const DataPoint& operator[](std::size_t i) const { return points[i]; }
  bool operator==(const Dataset&) const = default;
};

enum class Family {
  kGaussianClassification,
  kGaussianRegression,
  // Single atom at x = bx * w_true / |w_true| (e_0 when w_true = 0); used to
  // exercise the degenerate "neighbor equals original" case.
  kPointMass,
};

std::string to_string(Family f);
Family family_from_string(const std::string& s);

// Synthetic data model.
//   features: x ~ N(0, (bx / (2 sqrt d))^2 I), rescaled radially onto the
//             sphere of radius bx whenever |x| > bx.
//   classification: y = sign(<w_true, x> + sigma_y * eps), sign(0) = +1.
//   regression: y = clamp(<w_true, x> + sigma_y * eps, -by, by).
struct DistributionSpec {
  Family family = Family::kGaussianClassification;
  std::size_t dim = 1;
  Vector w_true;
  double sigma_y = 0.0;
  double bx = 1.0;
  double by = 1.0;

  bool is_classification() const { return family != Family::kGaussianRegression; }

  // Throws std::invalid_argument on an inconsistent spec.
  void validate() const;

  bool operator==(const DistributionSpec&) const = default;
};

void to_json(nlohmann::json& j, const DistributionSpec& spec);
void from_json(const nlohmann::json& j, DistributionSpec& spec);

// Draws single points into caller-owned storage; used by the population-risk
// estimators, which stream through many fresh draws.
class PointSampler {
 public:
  explicit PointSampler(const DistributionSpec& spec);

  void draw(Rng& rng, DataPoint& out) const;
  DataPoint draw(Rng& rng) const;

 private:
  DistributionSpec spec_;
  double feature_std_;
};

Dataset sample_dataset(const DistributionSpec& spec, std::size_t n, std::uint64_t seed);

// Returns S with the point at (0-based) index i replaced by a fresh draw.
Dataset make_neighbor(const Dataset& s, std::size_t i, const DistributionSpec& spec,
                      std::uint64_t seed);

std::vector<std::size_t> differing_indices(const Dataset& a, const Dataset& b);

// Contiguous, order-preserving split of S into K equal blocks.
class Partition {
 public:
  Partition(const Dataset& s, std::size_t k);

  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t block_size() const { return block_size_; }
  const Dataset& block(std::size_t k) const { return blocks_.at(k); }
  // First index of block k in the source dataset.
  std::size_t block_begin(std::size_t k) const { return k * block_size_; }
  // S \ S_k, in source order.
  Dataset complement(std::size_t k) const;

 private:
  Dataset source_;
  std::size_t block_size_;
  std::vector<Dataset> blocks_;
};

std::vector<Dataset> partition(const Dataset& s, std::size_t k);

// CSV with header idx,y,x0,...,x{d-1}; values are printed with 17 significant
// digits so a write/read cycle is lossless.
void write_dataset_csv(std::ostream& os, const Dataset& s);
Dataset read_dataset_csv(std::istream& is);

}  // namespace stabilab
