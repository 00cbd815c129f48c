#include "stabilab/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "stabilab/csv.hpp"

namespace stabilab {

std::string to_string(Family f) {
  switch (f) {
    case Family::kGaussianClassification: return "gaussian-linear-classification";
    case Family::kGaussianRegression: return "gaussian-linear-regression";
    case Family::kPointMass: return "point-mass";
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  if (s == "gaussian-linear-classification") return Family::kGaussianClassification;
  if (s == "gaussian-linear-regression") return Family::kGaussianRegression;
  if (s == "point-mass") return Family::kPointMass;
  throw std::invalid_argument("unknown distribution family '" + s + "'");
}

void DistributionSpec::validate() const {
  if (dim == 0) throw std::invalid_argument("distro.dim must be >= 1");
  if (w_true.size() != dim) {
    throw std::invalid_argument("distro.w_true has " + std::to_string(w_true.size()) +
                                " entries, expected dim = " + std::to_string(dim));
  }
  if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y)) {
    throw std::invalid_argument("distro.sigma_y must be finite and >= 0");
  }
  if (!(bx > 0.0) || !std::isfinite(bx)) throw std::invalid_argument("distro.bx must be > 0");
  if (!(by > 0.0) || !std::isfinite(by)) throw std::invalid_argument("distro.by must be > 0");
  if (family == Family::kGaussianRegression && norm2(w_true) * bx > by * (1.0 + 1e-12)) {
    // The noiseless label <w_true, x> must already satisfy |y| <= by.
    throw std::invalid_argument("distro.by must be >= |w_true| * bx for regression");
  }
}

void to_json(nlohmann::json& j, const DistributionSpec& spec) {
  j = nlohmann::json{{"family", to_string(spec.family)},
                     {"dim", spec.dim},
                     {"w_true", spec.w_true},
                     {"sigma_y", spec.sigma_y},
                     {"bx", spec.bx},
                     {"by", spec.by}};
}

void from_json(const nlohmann::json& j, DistributionSpec& spec) {
  static const char* kKeys[] = {"family", "dim", "w_true", "sigma_y", "bx", "by"};
  if (!j.is_object()) throw std::invalid_argument("distro must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw std::invalid_argument("distro: unknown key '" + key + "'");
    }
  }
  for (const char* k : kKeys) {
    if (!j.contains(k)) throw std::invalid_argument(std::string("distro: missing key '") + k + "'");
  }
  spec.family = family_from_string(j.at("family").get<std::string>());
  spec.dim = j.at("dim").get<std::size_t>();
  spec.w_true = j.at("w_true").get<Vector>();
  spec.sigma_y = j.at("sigma_y").get<double>();
  spec.bx = j.at("bx").get<double>();
  spec.by = j.at("by").get<double>();
}

PointSampler::PointSampler(const DistributionSpec& spec)
    : spec_(spec), feature_std_(spec.bx / (2.0 * std::sqrt(static_cast<double>(spec.dim)))) {
  spec_.validate();
}

void PointSampler::draw(Rng& rng, DataPoint& out) const {
  const std::size_t d = spec_.dim;
  out.x.resize(d);
  if (spec_.family == Family::kPointMass) {
    const double wn = norm2(spec_.w_true);
    for (std::size_t j = 0; j < d; ++j) {
      out.x[j] = wn > 0.0 ? spec_.bx * spec_.w_true[j] / wn : (j == 0 ? spec_.bx : 0.0);
    }
    out.y = 1.0;
    return;
  }
  for (std::size_t j = 0; j < d; ++j) out.x[j] = feature_std_ * rng.normal();
  const double xn = norm2(out.x);
  if (xn > spec_.bx) {
    const double scale = spec_.bx / xn;
    for (double& v : out.x) v *= scale;
  }
  const double signal = dot(spec_.w_true, out.x);
  const double noise = spec_.sigma_y > 0.0 ? spec_.sigma_y * rng.normal() : 0.0;
  if (spec_.family == Family::kGaussianClassification) {
    out.y = signal + noise >= 0.0 ? 1.0 : -1.0;
  } else {
    out.y = std::clamp(signal + noise, -spec_.by, spec_.by);
  }
}

DataPoint PointSampler::draw(Rng& rng) const {
  DataPoint p;
  draw(rng, p);
  return p;
}

Dataset sample_dataset(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_dataset: n must be >= 1");
  const PointSampler sampler(spec);
  Rng rng(seed);
  Dataset s;
  s.dim = spec.dim;
  s.points.resize(n);
  for (auto& p : s.points) sampler.draw(rng, p);
  return s;
}

Dataset make_neighbor(const Dataset& s, std::size_t i, const DistributionSpec& spec,
                      std::uint64_t seed) {
  if (i >= s.size()) {
    throw std::invalid_argument("make_neighbor: index " + std::to_string(i) +
                                " out of range for dataset of size " + std::to_string(s.size()));
  }
  require_same_dim(s.dim, spec.dim, "make_neighbor dataset vs distro");
  const PointSampler sampler(spec);
  Rng rng(seed);
  Dataset out = s;
  sampler.draw(rng, out.points[i]);
  return out;
}

std::vector<std::size_t> differing_indices(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) throw std::invalid_argument("differing_indices: size mismatch");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i])) out.push_back(i);
  }
  return out;
}

Partition::Partition(const Dataset& s, std::size_t k) : source_(s), block_size_(0) {
  if (k == 0) throw std::invalid_argument("partition: K must be >= 1");
  if (s.size() % k != 0) {
    throw std::invalid_argument("partition: N = " + std::to_string(s.size()) +
                                " is not a multiple of K = " + std::to_string(k));
  }
  block_size_ = s.size() / k;
  blocks_.reserve(k);
  for (std::size_t b = 0; b < k; ++b) {
    Dataset blk;
    blk.dim = s.dim;
    blk.points.assign(s.points.begin() + static_cast<std::ptrdiff_t>(b * block_size_),
                      s.points.begin() + static_cast<std::ptrdiff_t>((b + 1) * block_size_));
    blocks_.push_back(std::move(blk));
  }
}

Dataset Partition::complement(std::size_t k) const {
  if (k >= blocks_.size()) throw std::invalid_argument("partition: block index out of range");
  Dataset out;
  out.dim = source_.dim;
  out.points.reserve(source_.size() - block_size_);
  for (std::size_t i = 0; i < source_.size(); ++i) {
    if (i / block_size_ != k) out.points.push_back(source_.points[i]);
  }
  return out;
}

std::vector<Dataset> partition(const Dataset& s, std::size_t k) {
  const Partition p(s, k);
  std::vector<Dataset> out;
  out.reserve(k);
  for (std::size_t b = 0; b < k; ++b) out.push_back(p.block(b));
  return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& s) {
  os << "idx,y";
  for (std::size_t j = 0; j < s.dim; ++j) os << ",x" << j;
  os << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << i << ',' << format_double(s[i].y);
    for (double v : s[i].x) os << ',' << format_double(v);
    os << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("dataset csv: empty input");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "idx" || header[1] != "y") {
    throw std::invalid_argument("dataset csv: header must be idx,y,x0,...");
  }
  Dataset s;
  s.dim = header.size() - 2;
  for (std::size_t j = 0; j < s.dim; ++j) {
    if (header[j + 2] != "x" + std::to_string(j)) {
      throw std::invalid_argument("dataset csv: unexpected column '" + std::string(header[j + 2]) + "'");
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw std::invalid_argument("dataset csv: ragged row");
    if (parse_double(cells[0]) != static_cast<double>(s.size())) {
      throw std::invalid_argument("dataset csv: idx column out of order");
    }
    DataPoint p;
    p.y = parse_double(cells[1]);
    p.x.reserve(s.dim);
    for (std::size_t j = 0; j < s.dim; ++j) p.x.push_back(parse_double(cells[j + 2]));
    s.points.push_back(std::move(p));
  }
  if (s.size() == 0) throw std::invalid_argument("dataset csv: no rows");
  return s;
}

}  // namespace stabilab
