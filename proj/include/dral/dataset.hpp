#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dral/matrix.hpp"

namespace dral {

struct DatasetMeta {
  std::string name;
  std::uint64_t seed = 0;
};

/// N x d feature matrix with optional ground-truth labels.
///
/// `coords2d` holds the 2-D source coordinates when the data was generated
/// from planar cluster centers; it drives the scatter exports.
struct Dataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  int num_classes = 0;
  DatasetMeta meta;
  std::optional<Matrix> coords2d;

  std::size_t size() const { return features.rows(); }
  std::size_t dims() const { return features.cols(); }
  bool has_labels() const { return labels.has_value(); }

  // Throws ParameterError when an invariant is broken.
  void validate() const;
};

struct BlobSpec {
  int num_classes = 4;
  int dims = 16;
  int samples_per_class = 500;
  double cluster_std = 0.8;
  double center_spacing = 4.0;  // distance between neighbouring centers
  std::uint64_t seed = 0;
};

// Class c is drawn from an isotropic 2-D Gaussian around the c-th vertex of a
// regular polygon (a line when dims == 1), then lifted to `dims` dimensions by
// a fixed random map with orthonormal columns. Samples are class-interleaved.
Dataset make_gaussian_blobs(const BlobSpec& spec);

// Centers of the blobs in the 2-D source plane.
// Planar layout is a regular polygon; `on_line` places them along the x axis.
std::vector<std::pair<double, double>> blob_centers(int num_classes, double spacing,
                                                    bool on_line = false);

void to_json(nlohmann::json& j, const BlobSpec& spec);
void from_json(const nlohmann::json& j, BlobSpec& spec);

nlohmann::json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dral
