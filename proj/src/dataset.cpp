#include "dral/dataset.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dral/errors.hpp"
#include "dral/fs_util.hpp"
#include "dral/rng.hpp"

namespace dral {

void Dataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw ParameterError("dataset needs at least one sample and one feature");
  }
  if (num_classes < 1) throw ParameterError("dataset needs num_classes >= 1");
  if (!features.all_finite()) throw ParameterError("dataset features contain NaN/Inf");
  if (labels) {
    if (labels->size() != features.rows()) {
      throw ParameterError("dataset has " + std::to_string(labels->size()) + " labels for " +
                           std::to_string(features.rows()) + " samples");
    }
    for (int y : *labels) {
      if (y < 0 || y >= num_classes) {
        throw ParameterError("dataset label " + std::to_string(y) + " outside [0, " +
                             std::to_string(num_classes) + ")");
      }
    }
  }
  if (coords2d && (coords2d->rows() != features.rows() || coords2d->cols() != 2)) {
    throw ParameterError("coords2d must be N x 2");
  }
}

std::vector<std::pair<double, double>> blob_centers(int num_classes, double spacing,
                                                    bool on_line) {
  std::vector<std::pair<double, double>> centers;
  if (on_line || num_classes <= 2) {
    const double offset = 0.5 * spacing * (num_classes - 1);
    for (int c = 0; c < num_classes; ++c) centers.emplace_back(c * spacing - offset, 0.0);
    return centers;
  }
  const double radius = spacing / (2.0 * std::sin(std::numbers::pi / num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / num_classes;
    centers.emplace_back(radius * std::cos(angle), radius * std::sin(angle));
  }
  return centers;
}

Dataset make_gaussian_blobs(const BlobSpec& spec) {
  if (spec.dims < 1) throw ParameterError("make_gaussian_blobs: dims must be >= 1");
  if (spec.num_classes < 1 || spec.samples_per_class < 1) {
    throw ParameterError("make_gaussian_blobs: class and sample counts must be >= 1");
  }
  if (!(spec.cluster_std > 0.0)) throw ParameterError("make_gaussian_blobs: cluster_std must be > 0");

  Rng rng = make_rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dims = static_cast<std::size_t>(spec.dims);

  // Lift map: dims x 2 with orthonormal columns (Gram-Schmidt), so distances
  // in the source plane are preserved.
  Matrix lift(dims, 2);
  if (dims == 1) {
    lift(0, 0) = 1.0;
  } else {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t r = 0; r < dims; ++r) lift(r, c) = normal(rng);
    }
    auto normalize = [&](std::size_t c) {
      double norm = 0.0;
      for (std::size_t r = 0; r < dims; ++r) norm += lift(r, c) * lift(r, c);
      norm = std::sqrt(norm);
      for (std::size_t r = 0; r < dims; ++r) lift(r, c) /= norm;
    };
    normalize(0);
    double dot = 0.0;
    for (std::size_t r = 0; r < dims; ++r) dot += lift(r, 0) * lift(r, 1);
    for (std::size_t r = 0; r < dims; ++r) lift(r, 1) -= dot * lift(r, 0);
    normalize(1);
  }

  const auto centers = blob_centers(spec.num_classes, spec.center_spacing, dims == 1);
  const std::size_t n =
      static_cast<std::size_t>(spec.num_classes) * static_cast<std::size_t>(spec.samples_per_class);
  Dataset data;
  data.features = Matrix(n, dims);
  data.coords2d = Matrix(n, 2);
  data.labels = std::vector<int>(n);
  data.num_classes = spec.num_classes;
  data.meta = {"gaussian-blobs", spec.seed};
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
    const double x = centers[c].first + spec.cluster_std * normal(rng);
    const double y = dims == 1 ? 0.0 : centers[c].second + spec.cluster_std * normal(rng);
    (*data.coords2d)(i, 0) = x;
    (*data.coords2d)(i, 1) = y;
    (*data.labels)[i] = c;
    for (std::size_t r = 0; r < dims; ++r) data.features(i, r) = lift(r, 0) * x + lift(r, 1) * y;
  }
  return data;
}

void to_json(nlohmann::json& j, const BlobSpec& spec) {
  j = {{"num_classes", spec.num_classes},
       {"dims", spec.dims},
       {"samples_per_class", spec.samples_per_class},
       {"cluster_std", spec.cluster_std},
       {"center_spacing", spec.center_spacing},
       {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, BlobSpec& spec) {
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.dims = j.value("dims", spec.dims);
  spec.samples_per_class = j.value("samples_per_class", spec.samples_per_class);
  spec.cluster_std = j.value("cluster_std", spec.cluster_std);
  spec.center_spacing = j.value("center_spacing", spec.center_spacing);
  spec.seed = j.value("seed", spec.seed);
}

nlohmann::json dataset_to_json(const Dataset& data) {
  nlohmann::json j = {
      {"meta", {{"name", data.meta.name}, {"seed", data.meta.seed}}},
      {"num_classes", data.num_classes},
      {"rows", data.features.rows()},
      {"cols", data.features.cols()},
      {"features", std::vector<double>(data.features.values().begin(),
                                       data.features.values().end())},
      {"labels", data.labels ? nlohmann::json(*data.labels) : nlohmann::json(nullptr)}};
  if (data.coords2d) {
    j["coords2d"] =
        std::vector<double>(data.coords2d->values().begin(), data.coords2d->values().end());
  }
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    Dataset data;
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    data.features = Matrix(rows, cols, j.at("features").get<std::vector<double>>());
    data.num_classes = j.at("num_classes").get<int>();
    if (j.contains("labels") && !j.at("labels").is_null()) {
      data.labels = j.at("labels").get<std::vector<int>>();
    }
    if (j.contains("meta")) {
      data.meta.name = j.at("meta").value("name", "");
      data.meta.seed = j.at("meta").value("seed", std::uint64_t{0});
    }
    if (j.contains("coords2d")) {
      data.coords2d = Matrix(rows, 2, j.at("coords2d").get<std::vector<double>>());
    }
    data.validate();
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed dataset JSON: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParameterError(std::string("malformed dataset JSON: ") + e.what());
  }
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_json(data).dump());
}

Dataset load_dataset(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return dataset_from_json(j);
}

}  // namespace dral
