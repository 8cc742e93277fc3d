#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dral/nn.hpp"

namespace dral {

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t parameters_checked = 0;

  bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;

  bool passed() const;
  double max_layer_error() const;     // over the plain network cases
  double max_composed_error() const;  // over the critic-of-actor cases
  nlohmann::json to_json() const;
};

// |a - n| / max(|a|, |n|, 1e-6): relative where gradients are meaningful,
// absolute below 1e-6.
double relative_error(double analytic, double numeric);

// Max relative error between `analytic` and central differences of `loss`
// taken over every parameter of `net` with step `eps`.
double check_net_gradient(DenseNet& net, const std::function<double()>& loss,
                          const NetGradients& analytic, double eps, std::size_t* checked = nullptr);

inline constexpr double kGradCheckEps = 1e-5;
inline constexpr double kLayerTolerance = 1e-4;
inline constexpr double kComposedTolerance = 1e-3;

// Every activation as hidden and output layer, the softmax/cross-entropy
// shortcut, the MSE head, and the actor gradient through a frozen critic.
GradCheckReport run_grad_check(std::uint64_t seed);

}  // namespace dral
