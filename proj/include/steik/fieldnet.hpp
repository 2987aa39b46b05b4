#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace steik {

/// Small spatial vector / matrix (dimension 1..3) stored inline.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

enum class LayerKind { Linear, Quadratic };
enum class InitScheme { SirenUniform, GeometricSine, MultiFreqGeometric };

struct Activation {
  enum class Type { Sine, Identity };
  Type type = Type::Identity;
  double omega0 = 1.0;

  static Activation sine(double omega0) { return {Type::Sine, omega0}; }
  static Activation identity() { return {Type::Identity, 1.0}; }
};

/// One layer computing act((W1 x + b1) * (W2 x + b2) + W3 x^2 + b3) with
/// element-wise products. A Linear layer keeps W1 = W3 = 0, b3 = 0, b1 = 1 so
/// the same formula reduces to act(W2 x + b2); only W2 and b2 are trainable.
struct LayerParams {
  LayerKind kind = LayerKind::Linear;
  Activation activation;
  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;

  Eigen::Index in_dim() const { return W2.cols(); }
  Eigen::Index out_dim() const { return W2.rows(); }

  /// Zero-initialized layer of the given shape with the Linear invariants applied.
  static LayerParams zeros(Eigen::Index out, Eigen::Index in, LayerKind kind, Activation act);

  /// Throws ContractError when shapes or kind invariants are violated.
  void validate() const;
};

struct NetworkConfig {
  int input_dim = 3;
  int hidden_layers = 5;
  int hidden_width = 128;
  LayerKind layer_kind = LayerKind::Quadratic;
  double omega0_first = 30.0;
  double omega0_hidden = 30.0;
  InitScheme init_scheme = InitScheme::MultiFreqGeometric;
  /// Half-width of the uniform draw for W1, W3, b3 of quadratic layers.
  double quadratic_init_eps = 1e-4;
  /// Radius of the initial zero level set for the geometric schemes. Only read
  /// by init(), so checkpoints do not store it.
  double init_radius = 0.85;

  void validate() const;
};

struct NetworkParams {
  NetworkConfig config;
  std::vector<LayerParams> layers;

  int input_dim() const { return config.input_dim; }
  void validate() const;
};

/// Value, spatial gradient and (symmetric) spatial Hessian of the field at a point.
struct FieldJet {
  double value = 0.0;
  Vec grad;
  Mat hess;
};

/// Highest spatial derivative order carried through a jet evaluation.
enum class JetOrder { Value = 0, Gradient = 1, Hessian = 2 };

/// Plain evaluation u(x).
double forward(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Exact value, gradient and Hessian of u at x.
FieldJet forward_jet(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Jets at every column of `points` (input_dim x count). Entries above `order`
/// are left empty (grad / hess of size 0).
std::vector<FieldJet> forward_jets(const NetworkParams& params, const Eigen::Ref<const Eigen::MatrixXd>& points,
                                   JetOrder order = JetOrder::Hessian);

/// Values at every column of `points`.
Eigen::VectorXd forward_values(const NetworkParams& params, const Eigen::Ref<const Eigen::MatrixXd>& points);

/// Deterministic initialization. Quadratic layers start as near-copies of the
/// corresponding linear layer: W1, W3, b3 uniform in [-eps, eps], b1 = 1, and
/// W2, b2 drawn from the selected scheme.
NetworkParams init(const NetworkConfig& config, std::uint64_t seed);

/// Number of trainable scalars.
std::size_t param_count(const NetworkConfig& config);

/// Layer widths: input_dim, width x hidden_layers, 1.
std::vector<int> layer_widths(const NetworkConfig& config);

const char* to_string(LayerKind kind);
const char* to_string(InitScheme scheme);
LayerKind layer_kind_from_string(const std::string& s);
InitScheme init_scheme_from_string(const std::string& s);

}  // namespace steik
