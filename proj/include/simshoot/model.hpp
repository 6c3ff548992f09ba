#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "simshoot/common.hpp"
#include "simshoot/fn.hpp"

// Optimal control problem models over states split into slow variables z_s
// (the reaction progress variables for general kinetics) and fast variables
// z_f. All model callables take the stacked argument [z_s; z_f; u].
//
// Two dynamic conventions coexist:
//   sp_form == true   explicit singular perturbation form; f_f holds the
//                     right side of  eps * z_f' = f_f(z_s, z_f, u), so the
//                     assembled state field divides the fast rows by eps.
//   sp_form == false  general kinetics; f_f is z_f' itself and the slow/fast
//                     split only records which components are treated as
//                     progress variables.

namespace simshoot::model {

/// Partition of natural state coordinates into progress variables (slow)
/// and the rest (fast). Indices refer to the model's original state order.
struct RpvSelection {
  std::vector<int> slow_indices;
  std::vector<int> fast_indices;

  /// Throws InputError unless the two index lists partition 0..n_x-1.
  void validate(int n_x) const;
};

struct OcpModel {
  std::string name;
  int n_s{0}, n_f{0}, n_u{0};
  double epsilon{1.0};
  bool sp_form{false};
  double horizon{0.0};

  ad::FnPtr f_s;  // [z_s; z_f; u] -> R^{n_s}
  ad::FnPtr f_f;  // [z_s; z_f; u] -> R^{n_f}
  ad::FnPtr L;    // [z_s; z_f; u] -> R

  Vec u_lower, u_upper;  // size n_u
  Vec x_lower, x_upper;  // size n_s+n_f in [z_s; z_f] order; +-inf when free

  Vec z_s0;  // size n_s, required
  Vec z_f0;  // size n_f, or size 0 when the fast initial value is free

  /// Pinned terminal state components: (index into [z_s; z_f], value).
  std::vector<std::pair<int, double>> terminal_pins;

  std::vector<std::string> slow_names, fast_names, control_names;

  /// Original-coordinate partition, recorded when the model was built from
  /// natural-order dynamics.
  std::optional<RpvSelection> rpv;

  // Assembled helpers, built by finalize():
  ad::FnPtr full_field;      // [z_s; z_f; u] -> z' (fast rows already /eps for sp_form)
  ad::FnPtr field_and_cost;  // [z_s; z_f; u] -> [z'; L]

  int n_x() const { return n_s + n_f; }
  int n_in() const { return n_s + n_f + n_u; }

  /// Validates dimensions and builds the assembled helpers. Throws
  /// InputError on inconsistent shapes.
  void finalize();
};

/// Enzyme substrate/complex kinetics in explicit singular perturbation form:
///   z_s' = -z_s + (z_s + 0.5) z_f + u
///   eps z_f' = z_s - (z_s + 1) z_f
///   L = -50 z_f + u^2,  horizon 5,  u in [0, 10],  states nonnegative,
///   z_s(0) = 1, z_f(0) = 0.5.
OcpModel enzyme_model(double epsilon = 1e-6);

/// Continuously stirred tank reactor with reactions A <-> B -> C -> D,
/// feed q_A, harvest q, states (c_A, c_B, c_C, c_D, V) reordered into
/// progress variables z_s = (c_B, c_D, V) and z_f = (c_A, c_C).
///   L = -0.1 q c_B + q^2 + q_A^2,  horizon 500,
///   q in [0, 1.5e-3], q_A in [0, 1e-3], states nonnegative,
///   initial (1e-3, 1e-3, 0, 1e-8, 1e-2) in natural order, V(T) = 1e-2.
/// The slow B -> C rate constant plays the role of eps (default 1e-6); the
/// model is general-form kinetics, not explicit singular perturbation form.
OcpModel cstr_model(double epsilon = 1e-6);

/// Builtin lookup by name ("enzyme", "cstr"); empty when unknown.
std::optional<OcpModel> by_name(const std::string& name, std::optional<double> epsilon = {});

/// Build a model from its JSON text (see README for the schema).
/// Throws ConfigError on malformed input.
OcpModel parse_model(const std::string& json_text);

/// Read and parse a model configuration file.
OcpModel load_model(const std::string& path);

/// Rebuild a model from natural-order dynamics: `natural_rhs` maps
/// [x_natural; u] to x_natural' and `natural_cost` maps the same argument to
/// L. Returns partitioned f_s/f_f plus input wrappers honoring `sel`.
struct NaturalParts {
  ad::FnPtr f_s, f_f, L;
};
NaturalParts partition_natural(const ad::FnPtr& natural_rhs, const ad::FnPtr& natural_cost,
                               const RpvSelection& sel, int n_x, int n_u);

}  // namespace simshoot::model
