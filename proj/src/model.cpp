#include "simshoot/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "simshoot/expr.hpp"

namespace simshoot::model {

using nlohmann::json;

void RpvSelection::validate(int n_x) const {
  std::vector<char> seen(n_x, 0);
  auto mark = [&](const std::vector<int>& idx) {
    for (int i : idx) {
      if (i < 0 || i >= n_x) throw InputError("rpv selection index out of range");
      if (seen[i]) throw InputError("rpv selection repeats state index " + std::to_string(i));
      seen[i] = 1;
    }
  };
  mark(slow_indices);
  mark(fast_indices);
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw InputError("rpv selection must cover every state component");
}

void OcpModel::finalize() {
  if (n_s < 0 || n_f < 0 || n_u < 0 || n_s + n_f == 0)
    throw InputError("model dimensions must be nonnegative with at least one state");
  if (!f_s || !f_f || !L) throw InputError("model callables f_s, f_f, L are required");
  if (f_s->n_in() != n_in() || f_f->n_in() != n_in() || L->n_in() != n_in())
    throw InputError("model callables must take the stacked [z_s; z_f; u] argument");
  if (f_s->n_out() != n_s || f_f->n_out() != n_f || L->n_out() != 1)
    throw InputError("model callable output sizes do not match dimensions");
  if (static_cast<int>(z_s0.size()) != n_s) throw InputError("z_s initial value must have size n_s");
  if (z_f0.size() != 0 && static_cast<int>(z_f0.size()) != n_f)
    throw InputError("z_f initial value must have size n_f or be absent");
  if (static_cast<int>(u_lower.size()) != n_u || static_cast<int>(u_upper.size()) != n_u)
    throw InputError("control bounds must have size n_u");
  if (static_cast<int>(x_lower.size()) != n_x() || static_cast<int>(x_upper.size()) != n_x())
    throw InputError("state bounds must have size n_s + n_f");
  if (sp_form && epsilon <= 0) throw InputError("singular perturbation form requires epsilon > 0");
  if (horizon <= 0) throw InputError("horizon must be positive");
  for (const auto& [idx, val] : terminal_pins) {
    (void)val;
    if (idx < 0 || idx >= n_x()) throw InputError("terminal pin index out of range");
  }

  auto fs = f_s;
  auto ff = f_f;
  auto cost = L;
  const int ns = n_s, nf = n_f;
  const double eps = epsilon;
  const bool sp = sp_form;

  full_field = ad::make_fn(n_in(), n_x(), [fs, ff, ns, nf, eps, sp](auto in, auto out) {
    using S = std::decay_t<decltype(out[0])>;
    fs->eval(in, out.first(ns));
    std::vector<S> fast(nf);
    ff->eval(in, std::span<S>(fast));
    for (int j = 0; j < nf; ++j) {
      if (sp)
        out[ns + j] = fast[j] / eps;
      else
        out[ns + j] = std::move(fast[j]);
    }
  });

  auto field = full_field;
  const int nx = n_x();
  field_and_cost = ad::make_fn(n_in(), nx + 1, [field, cost, nx](auto in, auto out) {
    using S = std::decay_t<decltype(out[0])>;
    field->eval(in, out.first(nx));
    std::vector<S> l(1);
    cost->eval(in, std::span<S>(l));
    out[nx] = std::move(l[0]);
  });
}

OcpModel enzyme_model(double epsilon) {
  OcpModel m;
  m.name = "enzyme";
  m.n_s = 1;
  m.n_f = 1;
  m.n_u = 1;
  m.epsilon = epsilon;
  m.sp_form = true;
  m.horizon = 5.0;
  m.f_s = ad::make_fn(3, 1, [](auto in, auto out) {
    const auto& zs = in[0];
    const auto& zf = in[1];
    const auto& u = in[2];
    out[0] = -zs + (zs + 0.5) * zf + u;
  });
  m.f_f = ad::make_fn(3, 1, [](auto in, auto out) {
    const auto& zs = in[0];
    const auto& zf = in[1];
    out[0] = zs - (zs + 1.0) * zf;
  });
  m.L = ad::make_fn(3, 1, [](auto in, auto out) {
    const auto& zf = in[1];
    const auto& u = in[2];
    out[0] = -50.0 * zf + u * u;
  });
  m.u_lower = Vec::Constant(1, 0.0);
  m.u_upper = Vec::Constant(1, 10.0);
  m.x_lower = Vec::Zero(2);
  m.x_upper = Vec::Constant(2, kInf);
  m.z_s0 = Vec::Constant(1, 1.0);
  m.z_f0 = Vec::Constant(1, 0.5);
  m.slow_names = {"zs"};
  m.fast_names = {"zf"};
  m.control_names = {"u"};
  m.finalize();
  return m;
}

NaturalParts partition_natural(const ad::FnPtr& natural_rhs, const ad::FnPtr& natural_cost,
                               const RpvSelection& sel, int n_x, int n_u) {
  sel.validate(n_x);
  if (natural_rhs->n_in() != n_x + n_u || natural_rhs->n_out() != n_x)
    throw InputError("natural dynamics must map [x; u] to x'");
  if (natural_cost->n_in() != n_x + n_u || natural_cost->n_out() != 1)
    throw InputError("natural cost must map [x; u] to a scalar");

  std::vector<int> nat_of_part;
  nat_of_part.reserve(n_x);
  for (int i : sel.slow_indices) nat_of_part.push_back(i);
  for (int i : sel.fast_indices) nat_of_part.push_back(i);

  auto permuted = [&](const ad::FnPtr& inner, std::vector<int> rows) {
    // rows.size() must be read before the capture below moves the vector
    const int n_rows = static_cast<int>(rows.size());
    return ad::make_fn(
        n_x + n_u, n_rows,
        [inner, nop = nat_of_part, rows = std::move(rows), n_x, n_u](auto in, auto out) {
          using S = std::decay_t<decltype(out[0])>;
          std::vector<S> nat(n_x + n_u);
          for (int p = 0; p < n_x; ++p) nat[nop[p]] = in[p];
          for (int k = 0; k < n_u; ++k) nat[n_x + k] = in[n_x + k];
          std::vector<S> full(inner->n_out());
          inner->eval(std::span<const S>(nat), std::span<S>(full));
          for (size_t i = 0; i < rows.size(); ++i) out[i] = std::move(full[rows[i]]);
        });
  };

  NaturalParts parts;
  parts.f_s = permuted(natural_rhs, sel.slow_indices);
  parts.f_f = permuted(natural_rhs, sel.fast_indices);
  parts.L = permuted(natural_cost, {0});
  return parts;
}

OcpModel cstr_model(double epsilon) {
  const double k1 = 100.0, k1r = 90.0, k2 = 20.0, c_in = 1.0;

  // natural order: (c_A, c_B, c_C, c_D, V), controls (q, q_A)
  ad::FnPtr rhs = ad::make_fn(7, 5, [k1, k1r, k2, c_in, epsilon](auto in, auto out) {
    const auto& cA = in[0];
    const auto& cB = in[1];
    const auto& cC = in[2];
    const auto& cD = in[3];
    const auto& V = in[4];
    const auto& q = in[5];
    const auto& qA = in[6];
    auto dil = qA / V;
    out[0] = -k1 * cA + k1r * cB + dil * (c_in - cA);
    out[1] = k1 * cA - (k1r + epsilon) * cB - dil * cB;
    out[2] = epsilon * cB - k2 * cC - dil * cC;
    out[3] = k2 * cC - dil * cD;
    out[4] = qA - q;
  });
  ad::FnPtr cost = ad::make_fn(7, 1, [](auto in, auto out) {
    const auto& cB = in[1];
    const auto& q = in[5];
    const auto& qA = in[6];
    out[0] = -0.1 * q * cB + q * q + qA * qA;
  });

  RpvSelection sel;
  sel.slow_indices = {1, 3, 4};  // c_B, c_D, V
  sel.fast_indices = {0, 2};     // c_A, c_C
  NaturalParts parts = partition_natural(rhs, cost, sel, 5, 2);

  OcpModel m;
  m.name = "cstr";
  m.n_s = 3;
  m.n_f = 2;
  m.n_u = 2;
  m.epsilon = epsilon;
  m.sp_form = false;
  m.horizon = 500.0;
  m.f_s = parts.f_s;
  m.f_f = parts.f_f;
  m.L = parts.L;
  m.u_lower = Vec::Zero(2);
  m.u_upper = Vec(2);
  m.u_upper << 1.5e-3, 1e-3;  // q, q_A
  m.x_lower = Vec::Zero(5);
  m.x_upper = Vec::Constant(5, kInf);
  m.z_s0 = Vec(3);
  m.z_s0 << 1e-3, 1e-8, 1e-2;  // c_B*, c_D*, V*
  m.z_f0 = Vec(2);
  m.z_f0 << 1e-3, 0.0;  // c_A*, c_C*
  m.terminal_pins = {{2, 1e-2}};  // V(T) = V*
  m.slow_names = {"cB", "cD", "V"};
  m.fast_names = {"cA", "cC"};
  m.control_names = {"q", "qA"};
  m.rpv = sel;
  m.finalize();
  return m;
}

std::optional<OcpModel> by_name(const std::string& name, std::optional<double> epsilon) {
  if (name == "enzyme") return epsilon ? enzyme_model(*epsilon) : enzyme_model();
  if (name == "cstr") return epsilon ? cstr_model(*epsilon) : cstr_model();
  return std::nullopt;
}

namespace {

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(std::string("field ") + key + " must be a number");
  return j[key].get<double>();
}

double bound_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_number()) throw ConfigError(std::string("field ") + key + " must be a number or null");
  return j[key].get<double>();
}

}  // namespace

OcpModel parse_model(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model JSON must be an object");

  OcpModel m;
  m.name = j.value("name", std::string("user"));
  if (!j.contains("horizon")) throw ConfigError("model requires a horizon");
  m.horizon = j["horizon"].get<double>();
  m.epsilon = number_or(j, "epsilon", 1.0);
  m.sp_form = j.value("singular_perturbation", false);

  std::map<std::string, double> constants;
  if (j.contains("constants")) {
    for (auto& [k, v] : j["constants"].items()) {
      if (!v.is_number()) throw ConfigError("constant " + k + " must be a number");
      constants[k] = v.get<double>();
    }
  }

  auto read_group = [&](const char* key, bool required) -> std::vector<json> {
    if (!j.contains(key)) {
      if (required) throw ConfigError(std::string("model requires a ") + key + " array");
      return {};
    }
    if (!j[key].is_array()) throw ConfigError(std::string(key) + " must be an array");
    return std::vector<json>(j[key].begin(), j[key].end());
  };

  std::vector<json> slow = read_group("slow", true);
  std::vector<json> fast = read_group("fast", false);
  std::vector<json> controls = read_group("controls", false);
  m.n_s = static_cast<int>(slow.size());
  m.n_f = static_cast<int>(fast.size());
  m.n_u = static_cast<int>(controls.size());

  std::map<std::string, int> var_index;
  auto register_name = [&](const json& entry, int idx) {
    if (!entry.is_object() || !entry.contains("name"))
      throw ConfigError("state/control entries must be objects with a name");
    std::string name = entry["name"].get<std::string>();
    if (constants.count(name) || var_index.count(name))
      throw ConfigError("duplicate symbol " + name);
    var_index[name] = idx;
    return name;
  };

  m.x_lower = Vec::Constant(m.n_x(), -kInf);
  m.x_upper = Vec::Constant(m.n_x(), kInf);
  m.z_s0 = Vec::Zero(m.n_s);
  int fast_initials = 0;
  Vec fast_init = Vec::Zero(m.n_f);

  for (int i = 0; i < m.n_s; ++i) {
    m.slow_names.push_back(register_name(slow[i], i));
    if (!slow[i].contains("initial"))
      throw ConfigError("slow state " + m.slow_names.back() + " requires an initial value");
    m.z_s0[i] = slow[i]["initial"].get<double>();
    m.x_lower[i] = bound_or(slow[i], "lower", -kInf);
    m.x_upper[i] = bound_or(slow[i], "upper", kInf);
  }
  for (int i = 0; i < m.n_f; ++i) {
    m.fast_names.push_back(register_name(fast[i], m.n_s + i));
    if (fast[i].contains("initial") && !fast[i]["initial"].is_null()) {
      fast_init[i] = fast[i]["initial"].get<double>();
      ++fast_initials;
    }
    m.x_lower[m.n_s + i] = bound_or(fast[i], "lower", -kInf);
    m.x_upper[m.n_s + i] = bound_or(fast[i], "upper", kInf);
  }
  if (fast_initials == m.n_f && m.n_f > 0) m.z_f0 = fast_init;
  else if (fast_initials != 0)
    throw ConfigError("fast initial values must be given for all fast states or none");

  m.u_lower = Vec::Constant(m.n_u, -kInf);
  m.u_upper = Vec::Constant(m.n_u, kInf);
  for (int i = 0; i < m.n_u; ++i) {
    m.control_names.push_back(register_name(controls[i], m.n_x() + i));
    m.u_lower[i] = bound_or(controls[i], "lower", -kInf);
    m.u_upper[i] = bound_or(controls[i], "upper", kInf);
  }

  auto parse_rows = [&](const char* key, int expected) {
    if (!j.contains(key) || !j[key].is_array() ||
        static_cast<int>(j[key].size()) != expected)
      throw ConfigError(std::string("model requires ") + key + " with " +
                        std::to_string(expected) + " expression(s)");
    auto rows = std::make_shared<std::vector<std::unique_ptr<expr::Node>>>();
    for (const auto& entry : j[key]) {
      if (!entry.is_string()) throw ConfigError(std::string(key) + " entries must be strings");
      rows->push_back(expr::parse(entry.get<std::string>(), var_index, constants));
    }
    return rows;
  };

  auto rows_fs = parse_rows("f_s", m.n_s);
  auto rows_ff = parse_rows("f_f", m.n_f);
  if (!j.contains("cost") || !j["cost"].is_string())
    throw ConfigError("model requires a cost expression");
  auto cost_rows = std::make_shared<std::vector<std::unique_ptr<expr::Node>>>();
  cost_rows->push_back(expr::parse(j["cost"].get<std::string>(), var_index, constants));

  auto as_fn = [&](std::shared_ptr<std::vector<std::unique_ptr<expr::Node>>> rows) {
    return ad::make_fn(m.n_in(), static_cast<int>(rows->size()), [rows](auto in, auto out) {
      for (size_t i = 0; i < rows->size(); ++i) out[i] = (*rows)[i]->eval(in);
    });
  };
  m.f_s = as_fn(rows_fs);
  m.f_f = as_fn(rows_ff);
  m.L = as_fn(cost_rows);

  if (j.contains("terminal")) {
    for (const auto& entry : j["terminal"]) {
      if (!entry.is_object() || !entry.contains("state") || !entry.contains("value"))
        throw ConfigError("terminal entries must be {state, value} objects");
      std::string name = entry["state"].get<std::string>();
      auto it = var_index.find(name);
      if (it == var_index.end() || it->second >= m.n_x())
        throw ConfigError("terminal pin refers to unknown state " + name);
      m.terminal_pins.emplace_back(it->second, entry["value"].get<double>());
    }
  }

  try {
    m.finalize();
  } catch (const InputError& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
  return m;
}

OcpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace simshoot::model
