#include <doctest.h>

#include <cmath>
#include <map>

#include "simshoot/expr.hpp"
#include "simshoot/model.hpp"

using namespace simshoot;

namespace {

Vec eval_fn(const ad::FnPtr& f, const Vec& in) {
  std::vector<double> xs(in.data(), in.data() + in.size());
  std::vector<double> out(f->n_out());
  f->eval(std::span<const double>(xs), std::span<double>(out));
  return Eigen::Map<const Vec>(out.data(), f->n_out());
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("expression parser evaluates with precedence and functions") {
  std::map<std::string, int> vars{{"x", 0}, {"y", 1}};
  std::map<std::string, double> consts{{"k", 2.5}};
  std::vector<double> at{1.3, -0.4};
  auto value = [&](const std::string& text) {
    auto node = expr::parse(text, vars, consts);
    return node->eval(std::span<const double>(at));
  };
  CHECK(value("2+3*4^2") == doctest::Approx(50.0));
  CHECK(value("x^2 + 3*y - sin(x)/2") ==
        doctest::Approx(1.69 - 1.2 - std::sin(1.3) / 2.0));
  CHECK(value("-x^2") == doctest::Approx(-1.69));
  CHECK(value("k*x") == doctest::Approx(3.25));
  CHECK(value("exp(y) + log(x) + sqrt(x) + cos(y)") ==
        doctest::Approx(std::exp(-0.4) + std::log(1.3) + std::sqrt(1.3) + std::cos(-0.4)));
  CHECK(value("x^-2") == doctest::Approx(std::pow(1.3, -2)));
  CHECK(value("(x+y)*(x-y)") == doctest::Approx(1.69 - 0.16));
  CHECK_THROWS_AS(value("x^y"), ConfigError);     // exponent must be an integer literal
  CHECK_THROWS_AS(value("z+1"), ConfigError);     // unknown symbol
  CHECK_THROWS_AS(value("x+"), ConfigError);      // truncated input
  CHECK_THROWS_AS(value("x 1"), ConfigError);     // trailing junk
  CHECK_THROWS_AS(value("sin(x, y)"), ConfigError);
}

TEST_CASE("enzyme model dimensions, bounds, and field values") {
  model::OcpModel m = model::enzyme_model();
  CHECK(m.n_s == 1);
  CHECK(m.n_f == 1);
  CHECK(m.n_u == 1);
  CHECK(m.horizon == doctest::Approx(5.0));
  CHECK(m.sp_form);
  CHECK(m.epsilon == doctest::Approx(1e-6));
  CHECK(m.u_lower[0] == 0.0);
  CHECK(m.u_upper[0] == 10.0);
  CHECK(m.z_s0[0] == 1.0);
  CHECK(m.z_f0[0] == 0.5);

  // at (z_s, z_f, u) = (1, 0.5, 0): z_s' = -1 + 1.5*0.5 = -0.25 and the
  // fast residual vanishes, so the scaled fast row is exactly zero
  Vec in(3);
  in << 1.0, 0.5, 0.0;
  Vec field = eval_fn(m.full_field, in);
  CHECK(field[0] == doctest::Approx(-0.25));
  CHECK(field[1] == doctest::Approx(0.0));
  Vec fc = eval_fn(m.field_and_cost, in);
  CHECK(fc[0] == doctest::Approx(-0.25));
  CHECK(fc[2] == doctest::Approx(-25.0));  // L = -50*0.5 + 0

  // off the manifold the fast row is amplified by 1/eps
  in << 1.0, 0.6, 0.0;
  field = eval_fn(m.full_field, in);
  CHECK(field[1] == doctest::Approx((1.0 - 2.0 * 0.6) / 1e-6));

  in << 1.0, 0.5, 0.7;
  fc = eval_fn(m.field_and_cost, in);
  CHECK(fc[0] == doctest::Approx(0.45));
  CHECK(fc[2] == doctest::Approx(-25.0 + 0.49));
}

TEST_CASE("cstr model partitions natural states into slow and fast blocks") {
  model::OcpModel m = model::cstr_model();
  CHECK(m.n_s == 3);
  CHECK(m.n_f == 2);
  CHECK(m.n_u == 2);
  CHECK(m.horizon == doctest::Approx(500.0));
  CHECK_FALSE(m.sp_form);
  REQUIRE(m.rpv.has_value());
  CHECK(m.slow_names == std::vector<std::string>{"cB", "cD", "V"});
  CHECK(m.fast_names == std::vector<std::string>{"cA", "cC"});
  CHECK(m.terminal_pins.size() == 1);
  CHECK(m.terminal_pins[0].first == 2);
  CHECK(m.terminal_pins[0].second == doctest::Approx(1e-2));

  // initial point, no flows: only the A <-> B exchange moves
  Vec in(7);
  in << 1e-3, 1e-8, 1e-2, 1e-3, 0.0, 0.0, 0.0;  // cB, cD, V, cA, cC, q, qA
  Vec field = eval_fn(m.full_field, in);
  CHECK(field[0] == doctest::Approx(100.0 * 1e-3 - (90.0 + 1e-6) * 1e-3).epsilon(1e-12));
  CHECK(field[1] == doctest::Approx(0.0));
  CHECK(field[2] == doctest::Approx(0.0));
  CHECK(field[3] == doctest::Approx(-100.0 * 1e-3 + 90.0 * 1e-3).epsilon(1e-12));
  CHECK(field[4] == doctest::Approx(1e-6 * 1e-3).epsilon(1e-12));

  // total concentration is conserved when no feed or harvest flows
  const double mass_rate = field[0] + field[1] + field[3] + field[4];
  CHECK(mass_rate == doctest::Approx(0.0).epsilon(1e-15));

  // with feed qA: d/dt(total) = (qA/V)(c_in - total)
  in << 1e-3, 1e-8, 1e-2, 1e-3, 0.0, 0.0, 5e-4;
  field = eval_fn(m.full_field, in);
  const double total = 1e-3 + 1e-8 + 1e-3 + 0.0;
  const double dil = 5e-4 / 1e-2;
  CHECK(field[0] + field[1] + field[3] + field[4] ==
        doctest::Approx(dil * (1.0 - total)).epsilon(1e-12));
  CHECK(field[2] == doctest::Approx(5e-4));  // V' = qA - q

  // running cost: -0.1 q cB + q^2 + qA^2
  in << 1e-3, 1e-8, 1e-2, 1e-3, 0.0, 1e-3, 0.0;
  Vec fc = eval_fn(m.field_and_cost, in);
  CHECK(fc[5] == doctest::Approx(-0.1 * 1e-3 * 1e-3 + 1e-6).epsilon(1e-12));
}

TEST_CASE("rpv selection validation rejects overlaps, gaps, and bad indices") {
  model::RpvSelection sel;
  sel.slow_indices = {1, 3, 4};
  sel.fast_indices = {0, 2};
  CHECK_NOTHROW(sel.validate(5));
  model::RpvSelection bad = sel;
  bad.fast_indices = {0, 0};
  CHECK_THROWS_AS(bad.validate(5), InputError);
  bad = sel;
  bad.fast_indices = {0, 5};
  CHECK_THROWS_AS(bad.validate(5), InputError);
  bad = sel;
  bad.fast_indices = {0};
  CHECK_THROWS_AS(bad.validate(5), InputError);  // index 2 uncovered
}

TEST_CASE("partition_natural permutes arguments and gathers rows") {
  // natural states (a, b, c) with rhs rows (a + 2b, b * c, c - u);
  // selection: slow = {2}, fast = {0, 1}
  auto rhs = ad::make_fn(4, 3, [](auto in, auto out) {
    out[0] = in[0] + 2.0 * in[1];
    out[1] = in[1] * in[2];
    out[2] = in[2] - in[3];
  });
  auto cost = ad::make_fn(4, 1, [](auto in, auto out) { out[0] = in[0] * in[3]; });
  model::RpvSelection sel;
  sel.slow_indices = {2};
  sel.fast_indices = {0, 1};
  model::NaturalParts parts = model::partition_natural(rhs, cost, sel, 3, 1);
  // partitioned input [c, a, b, u] = [3, 1, 2, 10]
  Vec in(4);
  in << 3.0, 1.0, 2.0, 10.0;
  Vec fs = eval_fn(parts.f_s, in);
  REQUIRE(fs.size() == 1);
  CHECK(fs[0] == doctest::Approx(-7.0));  // c - u
  Vec ff = eval_fn(parts.f_f, in);
  REQUIRE(ff.size() == 2);
  CHECK(ff[0] == doctest::Approx(5.0));  // a + 2b
  CHECK(ff[1] == doctest::Approx(6.0));  // b c
  Vec L = eval_fn(parts.L, in);
  CHECK(L[0] == doctest::Approx(10.0));  // a * u
}

TEST_CASE("builtin lookup by name") {
  auto e = model::by_name("enzyme");
  REQUIRE(e.has_value());
  CHECK(e->name == "enzyme");
  auto c = model::by_name("cstr", 1e-3);
  REQUIRE(c.has_value());
  CHECK(c->epsilon == doctest::Approx(1e-3));
  CHECK_FALSE(model::by_name("pendulum").has_value());
}

TEST_CASE("json models parse dimensions, expressions, bounds, and pins") {
  const std::string text = R"({
    "name": "linear2",
    "horizon": 2.0,
    "epsilon": 0.01,
    "singular_perturbation": true,
    "constants": {"a": 1.5},
    "slow": [{"name": "p", "initial": 1.0, "lower": 0.0}],
    "fast": [{"name": "r", "initial": 0.5, "lower": null, "upper": 3.0}],
    "controls": [{"name": "w", "lower": -1.0, "upper": 1.0}],
    "f_s": ["-a*p + r + w"],
    "f_f": ["p - r"],
    "cost": "p^2 + w^2",
    "terminal": [{"state": "p", "value": 0.25}]
  })";
  model::OcpModel m = model::parse_model(text);
  CHECK(m.name == "linear2");
  CHECK(m.n_s == 1);
  CHECK(m.n_f == 1);
  CHECK(m.n_u == 1);
  CHECK(m.sp_form);
  CHECK(m.epsilon == doctest::Approx(0.01));
  CHECK(m.z_s0[0] == 1.0);
  CHECK(m.z_f0[0] == 0.5);
  CHECK(m.x_lower[0] == 0.0);
  CHECK(m.x_upper[0] == kInf);
  CHECK(m.x_lower[1] == -kInf);
  CHECK(m.x_upper[1] == 3.0);
  CHECK(m.u_lower[0] == -1.0);
  REQUIRE(m.terminal_pins.size() == 1);
  CHECK(m.terminal_pins[0].first == 0);
  CHECK(m.terminal_pins[0].second == doctest::Approx(0.25));

  Vec in(3);
  in << 2.0, 0.5, 0.3;
  Vec field = eval_fn(m.full_field, in);
  CHECK(field[0] == doctest::Approx(-1.5 * 2.0 + 0.5 + 0.3));
  CHECK(field[1] == doctest::Approx((2.0 - 0.5) / 0.01));
  Vec fc = eval_fn(m.field_and_cost, in);
  CHECK(fc[2] == doctest::Approx(4.0 + 0.09));
}

TEST_CASE("json model validation failures carry ConfigError") {
  CHECK_THROWS_AS(model::parse_model("not json"), ConfigError);
  CHECK_THROWS_AS(model::parse_model("[1,2]"), ConfigError);
  // missing horizon
  CHECK_THROWS_AS(model::parse_model(R"({"slow": [{"name": "x", "initial": 0}],
    "f_s": ["-x"], "f_f": [], "cost": "x^2"})"),
                  ConfigError);
  // slow state without an initial value
  CHECK_THROWS_AS(model::parse_model(R"({"horizon": 1, "slow": [{"name": "x"}],
    "f_s": ["-x"], "f_f": [], "cost": "x^2"})"),
                  ConfigError);
  // duplicate symbol between constants and states
  CHECK_THROWS_AS(model::parse_model(R"({"horizon": 1, "constants": {"x": 1},
    "slow": [{"name": "x", "initial": 0}], "f_s": ["-x"], "f_f": [], "cost": "x^2"})"),
                  ConfigError);
  // malformed expression
  CHECK_THROWS_AS(model::parse_model(R"({"horizon": 1,
    "slow": [{"name": "x", "initial": 0}], "f_s": ["-x +"], "f_f": [], "cost": "x^2"})"),
                  ConfigError);
  // wrong f_s arity
  CHECK_THROWS_AS(model::parse_model(R"({"horizon": 1,
    "slow": [{"name": "x", "initial": 0}], "f_s": ["-x", "x"], "f_f": [], "cost": "x^2"})"),
                  ConfigError);
  // unknown terminal state
  CHECK_THROWS_AS(model::parse_model(R"({"horizon": 1,
    "slow": [{"name": "x", "initial": 0}], "f_s": ["-x"], "f_f": [], "cost": "x^2",
    "terminal": [{"state": "y", "value": 0}]})"),
                  ConfigError);
  // fast initials must be all-or-none
  CHECK_THROWS_AS(model::parse_model(R"({"horizon": 1,
    "slow": [{"name": "x", "initial": 0}],
    "fast": [{"name": "y", "initial": 1}, {"name": "z"}],
    "f_s": ["-x"], "f_f": ["x - y", "y - z"], "cost": "x^2"})"),
                  ConfigError);
}

TEST_CASE("a json model without fast initial values leaves z_f0 empty") {
  model::OcpModel m = model::parse_model(R"({"horizon": 1,
    "slow": [{"name": "x", "initial": 2}],
    "fast": [{"name": "y"}],
    "f_s": ["-x + y"], "f_f": ["x - 3*y"], "cost": "x^2"})");
  CHECK(m.n_f == 1);
  CHECK(m.z_f0.size() == 0);
  CHECK(m.epsilon == doctest::Approx(1.0));
  CHECK_FALSE(m.sp_form);
}

TEST_CASE("finalize rejects inconsistent shapes") {
  model::OcpModel m = model::enzyme_model();
  m.z_s0 = Vec::Zero(2);
  CHECK_THROWS_AS(m.finalize(), InputError);
  m = model::enzyme_model();
  m.u_lower = Vec::Zero(3);
  CHECK_THROWS_AS(m.finalize(), InputError);
  m = model::enzyme_model();
  m.terminal_pins = {{7, 0.0}};
  CHECK_THROWS_AS(m.finalize(), InputError);
  m = model::enzyme_model();
  m.horizon = -1.0;
  CHECK_THROWS_AS(m.finalize(), InputError);
}

TEST_CASE("load_model reports unreadable paths") {
  CHECK_THROWS_AS(model::load_model("/nonexistent/path/model.json"), ConfigError);
}

TEST_SUITE_END();
