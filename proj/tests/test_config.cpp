#include <doctest.h>

#include "fracsim/config.hpp"

using namespace fracsim;

namespace {

const char* kValid = R"({
  "physics": {"E_pa": 4e9, "nu": 0.2, "b": 0.8, "M_pa": 1e10, "eta_pa_s": 1e-3,
    "K_m_m2": [[1e-15, 0], [0, 0.5e-15]], "Lambda_f": 1.6666666666666666e-2,
    "delta0_m": 1e-4, "a_per_m": 25, "phi0": 0.4, "p0_m_pa": 1e5, "p0_f_pa": 1e5},
  "time": {"T_s": 2000, "steps": 20},
  "bc": {
    "left":   {"flow": {"type": "dirichlet", "p_pa": 1e5}, "mech": {"type": "free"}},
    "right":  {"flow": {"type": "no_flux"}, "mech": {"type": "free"}},
    "top":    {"flow": {"type": "no_flux"},
               "mech": {"type": "ramp", "u_m": [0.005, -0.0005], "ramp_end_s": 500}},
    "bottom": {"flow": {"type": "no_flux"}, "mech": {"type": "clamped"}}
  },
  "output": {"field_times_s": [500, 2000]}
})";

}  // namespace

TEST_CASE("valid config parses with expected values") {
  SimConfig cfg = parse_config(kValid);
  CHECK(cfg.E == 4e9);
  CHECK(cfg.nu == 0.2);
  CHECK(cfg.Km(0, 0) == 1e-15);
  CHECK(cfg.Km(1, 1) == 0.5e-15);
  CHECK(cfg.Lambda_f == doctest::Approx(1e-4 / 6e-3));
  CHECK(cfg.steps == 20);
  CHECK(cfg.flow_bc.at("left").type == FlowBC::Type::Dirichlet);
  CHECK(cfg.mech_bc.at("top").type == MechBC::Type::Ramp);
  CHECK(cfg.mech_bc.at("top").ramp_end_s == 500.0);
  CHECK(cfg.field_times.size() == 2);
  CHECK(cfg.inv_M() == doctest::Approx(1e-10));
}

TEST_CASE("assumption violations are reported by field") {
  auto patched = [&](const std::string& from, const std::string& to) {
    std::string s = kValid;
    auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(parse_config(patched("\"nu\": 0.2", "\"nu\": 0.5")), ConfigError);
  CHECK_THROWS_AS(parse_config(patched("\"b\": 0.8", "\"b\": 1.5")), ConfigError);
  CHECK_THROWS_AS(parse_config(patched("\"E_pa\": 4e9", "\"E_pa\": -1")), ConfigError);
  CHECK_THROWS_AS(parse_config(patched("[[1e-15, 0], [0, 0.5e-15]]", "[[1e-15, 0], [0, -1e-15]]")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(patched("\"T_s\": 2000", "\"T_s\": 0")), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/path.json"), ConfigError);
}

TEST_CASE("incompressible rock via M = inf") {
  std::string s = kValid;
  auto pos = s.find("\"M_pa\": 1e10");
  s.replace(pos, std::string("\"M_pa\": 1e10").size(), "\"M_pa\": \"inf\"");
  SimConfig cfg = parse_config(s);
  CHECK(std::isinf(cfg.M));
  CHECK(cfg.inv_M() == 0.0);
}
