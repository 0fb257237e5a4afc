#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "frarl/mtl.hpp"
#include "frarl/sim.hpp"

using namespace frarl;

namespace {

mtl::Trace make_trace(double dt, const std::vector<double>& gaps,
                      const std::vector<double>& v_egos = {}) {
  mtl::Trace tr;
  tr.dt = dt;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    mtl::TraceRecord r;
    r.gap = gaps[i];
    r.v_ego = v_egos.empty() ? 0.0 : v_egos[i];
    tr.records.push_back(r);
  }
  return tr;
}

mtl::PredicateRegistry abc_registry() {
  mtl::PredicateRegistry reg;
  reg.add({"a", [](const mtl::TraceRecord& r) { return r.gap; }});
  reg.add({"b", [](const mtl::TraceRecord& r) { return r.v_ego; }});
  reg.add({"c", [](const mtl::TraceRecord& r) { return -r.v_lead; }});
  return reg;
}

mtl::Trace random_trace(std::mt19937_64& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len_dist(1, max_len);
  std::uniform_real_distribution<double> val(-5.0, 5.0);
  mtl::Trace tr;
  tr.dt = 0.25;
  std::size_t n = len_dist(rng);
  for (std::size_t i = 0; i < n; ++i) {
    mtl::TraceRecord r;
    r.gap = val(rng);
    r.v_ego = val(rng);
    r.v_lead = val(rng);
    tr.records.push_back(r);
  }
  return tr;
}

mtl::FormulaPtr random_formula(std::mt19937_64& rng, const mtl::PredicateRegistry& reg,
                               int depth) {
  // length >= dt keeps the quantized step range non-empty
  std::uniform_real_distribution<double> lo_dist(0.0, 1.0);
  std::uniform_real_distribution<double> len_dist(0.25, 2.0);
  auto interval = [&] {
    mtl::Interval iv;
    iv.lo = lo_dist(rng);
    iv.hi = iv.lo + len_dist(rng);
    return iv;
  };
  auto atom = [&] {
    const char* names[] = {"a", "b", "c"};
    return mtl::make_atom(*reg.find(names[rng() % 3]));
  };
  if (depth <= 0) return rng() % 8 == 0 ? mtl::make_true() : atom();
  switch (rng() % 8) {
    case 0:
      return atom();
    case 1:
      return mtl::make_not(random_formula(rng, reg, depth - 1));
    case 2:
      return mtl::make_or(random_formula(rng, reg, depth - 1),
                          random_formula(rng, reg, depth - 1));
    case 3:
      return mtl::make_and(random_formula(rng, reg, depth - 1),
                           random_formula(rng, reg, depth - 1));
    case 4:
      return mtl::make_until(interval(), random_formula(rng, reg, depth - 1),
                             random_formula(rng, reg, depth - 1));
    case 5:
      return mtl::make_globally(random_formula(rng, reg, depth - 1));
    case 6:
      return mtl::make_globally(interval(), random_formula(rng, reg, depth - 1));
    default:
      return mtl::make_eventually(interval(), random_formula(rng, reg, depth - 1));
  }
}

}  // namespace

TEST_CASE("parser produces the documented structures") {
  auto reg = abc_registry();
  auto f = mtl::parse_formula("a U[0,2] b", reg);
  REQUIRE(f->kind == mtl::NodeKind::Until);
  CHECK(f->interval.lo == 0.0);
  CHECK(f->interval.hi == 2.0);
  CHECK(f->left->kind == mtl::NodeKind::Atom);
  CHECK(f->left->atom.id == "a");
  CHECK(f->right->atom.id == "b");

  auto g = mtl::parse_formula("G (!a & !b)", reg);
  REQUIRE(g->kind == mtl::NodeKind::Globally);
  REQUIRE(g->left->kind == mtl::NodeKind::And);
  CHECK(g->left->left->kind == mtl::NodeKind::Not);

  auto t = mtl::parse_formula("true", reg);
  CHECK(t->kind == mtl::NodeKind::True);

  auto inf = mtl::parse_formula("G[0,inf] a", reg);
  REQUIRE(inf->kind == mtl::NodeKind::GloballyI);
  CHECK(inf->interval.unbounded);
}

TEST_CASE("parser accepts the shipped safety specification") {
  sim::SimConfig cfg;
  auto reg = sim::driving_predicates(cfg);
  auto f = mtl::parse_formula("G (!collision & !reverse)", reg);
  REQUIRE(f->kind == mtl::NodeKind::Globally);
  auto shipped = sim::safety_specification(cfg);
  CHECK(mtl::structurally_equal(*f, *shipped));
}

TEST_CASE("parse -> print -> parse is the identity") {
  auto reg = abc_registry();
  const char* inputs[] = {
      "true",
      "a",
      "!a",
      "a & b | c",
      "a U[0,2] b",
      "G (!a & !b)",
      "F[0,1.5] (a | !b)",
      "G[0.5,inf] (a U[0,3] (b & c))",
      "!(a | b) & c",
  };
  for (const char* in : inputs) {
    CAPTURE(in);
    auto f1 = mtl::parse_formula(in, reg);
    auto printed = mtl::to_string(*f1);
    auto f2 = mtl::parse_formula(printed, reg);
    CHECK(mtl::structurally_equal(*f1, *f2));
    CHECK(mtl::to_string(*f2) == printed);
  }
}

TEST_CASE("parser reports unknown atoms and syntax errors with positions") {
  auto reg = abc_registry();
  CHECK_THROWS_AS(mtl::parse_formula("a & unknown", reg), mtl::UnknownAtomError);
  try {
    mtl::parse_formula("a & unknown", reg);
  } catch (const mtl::UnknownAtomError& e) {
    CHECK(e.atom_name == "unknown");
    CHECK(e.position == 4);
  }
  CHECK_THROWS_AS(mtl::parse_formula("a &", reg), mtl::ParseError);
  CHECK_THROWS_AS(mtl::parse_formula("(a | b", reg), mtl::ParseError);
  CHECK_THROWS_AS(mtl::parse_formula("F a", reg), mtl::ParseError);
  CHECK_THROWS_AS(mtl::parse_formula("a U b", reg), mtl::ParseError);
  CHECK_THROWS_AS(mtl::parse_formula("G[2,1] a", reg), mtl::ParseError);
  CHECK_THROWS_AS(mtl::parse_formula("", reg), mtl::ParseError);
}

TEST_CASE("true has saturated robustness and negation is exact") {
  auto tr = make_trace(1.0, {1.0, 2.0});
  auto t = mtl::make_true();
  CHECK(mtl::robustness(*t, tr, 0) == mtl::kTop);
  CHECK(mtl::robustness(*mtl::make_not(t), tr, 0) == -mtl::kTop);
}

TEST_CASE("globally over a 5-step gap signal") {
  // collision := (s <= 0), so its distance is -s; the negation recovers s
  // and G takes the minimum, here 3.
  mtl::Predicate collision{"collision", [](const mtl::TraceRecord& r) { return -r.gap; }};
  auto tr = make_trace(1.0, {10.0, 6.0, 3.0, 7.0, 9.0});
  auto f = mtl::make_globally(mtl::make_not(mtl::make_atom(collision)));
  CHECK(mtl::robustness(*f, tr, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(mtl::boolean_sat(*f, tr, 0));
}

TEST_CASE("until follows the sup-min-inf recursion") {
  auto reg = abc_registry();
  auto tr = make_trace(1.0, {1.0, 4.0, 2.0, 3.0}, {5.0, -1.0, 6.0, 2.0});
  auto f = mtl::parse_formula("a U[1,2] b", reg);
  // t'=1: min(b(1), a(0)) = -1; t'=2: min(b(2), min(a(0), a(1))) = 1.
  CHECK(mtl::robustness(*f, tr, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mtl::boolean_sat(*f, tr, 0));
}

TEST_CASE("interval endpoints quantize inward onto the step grid") {
  auto reg = abc_registry();
  auto tr = make_trace(0.5, {9.0, 8.0, 7.0, 6.0, 5.0, 4.0});
  // [1,2] s at 0.5 s/step covers steps 2..4.
  auto g = mtl::parse_formula("G[1,2] a", reg);
  CHECK(mtl::robustness(*g, tr, 0) == doctest::Approx(5.0).epsilon(1e-12));
  // [0.9,2.1] s rounds inward to the same steps 2..4.
  auto g2 = mtl::parse_formula("G[0.9,2.1] a", reg);
  CHECK(mtl::robustness(*g2, tr, 0) == doctest::Approx(5.0).epsilon(1e-12));
  // [0.2,0.7] s covers exactly step 1.
  auto f = mtl::parse_formula("F[0.2,0.7] a", reg);
  CHECK(mtl::robustness(*f, tr, 0) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("intervals beyond the horizon raise, partial coverage clips") {
  auto reg = abc_registry();
  auto tr = make_trace(1.0, {5.0, 4.0, 3.0, 2.0, 1.0});
  auto far = mtl::parse_formula("G[10,20] a", reg);
  CHECK_THROWS_AS(mtl::robustness(*far, tr, 0), mtl::InsufficientHorizonError);
  CHECK_THROWS_AS(mtl::boolean_sat(*far, tr, 0), mtl::InsufficientHorizonError);
  auto partial = mtl::parse_formula("G[2,100] a", reg);
  CHECK(mtl::robustness(*partial, tr, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("or is max, and is min on random operands") {
  auto reg = abc_registry();
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    auto tr = random_trace(rng, 20);
    auto f = random_formula(rng, reg, 2);
    auto g = random_formula(rng, reg, 2);
    try {
      double rf = mtl::robustness(*f, tr, 0);
      double rg = mtl::robustness(*g, tr, 0);
      CHECK(mtl::robustness(*mtl::make_or(f, g), tr, 0) == std::max(rf, rg));
      CHECK(mtl::robustness(*mtl::make_and(f, g), tr, 0) == std::min(rf, rg));
      CHECK(mtl::robustness(*mtl::make_not(f), tr, 0) == -rf);
    } catch (const mtl::InsufficientHorizonError&) {
      // trace too short for the sampled nesting; try another pair
    }
  }
}

TEST_CASE("derived connectives match their primitive forms") {
  auto reg = abc_registry();
  std::mt19937_64 rng(11);
  mtl::Interval all{0.0, 0.0, true};
  for (int i = 0; i < 200; ++i) {
    auto tr = random_trace(rng, 20);
    auto f = random_formula(rng, reg, 2);
    auto g = random_formula(rng, reg, 2);
    try {
      // And via De Morgan.
      double direct = mtl::robustness(*mtl::make_and(f, g), tr, 0);
      double derived = mtl::robustness(
          *mtl::make_not(mtl::make_or(mtl::make_not(f), mtl::make_not(g))), tr, 0);
      CHECK(direct == derived);
      // Unbounded G as the dual of F over [0, inf).
      double g_direct = mtl::robustness(*mtl::make_globally(f), tr, 0);
      double g_derived = mtl::robustness(
          *mtl::make_not(mtl::make_eventually(all, mtl::make_not(f))), tr, 0);
      CHECK(g_direct == g_derived);
    } catch (const mtl::InsufficientHorizonError&) {
    }
  }
}

TEST_CASE("globally equals the brute-force minimum for interval-free operands") {
  auto reg = abc_registry();
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    auto tr = random_trace(rng, 20);
    auto f = random_formula(rng, reg, 1);
    if (f->kind == mtl::NodeKind::Until || f->kind == mtl::NodeKind::GloballyI ||
        f->kind == mtl::NodeKind::EventuallyI) {
      continue;
    }
    try {
      double expected = mtl::kTop;
      for (std::size_t t = 0; t < tr.size(); ++t) {
        expected = std::min(expected, mtl::robustness(*f, tr, t));
      }
      CHECK(mtl::robustness(*mtl::make_globally(f), tr, 0) == expected);
    } catch (const mtl::InsufficientHorizonError&) {
    }
  }
}

TEST_CASE("robustness sign matches boolean satisfaction") {
  auto reg = abc_registry();
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    auto tr = random_trace(rng, 30);
    auto f = random_formula(rng, reg, 3);
    try {
      double r = mtl::robustness(*f, tr, 0);
      if (r == 0.0) continue;
      CHECK((r > 0.0) == mtl::boolean_sat(*f, tr, 0));
      ++checked;
    } catch (const mtl::InsufficientHorizonError&) {
    }
  }
  CHECK(checked > 600);
}

TEST_CASE("scaling a predicate distance scales atoms and preserves signs") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> scale_dist(0.1, 10.0);
  for (int i = 0; i < 100; ++i) {
    double c = scale_dist(rng);
    mtl::PredicateRegistry base;
    base.add({"a", [](const mtl::TraceRecord& r) { return r.gap; }});
    base.add({"b", [](const mtl::TraceRecord& r) { return r.v_ego; }});
    base.add({"c", [](const mtl::TraceRecord& r) { return -r.v_lead; }});
    mtl::PredicateRegistry scaled;
    scaled.add({"a", [c](const mtl::TraceRecord& r) { return c * r.gap; }});
    scaled.add({"b", [c](const mtl::TraceRecord& r) { return c * r.v_ego; }});
    scaled.add({"c", [c](const mtl::TraceRecord& r) { return c * -r.v_lead; }});
    auto tr = random_trace(rng, 15);
    std::mt19937_64 rng_a = rng, rng_b = rng_a;
    auto f = random_formula(rng_a, base, 3);
    auto fs = random_formula(rng_b, scaled, 3);
    rng = rng_a;
    try {
      double r = mtl::robustness(*f, tr, 0);
      double rs = mtl::robustness(*fs, tr, 0);
      if (f->kind == mtl::NodeKind::Atom) {
        CHECK(rs == doctest::Approx(c * r).epsilon(1e-12));
      }
      if (r != 0.0 && std::abs(r) < mtl::kTop) {
        CHECK((r > 0.0) == (rs > 0.0));
      }
    } catch (const mtl::InsufficientHorizonError&) {
    }
  }
}

TEST_CASE("evaluation at later start steps shifts the window") {
  auto reg = abc_registry();
  auto tr = make_trace(1.0, {10.0, 6.0, 3.0, 7.0, 9.0});
  auto f = mtl::parse_formula("G a", reg);
  CHECK(mtl::robustness(*f, tr, 3) == doctest::Approx(7.0).epsilon(1e-12));
  auto g = mtl::parse_formula("F[0,1] a", reg);
  CHECK(mtl::robustness(*g, tr, 2) == doctest::Approx(7.0).epsilon(1e-12));
}
