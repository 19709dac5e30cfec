#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace evacmix;
using testutil::data_path;

namespace {

bool has_error(const SpecParseResult& r, const std::string& needle) {
  for (const auto& e : r.errors)
    if (e.message.find(needle) != std::string::npos) return true;
  return false;
}

const char* kSmall =
    "space preference\n"
    "param b random normal init=0.5 init_sd=1\n"
    "param c fixed init=-1\n"
    "term b on x alts=1,2\n"
    "term c on ASC alts=1\n";

}  // namespace

TEST(ParseModelSpec, BundledWtpModel) {
  const ModelSpec m = load_model_spec(data_path("evac.spec"));
  EXPECT_EQ(m.space, Space::wtp);
  EXPECT_EQ(m.price_attribute, "cost");
  EXPECT_EQ(m.n_estimated(), 24u);
  EXPECT_EQ(m.parameters.size(), 21u);
  EXPECT_EQ(m.n_interactions(), 5u);
  EXPECT_EQ(m.reference_alternative, "4");
  std::size_t random = 0;
  for (const auto& p : m.parameters) random += p.is_random();
  EXPECT_EQ(random, 3u);
  EXPECT_EQ(m.parameters[*m.price_parameter()].name, "cost");
  EXPECT_EQ(m.parameters[1].distribution, Distribution::negated_lognormal);
  const auto names = m.estimated_names();
  EXPECT_EQ(names.front(), "asc_evacuate");
  EXPECT_EQ(names[1], "cost.mean");
  EXPECT_EQ(names[6], "peers_staying.sd");
  EXPECT_EQ(names.back(), "threat_major_risk");
}

TEST(ParseModelSpec, BundledPreferenceModel) {
  const ModelSpec m = load_model_spec(data_path("evac_pref.spec"));
  EXPECT_EQ(m.space, Space::preference);
  EXPECT_EQ(m.n_estimated(), 24u);
  EXPECT_EQ(m.estimated_names(), load_model_spec(data_path("evac.spec")).estimated_names());
}

TEST(ParseModelSpec, EmptyDocument) {
  const auto r = parse_model_spec("");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_error(r, "no parameters declared"));
  EXPECT_TRUE(has_error(parse_model_spec("# only a comment\n\n"), "no parameters declared"));
}

TEST(ParseModelSpec, WtpWithoutPrice) {
  const auto r = parse_model_spec("space wtp\nparam c fixed init=1\nterm c on cost alts=1\n");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_error(r, "wtp space requires a 'price <attribute>' line"));
  EXPECT_EQ(r.errors.front().line, 1u);
}

TEST(ParseModelSpec, UnknownDistributionIsPositioned) {
  const auto r = parse_model_spec("param b random lognormal init=0 init_sd=1\nterm b on x alts=1\n");
  ASSERT_FALSE(r.ok());
  EXPECT_TRUE(has_error(r, "unknown distribution 'lognormal'"));
  EXPECT_EQ(r.errors.front().line, 1u);
  EXPECT_EQ(r.errors.front().column, 16u);
}

TEST(ParseModelSpec, DuplicateParameter) {
  const auto r = parse_model_spec("param b fixed init=0\nparam b fixed init=1\nterm b on x alts=1\n");
  EXPECT_TRUE(has_error(r, "duplicate parameter name 'b'"));
  EXPECT_EQ(r.errors.front().line, 2u);
}

TEST(ParseModelSpec, StructuralErrors) {
  EXPECT_TRUE(has_error(parse_model_spec("param b fixed init=0\n"), "not used by any term"));
  EXPECT_TRUE(has_error(parse_model_spec("param b fixed init=0\nterm b on x alts=1\nterm q on x alts=1\n"),
                        "undeclared parameter 'q'"));
  EXPECT_TRUE(has_error(parse_model_spec("param b fixed init=0\nterm b on x alts=1 times x\n"), "must differ"));
  EXPECT_TRUE(has_error(parse_model_spec("frobnicate\nparam b fixed init=0\nterm b on x alts=1\n"),
                        "unknown directive"));
  EXPECT_TRUE(has_error(parse_model_spec("param b fixed init=abc\nterm b on x alts=1\n"), "expected key=<number>"));
  EXPECT_TRUE(has_error(parse_model_spec("space wtp\nprice cost\nparam p fixed init=-1\nparam z fixed\n"
                                         "term p on cost alts=1\nterm z on ASC alts=1\nterm z on x alts=1\n"),
                        "mixes ASC and attribute"));
  EXPECT_TRUE(has_error(parse_model_spec("space wtp\nprice cost\nparam p fixed init=-1\n"
                                         "term p on cost alts=1\nterm p on x alts=1\n"),
                        "may only multiply the price"));
}

TEST(ParseModelSpec, AcceptsBothLognormalSpellings) {
  for (const char* d : {"neglognormal", "negated_lognormal"}) {
    const auto r = parse_model_spec(std::string("param c random ") + d + " init=-3\nterm c on x alts=1\n");
    ASSERT_TRUE(r.ok()) << d;
    EXPECT_EQ(r.spec->parameters[0].distribution, Distribution::negated_lognormal);
    EXPECT_EQ(r.spec->parameters[0].init_sd, 0.5);  // default starting spread
  }
}

TEST(ParseModelSpec, PrintParseIdempotent) {
  for (const auto& file : {"evac.spec", "evac_pref.spec"}) {
    const ModelSpec m = load_model_spec(data_path(file));
    const std::string once = print_model_spec(m);
    const ModelSpec again = parse_model_spec_or_throw(once);
    EXPECT_EQ(again, m) << file;
    EXPECT_EQ(print_model_spec(again), once);
  }
  const ModelSpec s = testutil::spec_of(kSmall);
  EXPECT_EQ(parse_model_spec_or_throw(print_model_spec(s)), s);
}

TEST(ParseModelSpec, TotalOnGarbage) {
  std::mt19937 g(11);
  const std::string alphabet = "paramtermonalts=,.#\n \t01fixedrandomnormalwtpspace-ASCtimes\xff";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int len = static_cast<int>(g() % 200);
    for (int k = 0; k < len; ++k) s.push_back(alphabet[g() % alphabet.size()]);
    const auto r = parse_model_spec(s);
    EXPECT_EQ(r.ok(), r.errors.empty());
  }
}

TEST(ValidateSpec, BundledSpecMatchesBundledData) {
  const auto d = testutil::synthetic_subset(5);
  EXPECT_TRUE(validate_spec(load_model_spec(data_path("evac.spec")), d).empty());
  EXPECT_TRUE(validate_spec(load_model_spec(data_path("evac_pref.spec")), d).empty());
}

TEST(ValidateSpec, TypoAndUnknownAlternative) {
  const auto d = testutil::synthetic_subset(5);
  auto m = load_model_spec(data_path("evac.spec"));
  m.terms[4].attribute = "costt";
  auto v = validate_spec(m, d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "unknown-attribute");
  EXPECT_NE(v[0].detail.find("costt"), std::string::npos);

  m = load_model_spec(data_path("evac.spec"));
  m.terms[0].applies_to.push_back("5");
  v = validate_spec(m, d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "unknown-alternative");
  EXPECT_NE(v[0].detail.find("'5'"), std::string::npos);
}

TEST(ModelSpecLayout, OffsetsAndInitialValues) {
  const ModelSpec m = testutil::spec_of(kSmall);
  EXPECT_EQ(m.offsets(), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(m.initial_values(), (std::vector<double>{0.5, 1.0, -1.0}));
  EXPECT_EQ(m.estimated_names(), (std::vector<std::string>{"b.mean", "b.sd", "c"}));
}
