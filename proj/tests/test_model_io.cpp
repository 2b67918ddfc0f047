#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "safeswitch/model_io.hpp"

namespace safeswitch {
namespace {

const char* kScalarModel = R"(lqg-model v1
# scalar plant
matrix A 1 1
0.5
matrix B 1 1
1
matrix C 1 1
1

matrix W 1 1
1
matrix V 1 1
2
matrix Q 1 1
1
matrix R 1 1
1
)";

ModelFile parse(const std::string& text) {
  std::istringstream is(text);
  return read_model(is);
}

std::string expect_parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error raised";
  return {};
}

TEST(ModelIo, ParsesMinimalModel) {
  const ModelFile mf = parse(kScalarModel);
  EXPECT_DOUBLE_EQ(mf.sys.A(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(mf.sys.V(0, 0), 2.0);
  EXPECT_FALSE(mf.primary.has_value());
  EXPECT_FALSE(mf.fallback.has_value());
}

TEST(ModelIo, RoundTripIsBitExact) {
  const SystemModel sys = random_stable_system(5, 3, 2, 2, 0.9);
  ModelFile mf{sys, synth_optimal_controller(sys), zero_controller(sys)};
  mf.primary->Kc(0, 0) = 0.1 + 0.2;  // not representable in short decimal
  std::ostringstream os;
  write_model(os, mf);
  const ModelFile back = parse(os.str());
  EXPECT_EQ(back.sys.A, sys.A);
  EXPECT_EQ(back.sys.C, sys.C);
  EXPECT_EQ(back.sys.R, sys.R);
  ASSERT_TRUE(back.primary && back.fallback);
  EXPECT_EQ(back.primary->Ac, mf.primary->Ac);
  EXPECT_EQ(back.primary->Lc, mf.primary->Lc);
  EXPECT_EQ(back.primary->Kc, mf.primary->Kc);
  EXPECT_EQ(back.fallback->Kc, mf.fallback->Kc);
  EXPECT_EQ(back.fallback->role, ControllerRole::kFallback);
  std::ostringstream again;
  write_model(again, back);
  EXPECT_EQ(again.str(), os.str());
}

TEST(ModelIo, MissingFieldIsNamed) {
  std::string text = kScalarModel;
  text.replace(text.find("matrix V 1 1\n2\n"), 15, "");
  EXPECT_NE(expect_parse_error(text).find("missing field \"V\""),
            std::string::npos);
}

TEST(ModelIo, DimensionMismatch) {
  std::string text = kScalarModel;
  text.replace(text.find("matrix B 1 1\n1\n"), 15, "matrix B 2 1\n1\n1\n");
  EXPECT_THROW(parse(text), DimensionError);
}

TEST(ModelIo, RejectsMalformedInput) {
  EXPECT_NE(expect_parse_error("lqg-model v2\n").find("header"),
            std::string::npos);
  std::string unknown = kScalarModel;
  unknown += "matrix Z 1 1\n1\n";
  EXPECT_NE(expect_parse_error(unknown).find("unknown matrix name 'Z'"),
            std::string::npos);
  std::string dup = kScalarModel;
  dup += "matrix A 1 1\n1\n";
  EXPECT_NE(expect_parse_error(dup).find("duplicate"), std::string::npos);
  std::string bad = kScalarModel;
  bad.replace(bad.find("0.5"), 3, "0.5x");
  EXPECT_NE(expect_parse_error(bad).find("line 4"), std::string::npos);
  std::string shortrow = kScalarModel;
  shortrow += "matrix K1 1 2\n1\n";
  EXPECT_THROW(parse(shortrow), ParseError);
}

TEST(ModelIo, PartialControllerNamesMissingMember) {
  std::string text = kScalarModel;
  text += "matrix A1 1 1\n0\nmatrix B1 1 1\n0\nmatrix K1 1 1\n0\n";
  EXPECT_NE(expect_parse_error(text).find("\"L1\""), std::string::npos);
}

TEST(ModelIo, LoadMissingFile) {
  EXPECT_THROW(load_model("/nonexistent/model.txt"), Error);
}

}  // namespace
}  // namespace safeswitch
