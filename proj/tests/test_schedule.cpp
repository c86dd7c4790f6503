#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nerkd/schedule.hpp"

using namespace nerkd;

namespace {

constexpr int T = 20;

double ulps_apart(double a, double b) {
  return std::abs(a - b) / (std::nextafter(std::abs(b), INFINITY) - std::abs(b));
}

}  // namespace

TEST(Schedule, FamilyShape) {
  auto fam = curve_family(T);
  ASSERT_EQ(fam.size(), 14u);
  EXPECT_EQ(strategy_label(fam[0]), "simple_mix");
  EXPECT_EQ(strategy_label(fam[5]), "sigmoid(k=32)");
  EXPECT_EQ(strategy_label(fam[6]), "cosine");
  EXPECT_EQ(strategy_label(fam[9]), "power(n=0.5)");
  EXPECT_EQ(strategy_label(fam[13]), "power(n=10)");
}

TEST(Schedule, CommonProperties) {
  for (const auto& s : curve_family(T)) {
    SCOPED_TRACE(strategy_label(s));
    double prev = 2.0;
    for (int t = 0; t < T; ++t) {
      const double a = w0(s, t), b = w1(s, t);
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
      EXPECT_EQ(a + b, 1.0);
      EXPECT_LE(a, prev);  // distilled share never grows
      prev = a;
    }
    if (s.kind != BlendKind::sigmoid) {
      EXPECT_EQ(w0(s, 0), 1.0);
      EXPECT_EQ(w0(s, T - 1), 0.0);
    }
  }
}

TEST(Schedule, SymmetricCurves) {
  for (const auto& s : curve_family(T)) {
    if (s.kind != BlendKind::sigmoid && s.kind != BlendKind::cosine) continue;
    for (int t = 0; t < T; ++t)
      EXPECT_NEAR(w0(s, t) + w0(s, T - 1 - t), 1.0, 1e-15) << strategy_label(s) << " t=" << t;
  }
}

TEST(Schedule, SigmoidSteepnessOrdering) {
  // steeper curves start closer to 1 and end closer to 0
  double prev_start = 0.5;
  for (double k : {2.0, 4.0, 8.0, 16.0, 32.0}) {
    ScheduleSpec s{BlendKind::sigmoid, k, 0, T};
    EXPECT_GT(w0(s, 0), prev_start);
    prev_start = w0(s, 0);
  }
}

TEST(Schedule, ReferenceValues) {
  // 1 / (1 + e^-16), 40-digit reference
  EXPECT_LE(ulps_apart(w0({BlendKind::sigmoid, 32, 0, T}, 0), 0.999999887464837944905009416478),
            1.0);
  EXPECT_LE(ulps_apart(w0({BlendKind::sigmoid, 2, 0, T}, 1), 0.709866722391369179782007492799),
            2.0);
  EXPECT_LE(ulps_apart(w0({BlendKind::power, 0, 0.5, T}, 5), 0.487010823957422952271662463163),
            2.0);
  EXPECT_LE(ulps_apart(w0({BlendKind::cosine, 0, 0, T}, 3), 0.939736875603244535695427377441),
            2.0);
  for (int t = 0; t < T; ++t)
    EXPECT_NEAR(w0({BlendKind::power, 0, 1, T}, t), 1.0 - t / 19.0, 1e-15);
}

TEST(Schedule, SimpleMixSwitchesAtHalfway) {
  ScheduleSpec s{BlendKind::simple_mix, 0, 0, T};
  EXPECT_EQ(w0(s, 9), 1.0);
  EXPECT_EQ(w0(s, 10), 0.0);
  ScheduleSpec odd{BlendKind::simple_mix, 0, 0, 21};
  EXPECT_EQ(w0(odd, 10), 1.0);
  EXPECT_EQ(w0(odd, 11), 0.0);
}

TEST(Schedule, OddLengthMidpoint) {
  EXPECT_EQ(w0({BlendKind::sigmoid, 8, 0, 21}, 10), 0.5);
  EXPECT_EQ(w0({BlendKind::cosine, 0, 0, 21}, 10), 0.5);
  EXPECT_EQ(w0({BlendKind::cosine, 0, 0, 21}, 20), 0.0);
}

TEST(Schedule, FixedStrategies) {
  for (int t = 0; t < T; ++t) {
    EXPECT_EQ(w0({BlendKind::pure_distilled, 0, 0, T}, t), 1.0);
    EXPECT_EQ(w1({BlendKind::pure_distilled, 0, 0, T}, t), 0.0);
    EXPECT_EQ(w0({BlendKind::pure_original, 0, 0, T}, t), 0.0);
    EXPECT_EQ(w0({BlendKind::all_blend, 0, 0, T}, t), 1.0);
    EXPECT_EQ(w1({BlendKind::all_blend, 0, 0, T}, t), 1.0);
  }
  // a single epoch is fine when no ratio is involved
  EXPECT_EQ(w0({BlendKind::simple_mix, 0, 0, 1}, 0), 1.0);
}

TEST(Schedule, Errors) {
  EXPECT_THROW(w0({BlendKind::simple_mix, 0, 0, 0}, 0), InvalidArgument);
  EXPECT_THROW(w0({BlendKind::sigmoid, 0, 0, T}, 0), InvalidArgument);
  EXPECT_THROW(w0({BlendKind::power, 0, -1, T}, 0), InvalidArgument);
  EXPECT_THROW(w0({BlendKind::cosine, 0, 0, 1}, 0), InvalidArgument);
  EXPECT_THROW(w0({BlendKind::cosine, 0, 0, T}, T), InvalidArgument);
  EXPECT_THROW(w1({BlendKind::all_blend, 0, 0, T}, -1), InvalidArgument);
  EXPECT_THROW(blend_kind_from_string("linear"), InvalidArgument);
  EXPECT_EQ(blend_kind_from_string("ALL"), BlendKind::all_blend);
  EXPECT_EQ(blend_kind_from_string("sigmoid"), BlendKind::sigmoid);
}

TEST(LearningRate, DecayAndConstant) {
  LrSpec decay{1e-5, 0.95};
  EXPECT_LE(ulps_apart(lr_at_epoch(decay, 0), 1e-5), 1.0);
  EXPECT_LE(ulps_apart(lr_at_epoch(decay, 1), 9.5e-6), 1.0);
  EXPECT_LE(ulps_apart(lr_at_epoch(decay, 2), 9.025e-6), 1.0);
  for (int t = 0; t < T; ++t) EXPECT_EQ(lr_at_epoch({1e-5, 1.0}, t), 1e-5);
  EXPECT_THROW(lr_at_epoch({0, 1.0}, 0), InvalidArgument);
  EXPECT_THROW(lr_at_epoch({1e-5, 1.5}, 0), InvalidArgument);
  EXPECT_THROW(lr_at_epoch(decay, -1), InvalidArgument);
}

TEST(CurvesCsv, RoundTripExact) {
  std::stringstream buf;
  write_curves_csv(buf, curve_family(T));
  const auto text = buf.str();
  EXPECT_EQ(text.rfind("strategy,params,t,w0\n", 0), 0u);
  auto back = read_curves_csv(buf);
  auto expected = curve_points(curve_family(T));
  ASSERT_EQ(back.size(), 14u * T);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].strategy, expected[i].strategy);
    EXPECT_EQ(back[i].params, expected[i].params);
    EXPECT_EQ(back[i].t, expected[i].t);
    EXPECT_EQ(back[i].w0, expected[i].w0);  // bit-exact
  }
  EXPECT_EQ(back[0].params, "");
  EXPECT_EQ(back[20].params, "k=2");

  std::stringstream bad("t,w0\n");
  EXPECT_THROW(read_curves_csv(bad), ParseError);
  std::stringstream short_row("strategy,params,t,w0\nsigmoid,k=2,0\n");
  EXPECT_THROW(read_curves_csv(short_row), ParseError);
}

TEST(CurvesSvg, OnePolylinePerSchedule) {
  std::stringstream buf;
  write_curves_svg(buf, curve_family(T));
  const auto svg = buf.str();
  std::size_t n = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1))
    ++n;
  EXPECT_EQ(n, 14u);
  EXPECT_NE(svg.find("sigmoid(k=16)"), std::string::npos);
}
