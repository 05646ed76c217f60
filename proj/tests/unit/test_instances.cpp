#include <gtest/gtest.h>

#include <array>

#include "support.hpp"

using namespace macsim;

TEST(Generate, FfspSingleTimeInRange) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    GenConfig g = test::gen(ProblemKind::ffsp, 1, 1, s);
    g.num_stages = 1;
    const auto x = std::get<FfspInstance>(generate(g));
    ASSERT_EQ(x.proc_time.size(), 1u);
    EXPECT_GE(x.time(0, 0, 0), 2);
    EXPECT_LE(x.time(0, 0, 0), 10);
  }
}

TEST(Generate, HcvrpSingleCustomerBounds) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto x = std::get<HcvrpInstance>(generate(test::gen(ProblemKind::hcvrp, 1, 1, s)));
    EXPECT_GE(x.demand[0], 1);
    EXPECT_LE(x.demand[0], 10);
    EXPECT_GE(x.capacity[0], 20);
    EXPECT_LE(x.capacity[0], 41);
    EXPECT_GE(x.speed[0], 0.5);
    EXPECT_LE(x.speed[0], 1.0);
    for (const auto& p : x.customers) {
      EXPECT_GE(p.x, 0.0);
      EXPECT_LE(p.y, 1.0);
    }
  }
}

TEST(Generate, DeterministicGivenSeed) {
  for (auto k : {ProblemKind::fjsp, ProblemKind::ffsp, ProblemKind::hcvrp}) {
    const auto g = test::gen(k, 6, 3, 42);
    EXPECT_EQ(to_json(generate(g)), to_json(generate(g)));
    auto g2 = g;
    g2.seed = 43;
    EXPECT_NE(to_json(generate(g)), to_json(generate(g2)));
  }
}

TEST(Generate, IndexedStreamsDiffer) {
  const auto g = test::gen(ProblemKind::fjsp, 4, 3, 0);
  EXPECT_EQ(generate(g, 9, 2), generate(g, 9, 2));
  EXPECT_NE(generate(g, 9, 2), generate(g, 9, 3));
}

TEST(Generate, FjspDefaultsFor10x5) {
  const auto g = test::gen(ProblemKind::fjsp, 10, 5, 3);
  EXPECT_EQ(g.ops_per_job().low, 4);
  EXPECT_EQ(g.ops_per_job().high, 6);
  const auto x = std::get<FjspInstance>(generate(g));
  EXPECT_TRUE(check(ProblemInstance(x)).empty());
  for (int j = 0; j < x.num_jobs; ++j) {
    EXPECT_GE(x.num_ops(j), 4);
    EXPECT_LE(x.num_ops(j), 6);
    for (const auto& op : x.jobs[static_cast<std::size_t>(j)])
      for (const auto& o : op.options) {
        EXPECT_GE(o.time, 1);
        EXPECT_LE(o.time, 20);
      }
  }
}

TEST(Generate, FfspTimesUniformChiSquare) {
  GenConfig g = test::gen(ProblemKind::ffsp, 50, 4, 11);
  g.num_stages = 5;  // 5 x 50 x 4 = 1000 times per instance
  std::array<int, 9> counts{};
  int n = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto x = std::get<FfspInstance>(generate(g, 11, i));
    for (const auto& s : x.proc_time)
      for (const auto& j : s)
        for (int t : j) {
          ASSERT_GE(t, 2);
          ASSERT_LE(t, 10);
          ++counts[static_cast<std::size_t>(t - 2)];
          ++n;
        }
  }
  ASSERT_EQ(n, 10000);
  const double expected = n / 9.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 26.12);  // chi-square critical value, 8 dof, alpha = 0.001
}

TEST(Generate, InvalidSizesRejected) {
  EXPECT_THROW(validate(test::gen(ProblemKind::fjsp, 0, 5)), ConfigError);
  EXPECT_THROW(validate(test::gen(ProblemKind::fjsp, 3, 0)), ConfigError);
  EXPECT_THROW(validate(test::gen(ProblemKind::hcvrp, 3, 0)), ConfigError);
  GenConfig g = test::gen(ProblemKind::ffsp, 3, 2);
  g.num_stages = 0;
  EXPECT_THROW(validate(g), ConfigError);
  g = test::gen(ProblemKind::fjsp, 3, 2);
  g.fjsp_proc_time = {5, 4};
  EXPECT_THROW(validate(g), ConfigError);
}

TEST(ParseFjs, MinimalFile) {
  const auto x = parse_fjs("1 1\n1 1 1 5\n");
  EXPECT_EQ(x.num_jobs, 1);
  EXPECT_EQ(x.num_machines, 1);
  ASSERT_EQ(x.total_ops(), 1);
  ASSERT_EQ(x.op(0, 0).options.size(), 1u);
  EXPECT_EQ(x.op(0, 0).options[0].machine, 0);
  EXPECT_EQ(x.op(0, 0).options[0].time, 5);
}

TEST(ParseFjs, ShortPairListIsError) {
  try {
    parse_fjs("1 2\n1 2 1 5\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(ParseFjs, BadMachineAndTime) {
  EXPECT_THROW(parse_fjs("1 2\n1 1 3 5\n"), ParseError);
  EXPECT_THROW(parse_fjs("1 2\n1 1 1 0\n"), ParseError);
  EXPECT_THROW(parse_fjs("2 2\n1 1 1 4\n"), ParseError);
}

TEST(ParseFjs, RoundTripIsExact) {
  const std::string text = "2 3 1.5\n2 2 1 4 3 2 1 2 5\n1 1 3 7\n";
  const auto x = parse_fjs(text);
  EXPECT_EQ(x.total_ops(), 3);
  EXPECT_EQ(write_fjs(x), text);
  EXPECT_EQ(parse_fjs(write_fjs(x)), x);
}

TEST(ParseFjs, GeneratedRoundTrip) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = std::get<FjspInstance>(generate(test::gen(ProblemKind::fjsp, 5, 4, s)));
    EXPECT_EQ(parse_fjs(write_fjs(x)), x);
  }
}

TEST(Json, RoundTripAllProblems) {
  for (auto k : {ProblemKind::fjsp, ProblemKind::ffsp, ProblemKind::hcvrp})
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto x = generate(test::gen(k, 5, 3, s));
      EXPECT_EQ(from_json(to_json(x)), x);
    }
}

TEST(Json, SchemaVersionFirst) {
  const auto j = to_json_value(generate(test::gen(ProblemKind::ffsp, 2, 2)));
  EXPECT_EQ(j.begin().key(), "schema_version");
}

TEST(Json, MissingFieldNamed) {
  auto j = to_json_value(generate(test::gen(ProblemKind::ffsp, 2, 2)));
  j.erase("proc_time");
  try {
    from_json(j.dump());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("proc_time"), std::string::npos);
  }
}

TEST(Json, VersionMismatch) {
  auto j = to_json_value(generate(test::gen(ProblemKind::hcvrp, 2, 2)));
  j["schema_version"] = 2;
  try {
    from_json(j.dump());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("schema_version"), std::string::npos);
  }
}

TEST(Check, InstanceInvariants) {
  auto x = test::fjsp(2, {{{{0, 3}}}});
  EXPECT_TRUE(check(ProblemInstance(x)).empty());
  x.jobs[0][0].options[0].machine = 5;
  EXPECT_FALSE(check(ProblemInstance(x)).empty());
  auto h = test::hcvrp({0.5, 0.5}, {{0.1, 0.1}}, {30}, {20}, {1.0});
  EXPECT_FALSE(check(ProblemInstance(h)).empty());
}
