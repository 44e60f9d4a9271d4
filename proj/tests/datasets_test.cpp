#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <fstream>

#include "shiftgcl/datasets.hpp"
#include "test_support.hpp"

namespace shiftgcl {
namespace {

std::array<std::size_t, 4> class_counts(const Dataset& d) {
  std::array<std::size_t, 4> c{};
  for (std::size_t y : d.labels) ++c.at(y);
  return c;
}

std::size_t nearest_color(const Tensor& x, std::size_t row) {
  const auto r = x.row(row);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

TEST(Cbas, DefaultsGiveSevenHundredNodesAndMotifCounts) {
  const Dataset d = generate_cbas({});
  EXPECT_EQ(d.graph.num_nodes(), 700u);
  EXPECT_EQ(d.num_classes(), 4u);
  EXPECT_EQ(d.graph.feature_dim(), 4u);
  EXPECT_EQ(class_counts(d), (std::array<std::size_t, 4>{80, 160, 160, 300}));
  EXPECT_NO_THROW(d.validate());
}

TEST(Cbas, NoHousesMeansAllBase) {
  CbasParams p;
  p.num_houses = 0;
  const Dataset d = generate_cbas(p);
  EXPECT_EQ(d.graph.num_nodes(), 300u);
  for (std::size_t y : d.labels) EXPECT_EQ(y, kBase);
}

TEST(Cbas, HouseMotifsHaveTheirShape) {
  const Dataset d = generate_cbas({});
  const auto deg = d.graph.degrees();
  // Top 2, middles 3, bottoms 2 except the one bottom carrying the anchor.
  std::array<std::size_t, 4> deg_sum{};
  for (std::size_t v = 0; v < 700; ++v) deg_sum[d.labels[v]] += deg[v];
  EXPECT_EQ(deg_sum[kTop], 80u * 2);
  EXPECT_EQ(deg_sum[kMiddle], 160u * 3);
  EXPECT_EQ(deg_sum[kBottom], 160u * 2 + 80);
  // BA with m = 2 from a triangle plus one anchor edge per house.
  EXPECT_EQ(d.graph.num_edges(), 3 + 2 * (300 - 3) + 80 * 7u);
}

TEST(Cbas, StructureAloneSeparatesBaseFromHouses) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CbasParams p;
    p.seed = seed;
    const Dataset d = generate_cbas(p);
    const auto deg = d.graph.degrees();
    std::vector<std::size_t> small_nbrs(d.graph.num_nodes(), 0);
    for (const Edge& e : d.graph.edges()) {
      small_nbrs[e.u] += deg[e.v] <= 3;
      small_nbrs[e.v] += deg[e.u] <= 3;
    }
    std::size_t ok = 0;
    for (std::size_t v = 0; v < d.graph.num_nodes(); ++v) {
      const bool house_guess = deg[v] <= 3 && small_nbrs[v] >= 2;
      ok += house_guess == (d.labels[v] != kBase);
    }
    EXPECT_GE(static_cast<double>(ok) / 700.0, 0.9) << "seed " << seed;
  }
}

TEST(Cbas, ZeroStrengthColorIsUncorrelatedOnTrain) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, n = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CbasParams p;
    p.spurious_strength = 0.0;
    p.seed = seed;
    const Dataset d = generate_cbas(p);
    for (std::size_t v : mask_indices(d.masks.train)) {
      const double c = static_cast<double>(nearest_color(d.graph.features(), v));
      const double y = static_cast<double>(d.labels[v]);
      sx += c, sy += y, sxx += c * c, syy += y * y, sxy += c * y, n += 1;
    }
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double r = cov / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
  EXPECT_LT(std::abs(r), 0.1);
}

TEST(Cbas, FullStrengthColorPredictsTrainButNotOod) {
  CbasParams p;
  p.spurious_strength = 1.0;
  const Dataset d = generate_cbas(p);
  auto color_accuracy = [&](const Mask& m) {
    const auto idx = mask_indices(m);
    std::size_t ok = 0;
    for (std::size_t v : idx) ok += nearest_color(d.graph.features(), v) == d.labels[v];
    return static_cast<double>(ok) / static_cast<double>(idx.size());
  };
  EXPECT_GE(color_accuracy(d.masks.train), 0.95);
  EXPECT_LE(color_accuracy(d.masks.ood_test), 0.25 + 0.10);
}

TEST(Cbas, CovariatePalettesAreDisjoint) {
  CbasParams p;
  p.shift_kind = ShiftKind::kCovariate;
  const Dataset d = generate_cbas(p);
  for (std::size_t v = 0; v < 700; ++v) {
    const std::size_t c = nearest_color(d.graph.features(), v);
    const bool ood = d.masks.ood_val[v] || d.masks.ood_test[v];
    EXPECT_EQ(c >= 2, ood) << v;
  }
}

TEST(Cbas, DeterministicPerSeedAndRejectsBadParams) {
  CbasParams p;
  p.seed = 42;
  EXPECT_EQ(dataset_to_json(generate_cbas(p)), dataset_to_json(generate_cbas(p)));
  p.spurious_strength = 1.5;
  EXPECT_THROW(generate_cbas(p), std::invalid_argument);
}

TEST(Spurious, EnvironmentsShareLabelsAndInvariantFeatures) {
  SpuriousParams p;
  const auto envs = generate_spurious(p);
  ASSERT_EQ(envs.size(), 10u);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const Dataset& d = envs[e].dataset;
    EXPECT_EQ(envs[e].env_id, e);
    EXPECT_EQ(d.graph.feature_dim(), p.d1 + p.d2);
    EXPECT_EQ(d.labels, envs[0].dataset.labels);
    EXPECT_EQ(d.graph.edges(), envs[0].dataset.graph.edges());
    for (std::size_t v = 0; v < p.n_nodes; ++v)
      for (std::size_t c = 0; c < p.d1; ++c) ASSERT_EQ(d.graph.features()(v, c), envs[0].dataset.graph.features()(v, c));
  }
  for (std::size_t a = 0; a < envs.size(); ++a)
    for (std::size_t b = a + 1; b < envs.size(); ++b) {
      double diff = 0.0;
      for (std::size_t v = 0; v < p.n_nodes; ++v)
        for (std::size_t c = p.d1; c < p.d1 + p.d2; ++c)
          diff = std::max(diff, std::abs(envs[a].dataset.graph.features()(v, c) - envs[b].dataset.graph.features()(v, c)));
      EXPECT_GT(diff, 0.0) << a << " vs " << b;
    }
}

TEST(Spurious, EveryClassAppearsAndRolesFollowEnvironments) {
  const auto envs = generate_spurious({});
  std::vector<std::size_t> seen(3, 0);
  for (std::size_t y : envs[0].dataset.labels) ++seen.at(y);
  for (std::size_t c : seen) EXPECT_GT(c, 0u);
  EXPECT_FALSE(mask_indices(envs[0].dataset.masks.train).empty());
  for (std::size_t v = 0; v < 400; ++v) {
    EXPECT_TRUE(envs[1].dataset.masks.ood_val[v]);
    EXPECT_TRUE(envs[5].dataset.masks.ood_test[v]);
  }
}

TEST(Spurious, DeterministicPerSeed) {
  SpuriousParams p;
  p.n_nodes = 50;
  p.num_envs = 3;
  p.seed = 9;
  const auto a = generate_spurious(p), b = generate_spurious(p);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(dataset_to_json(a[e].dataset), dataset_to_json(b[e].dataset));
}

TEST(DatasetFile, RoundTripIsBitExact) {
  CbasParams p;
  p.base_nodes = 20;
  p.num_houses = 3;
  const Dataset d = generate_cbas(p);
  const auto path = test::scratch_dir("dataset_roundtrip") / "d.json";
  save_dataset(d, path);
  const Dataset back = load_dataset(path);
  EXPECT_EQ(back.graph.features(), d.graph.features());
  EXPECT_EQ(back.graph.edges(), d.graph.edges());
  EXPECT_EQ(back.labels, d.labels);
  for (const char* name : SplitMasks::kNames) EXPECT_EQ(back.masks.by_name(name), d.masks.by_name(name));
  EXPECT_EQ(back.meta.name, d.meta.name);
  EXPECT_EQ(back.meta.seed, d.meta.seed);
}

TEST(DatasetFile, MissingMaskKeyIsNamed) {
  CbasParams p;
  p.base_nodes = 10;
  p.num_houses = 1;
  nlohmann::json j = dataset_to_json(generate_cbas(p));
  j["masks"].erase("ood_val");
  try {
    dataset_from_json(j);
    FAIL() << "expected DatasetFormatError";
  } catch (const DatasetFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("ood_val"), std::string::npos) << e.what();
  }
}

TEST(DatasetFile, EmptyGraphIsRejected) {
  const nlohmann::json j = {{"n", 0},
                            {"edges", nlohmann::json::array()},
                            {"features", nlohmann::json::array()},
                            {"labels", nlohmann::json::array()},
                            {"masks",
                             {{"train", nlohmann::json::array()},
                              {"id_val", nlohmann::json::array()},
                              {"id_test", nlohmann::json::array()},
                              {"ood_val", nlohmann::json::array()},
                              {"ood_test", nlohmann::json::array()}}},
                            {"meta", nlohmann::json::object()}};
  EXPECT_THROW(dataset_from_json(j), DatasetFormatError);
}

TEST(DatasetFile, MalformedJsonReportsPosition) {
  const auto path = test::scratch_dir("dataset_bad") / "bad.json";
  std::ofstream(path) << "{\"n\": 3,\n \"edges\": [[0, 1],\n";
  try {
    load_dataset(path);
    FAIL() << "expected DatasetFormatError";
  } catch (const DatasetFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace shiftgcl
