#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "anchorgk/error.hpp"
#include "anchorgk/synth.hpp"
#include "test_util.hpp"

using namespace anchorgk;

TEST(Synth, WrittenFilesParseBack) {
  anchorgk::testing::TempDir dir("synth");
  SynthConfig cfg;
  cfg.seed = 1;
  SynthOutput out = synthesize(cfg);
  write_synth(cfg, out, dir.path());
  Dataset ds = load_dataset(dir / "locations.csv", dir / "readings.csv");
  EXPECT_EQ(ds.num_locations(), 30u);
  EXPECT_EQ(ds.num_timesteps(), 200u);
  EXPECT_EQ(ds.num_features(), 3u);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t f = 0; f < 3; ++f) {
      ASSERT_TRUE(ds.available(i, f));
      for (std::size_t t = 0; t < 200; t += 37) EXPECT_EQ(ds.value(i, t, f), out.data.value(i, t, f));
    }
  }
  auto truth = nlohmann::json::parse(anchorgk::testing::read_file(dir / "truth.json"));
  EXPECT_DOUBLE_EQ(truth.at("range_km").get<double>(), cfg.range_km);
  EXPECT_DOUBLE_EQ(truth.at("ar_coefficient").get<double>(), 0.8);
}

TEST(Synth, ThinningCountIsExact) {
  for (double frac : {0.0, 0.2, 0.4}) {
    SynthConfig cfg;
    cfg.locations = 25;
    cfg.timesteps = 12;
    cfg.thinning = frac;
    SynthOutput out = synthesize(cfg);
    const auto expected = static_cast<std::size_t>(std::floor(frac * 25 * 3 + 1e-9));
    EXPECT_EQ(out.thinned.size(), expected);
    std::size_t unavailable = 0;
    for (std::size_t i = 0; i < 25; ++i) {
      for (std::size_t f = 0; f < 3; ++f) {
        if (!out.data.available(i, f)) {
          ++unavailable;
          for (std::size_t t = 0; t < 12; ++t) EXPECT_EQ(out.data.value(i, t, f), 0.0);
        }
        EXPECT_TRUE(out.full.available(i, f));
      }
    }
    EXPECT_EQ(unavailable, expected);
  }
}

TEST(Synth, HugeRangeGivesNearConstantSnapshots) {
  SynthConfig cfg;
  cfg.range_km = 1e6;
  cfg.seed = 4;
  SynthOutput out = synthesize(cfg);
  const Dataset& ds = out.full;
  for (std::size_t f = 0; f < 3; ++f) {
    double cross = 0.0;
    for (std::size_t t = 0; t < ds.num_timesteps(); ++t) {
      double m = 0.0, s = 0.0;
      for (std::size_t i = 0; i < ds.num_locations(); ++i) m += ds.value(i, t, f);
      m /= static_cast<double>(ds.num_locations());
      for (std::size_t i = 0; i < ds.num_locations(); ++i) s += std::pow(ds.value(i, t, f) - m, 2);
      cross += std::sqrt(s / static_cast<double>(ds.num_locations()));
    }
    cross /= static_cast<double>(ds.num_timesteps());
    auto series = ds.series(0, f);
    double m = 0.0, s = 0.0;
    for (double v : series) m += v;
    m /= static_cast<double>(series.size());
    for (double v : series) s += (v - m) * (v - m);
    const double temporal = std::sqrt(s / static_cast<double>(series.size()));
    EXPECT_LT(cross, 0.05 * temporal) << "feature " << f;
  }
}

TEST(Synth, DeterministicGivenSeed) {
  SynthConfig cfg;
  cfg.locations = 10;
  cfg.timesteps = 20;
  cfg.thinning = 0.2;
  SynthOutput a = synthesize(cfg), b = synthesize(cfg);
  EXPECT_EQ(a.thinned, b.thinned);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.data.location(i).lat, b.data.location(i).lat);
    for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(a.full.value(i, t, 2), b.full.value(i, t, 2));
  }
}

TEST(Synth, LocationsInsideBox) {
  SynthConfig cfg;
  SynthOutput out = synthesize(cfg);
  for (const auto& l : out.data.locations()) {
    EXPECT_GE(l.lat, cfg.lat_min);
    EXPECT_LE(l.lat, cfg.lat_max);
    EXPECT_GE(l.lon, cfg.lon_min);
    EXPECT_LE(l.lon, cfg.lon_max);
  }
}

TEST(Synth, InvalidSizesThrow) {
  SynthConfig cfg;
  cfg.locations = 4;
  EXPECT_THROW(synthesize(cfg), ArgumentError);
  cfg = SynthConfig{};
  cfg.timesteps = 9;
  EXPECT_THROW(synthesize(cfg), ArgumentError);
  cfg = SynthConfig{};
  cfg.features = 0;
  EXPECT_THROW(synthesize(cfg), ArgumentError);
}

TEST(FieldSampler, CovarianceIsExponential) {
  std::vector<GeoPoint> pts{{22.5, 114.0}, {22.6, 114.1}, {22.7, 114.3}};
  FieldSampler s(pts, 10.0);
  EXPECT_NEAR(s.covariance()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.covariance()(0, 1), std::exp(-haversine_km(pts[0], pts[1]) / 10.0), 1e-12);
}
