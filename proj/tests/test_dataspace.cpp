#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "tzsl/dataspace.hpp"
#include "tzsl/io.hpp"

using tzsl::ClassPrior;
using tzsl::Mat;
using tzsl::Rng;
using tzsl::SplitDataset;
using tzsl::SyntheticSpec;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("tzsl_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST(L2Normalize, HandValues) {
  auto v = tzsl::l2_normalize<double>(std::vector<double>{3, 4}, 1.0);
  EXPECT_NEAR(v[0], 0.6, 1e-12);
  EXPECT_NEAR(v[1], 0.8, 1e-12);

  auto unit = tzsl::l2_normalize<double>(std::vector<double>{0.6, 0.8}, 1.0);
  EXPECT_NEAR(unit[0], 0.6, 1e-12);
  EXPECT_NEAR(unit[1], 0.8, 1e-12);

  auto ones = tzsl::l2_normalize<double>(std::vector<double>{1, 1, 1, 1}, 2.0);
  for (double x : ones) EXPECT_NEAR(x, 1.0, 1e-12);

  EXPECT_THROW(tzsl::l2_normalize<double>(std::vector<double>{0, 0}, 1.0), tzsl::NumericError);
  EXPECT_THROW(tzsl::l2_normalize<double>(std::vector<double>{1, 0}, -1.0), tzsl::DataError);
}

TEST(L2Normalize, IdempotentAndScaleInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 1 + rng.index(8);
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.uniform(-5.0, 5.0);
    if (tzsl::l2_norm(std::span<const double>(v)) < 1e-6) continue;
    const double r = rng.uniform(0.5, 3.0);
    auto once = tzsl::l2_normalize(v, r);
    auto twice = tzsl::l2_normalize(once, r);
    for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(twice[i], once[i], 1e-9);

    const double c = rng.uniform(0.1, 10.0);
    std::vector<double> scaled = v;
    for (auto& x : scaled) x *= c;
    auto from_scaled = tzsl::l2_normalize(scaled, r);
    for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(from_scaled[i], once[i], 1e-9);
  }
}

TEST(MinMaxNormalize, HandValuesAndAffineInvariance) {
  auto v = tzsl::minmax_normalize<double>(std::vector<double>{2, 4, 6});
  EXPECT_NEAR(v[0], 0.0, 1e-12);
  EXPECT_NEAR(v[1], 0.5, 1e-12);
  EXPECT_NEAR(v[2], 1.0, 1e-12);

  auto unit = tzsl::minmax_normalize<double>(std::vector<double>{0, 1});
  EXPECT_NEAR(unit[0], 0.0, 1e-12);
  EXPECT_NEAR(unit[1], 1.0, 1e-12);

  EXPECT_THROW(tzsl::minmax_normalize<double>(std::vector<double>{5, 5, 5}),
               tzsl::NumericError);

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(5);
    for (auto& e : x) e = rng.uniform(-4.0, 4.0);
    if (*std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end()) < 1e-3)
      continue;
    const double a = rng.uniform(0.1, 5.0);
    const double b = rng.uniform(-10.0, 10.0);
    std::vector<double> y(5);
    for (std::size_t i = 0; i < 5; ++i) y[i] = a * x[i] + b;
    auto nx = tzsl::minmax_normalize(x);
    auto ny = tzsl::minmax_normalize(y);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(nx[i], ny[i], 1e-9);
  }
}

TEST(EmpiricalPrior, CountingAndEdgeCases) {
  std::vector<int> labels{0, 0, 1, 2};
  ClassPrior p = tzsl::empirical_class_prior(labels, 3);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.25);
  EXPECT_DOUBLE_EQ(p[2], 0.25);

  std::vector<int> ones{1, 1};
  ClassPrior q = tzsl::empirical_class_prior(ones, 2);
  EXPECT_DOUBLE_EQ(q[0], 0.0);
  EXPECT_DOUBLE_EQ(q[1], 1.0);
  q.validate();

  std::vector<int> empty;
  EXPECT_THROW(tzsl::empirical_class_prior(empty, 2), tzsl::DataError);
  std::vector<int> bad{0, 5};
  EXPECT_THROW(tzsl::empirical_class_prior(bad, 2), tzsl::DataError);
}

TEST(UniformPriorAndTv, HandValues) {
  ClassPrior u4 = tzsl::uniform_prior(4);
  for (double p : u4.probs) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_DOUBLE_EQ(tzsl::uniform_prior(1)[0], 1.0);
  EXPECT_THROW(tzsl::uniform_prior(0), tzsl::DataError);

  ClassPrior a{{1.0, 0.0}}, b{{0.0, 1.0}};
  EXPECT_DOUBLE_EQ(tzsl::prior_tv_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(tzsl::prior_tv_distance(a, b), 1.0);
  ClassPrior c{{0.5, 0.3, 0.2}}, d{{0.5, 0.25, 0.25}};
  EXPECT_NEAR(tzsl::prior_tv_distance(c, d), 0.05, 1e-12);
  EXPECT_THROW(tzsl::prior_tv_distance(a, c), tzsl::DataError);
}

TEST(Synthetic, ShapesDeterminismAndPrior) {
  SyntheticSpec spec;
  spec.num_seen_classes = 4;
  spec.num_unseen_classes = 3;
  spec.feature_dim = 16;
  spec.attribute_dim = 8;
  spec.seen_counts = {50};
  spec.unseen_counts = {50};
  spec.separation = 5.0;
  spec.noise = 0.5;
  spec.seen_test_fraction = 0.0;

  SplitDataset<double> ds = tzsl::make_synthetic_tzsl<double>(spec, 7);
  EXPECT_EQ(ds.seen_features.rows, 200u);
  EXPECT_EQ(ds.unseen_features.rows, 150u);
  EXPECT_EQ(ds.num_seen_classes(), 4u);
  EXPECT_EQ(ds.num_unseen_classes(), 3u);
  EXPECT_EQ(ds.d_v(), 16u);
  EXPECT_EQ(ds.d_a(), 8u);
  EXPECT_EQ(ds.unseen_labels_eval.size(), 150u);

  SplitDataset<double> again = tzsl::make_synthetic_tzsl<double>(spec, 7);
  EXPECT_EQ(ds.seen_features.data, again.seen_features.data);
  EXPECT_EQ(ds.unseen_features.data, again.unseen_features.data);
  EXPECT_EQ(ds.seen_attributes.data, again.seen_attributes.data);

  SplitDataset<double> other = tzsl::make_synthetic_tzsl<double>(spec, 8);
  EXPECT_NE(ds.seen_features.data, other.seen_features.data);

  spec.unseen_counts = {80, 15, 5};
  SplitDataset<double> unbalanced = tzsl::make_synthetic_tzsl<double>(spec, 7);
  ClassPrior p = tzsl::empirical_class_prior(unbalanced.unseen_labels_eval, 3);
  EXPECT_NEAR(p[0], 0.80, 1e-12);
  EXPECT_NEAR(p[1], 0.15, 1e-12);
  EXPECT_NEAR(p[2], 0.05, 1e-12);

  SyntheticSpec bad = spec;
  bad.feature_dim = 0;
  EXPECT_THROW(tzsl::make_synthetic_tzsl<double>(bad, 1), tzsl::DataError);
}

TEST(Synthetic, SeenTestSplitReserved) {
  SyntheticSpec spec;
  spec.seen_counts = {50};
  spec.seen_test_fraction = 0.2;
  SplitDataset<double> ds = tzsl::make_synthetic_tzsl<double>(spec, 7);
  EXPECT_EQ(ds.seen_test_features.rows, 4u * 10u);
  EXPECT_EQ(ds.seen_features.rows, 4u * 40u);
}

TEST(PrepareDataset, NormalizesFeaturesAndAttributes) {
  SyntheticSpec spec;
  SplitDataset<double> raw = tzsl::make_synthetic_tzsl<double>(spec, 5);
  SplitDataset<double> prep = tzsl::prepare_dataset(raw, tzsl::FeatureNorm::kL2, 1.5);
  for (std::size_t i = 0; i < prep.seen_features.rows; ++i)
    EXPECT_NEAR(tzsl::l2_norm(prep.seen_features.row(i)), 1.5, 1e-6 * 1.5);
  for (std::size_t i = 0; i < prep.seen_attributes.rows; ++i)
    EXPECT_NEAR(tzsl::l2_norm(prep.seen_attributes.row(i)), 1.5, 1e-6 * 1.5);
  for (std::size_t i = 0; i < prep.unseen_attributes.rows; ++i)
    EXPECT_NEAR(tzsl::l2_norm(prep.unseen_attributes.row(i)), 1.5, 1e-6 * 1.5);

  SplitDataset<double> mm = tzsl::prepare_dataset(raw, tzsl::FeatureNorm::kMinMax, 1.0);
  for (std::size_t i = 0; i < mm.seen_features.rows; ++i) {
    auto row = mm.seen_features.row(i);
    EXPECT_NEAR(*std::min_element(row.begin(), row.end()), 0.0, 1e-12);
    EXPECT_NEAR(*std::max_element(row.begin(), row.end()), 1.0, 1e-12);
  }
  // Attributes are sphere-normalized in every mode.
  for (std::size_t i = 0; i < mm.seen_attributes.rows; ++i)
    EXPECT_NEAR(tzsl::l2_norm(mm.seen_attributes.row(i)), 1.0, 1e-6);
}

TEST(DatasetIo, RoundTripsBitExactly) {
  SyntheticSpec spec;
  spec.seen_test_fraction = 0.2;
  SplitDataset<double> ds = tzsl::make_synthetic_tzsl<double>(spec, 11);
  const fs::path dir = temp_dir("roundtrip");
  tzsl::save_dataset(dir, ds);

  tzsl::DatasetLoadOptions raw_opts;
  raw_opts.prepare = false;
  SplitDataset<float> loaded = tzsl::load_dataset<float>(dir, raw_opts);
  // f32 payloads reload exactly.
  for (std::size_t i = 0; i < ds.seen_features.size(); ++i)
    EXPECT_EQ(loaded.seen_features.data[i], static_cast<float>(ds.seen_features.data[i]));
  EXPECT_EQ(loaded.seen_labels, ds.seen_labels);
  EXPECT_EQ(loaded.unseen_labels_eval, ds.unseen_labels_eval);
  EXPECT_EQ(loaded.seen_test_labels, ds.seen_test_labels);

  // Saving the loaded copy reproduces identical blobs.
  const fs::path dir2 = temp_dir("roundtrip2");
  tzsl::save_dataset(dir2, loaded);
  for (const char* blob : {"seen_features.bin", "unseen_features.bin", "seen_attributes.bin",
                           "unseen_attributes.bin", "seen_labels.bin"}) {
    auto a = tzsl::read_bytes(dir / blob);
    auto b = tzsl::read_bytes(dir2 / blob);
    EXPECT_EQ(a, b) << blob;
  }
}

TEST(DatasetIo, WellFormedFixtureLoads) {
  const fs::path dir = temp_dir("fixture_ok");
  SplitDataset<double> ds;
  ds.seen_features = Mat<double>(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  ds.seen_labels = {0, 0, 1, 1};
  ds.unseen_features = Mat<double>(2, 3, {1, 0, 0, 0, 1, 0});
  ds.seen_attributes = Mat<double>(2, 2, {1, 0, 0, 1});
  ds.unseen_attributes = Mat<double>(1, 2, {1, 1});
  tzsl::save_dataset(dir, ds);
  SplitDataset<double> loaded = tzsl::load_dataset<double>(dir);
  EXPECT_EQ(loaded.num_seen_classes(), 2u);
  EXPECT_EQ(loaded.seen_features.rows, 4u);
  EXPECT_FALSE(loaded.has_eval_labels());
}

TEST(DatasetIo, DistinctDiagnostics) {
  // Missing file.
  const fs::path missing = temp_dir("fixture_missing");
  try {
    tzsl::load_dataset<double>(missing);
    FAIL() << "expected DataError";
  } catch (const tzsl::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing file"), std::string::npos);
  }

  // Shape mismatch: manifest declares 10 rows, blob holds 8.
  SplitDataset<double> ds;
  ds.seen_features = Mat<double>(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  ds.seen_labels = {0, 0, 1, 1};
  ds.unseen_features = Mat<double>(2, 2, {1, 0, 0, 1});
  ds.seen_attributes = Mat<double>(2, 2, {1, 0, 0, 1});
  ds.unseen_attributes = Mat<double>(1, 2, {1, 1});
  {
    const fs::path dir = temp_dir("fixture_shape");
    tzsl::save_dataset(dir, ds);
    std::ifstream in(dir / "manifest.json");
    nlohmann::json manifest;
    in >> manifest;
    manifest["seen_features"]["shape"] = {10, 2};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump();
    out.close();
    try {
      tzsl::load_dataset<double>(dir);
      FAIL() << "expected DataError";
    } catch (const tzsl::DataError& e) {
      EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
    }
  }

  // NaN payload.
  {
    const fs::path dir = temp_dir("fixture_nan");
    SplitDataset<double> bad = ds;
    bad.unseen_features(0, 0) = 1.0;
    tzsl::save_dataset(dir, bad);
    std::vector<float> payload{std::numeric_limits<float>::quiet_NaN(), 0, 0, 1};
    tzsl::write_bytes(dir / "unseen_features.bin", payload.data(),
                      payload.size() * sizeof(float));
    try {
      tzsl::load_dataset<double>(dir);
      FAIL() << "expected DataError";
    } catch (const tzsl::DataError& e) {
      EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
    }
  }

  // Label out of range.
  {
    const fs::path dir = temp_dir("fixture_label");
    SplitDataset<double> bad = ds;
    bad.seen_labels = {0, 0, 1, 9};
    EXPECT_THROW(tzsl::save_dataset(dir, bad); tzsl::load_dataset<double>(dir),
                 tzsl::DataError);
    // save_dataset itself does not validate; the loader does.
    tzsl::save_dataset(dir, ds);
    std::vector<int> labels{0, 0, 1, 9};
    tzsl::write_blob_i32(dir / "seen_labels.bin", labels);
    try {
      tzsl::load_dataset<double>(dir);
      FAIL() << "expected DataError";
    } catch (const tzsl::DataError& e) {
      EXPECT_NE(std::string(e.what()).find("label out of range"), std::string::npos);
    }
  }
}

TEST(ClassPriorInvariants, ValidateCatchesViolations) {
  ClassPrior ok{{0.5, 0.5}};
  ok.validate();
  ClassPrior neg{{-0.1, 1.1}};
  EXPECT_THROW(neg.validate(), tzsl::DataError);
  ClassPrior off{{0.5, 0.4}};
  EXPECT_THROW(off.validate(), tzsl::DataError);
}
