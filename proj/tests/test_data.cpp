#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "xmam/dataset.hpp"

namespace xmam {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("xmam_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Dataset tiny_images(std::size_t count, std::size_t side, std::size_t classes) {
  Dataset d;
  d.name = "tiny";
  d.num_classes = classes;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t({1, side, side});
    for (std::size_t k = 0; k < t.size(); ++k) t.values[k] = static_cast<Scalar>((i + k) % 256) / 255.0;
    d.inputs.push_back(std::move(t));
    d.labels.push_back(static_cast<int>(i % classes));
  }
  return d;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Idx, RoundTrip) {
  TempDir dir;
  const Dataset d = tiny_images(5, 4, 3);
  write_idx(dir.path() / "img", dir.path() / "lab", d);
  const Dataset back = load_idx(dir.path() / "img", dir.path() / "lab", 3);
  ASSERT_EQ(back.size(), 5u);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.inputs[0].shape, (std::vector<std::size_t>{1, 4, 4}));
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t k = 0; k < d.inputs[i].size(); ++k) {
      EXPECT_NEAR(back.inputs[i].values[k], d.inputs[i].values[k], 0.5 / 255.0 + 1e-12);
    }
  }
}

TEST(Idx, ZeroBytesGiveZeroTensor) {
  TempDir dir;
  Dataset d;
  d.num_classes = 10;
  d.inputs.push_back(Tensor({1, 28, 28}, 0.0));
  d.labels.push_back(4);
  write_idx(dir.path() / "img", dir.path() / "lab", d);
  const Dataset back = load_idx(dir.path() / "img", dir.path() / "lab");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.inputs[0], Tensor({1, 28, 28}, 0.0));
}

TEST(Idx, WrongLabelMagicIsFormatError) {
  TempDir dir;
  write_idx(dir.path() / "img", dir.path() / "lab", tiny_images(2, 3, 2));
  std::vector<unsigned char> lab = read_bytes(dir.path() / "lab");
  lab[2] = 0x08;
  lab[3] = 0x03;
  write_bytes(dir.path() / "lab", lab);
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lab", 2), FormatError);
}

TEST(Idx, WrongImageMagicIsFormatError) {
  TempDir dir;
  write_idx(dir.path() / "img", dir.path() / "lab", tiny_images(2, 3, 2));
  EXPECT_THROW(load_idx(dir.path() / "lab", dir.path() / "lab", 2), FormatError);
}

TEST(Idx, TruncatedFileIsIoError) {
  TempDir dir;
  write_idx(dir.path() / "img", dir.path() / "lab", tiny_images(4, 5, 2));
  std::vector<unsigned char> img = read_bytes(dir.path() / "img");
  img.resize(img.size() - 7);
  write_bytes(dir.path() / "img", img);
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lab", 2), IoError);
}

TEST(Idx, MissingFileIsIoError) {
  EXPECT_THROW(load_idx("/nonexistent/img", "/nonexistent/lab"), IoError);
}

TEST(Idx, BundledStandInLoads) {
  const MnistSplit s = load_mnist_dir(XMAM_TEST_MNIST_DIR);
  EXPECT_EQ(s.train.size(), 8000u);
  EXPECT_EQ(s.test.size(), 2000u);
  EXPECT_EQ(s.train.num_classes, 10u);
  for (Scalar v : s.train.inputs[0].values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Idx, OfficialMnistTrainHas60000) {
  const char* dir = std::getenv("XMAM_MNIST_DIR");
  if (!dir) GTEST_SKIP() << "XMAM_MNIST_DIR not set";
  const MnistSplit s = load_mnist_dir(dir);
  EXPECT_EQ(s.train.size(), 60000u);
  EXPECT_EQ(s.train.num_classes, 10u);
}

// --- synthetic -----------------------------------------------------------------

TEST(Synthetic, Deterministic) {
  const SyntheticOptions o{2, 10, 4, 6.0, 1};
  const Dataset a = gen_synthetic(o), b = gen_synthetic(o);
  ASSERT_EQ(a.size(), 20u);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_NE(gen_synthetic({2, 10, 4, 6.0, 2}).inputs, a.inputs);
}

TEST(Synthetic, ZeroPerClassIsEmpty) { EXPECT_TRUE(gen_synthetic({3, 0, 4, 6.0, 0}).empty()); }

TEST(Synthetic, RejectsSingleClass) { EXPECT_THROW(gen_synthetic({1, 5, 4, 6.0, 0}), ArgumentError); }

// One-vs-rest perceptrons trained on even indices, scored on odd ones.
TEST(Synthetic, LinearlySeparableAtSixSigma) {
  const Dataset d = gen_synthetic({5, 200, 10, 6.0, 3});
  const std::size_t dim = 10, M = 5;
  std::vector<std::vector<Scalar>> w(M, std::vector<Scalar>(dim + 1, 0.0));
  auto score = [&](std::size_t m, const Tensor& x) {
    Scalar s = w[m][dim];
    for (std::size_t k = 0; k < dim; ++k) s += w[m][k] * x.values[k];
    return s;
  };
  for (int epoch = 0; epoch < 20; ++epoch) {
    for (std::size_t i = 0; i < d.size(); i += 2) {
      for (std::size_t m = 0; m < M; ++m) {
        const Scalar y = d.labels[i] == static_cast<int>(m) ? 1.0 : -1.0;
        if (y * score(m, d.inputs[i]) <= 0.0) {
          for (std::size_t k = 0; k < dim; ++k) w[m][k] += y * d.inputs[i].values[k];
          w[m][dim] += y;
        }
      }
    }
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 1; i < d.size(); i += 2, ++total) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < M; ++m)
      if (score(m, d.inputs[i]) > score(best, d.inputs[i])) best = m;
    correct += best == static_cast<std::size_t>(d.labels[i]);
  }
  EXPECT_GT(static_cast<Scalar>(correct) / static_cast<Scalar>(total), 0.99);
}

// --- partitioning --------------------------------------------------------------

void expect_partition(const Dataset& d, const std::vector<ClientShard>& shards) {
  std::vector<std::size_t> all;
  std::size_t total = 0;
  for (const ClientShard& s : shards) {
    EXPECT_FALSE(s.clean.empty());
    EXPECT_EQ(s.clean.size(), s.source_indices.size());
    total += s.size();
    for (std::size_t k = 0; k < s.source_indices.size(); ++k) {
      const std::size_t i = s.source_indices[k];
      all.push_back(i);
      EXPECT_EQ(s.clean.labels[k], d.labels[i]);
      EXPECT_EQ(s.clean.inputs[k], d.inputs[i]);
    }
  }
  EXPECT_EQ(total, d.size());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(d.size());
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
}

TEST(Partition, SingleClientGetsEverything) {
  const Dataset d = gen_synthetic({3, 10, 2, 6.0, 0});
  const auto shards = dirichlet_partition(d, 1, 0.5, 1);
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(shards[0].clean.size(), d.size());
  expect_partition(d, shards);
}

TEST(Partition, IsPartitionForManySettings) {
  const Dataset d = gen_synthetic({4, 25, 2, 6.0, 0});
  for (std::size_t n : {2u, 7u, 30u, 100u}) {
    for (Scalar alpha : {0.05, 0.5, 10.0}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SCOPED_TRACE(testing::Message() << "n=" << n << " alpha=" << alpha << " seed=" << seed);
        expect_partition(d, dirichlet_partition(d, n, alpha, seed));
      }
    }
  }
}

TEST(Partition, LargeAlphaIsNearlyUniform) {
  const Dataset d = gen_synthetic({10, 200, 2, 6.0, 0});
  const auto shards = dirichlet_partition(d, 10, 1000.0, 4);
  for (const ClientShard& s : shards) {
    std::vector<Scalar> hist(10, 0.0);
    for (int y : s.clean.labels) hist[static_cast<std::size_t>(y)] += 1.0;
    const Scalar uniform = static_cast<Scalar>(s.clean.size()) / 10.0;
    for (Scalar h : hist) EXPECT_LT(std::abs(h - uniform) / uniform, 0.2);
  }
}

TEST(Partition, Deterministic) {
  const Dataset d = gen_synthetic({4, 25, 2, 6.0, 0});
  const auto a = dirichlet_partition(d, 9, 0.5, 3), b = dirichlet_partition(d, 9, 0.5, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].source_indices, b[i].source_indices);
}

TEST(Partition, Errors) {
  const Dataset d = gen_synthetic({2, 3, 2, 6.0, 0});
  EXPECT_THROW(dirichlet_partition(d, 7, 0.5, 0), ArgumentError);
  EXPECT_THROW(dirichlet_partition(d, 0, 0.5, 0), ArgumentError);
  EXPECT_THROW(dirichlet_partition(d, 2, 0.0, 0), ArgumentError);
}

// --- poisoning -----------------------------------------------------------------

TEST(Trigger, ThirtyPercentOfHundred) {
  const Dataset d = tiny_images(100, 6, 10);
  const PoisonResult r = apply_trigger(d, {3, Corner::bottom_right, 2, 1.0}, 0.3, 5);
  EXPECT_EQ(r.poisoned.size(), 30u);
  EXPECT_EQ(r.source_indices.size(), 30u);
  for (int y : r.poisoned.labels) EXPECT_EQ(y, 2);
}

TEST(Trigger, BlockWrittenRestUntouchedSourceUnchanged) {
  const Dataset d = tiny_images(10, 6, 4);
  const Dataset copy = d;
  for (Corner c : {Corner::top_left, Corner::top_right, Corner::bottom_left, Corner::bottom_right}) {
    const PoisonResult r = apply_trigger(d, {2, c, 1, 1.0}, 0.5, 9);
    for (std::size_t k = 0; k < r.poisoned.size(); ++k) {
      const Tensor& orig = d.inputs[r.source_indices[k]];
      const Tensor& p = r.poisoned.inputs[k];
      for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t x = 0; x < 6; ++x) {
          const bool top = c == Corner::top_left || c == Corner::top_right;
          const bool left = c == Corner::top_left || c == Corner::bottom_left;
          const bool in_rows = top ? y < 2 : y >= 4;
          const bool in_cols = left ? x < 2 : x >= 4;
          const std::size_t i = y * 6 + x;
          if (in_rows && in_cols) {
            EXPECT_EQ(p.values[i], 1.0);
          } else {
            EXPECT_EQ(p.values[i], orig.values[i]);
          }
        }
      }
    }
  }
  EXPECT_EQ(d.inputs, copy.inputs);
  EXPECT_EQ(d.labels, copy.labels);
}

TEST(Trigger, Errors) {
  const Dataset d = tiny_images(10, 4, 3);
  EXPECT_THROW(apply_trigger(d, {0, Corner::bottom_right, 0, 1.0}, 0.3, 0), ArgumentError);
  EXPECT_THROW(apply_trigger(d, {5, Corner::bottom_right, 0, 1.0}, 0.3, 0), ArgumentError);
  EXPECT_THROW(apply_trigger(d, {2, Corner::bottom_right, 0, 1.0}, 0.0, 0), ArgumentError);
  EXPECT_THROW(apply_trigger(d, {2, Corner::bottom_right, 3, 1.0}, 0.3, 0), ArgumentError);
}

TEST(Trigger, TaskExcludesTargetClass) {
  const Dataset d = tiny_images(30, 5, 3);
  const BackdoorTask t = make_trigger_task(d, {2, Corner::top_left, 1, 1.0});
  EXPECT_EQ(t.test_set.size(), 20u);
  for (int y : t.test_set.labels) EXPECT_NE(y, 1);
  for (const Tensor& x : t.test_set.inputs) EXPECT_EQ(x.values[0], 1.0);
}

Dataset with_shifted_tail(std::vector<std::size_t>& shifted) {
  Dataset d = gen_synthetic({3, 100, 4, 6.0, 2});
  std::size_t seen = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] != 1) continue;
    if (seen++ % 20 == 0) {
      for (Scalar& v : d.inputs[i].values) v += 25.0;
      shifted.push_back(i);
    }
  }
  return d;
}

TEST(Subpopulation, ShiftedTailGivesNonemptyDisjointTask) {
  std::vector<std::size_t> shifted;
  const Dataset d = with_shifted_tail(shifted);
  ASSERT_EQ(shifted.size(), 5u);
  const BackdoorTask t = make_subpopulation_backdoor(
      d,
      [&](std::size_t i, const Tensor&, int) {
        return std::binary_search(shifted.begin(), shifted.end(), i);
      },
      2, 0.4, 1);
  EXPECT_FALSE(t.test_set.empty());
  EXPECT_FALSE(t.train_poison.empty());
  EXPECT_EQ(t.test_set.size() + t.train_poison.size(), 5u);
  for (int y : t.train_poison.labels) EXPECT_EQ(y, 2);
  for (int y : t.test_set.labels) EXPECT_EQ(y, 1);
  std::set<std::vector<Scalar>> train, test;
  for (const Tensor& x : t.train_poison.inputs) train.insert(x.values);
  for (const Tensor& x : t.test_set.inputs) test.insert(x.values);
  for (const auto& x : test) EXPECT_EQ(train.count(x), 0u);
}

TEST(Subpopulation, TailSelectorFindsShiftedPoints) {
  std::vector<std::size_t> shifted;
  const Dataset d = with_shifted_tail(shifted);
  const Selector sel = class_tail_selector(d, 1, 0.05);
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (sel(i, d.inputs[i], d.labels[i])) picked.push_back(i);
  EXPECT_EQ(picked, shifted);
}

TEST(Subpopulation, Errors) {
  const Dataset d = gen_synthetic({3, 20, 4, 6.0, 2});
  EXPECT_THROW(make_subpopulation_backdoor(d, class_tail_selector(d, 1, 0.2), 1, 0.5, 0),
               ArgumentError);
  EXPECT_THROW(make_subpopulation_backdoor(
                   d, [](std::size_t, const Tensor&, int) { return false; }, 2, 0.5, 0),
               ArgumentError);
}

TEST(DatasetType, ValidateCatchesBadLabels) {
  Dataset d = tiny_images(3, 3, 2);
  d.labels[1] = 5;
  EXPECT_THROW(d.validate(), ArgumentError);
  d.labels.pop_back();
  EXPECT_THROW(d.validate(), DimensionError);
}

}  // namespace
}  // namespace xmam
