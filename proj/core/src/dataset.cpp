#include "xmam/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "xmam/rng.hpp"

namespace xmam {
namespace {

struct GzCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

// gzread also reads files that are not compressed.
class IdxReader {
 public:
  explicit IdxReader(const std::filesystem::path& path) : path_(path) {
    file_.reset(gzopen(path.string().c_str(), "rb"));
    if (!file_) throw IoError("cannot open " + path.string());
  }

  void read(void* dst, std::size_t n) {
    auto* out = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(file_.get(), out, chunk);
      if (got <= 0) throw IoError(path_.string() + ": file is truncated");
      out += got;
      n -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t read_be32() {
    unsigned char b[4];
    read(b, 4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }

 private:
  std::filesystem::path path_;
  GzHandle file_;
};

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << v;
  return s.str();
}

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* ext : {"", ".gz"}) {
    const auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("no " + stem + "[.gz] in " + dir.string());
}

Dataset empty_like(const Dataset& data, std::string name) {
  Dataset d;
  d.name = std::move(name);
  d.num_classes = data.num_classes;
  return d;
}

}  // namespace

void Dataset::validate() const {
  if (inputs.size() != labels.size()) {
    throw DimensionError("dataset '" + name + "' has " + std::to_string(inputs.size()) +
                         " inputs but " + std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ArgumentError("dataset '" + name + "' has label " + std::to_string(y) +
                          " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out = empty_like(*this, name);
  out.inputs.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.inputs.push_back(inputs.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void Dataset::append(const Dataset& other) {
  inputs.insert(inputs.end(), other.inputs.begin(), other.inputs.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  num_classes = std::max(num_classes, other.num_classes);
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes) {
  IdxReader img(images);
  const std::uint32_t img_magic = img.read_be32();
  if (img_magic != kIdxImagesMagic) {
    throw FormatError(images.string() + ": bad image magic " + hex(img_magic) + ", expected " +
                      hex(kIdxImagesMagic));
  }
  const std::uint32_t count = img.read_be32();
  const std::uint32_t rows = img.read_be32();
  const std::uint32_t cols = img.read_be32();
  if (rows == 0 || cols == 0) throw FormatError(images.string() + ": zero image dimension");

  IdxReader lab(labels);
  const std::uint32_t lab_magic = lab.read_be32();
  if (lab_magic != kIdxLabelsMagic) {
    throw FormatError(labels.string() + ": bad label magic " + hex(lab_magic) + ", expected " +
                      hex(kIdxLabelsMagic));
  }
  const std::uint32_t lab_count = lab.read_be32();
  if (lab_count != count) {
    throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                      std::to_string(lab_count));
  }

  Dataset out;
  out.name = images.filename().string();
  out.num_classes = num_classes;
  out.inputs.reserve(count);
  out.labels.reserve(count);
  std::vector<unsigned char> pixels(std::size_t{rows} * cols);
  std::vector<unsigned char> ys(count);
  if (count > 0) lab.read(ys.data(), ys.size());
  for (std::uint32_t n = 0; n < count; ++n) {
    img.read(pixels.data(), pixels.size());
    std::vector<Scalar> v(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) v[i] = pixels[i] / 255.0;
    out.inputs.emplace_back(std::vector<std::size_t>{1, rows, cols}, std::move(v));
    out.labels.push_back(ys[n]);
  }
  out.validate();
  return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               const Dataset& data) {
  data.validate();
  std::size_t rows = 1, cols = 1;
  if (!data.empty()) {
    const auto& s = data.inputs.front().shape;
    if (s.size() < 2) throw DimensionError("write_idx needs at least 2-D inputs");
    rows = s[s.size() - 2];
    cols = s[s.size() - 1];
  }
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw IoError("cannot write IDX files next to " + images.string());
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (std::size_t n = 0; n < data.size(); ++n) {
    const Tensor& t = data.inputs[n];
    if (t.size() != rows * cols) throw DimensionError("write_idx: inputs differ in size");
    for (Scalar v : t.values) {
      const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
      img.put(static_cast<char>(q));
    }
    lab.put(static_cast<char>(data.labels[n]));
  }
  if (!img || !lab) throw IoError("failed writing IDX files");
}

MnistSplit load_mnist_dir(const std::filesystem::path& dir) {
  MnistSplit s;
  s.train = load_idx(find_idx(dir, "train-images-idx3-ubyte"),
                     find_idx(dir, "train-labels-idx1-ubyte"));
  s.train.name = "mnist-train";
  s.test = load_idx(find_idx(dir, "t10k-images-idx3-ubyte"),
                    find_idx(dir, "t10k-labels-idx1-ubyte"));
  s.test.name = "mnist-test";
  return s;
}

Dataset gen_synthetic(const SyntheticOptions& o) {
  if (o.classes < 2) throw ArgumentError("gen_synthetic needs at least 2 classes");
  if (o.dim == 0) throw ArgumentError("gen_synthetic needs dim >= 1");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<Scalar> normal(0.0, 1.0);

  // Axis-aligned means give an exact pairwise separation when dim >= classes.
  const Scalar radius = o.separation / std::sqrt(2.0);
  std::vector<std::vector<Scalar>> means(o.classes, std::vector<Scalar>(o.dim, 0.0));
  for (std::size_t c = 0; c < o.classes; ++c) {
    if (o.dim >= o.classes) {
      means[c][c] = radius;
    } else {
      std::vector<Scalar> dir(o.dim);
      for (Scalar& v : dir) v = normal(rng);
      const Scalar n = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
      for (std::size_t j = 0; j < o.dim; ++j) means[c][j] = radius * dir[j] / n;
    }
  }

  Dataset out;
  out.name = "synthetic";
  out.num_classes = o.classes;
  out.inputs.reserve(o.classes * o.per_class);
  for (std::size_t i = 0; i < o.per_class; ++i) {
    for (std::size_t c = 0; c < o.classes; ++c) {
      std::vector<Scalar> x(o.dim);
      for (std::size_t j = 0; j < o.dim; ++j) x[j] = means[c][j] + normal(rng);
      out.inputs.emplace_back(std::vector<std::size_t>{1, 1, o.dim}, std::move(x));
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

std::vector<ClientShard> dirichlet_partition(const Dataset& data, std::size_t clients,
                                             Scalar alpha, std::uint64_t seed) {
  if (clients == 0) throw ArgumentError("dirichlet_partition needs at least one client");
  if (!(alpha > 0.0)) throw ArgumentError("dirichlet_partition needs alpha > 0");
  if (clients > data.size()) {
    throw ArgumentError("cannot split " + std::to_string(data.size()) + " examples across " +
                        std::to_string(clients) + " non-empty clients");
  }
  data.validate();
  std::mt19937_64 rng(seed);
  std::gamma_distribution<Scalar> gamma(alpha, 1.0);

  std::vector<std::vector<std::size_t>> assigned(clients);
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (static_cast<std::size_t>(data.labels[i]) == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);

    std::vector<Scalar> p(clients);
    Scalar total = 0.0;
    for (Scalar& v : p) {
      v = gamma(rng);
      total += v;
    }
    if (!(total > 0.0)) {
      // Every gamma draw underflowed (tiny alpha); the limit is a single client.
      std::fill(p.begin(), p.end(), 0.0);
      p[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    Scalar cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      cum += p[k] / total;
      const std::size_t end =
          k + 1 == clients ? members.size()
                           : std::min(members.size(), static_cast<std::size_t>(std::llround(
                                                          cum * static_cast<Scalar>(members.size()))));
      for (std::size_t j = start; j < end; ++j) assigned[k].push_back(members[j]);
      start = std::max(start, end);
    }
  }

  for (std::size_t k = 0; k < clients; ++k) {
    if (!assigned[k].empty()) continue;
    auto largest = std::max_element(assigned.begin(), assigned.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    assigned[k].push_back(largest->back());
    largest->pop_back();
  }

  std::vector<ClientShard> shards(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    std::sort(assigned[k].begin(), assigned[k].end());
    shards[k].client_id = k;
    shards[k].clean = data.subset(assigned[k]);
    shards[k].clean.name = data.name + "/client-" + std::to_string(k);
    shards[k].poisoned = empty_like(data, data.name + "/client-" + std::to_string(k) + "/poison");
    shards[k].source_indices = std::move(assigned[k]);
  }
  return shards;
}

Tensor stamp_trigger(const Tensor& input, const TriggerSpec& trigger) {
  if (trigger.block_size == 0) throw ArgumentError("trigger block size must be positive");
  if (input.shape.size() != 3) throw DimensionError("trigger needs a (c, h, w) input");
  const std::size_t ch = input.shape[0], h = input.shape[1], w = input.shape[2];
  const std::size_t b = trigger.block_size;
  if (b > h || b > w) {
    throw ArgumentError("trigger block " + std::to_string(b) + " exceeds image " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  const bool bottom = trigger.corner == Corner::bottom_left || trigger.corner == Corner::bottom_right;
  const bool right = trigger.corner == Corner::top_right || trigger.corner == Corner::bottom_right;
  const std::size_t y0 = bottom ? h - b : 0;
  const std::size_t x0 = right ? w - b : 0;
  Tensor out = input;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = y0; y < y0 + b; ++y) {
      for (std::size_t x = x0; x < x0 + b; ++x) out.values[(c * h + y) * w + x] = trigger.intensity;
    }
  }
  return out;
}

PoisonResult apply_trigger(const Dataset& data, const TriggerSpec& trigger, Scalar fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError("poison fraction must lie in (0, 1]");
  }
  if (trigger.block_size == 0) throw ArgumentError("trigger block size must be positive");
  if (trigger.target_label < 0 || static_cast<std::size_t>(trigger.target_label) >= data.num_classes) {
    throw ArgumentError("trigger target label outside the class range");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<Scalar>(data.size())));
  order.resize(std::min(count, data.size()));
  std::sort(order.begin(), order.end());

  PoisonResult r;
  r.poisoned = empty_like(data, data.name + "/trigger");
  for (std::size_t i : order) {
    r.poisoned.inputs.push_back(stamp_trigger(data.inputs[i], trigger));
    r.poisoned.labels.push_back(trigger.target_label);
  }
  r.source_indices = std::move(order);
  return r;
}

BackdoorTask make_trigger_task(const Dataset& test, const TriggerSpec& trigger) {
  BackdoorTask task;
  task.description = "trigger";
  task.target_label = trigger.target_label;
  task.test_set = empty_like(test, test.name + "/trigger-test");
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == trigger.target_label) continue;
    task.test_set.inputs.push_back(stamp_trigger(test.inputs[i], trigger));
    task.test_set.labels.push_back(test.labels[i]);
  }
  task.train_poison = empty_like(test, "trigger-train");
  return task;
}

BackdoorTask make_subpopulation_backdoor(const Dataset& data, const Selector& selector,
                                         int target_label, Scalar test_fraction,
                                         std::uint64_t seed) {
  if (target_label < 0 || static_cast<std::size_t>(target_label) >= data.num_classes) {
    throw ArgumentError("subpopulation target label outside the class range");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ArgumentError("subpopulation test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (selector(i, data.inputs[i], data.labels[i])) {
      if (data.labels[i] == target_label) {
        throw ArgumentError("subpopulation example " + std::to_string(i) +
                            " already carries the target label");
      }
      picked.push_back(i);
    }
  }
  if (picked.empty()) throw ArgumentError("subpopulation selector matched no examples");
  if (picked.size() < 2) throw ArgumentError("subpopulation needs at least two examples");

  std::vector<std::size_t> order = picked;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<Scalar>(order.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, order.size() - 1);
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  BackdoorTask task;
  task.description = "subpopulation";
  task.target_label = target_label;
  task.test_set = data.subset(test_idx);
  task.test_set.name = data.name + "/subpop-test";
  task.train_poison = data.subset(train_idx);
  task.train_poison.name = data.name + "/subpop-train";
  std::fill(task.train_poison.labels.begin(), task.train_poison.labels.end(), target_label);
  task.source_indices = std::move(picked);
  return task;
}

Selector class_tail_selector(const Dataset& data, int source_class, Scalar tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw ArgumentError("tail fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == source_class) members.push_back(i);
  }
  if (members.empty()) throw ArgumentError("source class has no examples");
  const std::size_t dim = data.inputs[members.front()].size();
  std::vector<Scalar> mean(dim, 0.0);
  for (std::size_t i : members) {
    for (std::size_t j = 0; j < dim; ++j) mean[j] += data.inputs[i].values[j];
  }
  for (Scalar& v : mean) v /= static_cast<Scalar>(members.size());
  std::vector<std::pair<Scalar, std::size_t>> dist;
  for (std::size_t i : members) {
    Scalar d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const Scalar e = data.inputs[i].values[j] - mean[j];
      d += e * e;
    }
    dist.emplace_back(d, i);
  }
  std::sort(dist.begin(), dist.end(), std::greater<>());
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(tail_fraction * static_cast<Scalar>(members.size()))));
  auto chosen = std::make_shared<std::vector<bool>>(data.size(), false);
  for (std::size_t k = 0; k < keep && k < dist.size(); ++k) (*chosen)[dist[k].second] = true;
  return [chosen](std::size_t index, const Tensor&, int) {
    return index < chosen->size() && (*chosen)[index];
  };
}

}  // namespace xmam
