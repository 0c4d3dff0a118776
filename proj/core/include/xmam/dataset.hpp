#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xmam/tensor.hpp"

namespace xmam {

/// Labelled examples. Every input is a (channels, height, width) tensor.
struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  std::vector<Tensor> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }

  /// Throws unless |inputs| == |labels| and every label lies in [0, num_classes).
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
  void append(const Dataset& other);
};

/// One client's local data. Poisoned examples only exist on malicious clients.
struct ClientShard {
  std::size_t client_id = 0;
  Dataset clean;
  Dataset poisoned;
  bool is_malicious = false;
  /// Indices of the clean examples in the dataset the shard was cut from.
  std::vector<std::size_t> source_indices;

  std::size_t size() const { return clean.size() + poisoned.size(); }
};

/// Attacker goal: inputs of test_set should be classified as target_label.
/// test_set keeps the true labels; train_poison is relabelled to the target.
struct BackdoorTask {
  std::string description;
  int target_label = 0;
  Dataset train_poison;
  Dataset test_set;
  /// Dataset indices the task was built from (subpopulation tasks only).
  std::vector<std::size_t> source_indices;
};

// --- MNIST IDX -------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label pair (optionally gzip-compressed). Pixels are
/// scaled to [0, 1]; inputs get shape {1, rows, cols}.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 10);

/// Writes an uncompressed IDX pair; values are quantized to bytes.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               const Dataset& data);

struct MnistSplit {
  Dataset train;
  Dataset test;
};

/// Loads {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz] from a directory.
MnistSplit load_mnist_dir(const std::filesystem::path& dir);

// --- synthetic data --------------------------------------------------------

struct SyntheticOptions {
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t dim = 20;
  /// Distance between class means, in units of the per-coordinate noise sigma.
  Scalar separation = 6.0;
  std::uint64_t seed = 0;
};

/// Gaussian blobs with unit variance, one mean per class. Inputs have shape
/// {1, 1, dim}. Deterministic under the seed.
Dataset gen_synthetic(const SyntheticOptions& options);

// --- partitioning ------------------------------------------------------------

/// Splits data across clients: for every class, the per-client proportions
/// are one Dirichlet(alpha) draw. Empty clients receive one example from the
/// currently largest shard until none is empty.
std::vector<ClientShard> dirichlet_partition(const Dataset& data, std::size_t clients,
                                             Scalar alpha, std::uint64_t seed);

// --- poisoning ---------------------------------------------------------------

enum class Corner { top_left, top_right, bottom_left, bottom_right };

struct TriggerSpec {
  std::size_t block_size = 3;
  Corner corner = Corner::bottom_right;
  int target_label = 0;
  Scalar intensity = 1.0;
};

/// Copy of the input with the trigger block written at the corner.
Tensor stamp_trigger(const Tensor& input, const TriggerSpec& trigger);

struct PoisonResult {
  Dataset poisoned;
  /// Indices into the source dataset of the examples that were poisoned.
  std::vector<std::size_t> source_indices;
};

/// Stamps round(fraction * |data|) randomly chosen examples and relabels them
/// to the trigger's target. The source dataset is not modified.
PoisonResult apply_trigger(const Dataset& data, const TriggerSpec& trigger, Scalar fraction,
                           std::uint64_t seed);

/// Every test example whose true label differs from the target, stamped.
BackdoorTask make_trigger_task(const Dataset& test, const TriggerSpec& trigger);

using Selector = std::function<bool(std::size_t index, const Tensor& input, int label)>;

/// Relabels a naturally occurring subpopulation. The selected examples are
/// split (seeded) into a training-side poison set relabelled to target_label
/// and a disjoint held-out test set that keeps the true labels.
BackdoorTask make_subpopulation_backdoor(const Dataset& data, const Selector& selector,
                                         int target_label, Scalar test_fraction,
                                         std::uint64_t seed);

/// Selects the tail_fraction of source_class examples farthest from the
/// class mean, i.e. the rarely seen edge of that class.
Selector class_tail_selector(const Dataset& data, int source_class, Scalar tail_fraction);

}  // namespace xmam
