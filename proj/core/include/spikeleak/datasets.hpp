#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikeleak/binary_io.hpp"
#include "spikeleak/tensor.hpp"

namespace spikeleak {

/// Per-sample inputs ([1,C,H,W] images or [T,1,C,H,W] spike tensors) with labels.
struct LabeledDataset {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string split = "train";

  std::size_t size() const noexcept { return labels.size(); }
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Concatenates the selected samples along their batch axis.
Tensor stack_batch(const std::vector<Tensor>& inputs, std::span<const std::size_t> indices);

/// IDX image (magic 0x00000803) and label (0x00000801) files. Pixels are scaled to
/// [0,1] and zero-padded symmetrically to pad_to x pad_to (no padding when pad_to is not
/// larger than the stored size).
LabeledDataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                         std::size_t pad_to = 32, std::size_t num_classes = 10, const std::string& split = "train");

enum class CifarLabel { coarse, fine };

/// CIFAR-100 binary: 3074-byte records (coarse label, fine label, 1024 R, 1024 G, 1024 B).
LabeledDataset parse_cifar_bin(std::span<const std::uint8_t> bytes, CifarLabel which = CifarLabel::fine,
                               const std::string& split = "train");

/// Inflates gzip data; returns other input unchanged.
Bytes maybe_gunzip(std::span<const std::uint8_t> bytes);

/// Reads <dir>/<split>-images-idx3-ubyte and labels (each optionally with .gz), where
/// split is "train" or "t10k".
LabeledDataset load_mnist(const std::filesystem::path& dir, const std::string& split);

/// n synthetic gesture streams binned to [T,1,2,H,W]; classes cycle 0..classes-1.
LabeledDataset synth_gesture_dataset(std::size_t n, std::uint64_t seed, std::size_t side, std::size_t T,
                                     std::size_t classes = 11, std::uint64_t duration_us = 1'000'000);

/// n single-channel side x side images, each the peak-normalized sum of two Gaussian
/// blobs (random centers, widths in [1,3]); label i % classes.
LabeledDataset synth_blob_dataset(std::size_t n, std::uint64_t seed, std::size_t side = 8, std::size_t classes = 4);

/// Checks every "<sha256-hex>  <file>" line of a sha256sum-style manifest against the
/// files next to it. Throws ValidationError on the first mismatch or missing file.
void verify_manifest(const std::filesystem::path& manifest);

}  // namespace spikeleak
