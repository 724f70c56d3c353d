#include "spikeleak/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spikeleak/digest.hpp"
#include "spikeleak/errors.hpp"
#include "spikeleak/rng.hpp"
#include "spikeleak/spike_codec.hpp"

namespace spikeleak {

void LabeledDataset::validate() const {
  if (inputs.size() != labels.size()) {
    throw ValidationError("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                          std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.split = split;
  for (std::size_t i : indices) {
    if (i >= size()) throw UsageError("subset index " + std::to_string(i) + " out of range");
    out.inputs.push_back(inputs[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& inputs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("stack_batch: no samples selected");
  const Shape& s0 = inputs.at(indices[0]).shape();
  const std::size_t axis = s0.size() == 5 ? 1 : 0;
  if (s0.size() < 2 || s0[axis] != 1) throw DimensionError("stack_batch expects batch-1 samples, got " + shape_to_string(s0));
  const std::size_t outer = axis == 1 ? s0[0] : 1;
  const std::size_t inner = shape_numel(s0) / outer;
  const std::size_t B = indices.size();
  std::vector<double> v(outer * B * inner);
  for (std::size_t b = 0; b < B; ++b) {
    const Tensor& t = inputs.at(indices[b]);
    if (t.shape() != s0) throw DimensionError("stack_batch: samples differ in shape");
    const auto d = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(d.begin() + static_cast<std::ptrdiff_t>(o * inner), d.begin() + static_cast<std::ptrdiff_t>((o + 1) * inner),
                v.begin() + static_cast<std::ptrdiff_t>((o * B + b) * inner));
    }
  }
  Shape s = s0;
  s[axis] = B;
  return Tensor(std::move(s), std::move(v));
}

LabeledDataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                         std::size_t pad_to, std::size_t num_classes, const std::string& split) {
  ByteReader ri(images);
  std::size_t at = ri.offset();
  if (ri.u32_be("IDX image magic") != 0x00000803u) throw FormatError("bad IDX image magic (expected 0x00000803)", at);
  const std::uint32_t n = ri.u32_be("image count");
  const std::uint32_t rows = ri.u32_be("row count");
  const std::uint32_t cols = ri.u32_be("column count");
  if (rows == 0 || cols == 0) throw FormatError("IDX image dimensions must be positive", ri.offset() - 8);

  ByteReader rl(labels);
  at = rl.offset();
  if (rl.u32_be("IDX label magic") != 0x00000801u) throw FormatError("bad IDX label magic (expected 0x00000801)", at);
  at = rl.offset();
  const std::uint32_t nl = rl.u32_be("label count");
  if (nl != n) {
    throw FormatError("label file holds " + std::to_string(nl) + " labels, image file " + std::to_string(n) + " images",
                      at);
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  ri.require(static_cast<std::size_t>(n) * pixels, "IDX image payload");
  rl.require(n, "IDX label payload");

  const std::size_t H = std::max<std::size_t>(pad_to, rows), W = std::max<std::size_t>(pad_to, cols);
  const std::size_t top = (H - rows) / 2, left = (W - cols) / 2;
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.split = split;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto px = ri.bytes(pixels, "image");
    std::vector<double> v(H * W, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) v[(r + top) * W + c + left] = px[r * cols + c] / 255.0;
    ds.inputs.emplace_back(Shape{1, 1, H, W}, std::move(v));
    at = rl.offset();
    const std::uint8_t label = rl.u8("label");
    if (label >= num_classes) throw FormatError("label " + std::to_string(label) + " out of range", at);
    ds.labels.push_back(label);
  }
  if (!ri.at_end()) throw FormatError("trailing bytes after IDX images", ri.offset());
  if (!rl.at_end()) throw FormatError("trailing bytes after IDX labels", rl.offset());
  return ds;
}

LabeledDataset parse_cifar_bin(std::span<const std::uint8_t> bytes, CifarLabel which, const std::string& split) {
  constexpr std::size_t kRecord = 3074;
  if (bytes.size() % kRecord != 0) {
    throw FormatError("CIFAR file length " + std::to_string(bytes.size()) + " is not a multiple of 3074",
                      bytes.size() - bytes.size() % kRecord);
  }
  LabeledDataset ds;
  ds.num_classes = which == CifarLabel::fine ? 100 : 20;
  ds.split = split;
  for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
    const std::uint8_t coarse = bytes[off], fine = bytes[off + 1];
    const std::uint8_t label = which == CifarLabel::fine ? fine : coarse;
    if (label >= ds.num_classes) {
      throw ValidationError(std::string(which == CifarLabel::fine ? "fine" : "coarse") + " label " +
                            std::to_string(label) + " out of range at byte offset " +
                            std::to_string(off + (which == CifarLabel::fine ? 1 : 0)));
    }
    std::vector<double> v(3072);
    for (std::size_t i = 0; i < 3072; ++i) v[i] = bytes[off + 2 + i] / 255.0;
    ds.inputs.emplace_back(Shape{1, 3, 32, 32}, std::move(v));
    ds.labels.push_back(label);
  }
  return ds;
}

Bytes maybe_gunzip(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) return Bytes(bytes.begin(), bytes.end());
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw std::runtime_error("zlib init failed");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  Bytes out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const std::size_t at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream", at);
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      const std::size_t at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream", at);
    }
  }
  inflateEnd(&zs);
  return out;
}

namespace {

Bytes read_plain_or_gz(const std::filesystem::path& base) {
  if (std::filesystem::exists(base)) return maybe_gunzip(read_file(base));
  std::filesystem::path gz = base;
  gz += ".gz";
  if (std::filesystem::exists(gz)) return maybe_gunzip(read_file(gz));
  throw std::runtime_error("missing dataset file " + base.string() + "[.gz]");
}

}  // namespace

LabeledDataset load_mnist(const std::filesystem::path& dir, const std::string& split) {
  const Bytes images = read_plain_or_gz(dir / (split + "-images-idx3-ubyte"));
  const Bytes labels = read_plain_or_gz(dir / (split + "-labels-idx1-ubyte"));
  return parse_idx(images, labels, 32, 10, split == "t10k" ? "test" : "train");
}

LabeledDataset synth_gesture_dataset(std::size_t n, std::uint64_t seed, std::size_t side, std::size_t T,
                                     std::size_t classes, std::uint64_t duration_us) {
  if (classes < 1 || classes > kGestureClasses) throw ValidationError("gesture classes must be in [1, 11]");
  LabeledDataset ds;
  ds.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % classes;
    const EventStream ev = synth_gesture_stream(cls, seed + i, side, side, duration_us);
    ds.inputs.push_back(events_to_frames(ev, T).data);
    ds.labels.push_back(cls);
  }
  return ds;
}

LabeledDataset synth_blob_dataset(std::size_t n, std::uint64_t seed, std::size_t side, std::size_t classes) {
  if (side < 1 || classes < 1) throw ValidationError("blob dataset needs side >= 1 and classes >= 1");
  LabeledDataset ds;
  ds.num_classes = classes;
  Rng rng(seed);
  const double S = static_cast<double>(side);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> img(side * side, 0.0);
    for (int b = 0; b < 2; ++b) {
      const double cy = rng.uniform(0, S), cx = rng.uniform(0, S), w = rng.uniform(1, 3);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          img[y * side + x] += std::exp(-(dy * dy + dx * dx) / (2 * w * w));
        }
    }
    const double peak = *std::max_element(img.begin(), img.end());
    for (auto& v : img) v /= peak;
    ds.inputs.emplace_back(Shape{1, 1, side, side}, std::move(img));
    ds.labels.push_back(i % classes);
  }
  return ds;
}

void verify_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ValidationError("cannot open manifest " + manifest.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string digest, name;
    ls >> digest >> name;
    if (!name.empty() && name[0] == '*') name.erase(0, 1);
    if (digest.size() != 64 || name.empty()) {
      throw ValidationError("manifest line " + std::to_string(lineno) + " is not '<sha256>  <file>'");
    }
    const auto path = manifest.parent_path() / name;
    if (!std::filesystem::exists(path)) throw ValidationError("manifest names missing file " + path.string());
    const std::string actual = sha256_hex(read_file(path));
    if (actual != digest) {
      throw ValidationError("SHA-256 mismatch for " + path.string() + ": manifest " + digest + ", file " + actual);
    }
  }
}

}  // namespace spikeleak
