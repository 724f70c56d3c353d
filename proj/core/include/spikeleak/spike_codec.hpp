#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spikeleak/binary_io.hpp"
#include "spikeleak/tensor.hpp"

namespace spikeleak {

/// dense marks real-valued non-negative tensors such as an optimized spike dummy before
/// thresholding.
enum class SpikeModality { replicated_image, event_frames, binary_spikes, dense };

const char* to_string(SpikeModality m);

/// Rank-5 [T,B,C,H,W] input. For a replicated image, `image` is the underlying
/// [B,C,H,W] tensor (an optimization leaf for image dummies) and `data` its detached
/// replication over T.
struct SpikeTensor {
  Tensor data;
  SpikeModality modality = SpikeModality::dense;
  Tensor image;

  std::size_t timesteps() const { return data.dim(0); }
  /// Tensor to feed the model: the shared image when present, otherwise data.
  const Tensor& model_input() const { return image.defined() ? image : data; }
  /// Throws ValidationError when the modality invariants do not hold.
  void validate() const;
};

struct Event {
  std::uint64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t p = 0;

  bool operator==(const Event&) const = default;
};

/// Events from a (height x width) sensor. Timestamps count from the start of the
/// recording, so the stream covers [0, last timestamp].
struct EventStream {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Event> events;

  void validate() const;
  bool operator==(const EventStream&) const = default;
};

/// Repeats a [B,C,H,W] image in [0,1] over T steps.
SpikeTensor replicate_image(const Tensor& img, std::size_t T);

/// Splits [0, t_last] into T equal bins and marks each (t, polarity, y, x) cell that
/// received at least one event. Output is [T,1,2,H,W] with values in {0,1}.
SpikeTensor events_to_frames(const EventStream& ev, std::size_t T);

inline constexpr std::size_t kGestureClasses = 11;

/// Deterministic synthetic gesture: a blob following a class-specific trajectory
/// (translations, rotations, zoom, shake), emitting ON events where it arrives and OFF
/// events where it leaves, plus sparse sensor noise.
EventStream synth_gesture_stream(std::size_t class_id, std::uint64_t seed, std::size_t height, std::size_t width,
                                 std::uint64_t duration_us);

/// One image per batch entry drawn from U(0.45, 0.55), shared across T. shape is
/// [T,B,C,H,W]; the returned image leaf requires grad.
SpikeTensor init_dummy_image(const Shape& shape, std::uint64_t seed);

/// |N(0, sigma)| in every cell of a [T,B,C,H,W] leaf that requires grad.
SpikeTensor init_dummy_spikes(const Shape& shape, double sigma, std::uint64_t seed);

// SPKT: "SPKT", u32 version, u32 ndims, u32 dims, f32 payload (little-endian).
Bytes encode_spike_tensor(const Tensor& t);
Tensor decode_spike_tensor(std::span<const std::uint8_t> bytes);
void write_spike_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_spike_tensor(const std::filesystem::path& path);

// EVST: "EVST", u32 H, u32 W, u64 count, then 13-byte records (u64 t_us, u16 x, u16 y, u8 p).
Bytes encode_event_stream(const EventStream& ev);
EventStream decode_event_stream(std::span<const std::uint8_t> bytes);
void write_event_stream(const std::filesystem::path& path, const EventStream& ev);
EventStream read_event_stream(const std::filesystem::path& path);

}  // namespace spikeleak
