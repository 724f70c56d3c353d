#include "spikeleak/spike_codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "spikeleak/errors.hpp"
#include "spikeleak/rng.hpp"

namespace spikeleak {

const char* to_string(SpikeModality m) {
  switch (m) {
    case SpikeModality::replicated_image: return "replicated_image";
    case SpikeModality::event_frames: return "event_frames";
    case SpikeModality::binary_spikes: return "binary_spikes";
    case SpikeModality::dense: return "dense";
  }
  return "?";
}

void SpikeTensor::validate() const {
  if (!data.defined() || data.rank() != 5) throw ValidationError("spike tensor must be rank 5 [T,B,C,H,W]");
  const auto d = data.data();
  switch (modality) {
    case SpikeModality::binary_spikes:
    case SpikeModality::event_frames:
      for (double v : d) {
        if (v != 0.0 && v != 1.0) throw ValidationError("binary spike tensor holds a value outside {0,1}");
      }
      break;
    case SpikeModality::replicated_image: {
      const std::size_t frame = data.numel() / data.dim(0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] < 0.0 || d[i] > 1.0) throw ValidationError("replicated image value outside [0,1]");
        if (d[i] != d[i % frame]) throw ValidationError("replicated image slices differ across T");
      }
      break;
    }
    case SpikeModality::dense:
      for (double v : d) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("spike tensor holds a negative or non-finite value");
      }
      break;
  }
}

void EventStream::validate() const {
  if (height == 0 || width == 0) throw ValidationError("event stream sensor size must be positive");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width || e.y >= height) {
      throw ValidationError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                            ") is outside the sensor");
    }
    if (e.p > 1) throw ValidationError("event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
    if (i > 0 && e.t_us < events[i - 1].t_us) {
      throw ValidationError("event timestamps decrease at index " + std::to_string(i));
    }
  }
}

namespace {

Tensor replicate(const Tensor& img, std::size_t T) {
  std::vector<double> v;
  v.reserve(img.numel() * T);
  for (std::size_t t = 0; t < T; ++t) v.insert(v.end(), img.data().begin(), img.data().end());
  Shape s{T};
  s.insert(s.end(), img.shape().begin(), img.shape().end());
  return Tensor(std::move(s), std::move(v));
}

}  // namespace

SpikeTensor replicate_image(const Tensor& img, std::size_t T) {
  if (img.rank() != 4) throw DimensionError("replicate_image expects [B,C,H,W], got " + shape_to_string(img.shape()));
  if (T < 1) throw ValidationError("replicate_image needs T >= 1");
  for (double v : img.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("image pixel outside [0,1]");
  }
  return SpikeTensor{replicate(img, T), SpikeModality::replicated_image, {}};
}

SpikeTensor events_to_frames(const EventStream& ev, std::size_t T) {
  if (ev.events.empty()) throw ValidationError("events_to_frames: empty event stream");
  if (T < 1) throw ValidationError("events_to_frames needs T >= 1");
  ev.validate();
  const std::size_t H = ev.height, W = ev.width;
  const std::uint64_t span = ev.events.back().t_us + 1;
  std::vector<double> v(T * 2 * H * W, 0.0);
  for (const Event& e : ev.events) {
    std::size_t bin;
    if (e.t_us <= std::numeric_limits<std::uint64_t>::max() / T) {
      bin = static_cast<std::size_t>(e.t_us * T / span);
    } else {
      bin = static_cast<std::size_t>(static_cast<long double>(e.t_us) * T / span);
    }
    bin = std::min(bin, T - 1);
    v[((bin * 2 + e.p) * H + e.y) * W + e.x] = 1.0;
  }
  return SpikeTensor{Tensor({T, 1, 2, H, W}, std::move(v)), SpikeModality::binary_spikes, {}};
}

namespace {

struct Blob {
  double cx, cy, r;
};

// Blob position and radius at normalized time u in [0,1] for each gesture class.
Blob trajectory(std::size_t cls, double u, double H, double W, double jx, double jy, double r0) {
  const double cx = (W - 1) / 2 + jx, cy = (H - 1) / 2 + jy;
  const double A = 0.32 * std::min(H, W);
  const double R = 0.25 * std::min(H, W);
  const double two_pi = 2 * std::numbers::pi;
  switch (cls) {
    case 0: return {cx - A + 2 * A * u, cy, r0};
    case 1: return {cx + A - 2 * A * u, cy, r0};
    case 2: return {cx, cy - A + 2 * A * u, r0};
    case 3: return {cx, cy + A - 2 * A * u, r0};
    case 4: return {cx + R * std::cos(two_pi * u), cy + R * std::sin(two_pi * u), r0};
    case 5: return {cx + R * std::cos(two_pi * u), cy - R * std::sin(two_pi * u), r0};
    case 6: return {cx - A + 2 * A * u, cy - A + 2 * A * u, r0};
    case 7: return {cx - A + 2 * A * u, cy + A - 2 * A * u, r0};
    case 8: return {cx, cy, 1.5 + (R + 1) * u};
    case 9: return {cx, cy, R + 2.5 - (R + 1) * u};
    default: return {cx + A * std::sin(2 * two_pi * u), cy, r0};
  }
}

bool inside(const Blob& b, std::size_t x, std::size_t y) {
  const double dx = static_cast<double>(x) - b.cx, dy = static_cast<double>(y) - b.cy;
  return dx * dx + dy * dy <= b.r * b.r;
}

}  // namespace

EventStream synth_gesture_stream(std::size_t class_id, std::uint64_t seed, std::size_t height, std::size_t width,
                                 std::uint64_t duration_us) {
  if (class_id >= kGestureClasses) {
    throw ValidationError("gesture class " + std::to_string(class_id) + " outside [0, " +
                          std::to_string(kGestureClasses) + ")");
  }
  if (height < 8 || width < 8) throw ValidationError("gesture sensor must be at least 8x8");
  if (duration_us < 1000) throw ValidationError("gesture duration must be at least 1000 us");
  Rng rng(derive_seed(seed, class_id));
  const double H = static_cast<double>(height), W = static_cast<double>(width);
  const double jx = rng.uniform(-0.08, 0.08) * W, jy = rng.uniform(-0.08, 0.08) * H;
  const double r0 = rng.uniform(0.1, 0.16) * std::min(H, W);
  const double phase = rng.uniform(-0.05, 0.05);
  const std::size_t steps = 200;
  const double noise_rate = 0.3;

  EventStream ev{height, width, {}};
  const double dt = static_cast<double>(duration_us) / static_cast<double>(steps);
  auto stamp = [&](std::size_t k) {
    const double t = (static_cast<double>(k) - 1.0 + rng.uniform()) * dt;
    return static_cast<std::uint64_t>(std::clamp(t, 0.0, static_cast<double>(duration_us - 1)));
  };
  auto clamp_u = [](double u) { return std::clamp(u, 0.0, 1.0); };
  Blob prev = trajectory(class_id, clamp_u(phase), H, W, jx, jy, r0);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double u = clamp_u(static_cast<double>(k) / static_cast<double>(steps) + phase);
    const Blob cur = trajectory(class_id, u, H, W, jx, jy, r0);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const bool was = inside(prev, x, y), is = inside(cur, x, y);
        if (was == is) continue;
        ev.events.push_back({stamp(k), static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                             static_cast<std::uint8_t>(is ? 1 : 0)});
      }
    }
    if (rng.uniform() < noise_rate) {
      ev.events.push_back({stamp(k), static_cast<std::uint16_t>(rng.index(width)),
                           static_cast<std::uint16_t>(rng.index(height)), static_cast<std::uint8_t>(rng.index(2))});
    }
    prev = cur;
  }
  std::stable_sort(ev.events.begin(), ev.events.end(),
                   [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
  return ev;
}

SpikeTensor init_dummy_image(const Shape& shape, std::uint64_t seed) {
  if (shape.size() != 5) throw DimensionError("init_dummy_image expects [T,B,C,H,W], got " + shape_to_string(shape));
  const Shape img_shape(shape.begin() + 1, shape.end());
  Rng rng(seed);
  std::vector<double> v(shape_numel(img_shape));
  for (auto& x : v) x = rng.uniform(0.45, 0.55);
  Tensor img(img_shape, std::move(v));
  img.set_requires_grad(true);
  return SpikeTensor{replicate(img, shape[0]), SpikeModality::replicated_image, img};
}

SpikeTensor init_dummy_spikes(const Shape& shape, double sigma, std::uint64_t seed) {
  if (shape.size() != 5) throw DimensionError("init_dummy_spikes expects [T,B,C,H,W], got " + shape_to_string(shape));
  if (!(sigma > 0.0)) throw ValidationError("init_dummy_spikes needs sigma > 0");
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = std::abs(sigma * rng.normal());
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return SpikeTensor{t, SpikeModality::dense, {}};
}

namespace {
constexpr std::uint32_t kSpktVersion = 1;
constexpr std::size_t kEventRecordBytes = 13;
}  // namespace

Bytes encode_spike_tensor(const Tensor& t) {
  if (!t.defined()) throw UsageError("encode_spike_tensor: undefined tensor");
  ByteWriter w;
  w.magic("SPKT");
  w.u32(kSpktVersion);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("SPKT dimension exceeds u32");
    w.u32(static_cast<std::uint32_t>(d));
  }
  for (double v : t.data()) w.f32(static_cast<float>(v));
  return w.take();
}

Tensor decode_spike_tensor(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SPKT", "SPKT spike tensor");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kSpktVersion) throw FormatError("unsupported SPKT version " + std::to_string(version), version_at);
  const std::size_t ndims_at = r.offset();
  const std::uint32_t ndims = r.u32("dims count");
  if (ndims == 0 || ndims > 8) throw FormatError("SPKT dims count " + std::to_string(ndims) + " outside [1,8]", ndims_at);
  Shape shape;
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t d = r.u32("dim");
    if (d == 0) throw FormatError("SPKT dimension is zero", at);
    if (numel > std::numeric_limits<std::size_t>::max() / 4 / d) throw FormatError("SPKT dimensions overflow", at);
    numel *= d;
    shape.push_back(d);
  }
  r.require(numel * 4, "SPKT payload");
  std::vector<double> v(numel);
  for (auto& x : v) x = r.f32();
  if (!r.at_end()) throw FormatError("trailing bytes after SPKT payload", r.offset());
  return Tensor(std::move(shape), std::move(v));
}

void write_spike_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_spike_tensor(t)); }
Tensor read_spike_tensor(const std::filesystem::path& path) { return decode_spike_tensor(read_file(path)); }

Bytes encode_event_stream(const EventStream& ev) {
  if (ev.events.empty()) throw ValidationError("refusing to write an empty event stream");
  ev.validate();
  ByteWriter w;
  w.magic("EVST");
  w.u32(static_cast<std::uint32_t>(ev.height));
  w.u32(static_cast<std::uint32_t>(ev.width));
  w.u64(ev.events.size());
  for (const Event& e : ev.events) {
    w.u64(e.t_us);
    w.u16(e.x);
    w.u16(e.y);
    w.u8(e.p);
  }
  return w.take();
}

EventStream decode_event_stream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("EVST", "EVST event stream");
  EventStream ev;
  ev.height = r.u32("sensor height");
  ev.width = r.u32("sensor width");
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.u64("event count");
  if (count > r.remaining() / kEventRecordBytes) {
    throw FormatError("truncated EVST records: expected " + std::to_string(count) + " x " +
                          std::to_string(kEventRecordBytes) + " bytes, found " + std::to_string(r.remaining()),
                      count_at);
  }
  ev.events.resize(count);
  for (auto& e : ev.events) {
    const std::size_t at = r.offset();
    e.t_us = r.u64("event t");
    e.x = r.u16("event x");
    e.y = r.u16("event y");
    e.p = r.u8("event p");
    if (e.x >= ev.width || e.y >= ev.height || e.p > 1) throw FormatError("EVST event outside sensor or bad polarity", at);
    if (&e != ev.events.data() && e.t_us < (&e - 1)->t_us) throw FormatError("EVST timestamps decrease", at);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after EVST records", r.offset());
  return ev;
}

void write_event_stream(const std::filesystem::path& path, const EventStream& ev) {
  write_file(path, encode_event_stream(ev));
}
EventStream read_event_stream(const std::filesystem::path& path) { return decode_event_stream(read_file(path)); }

}  // namespace spikeleak
