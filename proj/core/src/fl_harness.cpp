#include "spikeleak/fl_harness.hpp"

#include <algorithm>

#include "spikeleak/digest.hpp"
#include "spikeleak/errors.hpp"

namespace spikeleak {

namespace {
constexpr std::uint32_t kVersion = 1;
}

SpecHash spec_hash(const ModelSpec& spec) {
  const std::string d = spec.descriptor();
  return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(d.data()), d.size()));
}

Bytes encode_gradient_message(const GradientMessage& m) {
  ByteWriter w;
  w.magic("GMSG");
  w.u32(kVersion);
  w.u64(m.client_id);
  w.u32(m.round);
  w.bytes(m.spec_hash);
  w.u32(m.timesteps);
  w.u32(m.batch_size);
  w.u32(static_cast<std::uint32_t>(m.payload.size()));
  for (const auto& t : m.payload.entries) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

GradientMessage decode_gradient_message(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("GMSG", "gradient message");
  std::size_t at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) throw FormatError("unsupported GMSG version " + std::to_string(version), at);
  GradientMessage m;
  m.client_id = r.u64("client id");
  m.round = r.u32("round");
  const auto h = r.bytes(32, "spec hash");
  std::copy(h.begin(), h.end(), m.spec_hash.begin());
  m.timesteps = r.u32("timesteps");
  m.batch_size = r.u32("batch size");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    at = r.offset();
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank < 1 || rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " outside [1, 8]", at);
    Shape s;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      at = r.offset();
      const std::uint32_t d = r.u32("tensor dim");
      if (d == 0) throw FormatError("zero tensor dimension", at);
      if (d > r.remaining() / 8 / n) throw FormatError("tensor dims exceed remaining payload", at);
      n *= d;
      s.push_back(d);
    }
    r.require(n * 8, "tensor payload");
    std::vector<double> v(n);
    for (auto& e : v) e = r.f64("value");
    m.payload.entries.emplace_back(std::move(s), std::move(v));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after GMSG payload", r.offset());
  return m;
}

Bytes client_round(const ClientState& client, std::size_t sample_index, std::uint32_t round) {
  if (sample_index >= client.samples.size()) {
    throw UsageError("client " + std::to_string(client.client_id) + " has no sample " + std::to_string(sample_index));
  }
  GradientMessage m;
  m.client_id = client.client_id;
  m.round = round;
  m.spec_hash = spec_hash(client.spec);
  m.timesteps = static_cast<std::uint32_t>(client.spec.kind == ModelKind::snn ? client.spec.timesteps : 1);
  m.batch_size = 1;
  m.payload = compute_victim_gradients(client.spec, client.params, client.samples.inputs[sample_index],
                                       client.samples.labels[sample_index]);
  return encode_gradient_message(m);
}

GradientSet server_aggregate(std::span<const GradientMessage> msgs) {
  if (msgs.empty()) throw ProtocolError("no messages to aggregate");
  const GradientMessage& first = msgs.front();
  std::vector<std::vector<double>> sum;
  for (const auto& t : first.payload.entries) sum.emplace_back(t.numel(), 0.0);
  for (const auto& m : msgs) {
    if (m.spec_hash != first.spec_hash) {
      throw ProtocolError("client " + std::to_string(m.client_id) + " trained a different model (spec hash mismatch)");
    }
    if (m.payload.size() != first.payload.size()) throw ProtocolError("messages differ in tensor count");
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (m.payload[i].shape() != first.payload[i].shape()) throw ProtocolError("messages differ in tensor shapes");
      const auto d = m.payload[i].data();
      for (std::size_t j = 0; j < d.size(); ++j) sum[i][j] += d[j];
    }
  }
  GradientSet out;
  const double k = static_cast<double>(msgs.size());
  for (std::size_t i = 0; i < sum.size(); ++i) {
    for (auto& v : sum[i]) v /= k;
    out.entries.emplace_back(first.payload[i].shape(), std::move(sum[i]));
  }
  return out;
}

std::vector<GradientMessage> receive(std::span<const Bytes> wire) {
  std::vector<GradientMessage> out;
  out.reserve(wire.size());
  for (const auto& frame : wire) out.push_back(decode_gradient_message(frame));
  return out;
}

std::vector<Interception> eavesdrop(std::span<const Bytes> wire) {
  std::vector<Interception> out;
  out.reserve(wire.size());
  for (const auto& frame : wire) {
    GradientMessage m = decode_gradient_message(frame);
    out.push_back({m.client_id, std::move(m.payload)});
  }
  return out;
}

}  // namespace spikeleak
