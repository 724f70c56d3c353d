#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spikeleak/binary_io.hpp"
#include "spikeleak/datasets.hpp"
#include "spikeleak/digest.hpp"
#include "spikeleak/model.hpp"

namespace spikeleak {

using SpecHash = Sha256;

/// SHA-256 of the model descriptor string.
SpecHash spec_hash(const ModelSpec& spec);

/// One FL client. params is the shared global model snapshot; it is never modified here.
struct ClientState {
  std::uint64_t client_id = 0;
  LabeledDataset samples;
  ModelSpec spec;
  ParameterSet params;
};

/// What travels from client to server: gradients plus public hyperparameters only.
struct GradientMessage {
  std::uint64_t client_id = 0;
  std::uint32_t round = 0;
  SpecHash spec_hash{};
  std::uint32_t timesteps = 1;
  std::uint32_t batch_size = 1;
  GradientSet payload;
};

// GMSG: "GMSG", u32 version, u64 client_id, u32 round, 32-byte spec hash, u32 timesteps,
// u32 batch size, u32 tensor count, then per tensor: u32 rank, u32 dims, f64 payload.
// All integers little-endian.
Bytes encode_gradient_message(const GradientMessage& m);
GradientMessage decode_gradient_message(std::span<const std::uint8_t> bytes);

/// Per-sample gradient of the client's private sample, encoded for the wire.
Bytes client_round(const ClientState& client, std::size_t sample_index, std::uint32_t round);

/// Unweighted per-tensor mean. Throws ProtocolError when spec hashes or structures differ.
GradientSet server_aggregate(std::span<const GradientMessage> msgs);

/// Decodes every frame on the wire; the server side of a round.
std::vector<GradientMessage> receive(std::span<const Bytes> wire);

struct Interception {
  std::uint64_t client_id = 0;
  GradientSet gradients;
};

/// Passive eavesdropper: per-client gradients exactly as transmitted.
std::vector<Interception> eavesdrop(std::span<const Bytes> wire);

}  // namespace spikeleak
