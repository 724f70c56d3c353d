#include "spikeleak/errors.hpp"

namespace spikeleak {

FormatError::FormatError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

}  // namespace spikeleak
