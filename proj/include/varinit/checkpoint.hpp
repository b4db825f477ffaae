#pragma once

#include <iosfwd>
#include <string>

#include "varinit/layers.hpp"

namespace varinit {

/// Text checkpoint, format "varinit-checkpoint v1": one header line per
/// layer (kind + geometry) followed by its tensors in hexfloat, so the
/// round trip is lossless at fp64.
void save_checkpoint(Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

void write_network(Network& net, std::ostream& out);
Network read_network(std::istream& in);

}  // namespace varinit
