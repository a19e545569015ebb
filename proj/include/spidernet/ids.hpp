#pragma once

#include <compare>
#include <cstdint>

namespace spidernet {

// Opaque identifier, unique and never reused within one model's lifetime.
template <typename Tag>
struct Id {
  std::uint32_t value = 0;
  auto operator<=>(const Id&) const = default;
};

using NodeId = Id<struct NodeTag>;
using EdgeId = Id<struct EdgeTag>;
using CellId = Id<struct CellTag>;

}  // namespace spidernet
