#pragma once

#include <string>

#include "spidernet/supernet.hpp"

namespace spidernet {

// Graphviz text with one cluster per cell. Input nodes are filled blue and
// every edge is labelled with its live operation kinds.
std::string export_dot(const SupernetModel& model);

}  // namespace spidernet
