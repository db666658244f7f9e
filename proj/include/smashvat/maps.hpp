#pragma once

#include <string>
#include <vector>

#include "smashvat/grid.hpp"

namespace smashvat {

/// Registry of the six canonical layouts. Throws std::out_of_range for
/// unknown names.
const GridLayout& layout_by_name(const std::string& name);

std::vector<std::string> layout_names();

}  // namespace smashvat
