#pragma once

#include <string_view>

namespace ntkdfl {

std::string_view version();
std::string_view build_revision();

}  // namespace ntkdfl
