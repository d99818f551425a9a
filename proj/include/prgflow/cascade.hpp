#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "prgflow/warp.hpp"

namespace prgflow {

// Ordered warp blocks, e.g. "T*2,S*2" (x and the multiplication sign are also
// accepted as the repeat marker).
struct CascadeConfig {
  std::vector<WarpModel> blocks;

  static CascadeConfig parse(std::string_view text);
  static CascadeConfig single(WarpModel m) { return {{m}}; }
  std::string to_string() const;
  void validate() const;
  std::size_t size() const { return blocks.size(); }
  bool operator==(const CascadeConfig&) const = default;
};

}  // namespace prgflow
