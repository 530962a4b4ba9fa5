#pragma once

// Loader for the line-oriented `.sysdl` model format (see docs/sysdl.md).

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "symcon/model.hpp"
#include "symcon/network.hpp"

namespace symcon {

struct LoadedModel {
  std::string source;
  std::optional<NetworkSpec> network;        // set when the file declares nodes
  std::shared_ptr<const SystemModel> model;  // the flat model (assembled for networks)

  const SystemModel& system() const { return *model; }
  bool is_network() const { return network.has_value(); }
};

/// Parse errors are ParseError with the line and column in the file.
LoadedModel parse_model(std::string_view text, const std::string& source = "<text>");
LoadedModel load_model(const std::string& path);

}  // namespace symcon
