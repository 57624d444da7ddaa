#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace airtown {

struct item_delta {
  std::vector<double> delta_q;
  double delta_b = 0.0;
  std::uint32_t weight = 1;

  friend bool operator==(const item_delta&, const item_delta&) = default;
};

/// The only client-to-server training message. It carries item-side deltas
/// and round metadata; user-side parameters have no representation here.
struct client_update {
  std::string client_round_token;
  std::uint64_t base_version = 0;
  std::map<std::string, item_delta, std::less<>> items;

  friend bool operator==(const client_update&, const client_update&) = default;
};

}  // namespace airtown
