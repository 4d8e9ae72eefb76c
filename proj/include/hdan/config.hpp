#pragma once

#include <string>

#include "hdan/network.hpp"
#include "hdan/training.hpp"

namespace hdan {

// Network and training settings read together from one INI-style file with
// [network] and [training] sections; keys mirror the struct field names.
struct ConfigFile {
    NetworkConfig network;
    TrainConfig training;
};

// Applies the file on top of the passed defaults, so callers layer their own
// precedence (flags beat file values by being applied afterwards). Unknown
// sections, unknown keys, and unparsable values are usage errors that name
// the offending line.
ConfigFile read_config_file(const std::string& path,
                            const NetworkConfig& net_defaults = {},
                            const TrainConfig& train_defaults = {});

// One key=value line per setting, the shape read_config_file accepts.
std::string render_config(const NetworkConfig& net, const TrainConfig& train);

}  // namespace hdan
