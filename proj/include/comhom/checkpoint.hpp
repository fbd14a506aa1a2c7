#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "comhom/params.hpp"

namespace comhom::nn {

// Checkpoint directory layout:
//   manifest.txt   header, free-form metadata, one line per parameter
//   <name>.bin     little-endian float32 values, row-major
// Metadata keys keep insertion order so rewrites are byte-stable.
struct CheckpointMeta {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value);
    const std::string* find(const std::string& key) const;
    const std::string& require(const std::string& key) const;
};

void save_checkpoint(const std::string& dir, const ParameterSet& params,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    ParameterSet params;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace comhom::nn
