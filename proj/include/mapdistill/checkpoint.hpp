#pragma once

#include "mapdistill/pipeline.hpp"

namespace mapdistill {

// Parameter checkpoint: a manifest of named sections, each section the flat
// tensor blob format (rank, dims, row-major f64, all little-endian).
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mapdistill
