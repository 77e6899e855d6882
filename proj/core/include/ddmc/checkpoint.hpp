#pragma once

#include <string>

#include "ddmc/config.hpp"
#include "ddmc/model.hpp"
#include "ddmc/trainer.hpp"

namespace ddmc {

// Everything needed to re-evaluate a finished run: the exact configuration
// text plus every parameter array and the frozen cluster centers.
// Assignments are not stored; they are recomputed from the latents, which
// the saved state determines completely.
struct RestoredRun {
  RunConfig cfg;
  DdmcModel model;
  ClusterState clusters;
};

// Binary container: magic "DMCK", format version, a hash-guarded copy of
// the canonical config text, then named little-endian f64 arrays.
void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const DdmcModel& model, const ClusterState& clusters);

// Throws IoError when unreadable and ParseError (with a byte offset) on any
// structural problem, including a config text that fails its stored hash.
RestoredRun load_checkpoint(const std::string& path);

}  // namespace ddmc
