// Prior-field container: a little-endian binary body plus a JSON sidecar.
//
// Binary layout (all little-endian):
//   char[8]  magic "QSPRIOR1"
//   u32      max_degree L
//   u32      dimension J
//   u32      rank rule kind (0 = fixed, 1 = variance fraction)
//   i32      fixed rank
//   f64      variance fraction
//   i32[3]   grid dims
//   f64      noise variance (shared by all voxels)
//   u64      voxel count
//   per voxel, in (x, y, z) lexicographic order:
//     i32[3] index, f64[J] mean, f64[J(J+1)/2] covariance lower triangle, row-major
//
// Eigenpairs are not stored; they are recomputed from the covariance with
// the stored rank rule on load.
#pragma once

#include "qspace/prior.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace qspace {

/// Writes `path` and the sidecar `path` + ".json".
void save_prior_field(const PriorField& field, const std::filesystem::path& path);

PriorField load_prior_field(const std::filesystem::path& path);

std::string encode_prior_field(const PriorField& field);
PriorField decode_prior_field(const std::string& bytes);

nlohmann::json prior_field_sidecar(const PriorField& field);

}  // namespace qspace
