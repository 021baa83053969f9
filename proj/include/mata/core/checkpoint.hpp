#pragma once

#include <string>

#include "mata/core/param_store.hpp"

namespace mata::core {

// Checkpoint file layout: one line of JSON manifest
//   {"format_version":1,"params":[{"name":...,"shape":[...],"offset":B},...]}
// followed by a blob of little-endian float32 values in manifest order;
// offsets are byte positions within the blob. Values are stored at float32
// precision regardless of the in-memory double representation.
void save_checkpoint(const ParamStore& params, const std::string& path);

// Throws IoError on a missing file, malformed manifest, unsupported
// format_version, or a blob shorter than the manifest promises.
ParamStore load_checkpoint(const std::string& path);

}  // namespace mata::core
