#pragma once

#include <filesystem>

#include "fvd/preproc.hpp"

namespace fvd::preproc
{

/// Decodes any PNG into 8-bit RGB (alpha dropped, gray expanded).
RasterImage read_png(const std::filesystem::path & path);

/// Writes 8-bit RGB with no timestamp chunk, so output bytes depend only on pixels.
void write_png(const RasterImage & img, const std::filesystem::path & path);

}  // namespace fvd::preproc
