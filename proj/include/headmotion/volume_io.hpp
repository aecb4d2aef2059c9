#pragma once

#include <filesystem>

#include "headmotion/rigid_motion.hpp"
#include "headmotion/volume.hpp"

namespace headmotion::io {

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz). Supports int16, uint16 and float32
/// payloads; non-uint16 data is rounded and clamped into [0, 65535]. scl_slope/scl_inter are
/// applied when the slope is nonzero.
Volume read_nifti(const std::filesystem::path& path);

/// Writes NIfTI-1 uint16 with vox_offset 352, scl_slope 1, scl_inter 0. A ".gz" suffix
/// selects gzip compression.
void write_nifti(const Volume& volume, const std::filesystem::path& path);

/// Tracking log CSV: `t,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz`.
rigid::Trajectory read_tracking_log(const std::filesystem::path& path);
void write_tracking_log(const rigid::Trajectory& traj, const std::filesystem::path& path);

}  // namespace headmotion::io
