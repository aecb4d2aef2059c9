#include "headmotion/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <zlib.h>

#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"
#include "headmotion/log.hpp"

namespace headmotion {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::T1: return "T1";
    case Modality::T2: return "T2";
    case Modality::FLAIR: return "FLAIR";
    case Modality::Synthetic: return "synthetic";
  }
  return "synthetic";
}

Modality parse_modality(std::string_view text) {
  if (text == "T1") return Modality::T1;
  if (text == "T2") return Modality::T2;
  if (text == "FLAIR") return Modality::FLAIR;
  if (text == "synthetic") return Modality::Synthetic;
  throw Error(ErrorKind::Parse, "unknown modality '" + std::string(text) + "'");
}

Volume::Volume(std::array<int, 3> dims, std::array<double, 3> voxel_size, Modality modality)
    : dims_(dims), voxel_size_(voxel_size), modality_(modality) {
  validate();
  data_.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
}

Volume::Volume(std::array<int, 3> dims, std::array<double, 3> voxel_size,
               std::vector<std::uint16_t> data, Modality modality)
    : dims_(dims), voxel_size_(voxel_size), data_(std::move(data)), modality_(modality) {
  validate();
  const std::size_t expected = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (data_.size() != expected) {
    throw Error(ErrorKind::InvalidVolume, "data length " + std::to_string(data_.size()) +
                                              " does not match dims product " +
                                              std::to_string(expected));
  }
}

void Volume::validate() const {
  for (int d : dims_) {
    if (d <= 0) throw Error(ErrorKind::InvalidVolume, "volume dims must be positive");
  }
  for (double v : voxel_size_) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::InvalidVolume, "voxel sizes must be positive");
    }
  }
}

}  // namespace headmotion

namespace headmotion::io {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kFloat32 = 16;
constexpr std::int16_t kUint16 = 512;

std::string read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw Error(ErrorKind::Truncated, "corrupt compressed stream in " + path.string());
  return out;
}

template <typename T>
T load(const std::string& bytes, std::size_t offset, bool swap) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  if (swap) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  return v;
}

template <typename T>
void store(std::string& bytes, std::size_t offset, T v) {
  std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

std::uint16_t to_uint16(double v) {
  if (!std::isfinite(v)) return 0;
  return static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "no such file " + path.string());
  const std::string bytes = read_all(path);
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorKind::Truncated, "header: file holds " + std::to_string(bytes.size()) +
                                          " bytes, need 348");
  }
  bool swap = false;
  const auto sizeof_hdr = load<std::int32_t>(bytes, 0, false);
  if (sizeof_hdr != kHeaderSize) {
    if (load<std::int32_t>(bytes, 0, true) == kHeaderSize) {
      swap = true;
    } else {
      throw Error(ErrorKind::BadMagic, "sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");
    }
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw Error(ErrorKind::BadMagic, "magic field is not \"n+1\"");
  }
  const auto ndim = load<std::int16_t>(bytes, 40, swap);
  if (ndim < 1 || ndim > 7) throw Error(ErrorKind::InvalidVolume, "dim[0] = " + std::to_string(ndim));
  std::array<int, 3> dims{1, 1, 1};
  for (int i = 0; i < 3; ++i) {
    if (i < ndim) dims[i] = load<std::int16_t>(bytes, 42 + 2 * i, swap);
    if (dims[i] <= 0) {
      throw Error(ErrorKind::InvalidVolume, "dim[" + std::to_string(i + 1) + "] is not positive");
    }
  }
  for (int i = 3; i < ndim; ++i) {
    if (load<std::int16_t>(bytes, 42 + 2 * i, swap) > 1) {
      throw Error(ErrorKind::InvalidVolume, "dim[" + std::to_string(i + 1) + "] > 1; only 3D volumes");
    }
  }
  std::array<double, 3> voxel{};
  for (int i = 0; i < 3; ++i) {
    const double p = std::abs(load<float>(bytes, 80 + 4 * i, swap));
    voxel[i] = p > 0.0 ? p : 1.0;
  }
  const auto datatype = load<std::int16_t>(bytes, 70, swap);
  std::size_t bytes_per_voxel = 0;
  switch (datatype) {
    case kInt16: bytes_per_voxel = 2; break;
    case kUint16: bytes_per_voxel = 2; break;
    case kFloat32: bytes_per_voxel = 4; break;
    default:
      throw Error(ErrorKind::UnsupportedDatatype,
                  "datatype code " + std::to_string(datatype) + " is not supported");
  }
  const double vox_offset_f = load<float>(bytes, 108, swap);
  if (!(vox_offset_f >= kHeaderSize)) {
    throw Error(ErrorKind::InvalidVolume, "vox_offset " + detail::format_double(vox_offset_f) + " < 348");
  }
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
  const float slope = load<float>(bytes, 112, swap);
  const float inter = load<float>(bytes, 116, swap);
  const bool scaled = slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f);

  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (bytes.size() < vox_offset + count * bytes_per_voxel) {
    throw Error(ErrorKind::Truncated, "payload: expected " + std::to_string(count * bytes_per_voxel) +
                                          " bytes after vox_offset, found " +
                                          std::to_string(bytes.size() > vox_offset ? bytes.size() - vox_offset : 0));
  }

  std::vector<std::uint16_t> data(count);
  bool lossy = false;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = vox_offset + i * bytes_per_voxel;
    double raw = 0.0;
    switch (datatype) {
      case kInt16: raw = load<std::int16_t>(bytes, off, swap); break;
      case kUint16: raw = load<std::uint16_t>(bytes, off, swap); break;
      case kFloat32: raw = load<float>(bytes, off, swap); break;
    }
    if (scaled) raw = raw * slope + inter;
    const std::uint16_t v = to_uint16(raw);
    if (static_cast<double>(v) != raw) lossy = true;
    data[i] = v;
  }
  if (lossy) {
    log_warning("read_nifti: " + path.string() + " rounded/clamped into the uint16 range");
  }

  Modality modality = Modality::Synthetic;
  const std::string descrip(bytes.data() + 148, strnlen(bytes.data() + 148, 80));
  if (const auto pos = descrip.find("modality="); pos != std::string::npos) {
    const auto value = descrip.substr(pos + 9, descrip.find(';', pos) - pos - 9);
    try {
      modality = parse_modality(value);
    } catch (const Error&) {
      log_warning("read_nifti: ignoring unknown modality tag '" + value + "'");
    }
  }
  return Volume(dims, voxel, std::move(data), modality);
}

void write_nifti(const Volume& volume, const std::filesystem::path& path) {
  const auto& dims = volume.dims();
  for (int d : dims) {
    if (d <= 0 || d > 32767) throw Error(ErrorKind::InvalidVolume, "dims must be in [1, 32767]");
  }
  if (volume.size() != static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]) {
    throw Error(ErrorKind::InvalidVolume, "data length does not match dims");
  }
  std::string bytes(kVoxOffset + volume.size() * 2, '\0');
  store<std::int32_t>(bytes, 0, kHeaderSize);
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(dims[0]), static_cast<std::int16_t>(dims[1]),
                               static_cast<std::int16_t>(dims[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(bytes, 40 + 2 * i, dim[i]);
  store<std::int16_t>(bytes, 70, kUint16);
  store<std::int16_t>(bytes, 72, 16);
  const float pixdim[8] = {1.0f, static_cast<float>(volume.voxel_size()[0]),
                           static_cast<float>(volume.voxel_size()[1]),
                           static_cast<float>(volume.voxel_size()[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) store<float>(bytes, 76 + 4 * i, pixdim[i]);
  store<float>(bytes, 108, static_cast<float>(kVoxOffset));
  store<float>(bytes, 112, 1.0f);
  store<float>(bytes, 116, 0.0f);
  bytes[123] = 2;  // xyzt_units: mm
  const std::string descrip = "modality=" + std::string(to_string(volume.modality()));
  std::memcpy(bytes.data() + 148, descrip.data(), std::min<std::size_t>(descrip.size(), 79));
  std::memcpy(bytes.data() + 344, "n+1\0", 4);
  std::memcpy(bytes.data() + kVoxOffset, volume.data().data(), volume.size() * 2);

  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (f == nullptr) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const int written = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int rc = gzclose(f);
    if (written != static_cast<int>(bytes.size()) || rc != Z_OK) {
      throw Error(ErrorKind::Io, "failed writing " + path.string());
    }
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
  }
}

namespace {

constexpr std::string_view kLogHeader = "t,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz";

}  // namespace

rigid::Trajectory read_tracking_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kLogHeader) {
    throw Error(ErrorKind::Parse, path.string() + ": header must be '" + std::string(kLogHeader) + "'");
  }
  rigid::Trajectory traj;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 13) {
      throw Error(ErrorKind::Parse, path.string() + ": row " + std::to_string(row) + " has " +
                                        std::to_string(fields.size()) + " fields, expected 13");
    }
    double v[13];
    for (int i = 0; i < 13; ++i) {
      const auto parsed = detail::parse_double(fields[i]);
      if (!parsed || !std::isfinite(*parsed)) {
        throw Error(ErrorKind::Parse, path.string() + ": row " + std::to_string(row) + " field " +
                                          std::to_string(i + 1) + " is not a number");
      }
      v[i] = *parsed;
    }
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = v[1 + 4 * r + c];
    }
    if (!rigid::RigidTransform::is_rigid(m)) {
      throw Error(ErrorKind::NonRigidRow,
                  path.string() + ": row " + std::to_string(row) + " is not a proper rigid transform");
    }
    if (!traj.empty() && !(v[0] > traj.samples().back().time)) {
      throw Error(ErrorKind::NonMonotonic, path.string() + ": timestamp at row " +
                                               std::to_string(row) + " does not increase");
    }
    traj.push_back({v[0], rigid::RigidTransform(m)});
  }
  return traj;
}

void write_tracking_log(const rigid::Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << kLogHeader << '\n';
  for (const auto& s : traj.samples()) {
    const auto& m = s.pose.matrix();
    out << detail::format_double(s.time);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) out << ',' << detail::format_double(m(r, c));
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace headmotion::io
