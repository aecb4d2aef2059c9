#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace headmotion {

enum class Modality { T1, T2, FLAIR, Synthetic };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view text);

/// 3D unsigned 16-bit image in x-fastest order with voxel size in mm.
class Volume {
 public:
  Volume() = default;
  Volume(std::array<int, 3> dims, std::array<double, 3> voxel_size,
         Modality modality = Modality::Synthetic);
  Volume(std::array<int, 3> dims, std::array<double, 3> voxel_size, std::vector<std::uint16_t> data,
         Modality modality = Modality::Synthetic);

  const std::array<int, 3>& dims() const { return dims_; }
  const std::array<double, 3>& voxel_size() const { return voxel_size_; }
  Modality modality() const { return modality_; }
  void set_modality(Modality m) { modality_ = m; }

  std::size_t size() const { return data_.size(); }
  std::vector<std::uint16_t>& data() { return data_; }
  const std::vector<std::uint16_t>& data() const { return data_; }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_[1]) * z);
  }
  std::uint16_t& at(int x, int y, int z) { return data_[index(x, y, z)]; }
  std::uint16_t at(int x, int y, int z) const { return data_[index(x, y, z)]; }

  bool same_geometry(const Volume& other) const {
    return dims_ == other.dims_ && voxel_size_ == other.voxel_size_;
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  void validate() const;

  std::array<int, 3> dims_{0, 0, 0};
  std::array<double, 3> voxel_size_{1.0, 1.0, 1.0};
  std::vector<std::uint16_t> data_;
  Modality modality_ = Modality::Synthetic;
};

}  // namespace headmotion
