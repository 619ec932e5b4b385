#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace sigma {

// Single-channel raster, row-major.
template <class T>
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& at(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  // Rvalue overload returns by value so range-for over a temporary is safe.
  std::vector<T>& storage() & noexcept { return data_; }
  const std::vector<T>& storage() const& noexcept { return data_; }
  std::vector<T> storage() && noexcept { return std::move(data_); }

  bool same_size(std::size_t w, std::size_t h) const noexcept { return w == width_ && h == height_; }
  template <class U>
  bool same_size(const Plane<U>& o) const noexcept {
    return o.width() == width_ && o.height() == height_;
  }

  friend bool operator==(const Plane& a, const Plane& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

// {0,1} masks in memory, 8-bit maps (pixel differences).
using ByteMap = Plane<std::uint8_t>;
// Probabilities, attention and intent maps.
using RealMap = Plane<double>;

// Interleaved 8-bit RGB.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width_(width), height_(height), data_(width * height * 3, fill) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return data_[(y * width_ + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return data_[(y * width_ + x) * 3 + c];
  }
  std::uint8_t* data() noexcept { return data_.data(); }
  const std::uint8_t* data() const noexcept { return data_.data(); }
  std::size_t byte_size() const noexcept { return data_.size(); }
  std::vector<std::uint8_t>& storage() & noexcept { return data_; }
  const std::vector<std::uint8_t>& storage() const& noexcept { return data_; }
  std::vector<std::uint8_t> storage() && noexcept { return std::move(data_); }

  bool same_size(const RgbImage& o) const noexcept {
    return o.width_ == width_ && o.height_ == height_;
  }

  friend bool operator==(const RgbImage& a, const RgbImage& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> data_;
};

RgbImage flip_horizontal(const RgbImage& img);
template <class T>
Plane<T> flip_horizontal(const Plane<T>& p) {
  Plane<T> out(p.width(), p.height());
  for (std::size_t y = 0; y < p.height(); ++y)
    for (std::size_t x = 0; x < p.width(); ++x) out.at(x, y) = p.at(p.width() - 1 - x, y);
  return out;
}

}  // namespace sigma
