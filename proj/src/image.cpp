#include "tangentfuse/image.hpp"

#include <algorithm>

#include "tangentfuse/errors.hpp"

namespace tfuse {

Image::Image(int w, int h, int ch, double fill, bool valid)
    : width(w), height(h), channels(ch) {
  if (w < 1 || h < 1) throw ParameterError("image dimensions must be positive");
  if (ch != 1 && ch != 3) throw ParameterError("images have 1 or 3 channels");
  values.assign(pixel_count() * static_cast<std::size_t>(ch), fill);
  mask.assign(pixel_count(), valid ? 1 : 0);
}

std::size_t Image::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

ErpImage::ErpImage(int w, int h, int ch, double fill, bool valid) : Image(w, h, ch, fill, valid) {
  check_erp_dimensions(w, h);
}

TangentImage::TangentImage(const TangentCamera& cam, int ch, double fill, bool valid)
    : Image(cam.width_px, cam.height_px, ch, fill, valid), camera(cam) {}

}  // namespace tfuse
