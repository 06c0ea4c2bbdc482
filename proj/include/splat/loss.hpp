#pragma once

#include "splat/raster_forward.hpp"

namespace splat {

/// Sum over pixels and channels of (image - target)^2.
inline double l2_loss(const ImageBuffer& image, const ImageBuffer& target) {
    if (image.width != target.width || image.height != target.height)
        throw Error(ErrorKind::invalid_input, "l2_loss: image sizes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        sum += (image.pixels[i] - target.pixels[i]).squaredNorm();
    return sum;
}

inline ImageBuffer l2_loss_gradient(const ImageBuffer& image, const ImageBuffer& target) {
    if (image.width != target.width || image.height != target.height)
        throw Error(ErrorKind::invalid_input, "l2_loss_gradient: image sizes differ");
    ImageBuffer d(image.width, image.height);
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        d.pixels[i] = 2.0 * (image.pixels[i] - target.pixels[i]);
    return d;
}

}  // namespace splat
