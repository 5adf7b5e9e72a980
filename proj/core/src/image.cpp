#include "vsal/image.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

#include "vsal/errors.hpp"

namespace vsal {

ImageU8 read_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw DataError("failed to open png: " + path);

    ImageU8 out;
    out.height = static_cast<int>(image.height);
    out.width = static_cast<int>(image.width);
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    out.channels = gray ? 1 : 3;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError("failed to decode png: " + path);
    }
    return out;
}

void write_png(const std::string& path, const ImageU8& img) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
        throw DataError("failed to write png: " + path);
}

namespace {
std::uint8_t to_u8(double v) {
    const double q = std::round(v * 255.0);
    return static_cast<std::uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}
}  // namespace

Tensor rgb_to_tensor(const ImageU8& img) {
    if (img.channels != 3) throw DataError("expected 3-channel image");
    Tensor t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) t.at(c, y, x) = img.at(y, x, c) / 255.0;
    return t;
}

ImageU8 tensor_to_rgb(const Tensor& t) {
    if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("tensor_to_rgb: expected [3,H,W]");
    ImageU8 img;
    img.height = t.dim(1);
    img.width = t.dim(2);
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(img.height) * img.width * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = to_u8(t.at(c, y, x));
    return img;
}

Tensor gray_to_tensor(const ImageU8& img) {
    if (img.channels != 1) throw DataError("expected 1-channel image");
    Tensor t({img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) t.at(y, x) = img.at(y, x) / 255.0;
    return t;
}

ImageU8 tensor_to_gray(const Tensor& t) {
    if (t.ndim() != 2) throw ShapeError("tensor_to_gray: expected [H,W]");
    ImageU8 img;
    img.height = t.dim(0);
    img.width = t.dim(1);
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) img.at(y, x) = to_u8(t.at(y, x));
    return img;
}

Tensor quantize8(const Tensor& t) {
    Tensor out = t;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::round(out[i] * 255.0) / 255.0;
    return out;
}

}  // namespace vsal
