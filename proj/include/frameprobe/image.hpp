#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

namespace frameprobe {

std::string sha256_hex(std::string_view data);

enum class ImageFormat { png, jpeg };

std::string_view mime_type(ImageFormat f);

/// Encoded image bytes plus their content digest and pixel dimensions.
struct ImagePayload {
  std::string bytes;
  std::string digest;
  ImageFormat format = ImageFormat::png;
  int width = 0;
  int height = 0;
};

/// Decodes the header and pixels once; throws DecodeError when unreadable.
ImagePayload make_payload(std::string bytes);
ImagePayload load_image(const std::filesystem::path& path);

struct PixelSize {
  int width = 0;
  int height = 0;
  bool operator==(const PixelSize&) const = default;
};

/// Either exact output dimensions or a uniform scale factor.
using ResizeTarget = std::variant<PixelSize, double>;

/// Parses "563x256" or "0.5".
ResizeTarget parse_resize_target(std::string_view text);
std::string to_string(const ResizeTarget& target);

/// Downscales to the target. Returns the input unchanged when the target equals
/// the source size.
ImagePayload preprocess_frame(const ImagePayload& image, const ResizeTarget& target);

/// Small deterministic PNG, used to build synthetic corpora.
std::string synthetic_png(std::string_view seed_text, int width, int height);

}  // namespace frameprobe
