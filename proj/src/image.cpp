#include "frameprobe/image.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <vector>

#include "frameprobe/error.hpp"

namespace frameprobe {

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

std::string_view mime_type(ImageFormat f) {
  return f == ImageFormat::png ? "image/png" : "image/jpeg";
}

namespace {

std::optional<ImageFormat> sniff(std::string_view bytes) {
  if (bytes.size() >= 8 && bytes.substr(0, 8) == std::string_view("\x89PNG\r\n\x1a\n", 8)) {
    return ImageFormat::png;
  }
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageFormat::jpeg;
  }
  return std::nullopt;
}

cv::Mat decode(const std::string& bytes) {
  std::vector<uchar> buf(bytes.begin(), bytes.end());
  cv::Mat img = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (img.empty()) throw Error(Errc::DecodeError, "image bytes could not be decoded");
  return img;
}

std::string encode(const cv::Mat& img, ImageFormat format) {
  std::vector<uchar> out;
  std::vector<int> params;
  const char* ext = ".png";
  if (format == ImageFormat::jpeg) {
    ext = ".jpg";
    params = {cv::IMWRITE_JPEG_QUALITY, 95};
  } else {
    params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  }
  if (!cv::imencode(ext, img, out, params)) throw Error(Errc::DecodeError, "image encoding failed");
  return std::string(out.begin(), out.end());
}

}  // namespace

ImagePayload make_payload(std::string bytes) {
  auto format = sniff(bytes);
  if (!format) throw Error(Errc::DecodeError, "not a PNG or JPEG stream");
  cv::Mat img = decode(bytes);
  ImagePayload p;
  p.format = *format;
  p.width = img.cols;
  p.height = img.rows;
  p.digest = sha256_hex(bytes);
  p.bytes = std::move(bytes);
  return p;
}

ImagePayload load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingAsset, "cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return make_payload(std::move(bytes));
  } catch (const Error& e) {
    throw Error(Errc::DecodeError, path.string() + ": " + e.what());
  }
}

ResizeTarget parse_resize_target(std::string_view text) {
  auto x = text.find_first_of("xX");
  try {
    if (x != std::string_view::npos) {
      int w = std::stoi(std::string(text.substr(0, x)));
      int h = std::stoi(std::string(text.substr(x + 1)));
      if (w <= 0 || h <= 0) throw Error(Errc::InvalidParam, "resize dimensions must be positive");
      return PixelSize{w, h};
    }
    double s = std::stod(std::string(text));
    if (!(s > 0.0)) throw Error(Errc::InvalidParam, "scale factor must be positive");
    return s;
  } catch (const std::logic_error&) {
    throw Error(Errc::InvalidParam, "bad resolution '" + std::string(text) + "'");
  }
}

std::string to_string(const ResizeTarget& target) {
  if (const auto* s = std::get_if<PixelSize>(&target)) {
    return std::to_string(s->width) + "x" + std::to_string(s->height);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::get<double>(target));
  return buf;
}

ImagePayload preprocess_frame(const ImagePayload& image, const ResizeTarget& target) {
  PixelSize size;
  if (const auto* s = std::get_if<PixelSize>(&target)) {
    size = *s;
  } else {
    const double scale = std::get<double>(target);
    size = {static_cast<int>(std::lround(image.width * scale)),
            static_cast<int>(std::lround(image.height * scale))};
  }
  if (size.width <= 0 || size.height <= 0) {
    throw Error(Errc::InvalidParam, "target dimensions must be positive");
  }
  if (size.width == image.width && size.height == image.height) return image;

  cv::Mat src = decode(image.bytes);
  cv::Mat dst;
  const bool shrinking = size.width < src.cols && size.height < src.rows;
  cv::resize(src, dst, cv::Size(size.width, size.height), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return make_payload(encode(dst, image.format));
}

std::string synthetic_png(std::string_view seed_text, int width, int height) {
  const std::string digest = sha256_hex(seed_text);
  cv::Mat img(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * width + x) * 3;
      auto& px = img.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<uchar>(digest[(i + c) % digest.size()] * 3 + x * 7 + y * 13);
      }
    }
  }
  return encode(img, ImageFormat::png);
}

}  // namespace frameprobe
