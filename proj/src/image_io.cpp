#include <fnmatch.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lipres/error.hpp"
#include "lipres/imaging.hpp"

namespace lipres {

namespace fs = std::filesystem;

namespace {

// Reads the next whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5") throw Error(path.string() + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw Error(path.string() + ": malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw Error(path.string() + ": unsupported PGM geometry or maxval (8-bit only)");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw Error(path.string() + ": truncated PGM data");
  std::vector<float> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    data[i] = static_cast<float>(std::min<int>(raw[i], maxval) / static_cast<double>(maxval));
  return Image(w, h, std::move(data));
}

void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.pixels().size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels()[i], 0.0f, 1.0f) * 255.0f));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Image read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(path.string() + ": " + image.message);
  // Colour is decoded as RGB and reduced to luma (0.299, 0.587, 0.114) below.
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(path.string() + ": " + msg);
  }
  const int w = static_cast<int>(image.width), h = static_cast<int>(image.height);
  std::vector<float> data(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (channels == 1) {
      data[i] = static_cast<float>(buf[i] / 255.0);
    } else {
      const unsigned char* p = &buf[i * 3];
      const double luma = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
      data[i] = static_cast<float>(std::clamp(luma, 0.0, 1.0));
    }
  }
  return Image(w, h, std::move(data));
}

Image read_image(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".png") return read_png(path);
  throw Error(path.string() + ": unsupported frame format (expected .pgm or .png)");
}

std::vector<fs::path> list_frames(const fs::path& directory, const std::string& pattern) {
  if (!fs::is_directory(directory)) throw Error("frame directory not found: " + directory.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) files.push_back(entry.path());
  }
  if (files.empty()) throw Error("no files matching '" + pattern + "' in " + directory.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

std::vector<Image> load_frames(const fs::path& directory, const std::string& pattern) {
  std::vector<Image> frames;
  for (const auto& f : list_frames(directory, pattern)) frames.push_back(read_image(f));
  return frames;
}

}  // namespace lipres
