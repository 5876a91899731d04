#include "convact/plot.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "convact/errors.hpp"

namespace convact {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 50;
constexpr int kMarginBottom = 60;
constexpr int kMarginTop = 40;
constexpr int kMarginRight = 20;

struct BarGeometry {
    double x, y, w, h;
};

std::vector<BarGeometry> layout_bars(const std::vector<double>& values) {
    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    double vmax = 0.0;
    for (double v : values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    const auto n = values.size();
    const double slot = plot_w / static_cast<double>(n);
    const double bar_w = slot * 0.7;
    std::vector<BarGeometry> bars;
    for (std::size_t i = 0; i < n; ++i) {
        double h = plot_h * values[i] / vmax;
        bars.push_back({kMarginLeft + slot * static_cast<double>(i) + slot * 0.15,
                        kMarginTop + plot_h - h, bar_w, h});
    }
    return bars;
}

void write_svg(const std::string& path, const std::string& title,
               const std::vector<std::string>& labels, const std::vector<double>& values) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    auto bars = layout_bars(values);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
        << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        out << "<rect class=\"bar\" data-value=\"" << values[i] << "\" x=\"" << b.x << "\" y=\""
            << b.y << "\" width=\"" << b.w << "\" height=\"" << b.h
            << "\" fill=\"#4878a8\"/>\n";
        out << "<text x=\"" << b.x + b.w / 2 << "\" y=\"" << kHeight - kMarginBottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << labels[i] << "</text>\n";
        out << "<text x=\"" << b.x + b.w / 2 << "\" y=\"" << b.y - 4
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << values[i] << "</text>\n";
    }
    out << "</svg>\n";
}

void png_chunk(std::ofstream& out, const char* type, const std::vector<std::uint8_t>& data) {
    auto write_be32 = [&out](std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    write_be32(static_cast<std::uint32_t>(data.size()));
    out.write(type, 4);
    if (!data.empty())
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty())
        crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    write_be32(static_cast<std::uint32_t>(crc));
}

void write_png(const std::string& path, const std::vector<double>& values) {
    auto bars = layout_bars(values);
    // RGB raster, white background.
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(kWidth) * kHeight * 3, 255);
    auto set_px = [&pixels](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) return;
        std::size_t at = (static_cast<std::size_t>(y) * kWidth + x) * 3;
        pixels[at] = r;
        pixels[at + 1] = g;
        pixels[at + 2] = b;
    };
    for (int x = kMarginLeft; x < kWidth - kMarginRight; ++x)
        set_px(x, kHeight - kMarginBottom, 0, 0, 0);
    for (const auto& bar : bars)
        for (int y = static_cast<int>(bar.y); y < kHeight - kMarginBottom; ++y)
            for (int x = static_cast<int>(bar.x); x < static_cast<int>(bar.x + bar.w); ++x)
                set_px(x, y, 0x48, 0x78, 0xa8);

    // Filtered scanlines (filter byte 0) then zlib-compressed IDAT.
    std::vector<std::uint8_t> raw;
    raw.reserve(pixels.size() + kHeight);
    for (int y = 0; y < kHeight; ++y) {
        raw.push_back(0);
        std::size_t at = static_cast<std::size_t>(y) * kWidth * 3;
        raw.insert(raw.end(), pixels.begin() + static_cast<long>(at),
                   pixels.begin() + static_cast<long>(at + kWidth * 3));
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(comp_size);
    if (compress2(compressed.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw IoError("zlib compression failed for " + path);
    compressed.resize(comp_size);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<std::uint8_t> ihdr = {
        static_cast<std::uint8_t>(kWidth >> 24),  static_cast<std::uint8_t>(kWidth >> 16),
        static_cast<std::uint8_t>(kWidth >> 8),   static_cast<std::uint8_t>(kWidth),
        static_cast<std::uint8_t>(kHeight >> 24), static_cast<std::uint8_t>(kHeight >> 16),
        static_cast<std::uint8_t>(kHeight >> 8),  static_cast<std::uint8_t>(kHeight),
        8, 2, 0, 0, 0};  // 8-bit RGB
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", compressed);
    png_chunk(out, "IEND", {});
}

}  // namespace

void write_bar_chart(const std::string& path_base, const std::string& title,
                     const std::vector<std::string>& labels,
                     const std::vector<double>& values) {
    if (labels.size() != values.size())
        throw InvalidArgument("bar chart labels and values differ in length");
    if (values.empty()) throw InvalidArgument("bar chart needs at least one bar");
    write_svg(path_base + ".svg", title, labels, values);
    write_png(path_base + ".png", values);
}

}  // namespace convact
