#include "killfie/geo.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "killfie/error.hpp"

namespace killfie::geo {

namespace {
double rad(double deg) { return deg * std::numbers::pi / 180.0; }
}  // namespace

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
    double dlat = rad(b.lat() - a.lat());
    double dlon = rad(b.lon() - a.lon());
    double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
               std::cos(rad(a.lat())) * std::cos(rad(b.lat())) * std::sin(dlon / 2) * std::sin(dlon / 2);
    s = std::clamp(s, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(s));
}

GeoPoint offset(const GeoPoint& origin, double north_m, double east_m) {
    double lat = origin.lat() + north_m / kMetersPerDegree;
    double lon = origin.lon() + east_m / (kMetersPerDegree * std::cos(rad(origin.lat())));
    lat = std::clamp(lat, -90.0, 90.0);
    if (lon > 180.0) lon -= 360.0;
    if (lon < -180.0) lon += 360.0;
    return {lat, lon};
}

double distance_to_segment_m(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    double kx = kMetersPerDegree * std::cos(rad(p.lat()));
    double ky = kMetersPerDegree;
    auto dlon = [](double from, double to) {
        double d = to - from;
        if (d > 180.0) d -= 360.0;
        if (d < -180.0) d += 360.0;
        return d;
    };
    double ax = dlon(p.lon(), a.lon()) * kx, ay = (a.lat() - p.lat()) * ky;
    double bx = dlon(p.lon(), b.lon()) * kx, by = (b.lat() - p.lat()) * ky;
    double vx = bx - ax, vy = by - ay;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? std::clamp(-(ax * vx + ay * vy) / len2, 0.0, 1.0) : 0.0;
    GeoPoint closest = t == 0.0 ? a : (t == 1.0 ? b : offset(p, ay + t * vy, ax + t * vx));
    return haversine_m(p, closest);
}

double meters_per_pixel(double lat, int zoom) {
    return 156543.03392804097 * std::cos(rad(lat)) / std::ldexp(1.0, zoom);
}

MapTile decode_png(std::string_view bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw DataError(std::string("PNG decode failed: ") + image.message);
    image.format = PNG_FORMAT_RGB;
    MapTile tile;
    tile.width = static_cast<int>(image.width);
    tile.height = static_cast<int>(image.height);
    tile.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, tile.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DataError("PNG decode failed: " + msg);
    }
    return tile;
}

std::string encode_png(const MapTile& tile) {
    if (tile.pixels.size() != static_cast<std::size_t>(tile.width) * tile.height * 3)
        throw InvalidArgument("tile pixel buffer does not match its dimensions");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(tile.width);
    image.height = static_cast<png_uint_32>(tile.height);
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, tile.pixels.data(), 0, nullptr))
        throw DataError(std::string("PNG encode failed: ") + image.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, tile.pixels.data(), 0, nullptr))
        throw DataError(std::string("PNG encode failed: ") + image.message);
    out.resize(size);
    return out;
}

}  // namespace killfie::geo
