#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "killfie/corpus.hpp"

namespace killfie::geo {

inline constexpr double kEarthRadiusM = 6371000.0;
/// Meters per degree of latitude used by the local equirectangular approximation.
inline constexpr double kMetersPerDegree = 111320.0;

double haversine_m(const GeoPoint& a, const GeoPoint& b);

/// Moves `origin` by the given north/east offsets using the local
/// equirectangular approximation. Longitude wraps into [-180, 180].
GeoPoint offset(const GeoPoint& origin, double north_m, double east_m);

/// Great-circle distance from `p` to the segment a-b. The closest point is
/// found in a local equirectangular frame centred on `p`, then measured with
/// the haversine formula.
double distance_to_segment_m(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b);

/// Ground resolution of a 256-px web-mercator tile pyramid at `zoom`.
double meters_per_pixel(double lat, int zoom);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major RGB raster centred on a geolocation.
struct MapTile {
    GeoPoint center{0.0, 0.0};
    int zoom = 13;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  ///< width * height * 3 bytes

    Rgb at(int x, int y) const {
        auto i = (static_cast<std::size_t>(y) * width + x) * 3;
        return {pixels[i], pixels[i + 1], pixels[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        auto i = (static_cast<std::size_t>(y) * width + x) * 3;
        pixels[i] = c.r;
        pixels[i + 1] = c.g;
        pixels[i + 2] = c.b;
    }
};

/// Decodes PNG bytes to 8-bit RGB. Throws DataError on malformed input.
MapTile decode_png(std::string_view bytes);
std::string encode_png(const MapTile& tile);

}  // namespace killfie::geo
