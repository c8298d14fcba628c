#include "gridpv/geodata.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gridpv/common.hpp"
#include "gridpv/png_io.hpp"

namespace gridpv {

using json = nlohmann::json;

Label parse_label(const std::string& s) {
    if (s == "with_pv") return Label::WithPV;
    if (s == "no_pv") return Label::NoPV;
    throw Error("geodata.parse_label", "unknown label '" + s + "' (expected with_pv or no_pv)");
}

void GeoTransform::invert(double x, double y, double& col, double& row) const {
    const double det_ = det();
    if (det_ == 0.0) throw Error("geodata.transform", "transform is not invertible");
    const double px = x - c, py = y - f;
    col = (e * px - b * py) / det_;
    row = (-d * px + a * py) / det_;
}

namespace {

std::optional<GeoTransform> read_world_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    double v[6];
    for (double& coef : v) {
        if (!(in >> coef)) throw Error("geodata.load_raster", "malformed world file: " + path);
    }
    GeoTransform t;
    // World file line order is A, D, B, E, C, F.
    t.a = v[0];
    t.d = v[1];
    t.b = v[2];
    t.e = v[3];
    t.c = v[4];
    t.f = v[5];
    return t;
}

std::string swap_extension(const std::string& path, const std::string& ext) {
    auto dot = path.find_last_of('.');
    auto slash = path.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + ext;
    return path.substr(0, dot) + ext;
}

Ring parse_ring(const json& coords, const std::string& id) {
    Ring ring;
    for (const auto& pt : coords) {
        if (!pt.is_array() || pt.size() < 2)
            throw Error("geodata.load_footprints", "malformed coordinate in feature '" + id + "'");
        ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    if (ring.size() < 4)
        throw Error("geodata.load_footprints", "ring with fewer than 4 vertices in '" + id + "'");
    if (ring.front().x != ring.back().x || ring.front().y != ring.back().y)
        throw Error("geodata.load_footprints", "unclosed ring in feature '" + id + "'");
    return ring;
}

// Proper-intersection test between segments pq and rs, used for the
// per-ring self-intersection invariant.
int orient(const Point& a, const Point& b, const Point& c) {
    double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

bool on_segment(const Point& a, const Point& b, const Point& p) {
    return orient(a, b, p) == 0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool segments_cross(const Point& p, const Point& q, const Point& r, const Point& s) {
    int o1 = orient(p, q, r), o2 = orient(p, q, s);
    int o3 = orient(r, s, p), o4 = orient(r, s, q);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p, q, r)) return true;
    if (o2 == 0 && on_segment(p, q, s)) return true;
    if (o3 == 0 && on_segment(r, s, p)) return true;
    if (o4 == 0 && on_segment(r, s, q)) return true;
    return false;
}

void check_simple_ring(const Ring& ring, const std::string& id) {
    const std::size_t n = ring.size() - 1;  // closed ring: last == first
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // Adjacent segments share an endpoint by construction.
            bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]))
                throw Error("geodata.load_footprints",
                            "self-intersecting ring in feature '" + id + "'");
        }
    }
}

std::vector<Ring> parse_polygon(const json& coords, const std::string& id) {
    std::vector<Ring> rings;
    for (const auto& ring_json : coords) {
        Ring ring = parse_ring(ring_json, id);
        check_simple_ring(ring, id);
        rings.push_back(std::move(ring));
    }
    if (rings.empty())
        throw Error("geodata.load_footprints", "polygon with no rings in '" + id + "'");
    return rings;
}

}  // namespace

GeoRaster load_raster(const std::string& path) {
    ImageU8 img = read_png(path);

    auto transform = read_world_file(swap_extension(path, ".wld"));
    if (!transform) transform = read_world_file(swap_extension(path, ".pgw"));
    if (!transform)
        throw Error("geodata.load_raster", "missing geotransform (no .wld/.pgw sidecar): " + path);
    if (transform->det() == 0.0)
        throw Error("geodata.load_raster", "geotransform is singular: " + path);

    GeoRaster raster;
    raster.width = img.width;
    raster.height = img.height;
    raster.channels = 3;
    raster.transform = *transform;
    if (img.channels == 3) {
        raster.pixels = std::move(img.pixels);
    } else {
        raster.pixels.resize(std::size_t(img.width) * img.height * 3);
        for (std::size_t i = 0, n = img.pixels.size(); i < n; ++i) {
            raster.pixels[3 * i] = img.pixels[i];
            raster.pixels[3 * i + 1] = img.pixels[i];
            raster.pixels[3 * i + 2] = img.pixels[i];
        }
    }
    return raster;
}

FootprintSet load_footprints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("geodata.load_footprints", "cannot open file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error("geodata.load_footprints", "invalid JSON: " + std::string(e.what()));
    }
    if (doc.value("type", "") != "FeatureCollection")
        throw Error("geodata.load_footprints", "expected a GeoJSON FeatureCollection");

    FootprintSet set;
    std::set<std::string> seen;
    for (const auto& feature : doc.value("features", json::array())) {
        std::string id;
        if (feature.contains("properties") && feature["properties"].is_object() &&
            feature["properties"].contains("rooftop_id")) {
            id = feature["properties"]["rooftop_id"].get<std::string>();
        } else if (feature.contains("id")) {
            const auto& j = feature["id"];
            id = j.is_string() ? j.get<std::string>() : j.dump();
        } else {
            throw Error("geodata.load_footprints", "feature without rooftop_id or id");
        }

        if (!feature.contains("geometry") || !feature["geometry"].is_object())
            throw Error("geodata.load_footprints", "feature '" + id + "' has no geometry");
        const auto& geom = feature["geometry"];
        const std::string type = geom.value("type", "");

        std::vector<FootprintEntry> parts;
        if (type == "Polygon") {
            parts.push_back({id, parse_polygon(geom["coordinates"], id)});
        } else if (type == "MultiPolygon") {
            int part = 0;
            for (const auto& poly : geom["coordinates"]) {
                std::string part_id = id + "#" + std::to_string(part++);
                parts.push_back({part_id, parse_polygon(poly, part_id)});
            }
        } else {
            throw Error("geodata.load_footprints",
                        "unsupported geometry type '" + type + "' in feature '" + id + "'");
        }

        for (auto& entry : parts) {
            if (!seen.insert(entry.rooftop_id).second)
                throw Error("geodata.load_footprints", "duplicate id '" + entry.rooftop_id + "'");
            set.entries.push_back(std::move(entry));
        }
    }
    return set;
}

bool point_in_polygon(const std::vector<Ring>& rings, double x, double y) {
    const Point p{x, y};
    bool inside = false;
    for (const auto& ring : rings) {
        const std::size_t n = ring.size() - 1;
        for (std::size_t i = 0; i < n; ++i) {
            const Point& a = ring[i];
            const Point& b = ring[i + 1];
            // Boundary rule: a point exactly on an edge is inside.
            if (on_segment(a, b, p)) return true;
            // Half-open crossing rule on the y-span keeps vertices counted once.
            if ((a.y > y) != (b.y > y)) {
                double x_cross = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
                if (x < x_cross) inside = !inside;
            }
        }
    }
    return inside;
}

RooftopImage clip_rooftop(const GeoRaster& raster, const FootprintEntry& footprint) {
    if (footprint.rings.empty())
        throw Error("geodata.clip_rooftop", "footprint '" + footprint.rooftop_id + "' has no rings");

    // World bounding box of all rings, mapped through the inverse transform.
    double min_col = 0, min_row = 0, max_col = 0, max_row = 0;
    bool first = true;
    for (const auto& ring : footprint.rings) {
        for (const auto& pt : ring) {
            double col, row;
            raster.transform.invert(pt.x, pt.y, col, row);
            if (first) {
                min_col = max_col = col;
                min_row = max_row = row;
                first = false;
            } else {
                min_col = std::min(min_col, col);
                max_col = std::max(max_col, col);
                min_row = std::min(min_row, row);
                max_row = std::max(max_row, row);
            }
        }
    }

    int c0 = std::max(0, int(std::floor(min_col)));
    int r0 = std::max(0, int(std::floor(min_row)));
    int c1 = std::min(raster.width, int(std::ceil(max_col)));
    int r1 = std::min(raster.height, int(std::ceil(max_row)));
    if (c0 >= c1 || r0 >= r1)
        throw Error("geodata.clip_rooftop",
                    "polygon '" + footprint.rooftop_id + "' lies outside raster");

    RooftopImage out;
    out.rooftop_id = footprint.rooftop_id;
    out.col0 = c0;
    out.row0 = r0;
    out.pixels = ImageU8(c1 - c0, r1 - r0, 3);
    out.valid_mask.assign(std::size_t(c1 - c0) * (r1 - r0), 0);

    std::size_t set_bits = 0;
    for (int row = r0; row < r1; ++row) {
        for (int col = c0; col < c1; ++col) {
            double wx, wy;
            raster.transform.apply(col + 0.5, row + 0.5, wx, wy);
            bool inside = point_in_polygon(footprint.rings, wx, wy);
            const std::size_t mi = std::size_t(row - r0) * (c1 - c0) + (col - c0);
            if (inside) {
                out.valid_mask[mi] = 255;
                ++set_bits;
            }
            for (int ch = 0; ch < 3; ++ch)
                out.pixels.at(col - c0, row - r0, ch) = raster.at(col, row, ch);
        }
    }
    if (set_bits == 0)
        throw Error("geodata.clip_rooftop",
                    "mask empty for footprint '" + footprint.rooftop_id + "'");
    return out;
}

}  // namespace gridpv
