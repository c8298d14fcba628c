#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "gridpv/common.hpp"
#include "gridpv/geodata.hpp"
#include "gridpv/png_io.hpp"
#include "oracles.hpp"

using namespace gridpv;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gridpv_geodata_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// gradient raster so pixel copies can be checked positionally
ImageU8 gradient_image(int w, int h, int channels) {
    ImageU8 img(w, h, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(x, y, c) = std::uint8_t((x * 7 + y * 31 + c * 97) % 256);
    return img;
}

void write_world_file(const std::string& path, double a, double d, double b, double e, double c,
                      double f) {
    std::ofstream out(path);
    out << a << "\n" << d << "\n" << b << "\n" << e << "\n" << c << "\n" << f << "\n";
}

std::string write_raster(const TempDir& dir, const std::string& stem, const ImageU8& img) {
    std::string png = dir.file(stem + ".png");
    write_png(png, img);
    write_world_file(dir.file(stem + ".wld"), 1, 0, 0, 1, 0, 0);
    return png;
}

Ring square_ring(double x0, double y0, double x1, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

}  // namespace

TEST_CASE("world-aligned square clips to its exact pixel box") {
    TempDir dir;
    std::string png = write_raster(dir, "r", gradient_image(4, 4, 3));
    GeoRaster raster = load_raster(png);

    FootprintEntry fp{"sq", {square_ring(0, 0, 2, 2)}};
    RooftopImage roof = clip_rooftop(raster, fp);
    CHECK(roof.pixels.width == 2);
    CHECK(roof.pixels.height == 2);
    CHECK(roof.col0 == 0);
    CHECK(roof.row0 == 0);
    CHECK(mask_count(roof.valid_mask) == 4);  // all four centers are interior
    // pixel payload is copied from the source crop
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 3; ++c) CHECK(roof.pixels.at(x, y, c) == raster.at(x, y, c));
}

TEST_CASE("triangle mask includes boundary centers") {
    TempDir dir;
    GeoRaster raster = load_raster(write_raster(dir, "r", gradient_image(4, 4, 3)));
    FootprintEntry fp{"tri", {{{0, 0}, {4, 0}, {0, 4}, {0, 0}}}};
    RooftopImage roof = clip_rooftop(raster, fp);
    CHECK(roof.pixels.width == 4);
    CHECK(roof.pixels.height == 4);
    // 6 centers strictly inside the hypotenuse, 4 exactly on it (on-edge
    // counts as inside), 6 outside
    CHECK(mask_count(roof.valid_mask) == 10);
}

TEST_CASE("grayscale rasters are replicated to three channels") {
    TempDir dir;
    ImageU8 gray = gradient_image(5, 3, 1);
    GeoRaster raster = load_raster(write_raster(dir, "g", gray));
    CHECK(raster.channels == 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 3; ++c) CHECK(raster.at(x, y, c) == gray.at(x, y, 0));
}

TEST_CASE("a raster without a world file is rejected") {
    TempDir dir;
    std::string png = dir.file("bare.png");
    write_png(png, gradient_image(2, 2, 3));
    CHECK_THROWS_WITH_AS(load_raster(png), doctest::Contains("missing geotransform"), Error);
}

TEST_CASE("pgw sidecars work as a fallback") {
    TempDir dir;
    std::string png = dir.file("p.png");
    write_png(png, gradient_image(2, 2, 3));
    write_world_file(dir.file("p.pgw"), 1, 0, 0, 1, 0, 0);
    CHECK(load_raster(png).width == 2);
}

TEST_CASE("transform inversion round-trips and offsets shift the crop") {
    GeoTransform t;
    t.a = 0.5;
    t.e = -0.5;
    t.c = 10;
    t.f = 20;
    double x, y, col, row;
    t.apply(3.0, 7.0, x, y);
    t.invert(x, y, col, row);
    CHECK(col == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(row == doctest::Approx(7.0).epsilon(1e-12));

    TempDir dir;
    std::string png = dir.file("w.png");
    write_png(png, gradient_image(8, 8, 3));
    write_world_file(dir.file("w.wld"), 0.5, 0, 0, -0.5, 10, 20);
    GeoRaster raster = load_raster(png);
    // world box [11, 12] x [18, 19] maps to cols [2, 4), rows [2, 4)
    FootprintEntry fp{"sq", {square_ring(11, 18, 12, 19)}};
    RooftopImage roof = clip_rooftop(raster, fp);
    CHECK(roof.col0 == 2);
    CHECK(roof.row0 == 2);
    CHECK(roof.pixels.width == 2);
    CHECK(roof.pixels.height == 2);
    CHECK(mask_count(roof.valid_mask) == 4);
}

TEST_CASE("singular transforms are rejected") {
    TempDir dir;
    std::string png = dir.file("s.png");
    write_png(png, gradient_image(2, 2, 3));
    write_world_file(dir.file("s.wld"), 0, 0, 0, 0, 0, 0);
    CHECK_THROWS_WITH_AS(load_raster(png), doctest::Contains("singular"), Error);
}

TEST_CASE("geojson multipolygons split into suffixed entries") {
    TempDir dir;
    std::string path = dir.file("fp.json");
    {
        std::ofstream out(path);
        out << R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"rooftop_id": "b1"},
             "geometry": {"type": "Polygon",
                          "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
            {"type": "Feature", "properties": {"rooftop_id": "b2"},
             "geometry": {"type": "MultiPolygon",
                          "coordinates": [[[[2,0],[3,0],[3,1],[2,1],[2,0]]],
                                          [[[4,0],[5,0],[5,1],[4,1],[4,0]]]]}}]})";
    }
    FootprintSet set = load_footprints(path);
    REQUIRE(set.entries.size() == 3);
    CHECK(set.entries[0].rooftop_id == "b1");
    CHECK(set.entries[1].rooftop_id == "b2#0");
    CHECK(set.entries[2].rooftop_id == "b2#1");
    CHECK(set.entries[1].rings.front()[0].x == doctest::Approx(2));
}

TEST_CASE("footprint ids fall back to the feature id") {
    TempDir dir;
    std::string path = dir.file("fp.json");
    {
        std::ofstream out(path);
        out << R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "id": "roof-9",
             "geometry": {"type": "Polygon",
                          "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}]})";
    }
    CHECK(load_footprints(path).entries[0].rooftop_id == "roof-9");
}

TEST_CASE("malformed footprint collections are rejected") {
    TempDir dir;
    auto write_and_load = [&](const char* name, const std::string& body) {
        std::string path = dir.file(name);
        std::ofstream(path) << body;
        return load_footprints(path);
    };

    // unclosed ring
    CHECK_THROWS_WITH_AS(
        write_and_load("a.json", R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "id": "x", "geometry": {"type": "Polygon",
             "coordinates": [[[0,0],[1,0],[1,1],[0,1]]]}}]})"),
        doctest::Contains("unclosed"), Error);
    // too few vertices
    CHECK_THROWS_WITH_AS(
        write_and_load("b.json", R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "id": "x", "geometry": {"type": "Polygon",
             "coordinates": [[[0,0],[1,0],[0,0]]]}}]})"),
        doctest::Contains("fewer than 4"), Error);
    // bow-tie self-intersection
    CHECK_THROWS_WITH_AS(
        write_and_load("c.json", R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "id": "x", "geometry": {"type": "Polygon",
             "coordinates": [[[0,0],[2,2],[2,0],[0,2],[0,0]]]}}]})"),
        doctest::Contains("self-intersecting"), Error);
    // duplicate ids
    CHECK_THROWS_WITH_AS(
        write_and_load("d.json", R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "id": "x", "geometry": {"type": "Polygon",
             "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
            {"type": "Feature", "id": "x", "geometry": {"type": "Polygon",
             "coordinates": [[[2,0],[3,0],[3,1],[2,1],[2,0]]]}}]})"),
        doctest::Contains("duplicate"), Error);
    // not a FeatureCollection
    CHECK_THROWS_WITH_AS(write_and_load("e.json", R"({"type": "Feature"})"),
                         doctest::Contains("FeatureCollection"), Error);
    // missing id
    CHECK_THROWS_WITH_AS(
        write_and_load("f.json", R"({"type": "FeatureCollection", "features": [
            {"type": "Feature", "geometry": {"type": "Polygon",
             "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}]})"),
        doctest::Contains("rooftop_id"), Error);
    CHECK_THROWS_AS(load_footprints(dir.file("missing.json")), Error);
}

TEST_CASE("holes flip containment, boundary points count as inside") {
    std::vector<Ring> rings{square_ring(0, 0, 10, 10), square_ring(3, 3, 7, 7)};
    CHECK(point_in_polygon(rings, 1, 1));        // in the outer ring only
    CHECK_FALSE(point_in_polygon(rings, 5, 5));  // inside the hole
    CHECK(point_in_polygon(rings, 3, 5));        // exactly on the hole edge
    CHECK(point_in_polygon(rings, 0, 0));        // outer corner
    CHECK_FALSE(point_in_polygon(rings, 11, 5));
    CHECK_FALSE(point_in_polygon(rings, -1, 5));
}

TEST_CASE("masks match an independent even-odd oracle on random polygons") {
    TempDir dir;
    GeoRaster raster = load_raster(write_raster(dir, "big", gradient_image(32, 32, 3)));
    Rng rng(1234);
    int checked = 0;
    for (int trial = 0; trial < 120; ++trial) {
        double cx = rng.uniform(8, 24), cy = rng.uniform(8, 24);
        int n_vertices = 3 + int(rng.uniform_int(std::uint64_t(9)));
        Ring ring = oracles::random_star_polygon(rng, cx, cy, 2.0, 7.5, n_vertices);
        FootprintEntry fp{"t" + std::to_string(trial), {ring}};

        RooftopImage roof;
        try {
            roof = clip_rooftop(raster, fp);
        } catch (const Error&) {
            continue;  // degenerate slivers whose mask is empty are skipped
        }
        std::size_t oracle_count = 0;
        for (int row = 0; row < roof.pixels.height; ++row)
            for (int col = 0; col < roof.pixels.width; ++col)
                if (oracles::point_in_polygon(fp.rings, roof.col0 + col + 0.5,
                                              roof.row0 + row + 0.5))
                    ++oracle_count;
        CHECK(mask_count(roof.valid_mask) == oracle_count);
        ++checked;
    }
    CHECK(checked >= 100);
}

TEST_CASE("clipping is deterministic") {
    TempDir dir;
    GeoRaster raster = load_raster(write_raster(dir, "r", gradient_image(16, 16, 3)));
    Rng rng(5);
    Ring ring = oracles::random_star_polygon(rng, 8, 8, 3, 6, 7);
    FootprintEntry fp{"p", {ring}};
    RooftopImage a = clip_rooftop(raster, fp);
    RooftopImage b = clip_rooftop(raster, fp);
    CHECK(a.pixels == b.pixels);
    CHECK(a.valid_mask == b.valid_mask);
    CHECK(a.col0 == b.col0);
    CHECK(a.row0 == b.row0);
}

TEST_CASE("footprints outside the raster are rejected") {
    TempDir dir;
    GeoRaster raster = load_raster(write_raster(dir, "r", gradient_image(4, 4, 3)));
    FootprintEntry fp{"far", {square_ring(100, 100, 110, 110)}};
    CHECK_THROWS_WITH_AS(clip_rooftop(raster, fp), doctest::Contains("outside"), Error);
}

TEST_CASE("label names parse both ways") {
    CHECK(parse_label("with_pv") == Label::WithPV);
    CHECK(parse_label("no_pv") == Label::NoPV);
    CHECK(label_name(Label::WithPV) == std::string("with_pv"));
    CHECK(label_name(Label::NoPV) == std::string("no_pv"));
    CHECK_THROWS_AS(parse_label("solar"), Error);
}
