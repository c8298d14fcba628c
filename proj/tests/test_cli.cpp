#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gridpv/image.hpp"
#include "gridpv/png_io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(bool(out));
    out << text;
}

struct CliFixture {
    fs::path dir;
    int run_count = 0;

    CliFixture() {
        dir = fs::temp_directory_path() / ("gridpv_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~CliFixture() { fs::remove_all(dir); }

    static std::string binary() {
        const char* bin = std::getenv("GRIDPV_BIN");
        REQUIRE_MESSAGE(bin != nullptr, "GRIDPV_BIN must point at the gridpv binary");
        return bin;
    }

    CmdResult run(const std::string& args) {
        fs::path out_file = dir / ("stdout_" + std::to_string(run_count) + ".txt");
        fs::path err_file = dir / ("stderr_" + std::to_string(run_count) + ".txt");
        ++run_count;
        std::string cmd = "'" + binary() + "' " + args + " > '" + out_file.string() + "' 2> '" +
                          err_file.string() + "'";
        int rc = std::system(cmd.c_str());
        CmdResult result;
        REQUIRE(rc != -1);
        REQUIRE(WIFEXITED(rc));
        result.code = WEXITSTATUS(rc);
        result.out = slurp(out_file);
        result.err = slurp(err_file);
        return result;
    }

    std::string path(const std::string& rel) const { return (dir / rel).string(); }
};

// tiny two-city synthetic spec used by the pipeline tests
const char* kTwoCitySpec =
    "cities = c1, c2\n"
    "city.c1.n_with_pv = 6\n"
    "city.c1.n_no_pv = 6\n"
    "city.c1.size_min = 48\n"
    "city.c1.size_max = 64\n"
    "city.c2.n_with_pv = 6\n"
    "city.c2.n_no_pv = 6\n"
    "city.c2.size_min = 48\n"
    "city.c2.size_max = 64\n"
    "city.c2.hue_min = 190\n"
    "city.c2.hue_max = 230\n";

// flags shared by phase-run/evaluate to keep the search grid tiny
const char* kTinyGrid =
    " --set grid.sizes=16 --set encode.k=2 --set families=lr"
    " --set lr.c=1 --set lr.solvers=liblinear";

}  // namespace

TEST_CASE("help lists every subcommand and the config schema") {
    CliFixture cli;
    CmdResult help = cli.run("--help");
    CHECK(help.code == 0);
    for (const char* name :
         {"ingest", "tile", "extract", "encode", "train", "evaluate", "phase-run", "synth-gen"})
        CHECK(help.out.find(name) != std::string::npos);

    CmdResult sub = cli.run("extract --help");
    CHECK(sub.code == 0);
    CHECK(sub.out.find("Config keys:") != std::string::npos);
    CHECK(sub.out.find("grid.min_coverage") != std::string::npos);
}

TEST_CASE("bad invocations exit with one and explain themselves") {
    CliFixture cli;

    CmdResult none = cli.run("");
    CHECK(none.code == 1);
    CHECK(none.err.find("error") != std::string::npos);
    CHECK(none.err.find("Usage") != std::string::npos);

    CmdResult unknown_flag = cli.run("tile --bogus");
    CHECK(unknown_flag.code == 1);
    CHECK(unknown_flag.err.find("error") != std::string::npos);

    CmdResult unknown_sub = cli.run("frobnicate");
    CHECK(unknown_sub.code == 1);

    CmdResult bad_set = cli.run("synth-gen --set nokey --out " + cli.path("x"));
    CHECK(bad_set.code == 1);
    CHECK(bad_set.err.find("key=value") != std::string::npos);

    CmdResult bad_key = cli.run("synth-gen --set no.such.key=1 --out " + cli.path("x"));
    CHECK(bad_key.code == 1);
    CHECK(bad_key.err.find("unknown key") != std::string::npos);
}

TEST_CASE("synth-gen renders the spec onto disk deterministically") {
    CliFixture cli;
    spit(cli.dir / "spec.cfg",
         "cities = mini\n"
         "city.mini.n_with_pv = 3\n"
         "city.mini.n_no_pv = 4\n"
         "city.mini.size_min = 48\n"
         "city.mini.size_max = 64\n");

    CmdResult gen =
        cli.run("synth-gen --spec " + cli.path("spec.cfg") + " --out " + cli.path("root"));
    REQUIRE(gen.code == 0);
    json j = json::parse(gen.out);
    REQUIRE(j.at("cities").size() == 1);
    CHECK(j["cities"][0]["city"] == "mini");
    CHECK(j["cities"][0]["rooftops"] == 7);
    CHECK(j["cities"][0]["with_pv"] == 3);
    CHECK(int(j["cities"][0]["train"]) + int(j["cities"][0]["test"]) == 7);

    fs::path city_root = cli.dir / "root" / "mini";
    CHECK(fs::exists(city_root / "labels.csv"));
    CHECK(fs::exists(city_root / "splits.csv"));
    int pngs = 0;
    for (const auto& entry : fs::directory_iterator(city_root / "images"))
        pngs += entry.path().extension() == ".png";
    CHECK(pngs == 7);

    CmdResult again =
        cli.run("synth-gen --spec " + cli.path("spec.cfg") + " --out " + cli.path("root2"));
    REQUIRE(again.code == 0);
    CHECK(slurp(cli.dir / "root" / "mini" / "labels.csv") ==
          slurp(cli.dir / "root2" / "mini" / "labels.csv"));
    CHECK(slurp(cli.dir / "root" / "mini" / "images" / "mini_r000.png") ==
          slurp(cli.dir / "root2" / "mini" / "images" / "mini_r000.png"));
}

TEST_CASE("extract, encode and train chain through their file formats") {
    CliFixture cli;
    spit(cli.dir / "spec.cfg", kTwoCitySpec);
    REQUIRE(cli.run("synth-gen --spec " + cli.path("spec.cfg") + " --out " + cli.path("root"))
                .code == 0);

    CmdResult extract = cli.run("extract --data " + cli.path("root") +
                                " --city c1 --grid 16 --out " + cli.path("c1.features"));
    REQUIRE(extract.code == 0);
    json ej = json::parse(extract.out);
    CHECK(ej.at("rooftops") == 12);
    CHECK(ej.at("dim") == 22);
    CHECK(ej.at("vectors").get<long>() > 12);  // several tiles per rooftop

    CmdResult encode = cli.run("encode --features " + cli.path("c1.features") +
                               " --method vlad --k 2 --codebook " + cli.path("cb.bin") +
                               " --out " + cli.path("e1.features"));
    REQUIRE(encode.code == 0);
    json enc = json::parse(encode.out);
    CHECK(enc.at("dim") == 44);  // K * 22
    CHECK(enc.at("k") == 2);
    CHECK(enc.contains("fit"));
    CHECK(fs::exists(cli.dir / "cb.bin"));

    // reusing the saved codebook reproduces the descriptor file byte for byte
    CmdResult reuse = cli.run("encode --features " + cli.path("c1.features") +
                              " --method vlad --k 2 --load-codebook " + cli.path("cb.bin") +
                              " --out " + cli.path("e2.features"));
    REQUIRE(reuse.code == 0);
    CHECK_FALSE(json::parse(reuse.out).contains("fit"));
    CHECK(slurp(cli.dir / "e1.features") == slurp(cli.dir / "e2.features"));

    CmdResult avg = cli.run("encode --features " + cli.path("c1.features") +
                            " --method avg --out " + cli.path("avg.features"));
    REQUIRE(avg.code == 0);
    CHECK(json::parse(avg.out).at("dim") == 22);

    CmdResult train = cli.run("train --x " + cli.path("e1.features") +
                              " --family lr --c 1 --out " + cli.path("model.bin"));
    REQUIRE(train.code == 0);
    json tj = json::parse(train.out);
    CHECK(tj.at("combo") == "lr_c1_lbfgs");
    CHECK(tj.at("rows") == 12);
    CHECK(tj.at("dim") == 44);
    CHECK(fs::exists(cli.dir / "model.bin"));

    CmdResult bad_method = cli.run("encode --features " + cli.path("c1.features") +
                                   " --method wavelet --out " + cli.path("x.features"));
    CHECK(bad_method.code == 1);
    CHECK(bad_method.err.find("vlad, fv or avg") != std::string::npos);
}

TEST_CASE("phase-run walks the cities and evaluate reuses its registry") {
    CliFixture cli;
    spit(cli.dir / "spec.cfg", kTwoCitySpec);
    REQUIRE(cli.run("synth-gen --spec " + cli.path("spec.cfg") + " --out " + cli.path("root"))
                .code == 0);

    CmdResult run = cli.run("phase-run --data " + cli.path("root") +
                            " --cities c1,c2 --approach brg-vlad --threshold 0.01" + kTinyGrid +
                            " --registry " + cli.path("reg") + " --out " +
                            cli.path("report.json"));
    REQUIRE_MESSAGE(run.code == 0, run.err);
    json report = json::parse(slurp(cli.dir / "report.json"));
    CHECK(report.at("approach") == "brg-vlad");
    CHECK(report.at("all_passed") == true);
    REQUIRE(report.at("steps").size() == 2);
    CHECK(report["steps"][0]["city"] == "c1");
    CHECK(report["steps"][0]["stopped_phase"] == "p3");
    CHECK(report["steps"][1]["city"] == "c2");
    CHECK(fs::exists(cli.dir / "reg" / "0_c1" / "best.json"));

    // progress narration belongs on stderr, results on stdout
    CHECK(run.err.find("phase-3") != std::string::npos);

    CmdResult eval = cli.run("evaluate --data " + cli.path("root") +
                             " --cities c1,c2 --approach brg-vlad" + kTinyGrid +
                             " --registry " + cli.path("reg"));
    REQUIRE_MESSAGE(eval.code == 0, eval.err);
    json score = json::parse(eval.out);
    CHECK(score.contains("weighted_f1"));
    CHECK(score.contains("rounded"));
    CHECK(score.at("per_city").contains("c1"));
    CHECK(score.at("per_city").contains("c2"));

    CmdResult mismatch = cli.run("evaluate --data " + cli.path("root") +
                                 " --cities c1,c2 --approach br-ml" + kTinyGrid +
                                 " --registry " + cli.path("reg"));
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("registry holds") != std::string::npos);
}

TEST_CASE("an impossible threshold makes phase-run exit with two") {
    CliFixture cli;
    spit(cli.dir / "spec.cfg",
         "cities = c1\n"
         "city.c1.n_with_pv = 6\n"
         "city.c1.n_no_pv = 6\n"
         "city.c1.size_min = 48\n"
         "city.c1.size_max = 64\n");
    REQUIRE(cli.run("synth-gen --spec " + cli.path("spec.cfg") + " --out " + cli.path("root"))
                .code == 0);

    // copy one test rooftop's pixels over a test rooftop of the opposite
    // label: identical inputs with contradicting labels cap the F1 below 1
    fs::path city_root = cli.dir / "root" / "c1";
    std::string splits = slurp(city_root / "splits.csv");
    std::string labels = slurp(city_root / "labels.csv");
    auto label_of = [&](const std::string& id) {
        std::size_t at = labels.find(id + ",");
        REQUIRE(at != std::string::npos);
        std::size_t comma = labels.find(',', at);
        std::size_t eol = labels.find('\n', comma);
        return labels.substr(comma + 1, eol - comma - 1);
    };
    std::string donor, victim;
    std::size_t pos = splits.find('\n') + 1;  // skip the header
    while (pos < splits.size()) {
        std::size_t comma = splits.find(',', pos);
        std::size_t eol = splits.find('\n', comma);
        if (eol == std::string::npos) eol = splits.size();
        std::string id = splits.substr(pos, comma - pos);
        std::string split = splits.substr(comma + 1, eol - comma - 1);
        if (split == "test") {
            if (label_of(id) == "with_pv" && donor.empty()) donor = id;
            if (label_of(id) == "no_pv" && victim.empty()) victim = id;
        }
        pos = eol + 1;
    }
    REQUIRE_FALSE(donor.empty());
    REQUIRE_FALSE(victim.empty());
    fs::copy_file(city_root / "images" / (donor + ".png"),
                  city_root / "images" / (victim + ".png"),
                  fs::copy_options::overwrite_existing);
    fs::copy_file(city_root / "masks" / (donor + ".png"),
                  city_root / "masks" / (victim + ".png"),
                  fs::copy_options::overwrite_existing);

    CmdResult run = cli.run("phase-run --data " + cli.path("root") +
                            " --cities c1 --approach brg-vlad --threshold 1.0" + kTinyGrid +
                            " --out " + cli.path("report.json"));
    CHECK(run.code == 2);
    json report = json::parse(slurp(cli.dir / "report.json"));
    CHECK(report.at("all_passed") == false);
    CHECK(report["steps"][0]["passed"] == false);
}

TEST_CASE("ingest clips footprints and tile cuts the grid") {
    CliFixture cli;

    gridpv::ImageU8 raster(64, 48, 3);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c)
                raster.at(x, y, c) = std::uint8_t((x * 3 + y * 5 + c * 17) % 256);
    gridpv::write_png(cli.path("r.png"), raster);
    spit(cli.dir / "r.wld", "1\n0\n0\n1\n0\n0\n");

    spit(cli.dir / "f.json", R"({"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"rooftop_id":"a"},
       "geometry":{"type":"Polygon","coordinates":[[[4,4],[36,4],[36,36],[4,36],[4,4]]]}},
      {"type":"Feature","properties":{"rooftop_id":"b"},
       "geometry":{"type":"Polygon","coordinates":[[[40,8],[60,8],[60,40],[40,40],[40,8]]]}},
      {"type":"Feature","properties":{"rooftop_id":"far"},
       "geometry":{"type":"Polygon","coordinates":[[[100,100],[120,100],[120,120],[100,120],[100,100]]]}}
    ]})");
    spit(cli.dir / "l.csv", "rooftop_id,label\na,with_pv\nb,no_pv\nfar,no_pv\n");
    spit(cli.dir / "s.csv", "rooftop_id,split\na,train\nb,test\n");

    CmdResult ingest = cli.run("ingest --raster " + cli.path("r.png") + " --footprints " +
                               cli.path("f.json") + " --labels " + cli.path("l.csv") +
                               " --splits " + cli.path("s.csv") +
                               " --city ing --out " + cli.path("root"));
    REQUIRE_MESSAGE(ingest.code == 0, ingest.err);
    json j = json::parse(ingest.out);
    CHECK(j.at("rooftops") == 2);
    CHECK(j.at("skipped") == 1);  // the footprint outside the raster
    CHECK(j.at("with_pv") == 1);
    CHECK(j.at("train") == 1);
    CHECK(j.at("test") == 1);
    CHECK(fs::exists(cli.dir / "root" / "ing" / "images" / "a.png"));
    CHECK(fs::exists(cli.dir / "root" / "ing" / "masks" / "b.png"));

    CmdResult tiles = cli.run("tile --data " + cli.path("root") +
                              " --city ing --rooftop a --grid 16 --out " + cli.path("tiles"));
    REQUIRE_MESSAGE(tiles.code == 0, tiles.err);
    json tj = json::parse(tiles.out);
    REQUIRE(tj.at("tiles").size() == 4);  // 32x32 crop, 16px lattice
    for (const auto& row : tj["tiles"]) CHECK(row.at("coverage") == 1.0);
    CHECK(fs::exists(cli.dir / "tiles" / "a_r00_c00.png"));
    CHECK(fs::exists(cli.dir / "tiles" / "a_r01_c01.png"));

    CmdResult missing = cli.run("tile --data " + cli.path("root") +
                                " --city ing --rooftop nope --grid 16 --out " +
                                cli.path("tiles2"));
    CHECK(missing.code == 1);
    CHECK(missing.err.find("no rooftop") != std::string::npos);
}
