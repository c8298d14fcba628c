#include "gridpv/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridpv/common.hpp"
#include "gridpv/png_io.hpp"

namespace fs = std::filesystem;

namespace gridpv {

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw Error("dataset.parse_split", "unknown split '" + s + "' (expected train or test)");
}

namespace {

std::map<std::string, std::string> read_csv_map(const std::string& path,
                                                const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw Error("dataset.load_city", "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("dataset.load_city", "empty csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw Error("dataset.load_city",
                    "bad header in " + path + " (expected '" + expected_header + "')");
    std::map<std::string, std::string> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw Error("dataset.load_city", "malformed row '" + line + "' in " + path);
        std::string id = line.substr(0, comma);
        if (!out.emplace(id, line.substr(comma + 1)).second)
            throw Error("dataset.load_city", "duplicate rooftop_id '" + id + "' in " + path);
    }
    return out;
}

}  // namespace

CityDataset load_city(const std::string& data_root, const std::string& city_id) {
    const fs::path city_dir = fs::path(data_root) / city_id;
    if (!fs::is_directory(city_dir))
        throw Error("dataset.load_city", "no such city directory: " + city_dir.string());

    auto labels = read_csv_map((city_dir / "labels.csv").string(), "rooftop_id,label");
    auto splits = read_csv_map((city_dir / "splits.csv").string(), "rooftop_id,split");

    CityDataset city;
    city.city_id = city_id;
    for (const auto& [id, label_str] : labels) {
        auto split_it = splits.find(id);
        if (split_it == splits.end())
            throw Error("dataset.load_city", "rooftop '" + id + "' missing from splits.csv");

        RooftopImage rooftop;
        rooftop.rooftop_id = id;
        rooftop.city_id = city_id;
        rooftop.label = parse_label(label_str);
        rooftop.pixels = read_png((city_dir / "images" / (id + ".png")).string());
        if (rooftop.pixels.channels == 1) {
            // Prepared images are RGB; tolerate grayscale by replication.
            ImageU8 rgb(rooftop.pixels.width, rooftop.pixels.height, 3);
            for (std::size_t i = 0, n = rooftop.pixels.pixels.size(); i < n; ++i)
                rgb.pixels[3 * i] = rgb.pixels[3 * i + 1] = rgb.pixels[3 * i + 2] =
                    rooftop.pixels.pixels[i];
            rooftop.pixels = std::move(rgb);
        }
        ImageU8 mask_img = read_png((city_dir / "masks" / (id + ".png")).string());
        if (mask_img.channels != 1 || mask_img.width != rooftop.pixels.width ||
            mask_img.height != rooftop.pixels.height)
            throw Error("dataset.load_city", "mask shape mismatch for rooftop '" + id + "'");
        rooftop.valid_mask = std::move(mask_img.pixels);
        if (mask_count(rooftop.valid_mask) == 0)
            throw Error("dataset.load_city", "empty mask for rooftop '" + id + "'");

        (parse_split(split_it->second) == Split::Train ? city.train : city.test)
            .push_back(std::move(rooftop));
    }
    // map iteration already sorted by id; keep that order explicit.
    auto by_id = [](const RooftopImage& a, const RooftopImage& b) {
        return a.rooftop_id < b.rooftop_id;
    };
    std::sort(city.train.begin(), city.train.end(), by_id);
    std::sort(city.test.begin(), city.test.end(), by_id);
    return city;
}

void write_rooftop(const std::string& data_root, const std::string& city_id,
                   const RooftopImage& rooftop) {
    const fs::path city_dir = fs::path(data_root) / city_id;
    fs::create_directories(city_dir / "images");
    fs::create_directories(city_dir / "masks");
    write_png((city_dir / "images" / (rooftop.rooftop_id + ".png")).string(), rooftop.pixels);
    ImageU8 mask_img(rooftop.pixels.width, rooftop.pixels.height, 1);
    mask_img.pixels = rooftop.valid_mask;
    write_png((city_dir / "masks" / (rooftop.rooftop_id + ".png")).string(), mask_img);
}

void write_city_index(const std::string& data_root, const std::string& city_id,
                      const std::vector<std::string>& ids, const std::vector<Label>& labels,
                      const std::vector<Split>& splits) {
    if (ids.size() != labels.size() || ids.size() != splits.size())
        throw Error("dataset.write_city_index", "ids/labels/splits size mismatch");
    const fs::path city_dir = fs::path(data_root) / city_id;
    fs::create_directories(city_dir);

    std::ofstream labels_csv(city_dir / "labels.csv");
    std::ofstream splits_csv(city_dir / "splits.csv");
    labels_csv << "rooftop_id,label\n";
    splits_csv << "rooftop_id,split\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        labels_csv << ids[i] << ',' << label_name(labels[i]) << '\n';
        splits_csv << ids[i] << ',' << split_name(splits[i]) << '\n';
    }
}

std::vector<Split> stratified_split(const std::vector<Label>& labels, double train_frac,
                                    std::uint64_t seed) {
    std::vector<Split> out(labels.size(), Split::Train);
    for (Label cls : {Label::NoPV, Label::WithPV}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        if (idx.empty()) continue;
        Rng rng(derive_seed(seed, cls == Label::WithPV ? 1 : 0));
        rng.shuffle(idx);
        std::size_t n_train = std::size_t(std::llround(train_frac * double(idx.size())));
        if (idx.size() >= 2) {
            n_train = std::min(n_train, idx.size() - 1);
            n_train = std::max<std::size_t>(n_train, 1);
        }
        for (std::size_t i = 0; i < idx.size(); ++i)
            out[idx[i]] = i < n_train ? Split::Train : Split::Test;
    }
    return out;
}

}  // namespace gridpv
