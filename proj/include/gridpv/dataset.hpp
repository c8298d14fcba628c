#pragma once

#include <map>
#include <string>
#include <vector>

#include "gridpv/geodata.hpp"

namespace gridpv {

enum class Split { Train, Test };

inline const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }
Split parse_split(const std::string& s);

/// A city in the prepared-dataset layout:
///   <root>/<city>/images/<rooftop_id>.png
///   <root>/<city>/masks/<rooftop_id>.png   (8-bit, 255 = valid)
///   <root>/<city>/labels.csv               (rooftop_id,label)
///   <root>/<city>/splits.csv               (rooftop_id,split)
struct CityDataset {
    std::string city_id;
    std::vector<RooftopImage> train;
    std::vector<RooftopImage> test;

    const std::vector<RooftopImage>& split(Split s) const {
        return s == Split::Train ? train : test;
    }
};

/// Loads every rooftop of one city. Rooftops are ordered by id within each
/// split so downstream runs are independent of directory enumeration order.
CityDataset load_city(const std::string& data_root, const std::string& city_id);

/// Writes one rooftop into the prepared layout (images/ + masks/ files only;
/// CSVs are written by write_city_index).
void write_rooftop(const std::string& data_root, const std::string& city_id,
                   const RooftopImage& rooftop);

/// Writes labels.csv and splits.csv from parallel id/label/split rows.
void write_city_index(const std::string& data_root, const std::string& city_id,
                      const std::vector<std::string>& ids, const std::vector<Label>& labels,
                      const std::vector<Split>& splits);

/// Seeded stratified split: per class, round(train_frac * n) rooftops go to
/// train (at least one item lands in each side when n >= 2).
std::vector<Split> stratified_split(const std::vector<Label>& labels, double train_frac,
                                    std::uint64_t seed);

}  // namespace gridpv
