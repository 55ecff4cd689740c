#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "xview/error.hpp"
#include "xview/matrix.hpp"

namespace xview {

enum class Platform { satellite, drone };

inline const char* platform_name(Platform p) { return p == Platform::satellite ? "sat" : "drone"; }

inline Platform platform_from_name(const std::string& s) {
    if (s == "sat") return Platform::satellite;
    if (s == "drone") return Platform::drone;
    throw data_error("unknown platform id '" + s + "' (expected 'sat' or 'drone')");
}

struct Item {
    int id = 0;
    int label = 0;
    Platform platform = Platform::satellite;
    std::vector<double> features;
};

struct GeoClass {
    int label = 0;
    std::vector<int> satellite_items;  // item ids
    std::vector<int> drone_items;
};

// Two-platform dataset: classes (geo-tags) each owning at least one item per
// platform. Item ids are unique but otherwise arbitrary.
struct CrossViewDataset {
    int feature_dim = 0;
    std::vector<GeoClass> classes;  // ordered by label, labels contiguous [0, C)
    std::vector<Item> items;        // in insertion order

    int num_classes() const { return static_cast<int>(classes.size()); }

    void add_item(Item it) {
        if (id_to_index_.count(it.id)) throw data_error("duplicate item id " + std::to_string(it.id));
        id_to_index_[it.id] = items.size();
        items.push_back(std::move(it));
    }

    const Item& item(int id) const {
        auto it = id_to_index_.find(id);
        if (it == id_to_index_.end()) throw data_error("unknown item id " + std::to_string(id));
        return items[it->second];
    }

    int total_drone_items() const {
        int n = 0;
        for (const auto& c : classes) n += static_cast<int>(c.drone_items.size());
        return n;
    }

    int total_satellite_items() const {
        int n = 0;
        for (const auto& c : classes) n += static_cast<int>(c.satellite_items.size());
        return n;
    }

    // Labels contiguous [0, C), every class populated on both platforms,
    // class membership consistent with item records.
    void validate() const {
        size_t listed = 0;
        for (int c = 0; c < num_classes(); ++c) {
            const GeoClass& gc = classes[c];
            if (gc.label != c) throw data_error("class labels must be contiguous [0, C)");
            if (gc.satellite_items.empty() || gc.drone_items.empty())
                throw data_error("class " + std::to_string(c) + " must own items on both platforms");
            for (int id : gc.satellite_items)
                if (item(id).label != c || item(id).platform != Platform::satellite)
                    throw data_error("satellite item list inconsistent for class " + std::to_string(c));
            for (int id : gc.drone_items)
                if (item(id).label != c || item(id).platform != Platform::drone)
                    throw data_error("drone item list inconsistent for class " + std::to_string(c));
            listed += gc.satellite_items.size() + gc.drone_items.size();
        }
        if (listed != items.size()) throw data_error("items not fully covered by class lists");
        for (const Item& it : items)
            if (static_cast<int>(it.features.size()) != feature_dim)
                throw data_error("item feature length != dataset feature_dim");
    }

  private:
    std::unordered_map<int, size_t> id_to_index_;
};

// Shortest round-trip-exact decimal rendering of a double.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, int line_no, const std::string& path) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw io_error(path + ":" + std::to_string(line_no) + ": bad real number '" + tok + "'");
    return v;
}

// Manifest format: header "C d", then one line per item:
//   label platform item_id v_1 ... v_d
// with platform in {sat, drone}. Items are written class-by-class,
// satellites before drones, so identical datasets serialize byte-identically.
inline void write_manifest(const CrossViewDataset& ds, std::ostream& os) {
    os << ds.num_classes() << ' ' << ds.feature_dim << '\n';
    for (const auto& gc : ds.classes) {
        auto write_item = [&](int id) {
            const Item& it = ds.item(id);
            os << it.label << ' ' << platform_name(it.platform) << ' ' << it.id;
            for (double v : it.features) os << ' ' << format_double(v);
            os << '\n';
        };
        for (int id : gc.satellite_items) write_item(id);
        for (int id : gc.drone_items) write_item(id);
    }
}

inline void write_manifest_file(const CrossViewDataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    write_manifest(ds, os);
    if (!os) throw io_error("write failed for '" + path + "'");
}

inline CrossViewDataset read_manifest(std::istream& is, const std::string& path = "<stream>") {
    CrossViewDataset ds;
    std::string line;
    int line_no = 0;
    if (!std::getline(is, line)) throw io_error(path + ": empty manifest");
    ++line_no;
    int num_classes = 0;
    {
        std::istringstream hdr(line);
        if (!(hdr >> num_classes >> ds.feature_dim) || num_classes <= 0 || ds.feature_dim <= 0)
            throw io_error(path + ":1: bad header, expected 'C d'");
    }
    ds.classes.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) ds.classes[c].label = c;

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Item it;
        std::string platform_tok, value_tok;
        if (!(ls >> it.label >> platform_tok >> it.id))
            throw io_error(path + ":" + std::to_string(line_no) + ": bad item line");
        it.platform = platform_from_name(platform_tok);
        if (it.label < 0 || it.label >= num_classes)
            throw io_error(path + ":" + std::to_string(line_no) + ": label out of range");
        it.features.reserve(ds.feature_dim);
        while (ls >> value_tok) it.features.push_back(parse_double(value_tok, line_no, path));
        if (static_cast<int>(it.features.size()) != ds.feature_dim)
            throw io_error(path + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(ds.feature_dim) + " feature values, got " +
                           std::to_string(it.features.size()));
        GeoClass& gc = ds.classes[it.label];
        (it.platform == Platform::satellite ? gc.satellite_items : gc.drone_items).push_back(it.id);
        try {
            ds.add_item(std::move(it));
        } catch (const data_error& e) {
            throw io_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    try {
        ds.validate();
    } catch (const data_error& e) {
        throw io_error(path + ": " + e.what());
    }
    return ds;
}

inline CrossViewDataset read_manifest_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open manifest '" + path + "'");
    return read_manifest(is, path);
}

// Batch feature matrix for a list of item ids.
inline Matrix gather_features(const CrossViewDataset& ds, const std::vector<int>& ids) {
    if (ids.empty()) throw data_error("gather_features: empty id list");
    Matrix m(static_cast<int>(ids.size()), ds.feature_dim);
    for (size_t i = 0; i < ids.size(); ++i) {
        const Item& it = ds.item(ids[i]);
        for (int j = 0; j < ds.feature_dim; ++j) m(static_cast<int>(i), j) = it.features[j];
    }
    return m;
}

}  // namespace xview
