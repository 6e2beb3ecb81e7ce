#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cflab/core.hpp"
#include "cflab/rng.hpp"

namespace cflab {

/// One line of ratings.csv. Ratings live on the half-step grid 0.5 .. 5.0.
struct RawRating {
    std::int64_t user_id = 0;
    std::int64_t item_id = 0;
    double rating = 0.0;
    std::int64_t timestamp = 0;  // carried through, unused
};

/// Bijections between external ids and contiguous [0, m) / [0, n) indices,
/// assigned in order of first appearance.
struct IndexMaps {
    std::unordered_map<std::int64_t, std::int32_t> user_index;
    std::unordered_map<std::int64_t, std::int32_t> item_index;
    std::vector<std::int64_t> user_ids;  // index -> external id
    std::vector<std::int64_t> item_ids;
    std::int32_t m = 0;
    std::int32_t n = 0;
};

enum class Scenario { Implicit, Explicit };

inline const char* to_string(Scenario s) {
    return s == Scenario::Implicit ? "implicit" : "explicit";
}

inline Scenario scenario_from_string(std::string_view s) {
    if (s == "implicit") return Scenario::Implicit;
    if (s == "explicit") return Scenario::Explicit;
    throw Error("unknown scenario: " + std::string(s));
}

enum class SplitPart : std::uint8_t { Train, Test };

struct Interaction {
    std::int32_t user = 0;
    std::int32_t item = 0;
    double label = 0.0;  // implicit: 1; explicit: +1 / -1
};

/// Labeled interactions over contiguous index spaces, with an optional
/// train/test partition. Non-stored pairs are implicit zeros.
struct InteractionDataset {
    Scenario scenario = Scenario::Implicit;
    IndexMaps maps;
    std::vector<Interaction> interactions;
    std::vector<SplitPart> split;  // parallel to interactions; empty = unsplit
    double split_fraction = 0.0;
    std::uint64_t split_seed = 0;

    /// Per-user sorted train-positive item indices. Rebuilt whenever the
    /// split changes; with no split every interaction counts as train.
    std::vector<std::vector<std::int32_t>> user_positive_sets;

    bool in_train(std::size_t idx) const {
        return split.empty() || split[idx] == SplitPart::Train;
    }

    std::size_t train_count() const {
        if (split.empty()) return interactions.size();
        std::size_t c = 0;
        for (auto s : split) c += (s == SplitPart::Train);
        return c;
    }

    std::size_t positive_count() const {
        std::size_t c = 0;
        for (const auto& it : interactions) c += (it.label > 0.0);
        return c;
    }

    bool user_has_positive(std::int32_t user, std::int32_t item) const {
        const auto& set = user_positive_sets[static_cast<std::size_t>(user)];
        return std::binary_search(set.begin(), set.end(), item);
    }

    void rebuild_positive_sets() {
        user_positive_sets.assign(static_cast<std::size_t>(maps.m), {});
        for (std::size_t idx = 0; idx < interactions.size(); ++idx) {
            const auto& it = interactions[idx];
            if (it.label > 0.0 && in_train(idx))
                user_positive_sets[static_cast<std::size_t>(it.user)].push_back(it.item);
        }
        for (auto& set : user_positive_sets) std::sort(set.begin(), set.end());
    }
};

namespace detail {

inline std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

template <class T>
T parse_number(std::string_view field, std::size_t line_no, const char* what) {
    T value{};
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw Error("line " + std::to_string(line_no) + ": non-numeric " + what + " '" +
                    std::string(field) + "'");
    return value;
}

inline bool on_rating_grid(double r) {
    const double steps = r * 2.0;
    return steps >= 1.0 && steps <= 10.0 && steps == std::floor(steps);
}

}  // namespace detail

/// Parses a MovieLens-style ratings CSV. Header must be exactly
/// `userId,movieId,rating,timestamp`; record order is preserved.
inline std::vector<RawRating> load_ratings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open ratings file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": empty file, expected header");
    if (detail::trim_cr(line) != "userId,movieId,rating,timestamp")
        throw Error(path + ": unexpected header '" + line + "'");

    std::vector<RawRating> out;
    std::unordered_set<std::uint64_t> seen_pairs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = detail::trim_cr(line);
        if (row.empty()) continue;

        std::string_view fields[4];
        std::size_t start = 0;
        int nfields = 0;
        for (std::size_t i = 0; i <= row.size(); ++i) {
            if (i == row.size() || row[i] == ',') {
                if (nfields == 4)
                    throw Error("line " + std::to_string(line_no) + ": expected 4 fields");
                fields[nfields++] = row.substr(start, i - start);
                start = i + 1;
            }
        }
        if (nfields != 4)
            throw Error("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                        std::to_string(nfields));

        RawRating r;
        r.user_id = detail::parse_number<std::int64_t>(fields[0], line_no, "userId");
        r.item_id = detail::parse_number<std::int64_t>(fields[1], line_no, "movieId");
        r.rating = detail::parse_number<double>(fields[2], line_no, "rating");
        r.timestamp = detail::parse_number<std::int64_t>(fields[3], line_no, "timestamp");
        if (!detail::on_rating_grid(r.rating))
            throw Error("line " + std::to_string(line_no) + ": rating " + std::string(fields[2]) +
                        " off the 0.5..5.0 half-step grid");

        const auto key = (static_cast<std::uint64_t>(r.user_id) << 32) ^
                         static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.item_id));
        if (!seen_pairs.insert(key).second)
            throw Error("line " + std::to_string(line_no) + ": duplicate (user,item) pair");

        out.push_back(r);
    }
    return out;
}

/// Contiguous indices in order of first appearance.
inline IndexMaps build_index_maps(const std::vector<RawRating>& ratings) {
    if (ratings.empty()) throw Error("build_index_maps: empty rating list");
    IndexMaps maps;
    for (const auto& r : ratings) {
        if (maps.user_index.emplace(r.user_id, maps.m).second) {
            maps.user_ids.push_back(r.user_id);
            ++maps.m;
        }
        if (maps.item_index.emplace(r.item_id, maps.n).second) {
            maps.item_ids.push_back(r.item_id);
            ++maps.n;
        }
    }
    return maps;
}

namespace detail {

inline std::vector<double> user_means(const std::vector<RawRating>& ratings,
                                      const IndexMaps& maps) {
    std::vector<double> sum(static_cast<std::size_t>(maps.m), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(maps.m), 0);
    for (const auto& r : ratings) {
        const auto u = static_cast<std::size_t>(maps.user_index.at(r.user_id));
        sum[u] += r.rating;
        ++count[u];
    }
    for (std::size_t u = 0; u < sum.size(); ++u) sum[u] /= static_cast<double>(count[u]);
    return sum;
}

}  // namespace detail

/// Implicit scenario: keep interactions rated at or above the user's mean
/// rating with label 1; everything else becomes an unstored zero.
inline InteractionDataset binarize_implicit(const std::vector<RawRating>& ratings,
                                            const IndexMaps& maps) {
    const auto means = detail::user_means(ratings, maps);
    InteractionDataset ds;
    ds.scenario = Scenario::Implicit;
    ds.maps = maps;
    for (const auto& r : ratings) {
        const auto u = maps.user_index.at(r.user_id);
        if (r.rating >= means[static_cast<std::size_t>(u)])
            ds.interactions.push_back({u, maps.item_index.at(r.item_id), 1.0});
    }
    ds.rebuild_positive_sets();
    return ds;
}

/// Explicit scenario: every rating retained, labeled +1 at or above the
/// user's mean and -1 below it.
inline InteractionDataset binarize_explicit(const std::vector<RawRating>& ratings,
                                            const IndexMaps& maps) {
    const auto means = detail::user_means(ratings, maps);
    InteractionDataset ds;
    ds.scenario = Scenario::Explicit;
    ds.maps = maps;
    for (const auto& r : ratings) {
        const auto u = maps.user_index.at(r.user_id);
        const double label = r.rating >= means[static_cast<std::size_t>(u)] ? 1.0 : -1.0;
        ds.interactions.push_back({u, maps.item_index.at(r.item_id), label});
    }
    ds.rebuild_positive_sets();
    return ds;
}

/// Uniformly random train/test partition over interactions. The train side
/// gets round(fraction * N) rows; deterministic for a fixed seed.
inline void split_train_test(InteractionDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw Error("split fraction must lie in (0, 1), got " + std::to_string(fraction));
    const std::size_t total = ds.interactions.size();
    const auto train_n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));

    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    ds.split.assign(total, SplitPart::Test);
    for (std::size_t i = 0; i < train_n; ++i) ds.split[order[i]] = SplitPart::Train;
    ds.split_fraction = fraction;
    ds.split_seed = seed;
    ds.rebuild_positive_sets();
}

// --- serialization -----------------------------------------------------

inline nlohmann::json to_json(const InteractionDataset& ds) {
    nlohmann::json j;
    j["format"] = "cflab.dataset.v1";
    j["scenario"] = to_string(ds.scenario);
    j["m"] = ds.maps.m;
    j["n"] = ds.maps.n;
    j["user_ids"] = ds.maps.user_ids;
    j["item_ids"] = ds.maps.item_ids;
    auto rows = nlohmann::json::array();
    for (const auto& it : ds.interactions)
        rows.push_back({it.user, it.item, static_cast<int>(it.label)});
    j["interactions"] = std::move(rows);
    std::string mask;
    mask.reserve(ds.split.size());
    for (auto s : ds.split) mask.push_back(s == SplitPart::Train ? 't' : 'e');
    j["split"] = mask;
    j["split_fraction"] = ds.split_fraction;
    j["split_seed"] = ds.split_seed;
    return j;
}

inline InteractionDataset dataset_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "cflab.dataset.v1")
        throw Error("dataset file: unknown format tag");
    InteractionDataset ds;
    ds.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    ds.maps.m = j.at("m").get<std::int32_t>();
    ds.maps.n = j.at("n").get<std::int32_t>();
    ds.maps.user_ids = j.at("user_ids").get<std::vector<std::int64_t>>();
    ds.maps.item_ids = j.at("item_ids").get<std::vector<std::int64_t>>();
    for (std::int32_t u = 0; u < ds.maps.m; ++u)
        ds.maps.user_index.emplace(ds.maps.user_ids[static_cast<std::size_t>(u)], u);
    for (std::int32_t i = 0; i < ds.maps.n; ++i)
        ds.maps.item_index.emplace(ds.maps.item_ids[static_cast<std::size_t>(i)], i);
    for (const auto& row : j.at("interactions"))
        ds.interactions.push_back(
            {row.at(0).get<std::int32_t>(), row.at(1).get<std::int32_t>(), row.at(2).get<double>()});
    const auto mask = j.at("split").get<std::string>();
    if (!mask.empty()) {
        if (mask.size() != ds.interactions.size())
            throw Error("dataset file: split mask length mismatch");
        ds.split.reserve(mask.size());
        for (char c : mask) ds.split.push_back(c == 't' ? SplitPart::Train : SplitPart::Test);
    }
    ds.split_fraction = j.at("split_fraction").get<double>();
    ds.split_seed = j.at("split_seed").get<std::uint64_t>();
    ds.rebuild_positive_sets();
    return ds;
}

inline void save_dataset(const InteractionDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset file: " + path);
    out << to_json(ds).dump() << '\n';
}

inline InteractionDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(path + ": invalid JSON: " + e.what());
    }
    return dataset_from_json(j);
}

}  // namespace cflab
