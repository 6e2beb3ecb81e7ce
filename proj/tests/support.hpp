#pragma once

// Shared fixtures for the test suites: deterministic synthetic ratings in
// the MovieLens CSV schema and direct dataset builders.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cflab/dataset.hpp"
#include "cflab/rng.hpp"

namespace testsupport {

/// Synthetic ratings with a planted two-block taste structure so that
/// learned models have something real to find. Unique (user,item) pairs,
/// ratings on the half-step grid.
inline std::vector<cflab::RawRating> synth_ratings(int users, int items, int per_user,
                                                   std::uint64_t seed) {
    cflab::Rng rng(seed);
    std::vector<cflab::RawRating> out;
    std::int64_t ts = 900000000;
    for (int u = 0; u < users; ++u) {
        std::vector<int> chosen;
        std::vector<int> pool(static_cast<std::size_t>(items));
        for (int i = 0; i < items; ++i) pool[static_cast<std::size_t>(i)] = i;
        rng.shuffle(pool);
        for (int k = 0; k < per_user && k < items; ++k) chosen.push_back(pool[static_cast<std::size_t>(k)]);
        const bool block_a = u % 2 == 0;
        for (int item : chosen) {
            const bool same_block = (item % 2 == 0) == block_a;
            // same-block items skew high, cross-block low, plus noise
            const double base = same_block ? 4.0 : 2.0;
            const double noise = std::floor(rng.uniform() * 4.0) * 0.5 - 0.5;
            double r = base + noise;
            if (r < 0.5) r = 0.5;
            if (r > 5.0) r = 5.0;
            out.push_back({u + 1, item + 101, r, ts++});
        }
    }
    return out;
}

inline void write_ratings_csv(const std::string& path,
                              const std::vector<cflab::RawRating>& ratings) {
    std::ofstream out(path, std::ios::binary);
    out << "userId,movieId,rating,timestamp\n";
    for (const auto& r : ratings) {
        out << r.user_id << ',' << r.item_id << ',';
        const double twice = r.rating * 2.0;
        if (twice == 2.0 * static_cast<std::int64_t>(r.rating))
            out << static_cast<std::int64_t>(r.rating);
        else
            out << r.rating;
        out << ',' << r.timestamp << '\n';
    }
}

struct Row {
    int user;
    int item;
    double label;
    cflab::SplitPart part;
};

/// Builds a dataset directly in index space (external id = index).
inline cflab::InteractionDataset make_dataset(int m, int n, cflab::Scenario scenario,
                                              const std::vector<Row>& rows,
                                              bool with_split = true) {
    cflab::InteractionDataset ds;
    ds.scenario = scenario;
    ds.maps.m = m;
    ds.maps.n = n;
    for (int u = 0; u < m; ++u) {
        ds.maps.user_ids.push_back(u);
        ds.maps.user_index.emplace(u, u);
    }
    for (int i = 0; i < n; ++i) {
        ds.maps.item_ids.push_back(i);
        ds.maps.item_index.emplace(i, i);
    }
    for (const auto& r : rows) {
        ds.interactions.push_back({r.user, r.item, r.label});
        if (with_split) ds.split.push_back(r.part);
    }
    if (with_split) {
        ds.split_fraction = 0.8;
        ds.split_seed = 1;
    }
    ds.rebuild_positive_sets();
    return ds;
}

/// Separable 4-user/4-item implicit toy: users 1 and 3 tie the item pairs
/// together, users 0 and 2 are evaluated on the partner item of their block.
inline cflab::InteractionDataset separable_toy() {
    using cflab::SplitPart;
    return make_dataset(4, 4, cflab::Scenario::Implicit,
                        {
                            {0, 0, 1.0, SplitPart::Train},
                            {0, 1, 1.0, SplitPart::Test},
                            {1, 0, 1.0, SplitPart::Train},
                            {1, 1, 1.0, SplitPart::Train},
                            {2, 2, 1.0, SplitPart::Train},
                            {2, 3, 1.0, SplitPart::Test},
                            {3, 2, 1.0, SplitPart::Train},
                            {3, 3, 1.0, SplitPart::Train},
                        });
}

/// RAII temp directory under the system tmp root.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cflab_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const {
        return child.empty() ? path_.string() : (path_ / child).string();
    }

  private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testsupport
