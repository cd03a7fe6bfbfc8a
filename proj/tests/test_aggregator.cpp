#include <stdexcept>
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "legend/aggregator.hpp"
#include "legend/planner.hpp"
#include "legend/rng.hpp"

using namespace legend;

namespace {

LoraAdapter adapter_1x1(int layer, double b, double a) {
    LoraAdapter ad;
    ad.layer_index = layer;
    ad.rank = 1;
    ad.B = Matrix(1, 1, {b});
    ad.A = Matrix(1, 1, {a});
    return ad;
}

GlobalLoraState global_1x1(int layers) {
    GlobalLoraState g;
    for (int l = 0; l < layers; ++l) {
        g.layers.push_back(adapter_1x1(l, 0.0, 0.0));
    }
    g.contribution_counts.assign(layers, 0);
    g.head = Matrix(1, 1);
    return g;
}

GlobalLoraState random_global(SeededRng& rng, const std::vector<int>& ranks, std::size_t dim,
                              int classes) {
    GlobalLoraState g;
    for (std::size_t l = 0; l < ranks.size(); ++l) {
        LoraAdapter ad;
        ad.layer_index = int(l);
        ad.rank = ranks[l];
        ad.B = gaussian_matrix(rng, dim, ranks[l], 1.0);
        ad.A = gaussian_matrix(rng, ranks[l], dim, 1.0);
        g.layers.push_back(std::move(ad));
    }
    g.contribution_counts.assign(ranks.size(), 0);
    g.head = gaussian_matrix(rng, classes, dim, 1.0);
    return g;
}

}  // namespace

TEST_CASE("single device aggregation is identity") {
    GlobalLoraState prev = global_1x1(2);
    DeviceUpdate u;
    u.device_id = 0;
    u.adapters[1] = adapter_1x1(1, 2.0, 7.0);
    u.head = Matrix(1, 1, {4.0});
    GlobalLoraState out = layerwise_aggregate({u}, prev);
    CHECK(out.layers[1].B(0, 0) == 2.0);
    CHECK(out.layers[1].A(0, 0) == 7.0);
    CHECK(out.head(0, 0) == 4.0);
    CHECK(out.contribution_counts[1] == 1);
    // Layer 0 untouched.
    CHECK(out.layers[0].A(0, 0) == prev.layers[0].A(0, 0));
    CHECK(out.contribution_counts[0] == 0);
}

TEST_CASE("1x1 adapters with A values 1,3,5 average to 3") {
    GlobalLoraState prev = global_1x1(1);
    std::vector<DeviceUpdate> updates;
    const double vals[] = {1.0, 3.0, 5.0};
    for (int i = 0; i < 3; ++i) {
        DeviceUpdate u;
        u.device_id = i;
        u.adapters[0] = adapter_1x1(0, 0.0, vals[i]);
        u.head = Matrix(1, 1);
        updates.push_back(u);
    }
    GlobalLoraState out = layerwise_aggregate(updates, prev);
    CHECK(out.layers[0].A(0, 0) == 3.0);
    CHECK(out.contribution_counts[0] == 3);
}

TEST_CASE("mixed depths over L=3 match the brute-force per-layer oracle") {
    SeededRng rng(41);
    const std::vector<int> ranks = {2, 2, 3};
    GlobalLoraState prev = random_global(rng, ranks, 4, 2);

    // Device i has depth i+1, so layer l is visited by n_l = l+1 devices.
    std::vector<DeviceUpdate> updates;
    for (int i = 0; i < 3; ++i) {
        DeviceUpdate u;
        u.device_id = i;
        for (int l = 3 - (i + 1); l < 3; ++l) {
            LoraAdapter ad;
            ad.layer_index = l;
            ad.rank = ranks[l];
            ad.B = gaussian_matrix(rng, 4, ranks[l], 1.0);
            ad.A = gaussian_matrix(rng, ranks[l], 4, 1.0);
            u.adapters[l] = std::move(ad);
        }
        u.head = gaussian_matrix(rng, 2, 4, 1.0);
        updates.push_back(std::move(u));
    }
    GlobalLoraState out = layerwise_aggregate(updates, prev);
    CHECK(out.contribution_counts == std::vector<int>{1, 2, 3});

    // Independent per-layer mean over explicit lists, same device order.
    for (int l = 0; l < 3; ++l) {
        Matrix sb(4, std::size_t(ranks[l]));
        Matrix sa(std::size_t(ranks[l]), 4);
        int n = 0;
        for (const auto& u : updates) {
            auto it = u.adapters.find(l);
            if (it == u.adapters.end()) continue;
            sb = axpy(1.0, it->second.B, sb);
            sa = axpy(1.0, it->second.A, sa);
            ++n;
        }
        for (std::size_t i = 0; i < sb.size(); ++i) {
            CHECK(out.layers[l].B.data()[i] == sb.data()[i] / n);
        }
        for (std::size_t i = 0; i < sa.size(); ++i) {
            CHECK(out.layers[l].A.data()[i] == sa.data()[i] / n);
        }
    }
    // Head is the mean over all devices.
    Matrix sh(2, 4);
    for (const auto& u : updates) sh = axpy(1.0, u.head, sh);
    for (std::size_t i = 0; i < sh.size(); ++i) {
        CHECK(out.head.data()[i] == sh.data()[i] / 3.0);
    }
}

TEST_CASE("suffix-shaped depths give nondecreasing contribution counts") {
    SeededRng rng(43);
    const std::vector<int> ranks = {1, 2, 3, 4};
    GlobalLoraState prev = random_global(rng, ranks, 3, 2);
    std::vector<DeviceUpdate> updates;
    for (int i = 0; i < 5; ++i) {
        const int depth = 1 + int(rng.next_below(4));
        DeviceUpdate u;
        u.device_id = i;
        for (int l = 4 - depth; l < 4; ++l) {
            LoraAdapter ad = prev.layers[l];
            u.adapters[l] = ad;
        }
        u.head = prev.head;
        updates.push_back(std::move(u));
    }
    GlobalLoraState out = layerwise_aggregate(updates, prev);
    for (int l = 0; l + 1 < 4; ++l) {
        CHECK(out.contribution_counts[l] <= out.contribution_counts[l + 1]);
    }
}

TEST_CASE("aggregating duplicates of one update is idempotent") {
    SeededRng rng(47);
    const std::vector<int> ranks = {2, 3};
    GlobalLoraState prev = random_global(rng, ranks, 5, 2);
    DeviceUpdate base;
    base.device_id = 0;
    for (int l = 0; l < 2; ++l) {
        LoraAdapter ad;
        ad.layer_index = l;
        ad.rank = ranks[l];
        ad.B = gaussian_matrix(rng, 5, ranks[l], 1.0);
        ad.A = gaussian_matrix(rng, ranks[l], 5, 1.0);
        base.adapters[l] = std::move(ad);
    }
    base.head = gaussian_matrix(rng, 2, 5, 1.0);
    std::vector<DeviceUpdate> updates;
    for (int i = 0; i < 4; ++i) {
        DeviceUpdate u = base;
        u.device_id = i;
        updates.push_back(std::move(u));
    }
    GlobalLoraState out = layerwise_aggregate(updates, prev);
    for (int l = 0; l < 2; ++l) {
        CHECK(max_abs_diff(out.layers[l].B, base.adapters[l].B) == 0.0);
        CHECK(max_abs_diff(out.layers[l].A, base.adapters[l].A) == 0.0);
    }
    CHECK(max_abs_diff(out.head, base.head) == 0.0);
}

TEST_CASE("rank mismatch at a layer is a protocol violation") {
    GlobalLoraState prev = global_1x1(1);
    DeviceUpdate a, b;
    a.device_id = 0;
    a.adapters[0] = adapter_1x1(0, 1.0, 1.0);
    a.head = Matrix(1, 1);
    b.device_id = 1;
    b.adapters[0] = a.adapters[0];
    b.adapters[0].rank = 2;
    b.adapters[0].B = Matrix(1, 2);
    b.adapters[0].A = Matrix(2, 1);
    b.head = Matrix(1, 1);
    CHECK_THROWS_AS(layerwise_aggregate({a, b}, prev), std::runtime_error);
}

TEST_CASE("assign slices the deepest layers as value copies") {
    SeededRng rng(53);
    const std::vector<int> ranks = {1, 2, 3};
    GlobalLoraState g = random_global(rng, ranks, 4, 2);

    SUBCASE("k=L returns the full set") {
        auto set = assign(g, LoraConfig{3, {1, 2, 3}});
        CHECK(set.size() == 3);
    }
    SUBCASE("k=0 returns nothing") {
        CHECK(assign(g, LoraConfig{0, {}}).empty());
    }
    SUBCASE("L=3 k=2 returns exactly layers 1 and 2, bit-identical") {
        auto set = assign(g, LoraConfig{2, {2, 3}});
        REQUIRE(set.size() == 2);
        CHECK(set.count(0) == 0);
        CHECK(max_abs_diff(set.at(1).B, g.layers[1].B) == 0.0);
        CHECK(max_abs_diff(set.at(2).A, g.layers[2].A) == 0.0);
    }
    SUBCASE("rank mismatch with the global slice is rejected") {
        CHECK_THROWS_AS(assign(g, LoraConfig{2, {2, 2}}), std::invalid_argument);
    }
}

TEST_CASE("hetlora padding semantics") {
    SUBCASE("equal ranks degenerate to the plain mean") {
        GlobalLoraState prev = global_1x1(1);
        DeviceUpdate a, b;
        a.device_id = 0;
        a.adapters[0] = adapter_1x1(0, 2.0, 4.0);
        a.head = Matrix(1, 1);
        b.device_id = 1;
        b.adapters[0] = adapter_1x1(0, 6.0, 8.0);
        b.head = Matrix(1, 1);
        GlobalLoraState out = hetlora_pad_aggregate({a, b}, prev);
        CHECK(out.layers[0].B(0, 0) == 4.0);
        CHECK(out.layers[0].A(0, 0) == 6.0);
    }
    SUBCASE("ranks {1,2}: the pad region halves the lone contributor") {
        GlobalLoraState prev = global_1x1(1);
        prev.layers[0].rank = 2;
        prev.layers[0].B = Matrix(1, 2);
        prev.layers[0].A = Matrix(2, 1);
        DeviceUpdate a, b;
        a.device_id = 0;
        a.adapters[0] = adapter_1x1(0, 2.0, 4.0);  // rank 1
        a.head = Matrix(1, 1);
        b.device_id = 1;
        LoraAdapter wide;
        wide.layer_index = 0;
        wide.rank = 2;
        wide.B = Matrix(1, 2, {6.0, 10.0});
        wide.A = Matrix(2, 1, {8.0, 12.0});
        b.adapters[0] = wide;
        b.head = Matrix(1, 1);
        GlobalLoraState out = hetlora_pad_aggregate({a, b}, prev);
        CHECK(out.layers[0].rank == 2);
        CHECK(out.layers[0].B(0, 0) == 4.0);  // (2+6)/2
        CHECK(out.layers[0].B(0, 1) == 5.0);  // (0+10)/2
        CHECK(out.layers[0].A(0, 0) == 6.0);  // (4+8)/2
        CHECK(out.layers[0].A(1, 0) == 6.0);  // (0+12)/2
    }
    SUBCASE("mean of products differs from product of means (documented non-property)") {
        // B,A pairs (1,2) and (3,4): mean(BA) = 7, mean(B)*mean(A) = 6.
        GlobalLoraState prev = global_1x1(1);
        DeviceUpdate a, b;
        a.device_id = 0;
        a.adapters[0] = adapter_1x1(0, 1.0, 2.0);
        a.head = Matrix(1, 1);
        b.device_id = 1;
        b.adapters[0] = adapter_1x1(0, 3.0, 4.0);
        b.head = Matrix(1, 1);
        GlobalLoraState out = hetlora_pad_aggregate({a, b}, prev);
        const double prod_of_means = out.layers[0].B(0, 0) * out.layers[0].A(0, 0);
        const double mean_of_prods = (1.0 * 2.0 + 3.0 * 4.0) / 2.0;
        CHECK(prod_of_means == 6.0);
        CHECK(mean_of_prods == 7.0);
        CHECK(prod_of_means != mean_of_prods);
    }
}

TEST_CASE("truncate_adapter keeps leading columns and rows") {
    LoraAdapter ad;
    ad.layer_index = 0;
    ad.rank = 2;
    ad.B = Matrix(1, 2, {6.0, 10.0});
    ad.A = Matrix(2, 1, {8.0, 12.0});
    LoraAdapter t = truncate_adapter(ad, 1);
    CHECK(t.rank == 1);
    CHECK(t.B(0, 0) == 6.0);
    CHECK(t.A(0, 0) == 8.0);
}

TEST_CASE("random mixed-depth instances match an independent oracle") {
    SeededRng rng(59);
    for (int trial = 0; trial < 200; ++trial) {
        const int L = 2 + int(rng.next_below(4));
        const int n = 1 + int(rng.next_below(5));
        std::vector<int> ranks;
        for (int l = 0; l < L; ++l) ranks.push_back(1 + int(rng.next_below(3)));
        std::sort(ranks.begin(), ranks.end());
        const std::size_t dim = 3;
        GlobalLoraState prev = random_global(rng, ranks, dim, 2);

        std::vector<DeviceUpdate> updates;
        for (int i = 0; i < n; ++i) {
            const int depth = 1 + int(rng.next_below(L));
            DeviceUpdate u;
            u.device_id = i;
            for (int l = L - depth; l < L; ++l) {
                LoraAdapter ad;
                ad.layer_index = l;
                ad.rank = ranks[l];
                ad.B = gaussian_matrix(rng, dim, ranks[l], 1.0);
                ad.A = gaussian_matrix(rng, ranks[l], dim, 1.0);
                u.adapters[l] = std::move(ad);
            }
            u.head = gaussian_matrix(rng, 2, dim, 1.0);
            updates.push_back(std::move(u));
        }
        GlobalLoraState out = layerwise_aggregate(updates, prev);
        for (int l = 0; l < L; ++l) {
            Matrix sb(dim, std::size_t(ranks[l]));
            Matrix sa(std::size_t(ranks[l]), dim);
            int count = 0;
            for (const auto& u : updates) {
                auto it = u.adapters.find(l);
                if (it == u.adapters.end()) continue;
                sb = axpy(1.0, it->second.B, sb);
                sa = axpy(1.0, it->second.A, sa);
                ++count;
            }
            CHECK(out.contribution_counts[l] == count);
            if (count == 0) {
                CHECK(max_abs_diff(out.layers[l].B, prev.layers[l].B) == 0.0);
                CHECK(max_abs_diff(out.layers[l].A, prev.layers[l].A) == 0.0);
                continue;
            }
            for (std::size_t i = 0; i < sb.size(); ++i) {
                CHECK(out.layers[l].B.data()[i] == sb.data()[i] / count);
            }
            for (std::size_t i = 0; i < sa.size(); ++i) {
                CHECK(out.layers[l].A.data()[i] == sa.data()[i] / count);
            }
        }
    }
}
