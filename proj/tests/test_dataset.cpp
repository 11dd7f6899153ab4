#include "repcoach/dataset.hpp"
#include "repcoach/errors.hpp"

#include <doctest.h>

#include <set>

using namespace repcoach;

namespace {

UniformSeries ramp_series(Index length, std::vector<Index> markers = {}) {
    UniformSeries s;
    s.channels.resize(6, length);
    for (Index k = 0; k < length; ++k) {
        for (int c = 0; c < 6; ++c) s.channels(c, k) = static_cast<double>(k) + 1000.0 * c;
    }
    s.marker_indices = std::move(markers);
    return s;
}

}  // namespace

TEST_CASE("split sizes use floor and partition the sessions") {
    const auto s = split_sessions(68, 0.8, 3);
    CHECK(s.train.size() == 54);
    CHECK(s.validation.size() == 14);
    std::set<int> all(s.train.begin(), s.train.end());
    for (int v : s.validation) CHECK(all.insert(v).second);
    CHECK(all.size() == 68);
    const auto two = split_sessions(2, 0.5, 0);
    CHECK(two.train.size() == 1);
    CHECK(two.validation.size() == 1);
    const auto again = split_sessions(68, 0.8, 3);
    CHECK(again.train == s.train);
    CHECK_THROWS_AS(split_sessions(1, 0.8, 0), ValidationError);
    CHECK_THROWS_AS(split_sessions(10, 1.0, 0), ValidationError);
}

TEST_CASE("window counts follow floor((length - w) / stride) + 1") {
    CHECK(extract_windows(2240, 256, 64).size() == 32);
    CHECK(extract_windows(255, 256, 64).empty());
    CHECK(extract_windows(256, 256, 64).size() == 1);
    for (Index length = 256; length <= 1000; length += 7) {
        for (Index stride : {1, 2, 3, 64, 100}) {
            Index brute = 0;
            for (Index s = 0; s + 256 <= length; ++s) brute += s % stride == 0 ? 1 : 0;
            CHECK(static_cast<Index>(extract_windows(length, 256, stride).size()) == brute);
            CHECK(brute == (length - 256) / stride + 1);
        }
    }
    CHECK_THROWS_AS(extract_windows(100, 256, 0), ValidationError);
    WindowingParams p;
    CHECK(p.span() == 2240);
}

TEST_CASE("segmentation labels are a centered 9-point region clipped to the window") {
    const std::vector<Index> m{100};
    auto labels = segmentation_labels(m, 0);
    for (Index i = 0; i < 256; ++i) CHECK(labels[static_cast<std::size_t>(i)] == (i >= 96 && i <= 104 ? 1 : 0));
    const std::vector<Index> edge{12};
    labels = segmentation_labels(edge, 10);
    for (Index i = 0; i < 256; ++i) CHECK(labels[static_cast<std::size_t>(i)] == (i <= 6 ? 1 : 0));
    const std::vector<Index> outside{300};
    labels = segmentation_labels(outside, 0);
    CHECK(std::count(labels.begin(), labels.end(), 1) == 0);
}

TEST_CASE("RiR per point") {
    auto s = ramp_series(100, {10, 30, 50});
    const auto rir = rir_per_point(s);
    CHECK(rir[0] == 2);
    CHECK(rir[10] == 2);
    CHECK(rir[11] == 1);
    CHECK(rir[30] == 1);
    CHECK(rir[31] == 0);
    CHECK(rir[99] == 0);
    for (std::size_t k = 1; k < rir.size(); ++k) CHECK(rir[k] <= rir[k - 1]);
    s.marker_indices = {40};
    for (int r : rir_per_point(s)) CHECK(r == 0);
    s.marker_indices.clear();
    CHECK_THROWS_AS(rir_per_point(s), ValidationError);
}

TEST_CASE("near-failure label needs a strict majority") {
    RirTrace rir(256, 5);
    std::fill(rir.begin() + 128, rir.end(), 2);
    CHECK_FALSE(near_failure_label(rir, 0));
    rir[127] = 1;
    CHECK(near_failure_label(rir, 0));
    CHECK_THROWS_AS(near_failure_label(rir, 1), ValidationError);
}

TEST_CASE("near-failure label equals brute-force counting") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const Index length = 256 + static_cast<Index>(rng.index(2000));
        std::vector<Index> markers;
        Index m = 0;
        while (true) {
            m += 20 + static_cast<Index>(rng.index(300));
            if (m >= length) break;
            markers.push_back(m);
        }
        if (markers.empty()) markers.push_back(length - 1);
        const auto rir = rir_per_point(ramp_series(length, markers));
        for (Index start : extract_windows(length, 256, 37)) {
            int count = 0;
            for (Index k = start; k < start + 256; ++k) count += rir[static_cast<std::size_t>(k)] <= 2 ? 1 : 0;
            CHECK(near_failure_label(rir, start) == (count > 128));
        }
    }
}

TEST_CASE("identity augmentation reproduces the plain window") {
    const auto s = ramp_series(600, {100, 300});
    const auto rir = rir_per_point(s);
    const auto plain = make_window(s, rir, 50);
    const auto aug = augment_window_with(s, rir, 50, 1.0, 1.0);
    CHECK(aug.data == plain.data);
    CHECK(aug.seg_labels == plain.seg_labels);
    CHECK(aug.near_failure == plain.near_failure);
}

TEST_CASE("amplitude scales values and leaves labels") {
    const auto s = ramp_series(600, {100, 300});
    const auto rir = rir_per_point(s);
    const auto plain = make_window(s, rir, 50);
    const auto aug = augment_window_with(s, rir, 50, 1.0, 0.6);
    CHECK((aug.data - plain.data * 0.6f).cwiseAbs().maxCoeff() < 1e-3f);
    CHECK(aug.seg_labels == plain.seg_labels);
}

TEST_CASE("stretch compresses time and maps markers through round(d / f)") {
    const auto s = ramp_series(600, {150});
    const auto aug = augment_window_with(s, {}, 0, 1.5, 1.0);
    for (Index j = 0; j < 256; ++j) CHECK(aug.data(0, j) == doctest::Approx(1.5 * j));
    for (Index i = 0; i < 256; ++i) CHECK(aug.seg_labels[static_cast<std::size_t>(i)] == (i >= 96 && i <= 104 ? 1 : 0));
    CHECK_THROWS_AS(augment_window_with(s, {}, 300, 1.5, 1.0), ValidationError);
}

TEST_CASE("random augmentation stays in range, is seed-deterministic and falls back near the end") {
    const auto s = ramp_series(700, {150, 400});
    Rng a(5), b(5);
    for (int i = 0; i < 50; ++i) {
        const auto x = augment_window(s, {}, 10, a);
        const auto y = augment_window(s, {}, 10, b);
        CHECK(x.data == y.data);
        const double slope = (x.data(0, 255) - x.data(0, 0)) / 255.0;  // stretch times amplitude
        CHECK(slope >= 0.6 - 1e-6);
        CHECK(slope <= 1.5 * 1.4 + 1e-6);
    }
    // 700 - 400 < 384: stretch falls back to 1, so the ramp slope equals the amplitude
    Rng c(9);
    for (int i = 0; i < 20; ++i) {
        const auto x = augment_window(s, {}, 400, c);
        const double slope = (x.data(0, 255) - x.data(0, 0)) / 255.0;
        const double amp = x.data(0, 0) / 400.0;
        CHECK(slope == doctest::Approx(amp).epsilon(1e-4));
    }
}
