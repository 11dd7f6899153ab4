#include "repcoach/eval.hpp"
#include "repcoach/synth.hpp"
#include "repcoach/training.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace repcoach;

namespace {

ClassificationModel<float> random_classifier(std::uint64_t seed) {
    SegModelConfig sc;
    sc.stages = 3;
    sc.first_channels = 8;
    Rng rng(seed);
    SegmentationModel<float> seg(sc);
    seg.init(rng);
    ClassificationModel<float> cls(seg);
    cls.init(rng);
    return cls;
}

}  // namespace

TEST_CASE("binary metrics closed forms") {
    const Labels ones(10, 1);
    const auto perfect = binary_metrics(ones, ones);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.accuracy == 1.0);

    const auto m = BinaryMetrics::from_counts(2, 1, 1, 0);
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));

    const Labels zeros(4, 0);
    const auto none = binary_metrics(zeros, zeros);
    CHECK(none.f1 == 0.0);
    CHECK(none.accuracy == 1.0);
    CHECK_THROWS_AS(binary_metrics(Labels(3, 0), Labels(4, 0)), ValidationError);
}

TEST_CASE("aggregate reports unweighted session means") {
    SessionReport a, b;
    a.segmentation = BinaryMetrics::from_counts(4, 1, 1, 10);  // f1 0.8
    b.segmentation = BinaryMetrics::from_counts(9, 1, 1, 0);   // f1 0.9
    a.near_failure = b.near_failure = BinaryMetrics::from_counts(1, 0, 0, 1);
    const auto r = aggregate({a, b});
    CHECK(r.mean_seg_f1 == doctest::Approx(0.85));
    CHECK(r.mean_cls_f1 == 1.0);
    CHECK(r.seg_confusion(0, 0) == doctest::Approx(13.0 / 15.0));
}

TEST_CASE("confusion matrix") {
    const Labels truth{1, 1, 0, 0, 1, 0};
    CHECK(confusion_matrix(truth, truth) == Eigen::Matrix2d::Identity());
    const Labels all_pos(6, 1);
    Eigen::Matrix2d expected;
    expected << 1, 0, 1, 0;
    CHECK(confusion_matrix(all_pos, truth) == expected);

    Rng rng(1);
    Labels p(1000), t(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        p[i] = static_cast<std::uint8_t>(rng.index(2));
        t[i] = static_cast<std::uint8_t>(rng.index(2));
    }
    double count[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < 1000; ++i) count[1 - t[i]][1 - p[i]] += 1;
    const auto cm = confusion_matrix(p, t);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) CHECK(cm(r, c) == count[r][c] / (count[r][0] + count[r][1]));
    }
}

TEST_CASE("overlapping predictions are averaged") {
    const std::vector<Index> starts{0, 2};
    const std::vector<std::vector<float>> conf{{0.2f, 0.2f, 0.2f, 0.2f}, {0.6f, 0.6f, 0.6f, 0.6f}};
    const auto m = merge_overlapping_predictions(6, starts, conf);
    CHECK(m.confidence[0] == doctest::Approx(0.2));
    CHECK(m.confidence[2] == doctest::Approx(0.4));
    CHECK(m.confidence[5] == doctest::Approx(0.6));
    CHECK(m.coverage[3] == 2);

    const std::vector<Index> reversed{2, 0};
    const std::vector<std::vector<float>> conf_r{conf[1], conf[0]};
    const auto mr = merge_overlapping_predictions(6, reversed, conf_r);
    for (std::size_t i = 0; i < 6; ++i) CHECK(mr.confidence[i] == doctest::Approx(m.confidence[i]));

    const auto starts_64 = extract_windows(1024, 256, 64);
    std::vector<std::vector<float>> flat(starts_64.size(), std::vector<float>(256, 0.5f));
    const auto cover = merge_overlapping_predictions(1024, starts_64, flat);
    for (Index p = 256; p < 768; ++p) CHECK(cover.coverage[static_cast<std::size_t>(p)] == 4);

    const auto gap = merge_overlapping_predictions(10, std::vector<Index>{0}, std::vector<std::vector<float>>{{1.0f, 1.0f}});
    CHECK(std::isnan(gap.confidence[5]));
    CHECK(gap.coverage[5] == 0);
}

TEST_CASE("simulated real-time ticks") {
    SyntheticProfile p;
    p.seed = 3;
    const auto series = preprocess(generate_session(p).session);
    const auto model = random_classifier(4);
    const auto pred = simulate_realtime_session(series, model);
    const auto starts = extract_windows(series.length(), 256, 64);
    REQUIRE(pred.ticks.size() == starts.size());
    CHECK(pred.ticks[0].time == doctest::Approx(2.56));
    for (std::size_t k = 1; k < pred.ticks.size(); ++k) {
        CHECK(pred.ticks[k].time - pred.ticks[k - 1].time == doctest::Approx(0.64));
        CHECK(pred.ticks[k].tick == static_cast<long>(k));
    }
    CHECK(pred.ticks[5].windows_used == 6);
    REQUIRE(pred.ticks.size() > 40);
    CHECK(pred.ticks[40].windows_used == 32);

    // The tick prediction equals a direct classifier call on the same windows.
    std::vector<WindowData> recent;
    for (std::size_t k = 40 - 31; k <= 40; ++k) recent.push_back(series.channels.middleCols(starts[k], 256).cast<float>());
    CHECK(pred.ticks[40].confidence == model.forward(recent).back());

    const auto report = score_session("s", series, rir_per_point(series), pred);
    CHECK(report.near_failure.total() == static_cast<long>(pred.ticks.size()));
    CHECK(report.segmentation.total() == starts.back() + 256);

    UniformSeries tiny;
    tiny.channels = ChannelMatrix::Zero(6, 100);
    CHECK_THROWS_AS(simulate_realtime_session(tiny, model), ValidationError);
}

TEST_CASE("report format") {
    SessionReport a;
    a.name = "set-1";
    a.segmentation = BinaryMetrics::from_counts(4, 1, 1, 10);
    a.near_failure = BinaryMetrics::from_counts(1, 1, 0, 2);
    std::ostringstream out;
    write_report(aggregate({a}), out);
    const auto text = out.str();
    CHECK(text.find("session set-1 0.8000") != std::string::npos);
    CHECK(text.find("mean segmentation f1=0.8000") != std::string::npos);
    CHECK(text.find("mean near_failure f1=0.6667") != std::string::npos);
    CHECK(text.find("confusion near_failure [[1.0000, 0.0000], [0.3333, 0.6667]]") != std::string::npos);
}
